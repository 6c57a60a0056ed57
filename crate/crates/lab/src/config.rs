//! Experiment configuration files.

use dbar_core::diagnostics::{ProbeConfig, TestFormKind};
use dbar_core::grid::GridSpec;
use dbar_core::property_p::{DomainSpec, WeightFamily};
use dbar_core::spectral::SolverConfig;
use dbar_core::weight::{ConditionConfig, WeightSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CheckWeight,
    KohnMorrey,
    Spectrum,
    Tail,
    Probe,
    PropertyP,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::CheckWeight => "check-weight",
            ExperimentKind::KohnMorrey => "kohn-morrey",
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::Tail => "tail",
            ExperimentKind::Probe => "probe",
            ExperimentKind::PropertyP => "property-p",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormsConfig {
    pub kind: TestFormKind,
    pub count: usize,
    /// Grid sizes of the refinement ladder, coarse to fine, on the box of `grid`.
    pub points: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailConfig {
    pub radii: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyPConfig {
    pub domain: DomainSpec,
    pub family: WeightFamily,
    pub m_values: Vec<f64>,
    pub boundary_samples: usize,
    #[serde(default = "default_c_max")]
    pub c_max: f64,
}

fn default_c_max() -> f64 {
    10.0
}

/// One experiment; the sections needed depend on `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub plots: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<ConditionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forms: Option<FormsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<f64>,
    #[serde(default)]
    pub export_operator: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub property_p: Option<PropertyPConfig>,
}

fn missing(kind: ExperimentKind, what: &str) -> CliError {
    CliError::Config(format!("{} experiment needs a `{what}` section", kind.name()))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn weight(&self) -> CliResult<&WeightSpec> {
        self.weight.as_ref().ok_or_else(|| missing(self.kind, "weight"))
    }

    pub fn grid(&self) -> CliResult<&GridSpec> {
        self.grid.as_ref().ok_or_else(|| missing(self.kind, "grid"))
    }

    /// Solver settings with the run seed applied.
    pub fn solver(&self) -> SolverConfig {
        let mut s = self.solver.clone().unwrap_or_default();
        s.seed = self.seed;
        s
    }

    pub fn condition(&self) -> ConditionConfig {
        let mut c = self.condition.clone().unwrap_or_default();
        c.seed = self.seed;
        c
    }

    pub fn validate(&self) -> CliResult<()> {
        use ExperimentKind::*;
        if matches!(self.kind, CheckWeight | KohnMorrey | Spectrum | Tail | Probe) {
            let w = self.weight()?;
            if self.kind != CheckWeight {
                let g = self.grid()?;
                if g.n() != w.n() {
                    return Err(CliError::Config(format!(
                        "grid is on C^{} but weight on C^{}",
                        g.n(),
                        w.n()
                    )));
                }
            }
        }
        if let Some(s) = &self.solver {
            s.validate()?;
        }
        match self.kind {
            KohnMorrey => {
                let f = self.forms.as_ref().ok_or_else(|| missing(self.kind, "forms"))?;
                if f.count == 0 || f.points.len() < 2 {
                    return Err(CliError::Config("forms need count >= 1 and at least two grid sizes".into()));
                }
            }
            Tail => {
                let t = self.tail.as_ref().ok_or_else(|| missing(self.kind, "tail"))?;
                if t.radii.is_empty() {
                    return Err(CliError::Config("tail radii must not be empty".into()));
                }
            }
            PropertyP => {
                self.property_p.as_ref().ok_or_else(|| missing(self.kind, "property_p"))?;
            }
            _ => {}
        }
        Ok(())
    }
}
