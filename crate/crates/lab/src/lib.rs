//! Configuration, orchestration and reporting for the `lab` driver.

pub mod config;
pub mod error;
pub mod plot;
pub mod report;
pub mod run;

use dbar_core::weight::{WeightSpec, WeightTerm};

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{CliError, CliResult};
pub use report::{compare_runs, DiffSummary, RunReport};
pub use run::{execute, run_experiment, RunOutput};

/// The built-in weights, keyed by the file stem used under `configs/`.
pub fn catalog() -> Vec<(&'static str, WeightSpec)> {
    let w = |n, t| WeightSpec::new(n, t).expect("catalog weight is valid");
    vec![
        ("z2", w(1, vec![WeightTerm::coordinate(1.0, 1, 1)])),
        ("z4", w(1, vec![WeightTerm::coordinate(1.0, 1, 2)])),
        (
            "z1_4_z2_4",
            w(2, vec![WeightTerm::coordinate(1.0, 1, 2), WeightTerm::coordinate(1.0, 2, 2)]),
        ),
        ("radial_z2_sq", w(2, vec![WeightTerm::radial(1.0, 2)])),
        (
            "z1_2_z2_4",
            w(2, vec![WeightTerm::coordinate(1.0, 1, 1), WeightTerm::coordinate(1.0, 2, 2)]),
        ),
    ]
}
