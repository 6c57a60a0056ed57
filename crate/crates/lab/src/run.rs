//! Experiment dispatch: one config in, one report plus its tables out.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use dbar_core::dbar::DbarComplex;
use dbar_core::diagnostics::{
    compactness_probe, kohn_morrey_terms, komo_inequality_margin, refinement_ratio, tail_bound_check,
    ProbeVerdict, TestFormGenerator,
};
use dbar_core::grid::GridSpec;
use dbar_core::property_p::certify;
use dbar_core::spectral::{compute_spectrum, EigenPair};
use dbar_core::weight::{check_condition, truncation_mass, Condition, ConditionVerdict, Verdict};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{CliError, CliResult};
use crate::plot::{line_chart, Series};
use crate::report::{Metadata, RunReport, SCHEMA};

/// Truncation mass above this is reported as a warning.
pub const TRUNCATION_WARN: f64 = 1e-8;

/// Slack added to the tail bound, matching the finite-grid tolerance of the check.
pub const TAIL_SLACK: f64 = 1e-3;

/// Environment variable naming the directory relative output dirs resolve against.
pub const OUTPUT_ROOT_VAR: &str = "LAB_OUTPUT_ROOT";

/// A finished run: the report and the extra files that go next to it.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    /// `(file name, contents)`, CSV tables and SVG plots.
    pub files: Vec<(String, String)>,
}

#[derive(Default)]
struct Collector {
    warnings: Vec<String>,
    files: Vec<(String, String)>,
    timings: Vec<(String, f64)>,
}

impl Collector {
    fn warn(&mut self, w: String) {
        if !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }

    fn file(&mut self, name: &str, body: String) {
        self.files.push((name.to_string(), body));
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.push((stage.to_string(), t.elapsed().as_secs_f64() * 1e3));
        out
    }

    fn truncation(&mut self, cx: &DbarComplex) -> f64 {
        let m = truncation_mass(&cx.spec, cx.grid.half_width());
        if m > TRUNCATION_WARN {
            self.warn(format!(
                "truncation mass {m:.3e} outside the box of half-width {} exceeds {TRUNCATION_WARN:e}",
                cx.grid.half_width()
            ));
        }
        m
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

fn condition_plot(c: &ConditionVerdict) -> String {
    let inf = c.radii.iter().copied().zip(c.inf_per_radius.iter().copied()).collect();
    let axis = c.radii.iter().copied().zip(c.axis_mu_per_radius.iter().copied()).collect();
    line_chart(
        "inf of mu on spheres",
        "radius",
        "inf mu",
        &[
            Series { label: "sampled", points: inf },
            Series { label: "axes", points: axis },
        ],
        false,
    )
}

fn eigen_plot(lambdas: &[f64]) -> String {
    let pts = lambdas.iter().enumerate().map(|(k, l)| (k as f64, *l)).collect();
    line_chart("lowest eigenvalues", "k", "lambda_k", &[Series { label: "lambda", points: pts }], false)
}

fn inconclusive(c: &ConditionVerdict, col: &mut Collector) {
    if c.verdict == Verdict::Inconclusive {
        col.warn(format!("{:?} verdict is inconclusive (margin {:.3e})", c.condition, c.margin));
    }
}

fn check_weight(cfg: &ExperimentConfig, col: &mut Collector) -> CliResult<Value> {
    let w = cfg.weight()?;
    let cc = cfg.condition();
    let star = col.time("star", || check_condition(w, Condition::Star, &cc))?;
    let dstar = col.time("double_star", || check_condition(w, Condition::DoubleStar, &cc))?;
    inconclusive(&star, col);
    inconclusive(&dstar, col);
    col.file("condition.csv", dstar.to_csv());
    if cfg.plots {
        col.file("mu_vs_radius.svg", condition_plot(&dstar));
    }
    let trunc = match &cfg.grid {
        Some(g) => {
            let m = truncation_mass(w, g.half_width());
            if m > TRUNCATION_WARN {
                col.warn(format!("truncation mass {m:.3e} outside the box exceeds {TRUNCATION_WARN:e}"));
            }
            Some(m)
        }
        None => None,
    };
    Ok(json!({
        "weight": w.label(),
        "star": to_value(&star),
        "double_star": to_value(&dstar),
        "truncation_mass": trunc,
    }))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn kohn_morrey(cfg: &ExperimentConfig, col: &mut Collector) -> CliResult<Value> {
    let w = cfg.weight()?;
    let g = cfg.grid()?;
    let forms = cfg.forms.as_ref().expect("validated");
    let gen = TestFormGenerator::new(cfg.seed, forms.kind);
    let mut grids = Vec::new();
    for &np in &forms.points {
        grids.push(GridSpec::new(g.n(), g.half_width(), np)?);
    }
    // residuals[level][form]
    let mut residuals = Vec::new();
    let mut lhs = Vec::new();
    let mut margins = Vec::new();
    for grid in &grids {
        let cx = DbarComplex::new(w, grid)?;
        let label = format!("n{}", grid.points_per_axis());
        let (res, l, m) = col.time(&label, || -> CliResult<_> {
            let mut res = Vec::new();
            let mut l = Vec::new();
            let mut m = Vec::new();
            for i in 0..forms.count {
                let u = gen.generate(grid, i as u64);
                let t = kohn_morrey_terms(&u, &cx)?;
                res.push(t.residual);
                l.push(t.lhs);
                m.push(komo_inequality_margin(&u, &cx)?);
            }
            Ok((res, l, m))
        })?;
        residuals.push(res);
        lhs.push(l);
        margins.push(m);
    }
    let mut ladder = Vec::new();
    let mut csv = String::from("form");
    for grid in &grids {
        csv.push_str(&format!(",residual_n{}", grid.points_per_axis()));
    }
    for w2 in grids.windows(2) {
        csv.push_str(&format!(",ratio_n{}_n{}", w2[0].points_per_axis(), w2[1].points_per_axis()));
    }
    csv.push('\n');
    for i in 0..forms.count {
        csv.push_str(&i.to_string());
        for r in &residuals {
            csv.push_str(&format!(",{}", r[i]));
        }
        for lv in 0..grids.len() - 1 {
            let q = refinement_ratio(
                residuals[lv][i],
                residuals[lv + 1][i],
                grids[lv].spacing(),
                grids[lv + 1].spacing(),
            );
            csv.push_str(&format!(",{q}"));
        }
        csv.push('\n');
    }
    for lv in 0..grids.len() - 1 {
        let mut ratios: Vec<f64> = (0..forms.count)
            .map(|i| {
                refinement_ratio(
                    residuals[lv][i],
                    residuals[lv + 1][i],
                    grids[lv].spacing(),
                    grids[lv + 1].spacing(),
                )
            })
            .collect();
        let per_form = ratios.clone();
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
        ladder.push(json!({
            "coarse_points": grids[lv].points_per_axis(),
            "fine_points": grids[lv + 1].points_per_axis(),
            "h_coarse": grids[lv].spacing(),
            "h_fine": grids[lv + 1].spacing(),
            "ratios": per_form,
            "median_ratio": median(&mut ratios),
            "min_ratio": lo,
            "max_ratio": hi,
        }));
    }
    col.file("kohn_morrey.csv", csv);
    if cfg.plots {
        let series: Vec<(String, Vec<(f64, f64)>)> = (0..forms.count.min(6))
            .map(|i| {
                let pts = grids.iter().zip(&residuals).map(|(g, r)| (g.spacing(), r[i])).collect();
                (format!("form {i}"), pts)
            })
            .collect();
        let s: Vec<Series> = series.iter().map(|(l, p)| Series { label: l, points: p.clone() }).collect();
        col.file("kohn_morrey.svg", line_chart("Kohn-Morrey residual", "h", "residual", &s, true));
    }
    let last = margins.len() - 1;
    let min_margin = margins[last].iter().copied().fold(f64::INFINITY, f64::min);
    Ok(json!({
        "weight": w.label(),
        "form_kind": forms.kind,
        "count": forms.count,
        "points": forms.points,
        "residuals": residuals,
        "lhs": lhs,
        "ladder": ladder,
        "komo_margin_min_finest": min_margin,
    }))
}

fn spectrum_core(
    cfg: &ExperimentConfig,
    col: &mut Collector,
) -> CliResult<(DbarComplex, dbar_core::spectral::SpectrumReport, Vec<EigenPair>)> {
    let w = cfg.weight()?;
    let g = cfg.grid()?;
    let cx = col.time("assemble", || DbarComplex::new(w, g))?;
    let solver = cfg.solver();
    let (rep, pairs) = col.time("eigensolve", || compute_spectrum(&cx, &solver, &cfg.thresholds))?;
    col.truncation(&cx);
    Ok((cx, rep, pairs))
}

fn spectrum(cfg: &ExperimentConfig, col: &mut Collector) -> CliResult<Value> {
    let (cx, rep, _) = spectrum_core(cfg, col)?;
    if !rep.lower_bound.passed {
        col.warn(format!("lower bound check failed with margin {:.3e}", rep.lower_bound.margin));
    }
    if let Some(d) = rep.dense_crosscheck.as_ref().filter(|d| !(d.max_relative_deviation <= 1e-8)) {
        col.warn(format!(
            "dense cross-check deviates by {:.3e} relative (operator scale {:.3e})",
            d.max_relative_deviation, d.operator_scale
        ));
    }
    for t in rep.threshold_counts.iter().filter(|t| t.saturated) {
        col.warn(format!("all computed eigenvalues lie below threshold {}; the count is a lower bound", t.threshold));
    }
    col.file("eigenvalues.csv", rep.to_csv());
    if cfg.plots {
        col.file("eigenvalues.svg", eigen_plot(&rep.eigenvalues));
    }
    if cfg.export_operator {
        let mut buf = Vec::new();
        cx.box_laplacian().matrix.write_matrix_market(&mut buf)?;
        col.file("box.mtx", String::from_utf8(buf).expect("ascii"));
    }
    let trunc = truncation_mass(&cx.spec, cx.grid.half_width());
    let mut v = to_value(&rep);
    v["truncation_mass"] = json!(trunc);
    Ok(v)
}

fn tail(cfg: &ExperimentConfig, col: &mut Collector) -> CliResult<Value> {
    let (cx, rep, pairs) = spectrum_core(cfg, col)?;
    let radii = &cfg.tail.as_ref().expect("validated").radii;
    let forms = pairs.iter().map(|p| p.form(&cx)).collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    let mut csv = String::from("radius,inf_mu_shell,bound,max_tail,margin,passed\n");
    let mut plot_tail = Vec::new();
    let mut plot_bound = Vec::new();
    let mut all_pass = true;
    for &r in radii {
        let mut tails = Vec::new();
        let mut inf_mu = f64::NAN;
        for f in &forms {
            let t = tail_bound_check(f, r, &cx)?;
            inf_mu = t.inf_mu_shell;
            tails.push(t.tail / t.q_value);
        }
        let max_tail = tails.iter().copied().fold(0.0, f64::max);
        let vacuous = !(inf_mu > 0.0);
        let bound = (!vacuous).then(|| 1.0 / inf_mu);
        let margin = bound.map(|b| b + TAIL_SLACK - max_tail);
        let passed = margin.map_or(true, |m| m >= 0.0);
        all_pass &= passed;
        if vacuous {
            col.warn(format!("tail bound at radius {r} is vacuous: inf mu on the shell is {inf_mu:.3e}"));
        }
        csv.push_str(&format!(
            "{r},{inf_mu},{},{max_tail},{},{passed}\n",
            bound.map_or(String::new(), |b| b.to_string()),
            margin.map_or(String::new(), |m| m.to_string())
        ));
        plot_tail.push((r, max_tail));
        if let Some(b) = bound {
            plot_bound.push((r, b));
        }
        rows.push(json!({
            "radius": r,
            "inf_mu_shell": inf_mu,
            "bound": bound,
            "tails": tails,
            "max_tail": max_tail,
            "margin": margin,
            "vacuous": vacuous,
            "passed": passed,
        }));
    }
    col.file("tail.csv", csv);
    col.file("eigenvalues.csv", rep.to_csv());
    if cfg.plots {
        col.file(
            "tail_vs_radius.svg",
            line_chart(
                "eigenform tails at Q = 1",
                "R",
                "tail mass",
                &[
                    Series { label: "max tail", points: plot_tail },
                    Series { label: "1 / inf mu", points: plot_bound },
                ],
                true,
            ),
        );
    }
    Ok(json!({
        "weight": cx.spec.label(),
        "eigenvalues": rep.eigenvalues,
        "residuals": rep.residuals,
        "slack": TAIL_SLACK,
        "rows": rows,
        "all_passed": all_pass,
    }))
}

fn probe(cfg: &ExperimentConfig, col: &mut Collector) -> CliResult<Value> {
    let w = cfg.weight()?;
    let g = cfg.grid()?;
    let mut pc = cfg.probe.clone().unwrap_or_default();
    if cfg.solver.is_some() {
        pc.solver = cfg.solver.clone().unwrap();
    }
    if cfg.condition.is_some() {
        pc.condition = cfg.condition.clone().unwrap();
    }
    pc.solver.seed = cfg.seed;
    pc.condition.seed = cfg.seed;
    let cx = col.time("assemble", || DbarComplex::new(w, g))?;
    let d = col.time("probe", || compactness_probe(&cx, &pc))?;
    col.truncation(&cx);
    inconclusive(&d.condition, col);
    if d.verdict == ProbeVerdict::Inconclusive {
        col.warn(format!("probe verdict is inconclusive: {}", d.reason));
    }
    col.file("tail.csv", d.tail_csv());
    col.file("translation.csv", d.translation_csv());
    col.file("condition.csv", d.condition.to_csv());
    let mut eig = String::from("index,lambda,residual\n");
    for (i, (l, r)) in d.eigenvalues.iter().zip(&d.residuals).enumerate() {
        eig.push_str(&format!("{i},{l},{r}\n"));
    }
    col.file("eigenvalues.csv", eig);
    if cfg.plots {
        col.file("eigenvalues.svg", eigen_plot(&d.eigenvalues));
        let t = d.tail_table.iter().map(|r| (r.radius, r.max_tail)).collect();
        let b = d.tail_table.iter().filter_map(|r| r.bound.map(|b| (r.radius, b))).collect();
        col.file(
            "tail_vs_radius.svg",
            line_chart(
                "eigenform tails at Q = 1",
                "R",
                "tail mass",
                &[Series { label: "max tail", points: t }, Series { label: "1 / inf mu", points: b }],
                true,
            ),
        );
        col.file("mu_vs_radius.svg", condition_plot(&d.condition));
    }
    Ok(to_value(&d))
}

fn property_p(cfg: &ExperimentConfig, col: &mut Collector) -> CliResult<Value> {
    let p = cfg.property_p.as_ref().expect("validated");
    let cert = col.time("certify", || certify(&p.domain, &p.family, &p.m_values, p.boundary_samples, p.c_max))?;
    col.file("property_p.csv", cert.to_csv());
    if cfg.plots {
        let pts = cert.per_m.iter().map(|r| (r.m, r.min_hessian_eig)).collect();
        let diag = cert.per_m.iter().map(|r| (r.m, r.m)).collect();
        col.file(
            "property_p.svg",
            line_chart(
                "boundary Hessian floor",
                "M",
                "min eigenvalue",
                &[Series { label: "min Hessian eig", points: pts }, Series { label: "M", points: diag }],
                true,
            ),
        );
    }
    Ok(to_value(&cert))
}

/// Run `cfg` in memory.
pub fn execute(cfg: &ExperimentConfig) -> CliResult<RunOutput> {
    cfg.validate()?;
    let mut col = Collector::default();
    let t = Instant::now();
    let results = match cfg.kind {
        ExperimentKind::CheckWeight => check_weight(cfg, &mut col)?,
        ExperimentKind::KohnMorrey => kohn_morrey(cfg, &mut col)?,
        ExperimentKind::Spectrum => spectrum(cfg, &mut col)?,
        ExperimentKind::Tail => tail(cfg, &mut col)?,
        ExperimentKind::Probe => probe(cfg, &mut col)?,
        ExperimentKind::PropertyP => property_p(cfg, &mut col)?,
    };
    col.timings.push(("total".into(), t.elapsed().as_secs_f64() * 1e3));
    let report = RunReport {
        schema: SCHEMA.to_string(),
        kind: cfg.kind,
        config: cfg.clone(),
        results,
        warnings: col.warnings,
        metadata: Metadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            timings_ms: col.timings,
        },
    };
    Ok(RunOutput { report, files: col.files })
}

/// Where a run writes: `output_dir` (default: the kind name), resolved
/// against `$LAB_OUTPUT_ROOT` when relative.
pub fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    let dir = PathBuf::from(cfg.output_dir.clone().unwrap_or_else(|| cfg.kind.name().to_string()));
    if dir.is_absolute() {
        return dir;
    }
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir,
    }
}

pub fn write_output(out: &RunOutput, dir: &Path) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join("report.json"), out.report.to_json()).map_err(io)?;
    for (name, body) in &out.files {
        std::fs::write(dir.join(name), body).map_err(io)?;
    }
    Ok(())
}

/// Execute `cfg` and write its report and tables under [`output_dir`].
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<RunReport> {
    let out = execute(cfg)?;
    write_output(&out, &output_dir(cfg))?;
    Ok(out.report)
}
