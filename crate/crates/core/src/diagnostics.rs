//! Kohn-Morrey residuals, tail and translation diagnostics, and the
//! compactness probe built on them.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dbar::DbarComplex;
use crate::error::{config, LabError, Result};
use crate::form::FormField;
use crate::grid::GridSpec;
use crate::spectral::{smallest_eigenpairs, SolverConfig};
use crate::weight::{check_condition, shell_inf_mu, truncation_mass, Condition, ConditionConfig, ConditionVerdict, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFormKind {
    GaussianBump,
    PolynomialTimesBump,
    RandomSmooth,
}

/// Seeded smooth 1-forms supported in the inner half of the box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFormGenerator {
    pub seed: u64,
    pub kind: TestFormKind,
}

const BUMP_POWER: i32 = 8;

/// `(1 - |z|^2 / r0^2)^8` inside `|z| < r0`, zero outside.
fn bump(z: &[C64], r0: f64) -> f64 {
    let t = z.iter().map(|c| c.norm_sqr()).sum::<f64>() / (r0 * r0);
    if t >= 1.0 {
        0.0
    } else {
        (1.0 - t).powi(BUMP_POWER)
    }
}

fn rand_c(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(2.0 * rng.random::<f64>() - 1.0, 2.0 * rng.random::<f64>() - 1.0)
}

impl TestFormGenerator {
    pub fn new(seed: u64, kind: TestFormKind) -> Self {
        TestFormGenerator { seed, kind }
    }

    /// Support radius of every generated form: half the box half-width.
    pub fn support_radius(grid: &GridSpec) -> f64 {
        0.5 * grid.half_width()
    }

    /// The `index`-th form of this stream; identical for identical inputs.
    pub fn generate(&self, grid: &GridSpec, index: u64) -> FormField {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let n = grid.n();
        let r0 = Self::support_radius(grid);
        let d = 2 * n;
        let center: Vec<f64> = (0..d).map(|_| 0.25 * r0 * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let coeffs: Vec<C64> = (0..n).map(|_| rand_c(&mut rng)).collect();
        match self.kind {
            TestFormKind::GaussianBump => {
                let s = r0 / 3.0;
                FormField::from_fn(grid, 1, |z| {
                    let dist2: f64 = (0..n)
                        .map(|j| (z[j] - C64::new(center[2 * j], center[2 * j + 1])).norm_sqr())
                        .sum();
                    let g = (-dist2 / (2.0 * s * s)).exp() * bump(z, r0);
                    coeffs.iter().map(|c| c * g).collect()
                })
            }
            TestFormKind::PolynomialTimesBump => {
                // per component: c0 + sum_a c_a x_a / r0 + sum_{a<=b} c_ab x_a x_b / r0^2
                let terms = 1 + d + d * (d + 1) / 2;
                let poly: Vec<Vec<C64>> = (0..n).map(|_| (0..terms).map(|_| rand_c(&mut rng)).collect()).collect();
                FormField::from_fn(grid, 1, |z| {
                    let x: Vec<f64> = (0..d).map(|a| if a % 2 == 0 { z[a / 2].re } else { z[a / 2].im } / r0).collect();
                    let b = bump(z, r0);
                    poly.iter()
                        .map(|c| {
                            let mut v = c[0];
                            let mut t = 1;
                            for a in 0..d {
                                v += c[t] * x[a];
                                t += 1;
                            }
                            for a in 0..d {
                                for bb in a..d {
                                    v += c[t] * x[a] * x[bb];
                                    t += 1;
                                }
                            }
                            v * b
                        })
                        .collect()
                })
            }
            TestFormKind::RandomSmooth => {
                const MODES: usize = 4;
                let waves: Vec<(Vec<f64>, Vec<C64>)> = (0..MODES)
                    .map(|_| {
                        let k = (0..d).map(|_| rng.random_range(-2i32..=2) as f64).collect();
                        let c = (0..n).map(|_| rand_c(&mut rng)).collect();
                        (k, c)
                    })
                    .collect();
                let freq = std::f64::consts::PI / (2.0 * r0);
                FormField::from_fn(grid, 1, |z| {
                    let x: Vec<f64> = (0..d).map(|a| if a % 2 == 0 { z[a / 2].re } else { z[a / 2].im }).collect();
                    let b = bump(z, r0);
                    let mut out = vec![C64::new(0.0, 0.0); n];
                    for (k, c) in &waves {
                        let phase: f64 = k.iter().zip(&x).map(|(ki, xi)| ki * xi).sum::<f64>() * freq;
                        let e = C64::from_polar(1.0, phase);
                        for j in 0..n {
                            out[j] += c[j] * e;
                        }
                    }
                    out.iter().map(|v| v * b).collect()
                })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KohnMorreyTerms {
    /// `||dbar u||^2 + ||dbar*_formula u||^2`
    pub lhs: f64,
    /// `sum_jk ||dzbar_k u_j||^2 + sum <levi u, u> w`
    pub rhs: f64,
    pub residual: f64,
}

fn require_interior(u: &FormField, cx: &DbarComplex) -> Result<()> {
    u.expect_degree(1)?;
    if !u.is_dirichlet_compatible(&cx.grid) {
        return Err(LabError::Precondition(
            "1-form is nonzero on the boundary layer".into(),
        ));
    }
    Ok(())
}

fn levi_term(u: &FormField, cx: &DbarComplex) -> f64 {
    let n = cx.grid.n();
    let mut s = 0.0;
    for &p in &cx.space(1).points {
        let v: Vec<C64> = (0..n).map(|j| cx.measure.weighted(p, u.component(j)[p])).collect();
        if v.iter().all(|x| *x == C64::new(0.0, 0.0)) {
            continue;
        }
        s += cx.spec.eval_levi(&cx.grid.z(p)).quadratic(&v);
    }
    s
}

fn formula_lhs(u: &FormField, cx: &DbarComplex) -> Result<f64> {
    let star = cx.dbar_star_formula(u)?;
    let top = cx.dbar_1(u)?;
    Ok(cx.norm_sqr(&top) + cx.norm_sqr(&star))
}

/// Both sides of the weighted Kohn-Morrey identity for a compactly supported 1-form.
pub fn kohn_morrey_terms(u: &FormField, cx: &DbarComplex) -> Result<KohnMorreyTerms> {
    require_interior(u, cx)?;
    let lhs = formula_lhs(u, cx)?;
    let n = cx.grid.n();
    let mut grad = 0.0;
    for j in 0..n {
        for k in 0..n {
            grad += cx.norm_sqr(&cx.dzbar_component(u, j, k));
        }
    }
    let rhs = grad + levi_term(u, cx);
    Ok(KohnMorreyTerms {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

pub fn kohn_morrey_residual(u: &FormField, cx: &DbarComplex) -> Result<f64> {
    Ok(kohn_morrey_terms(u, cx)?.residual)
}

/// `||dbar u||^2 + ||dbar* u||^2 - sum <levi u, u> w`; nonnegative up to O(h^2).
pub fn komo_inequality_margin(u: &FormField, cx: &DbarComplex) -> Result<f64> {
    require_interior(u, cx)?;
    Ok(formula_lhs(u, cx)? - levi_term(u, cx))
}

/// Error ratio per halving of `h`: `(e_c / e_f)^(ln 2 / ln(h_c / h_f))`.
/// About 4 for a second-order quantity.
pub fn refinement_ratio(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (e_coarse / e_fine).powf(std::f64::consts::LN_2 / (h_coarse / h_fine).ln())
}

fn check_radius(r: f64, grid: &GridSpec) -> Result<()> {
    if !(r > 0.0 && r < grid.half_width()) {
        return Err(LabError::Range(format!(
            "radius {r} must lie in (0, {})",
            grid.half_width()
        )));
    }
    Ok(())
}

/// `sum_{|z| > r} |u|^2 w`, not normalized.
pub fn tail_norm_sqr(u: &FormField, r: f64, cx: &DbarComplex) -> Result<f64> {
    check_radius(r, &cx.grid)?;
    let mut s = 0.0;
    for c in 0..u.components() {
        for (p, v) in u.component(c).iter().enumerate() {
            if *v != C64::new(0.0, 0.0) && cx.grid.modulus(p) > r {
                s += cx.measure.weighted(p, *v).norm_sqr();
            }
        }
    }
    Ok(s)
}

/// Fraction of `||u||_phi^2` carried by `|z| > r`.
pub fn tail_mass(u: &FormField, r: f64, cx: &DbarComplex) -> Result<f64> {
    let t = tail_norm_sqr(u, r, cx)?;
    let total = cx.norm_sqr(u);
    Ok(if total == 0.0 { 0.0 } else { t / total })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailBoundCheck {
    pub radius: f64,
    pub q_value: f64,
    pub tail: f64,
    /// Sampled infimum of `mu` over `radius <= |z| <= L`.
    pub inf_mu_shell: f64,
    /// `Q(u, u) / inf_mu_shell`, absent when the bound is vacuous.
    pub bound: Option<f64>,
    pub margin: f64,
    pub vacuous: bool,
}

pub const SHELL_SAMPLES: usize = 64;

/// Compare the tail of `u` beyond `r` with `Q(u, u) / inf mu` on the shell.
pub fn tail_bound_check(u: &FormField, r: f64, cx: &DbarComplex) -> Result<TailBoundCheck> {
    let tail = tail_norm_sqr(u, r, cx)?;
    let q = cx.q_form(u, u)?.re;
    let inf_mu = shell_inf_mu(&cx.spec, r, cx.grid.half_width(), SHELL_SAMPLES, 0);
    let vacuous = inf_mu <= 0.0;
    let bound = (!vacuous).then(|| q / inf_mu);
    Ok(TailBoundCheck {
        radius: r,
        q_value: q,
        tail,
        inf_mu_shell: inf_mu,
        margin: bound.map_or(f64::INFINITY, |b| b - tail),
        bound,
        vacuous,
    })
}

/// `(sum_{|z| < r} |u(z + s) - u(z)|^2 w(z))^{1/2}` for a grid-aligned shift `s`.
pub fn translation_defect(u: &FormField, shift: &[C64], r: f64, cx: &DbarComplex) -> Result<f64> {
    let grid = &cx.grid;
    if shift.len() != grid.n() {
        return Err(LabError::Range("shift has the wrong number of coordinates".into()));
    }
    let snorm = shift.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if r <= 0.0 || snorm + r >= grid.half_width() {
        return Err(LabError::Range(format!(
            "need |shift| + r < L, got {snorm} + {r} >= {}",
            grid.half_width()
        )));
    }
    let h = grid.spacing();
    let mut steps = [0isize; 4];
    for j in 0..grid.n() {
        for (a, v) in [(2 * j, shift[j].re), (2 * j + 1, shift[j].im)] {
            let s = v / h;
            if (s - s.round()).abs() > 1e-9 {
                return Err(LabError::Range("shift is not a multiple of the grid spacing".into()));
            }
            steps[a] = s.round() as isize;
        }
    }
    let offset: isize = (0..grid.real_dims())
        .map(|a| steps[a] * grid.stride(a) as isize)
        .sum();
    let mut s = 0.0;
    for p in 0..grid.num_points() {
        if grid.modulus(p) >= r {
            continue;
        }
        let q = (p as isize + offset) as usize;
        for c in 0..u.components() {
            let d = u.component(c)[q] - u.component(c)[p];
            s += cx.measure.weighted(p, d).norm_sqr();
        }
    }
    Ok(s.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub condition: ConditionConfig,
    pub solver: SolverConfig,
    /// Defaults to `L * (1/6, 1/4, 1/3, 1/2)`.
    pub tail_radii: Option<Vec<f64>>,
    /// Shifts along `x_1`, in grid steps.
    pub translation_steps: Vec<usize>,
    /// Defaults to `L / 2`.
    pub translation_radius: Option<f64>,
    /// Tails decay when the last/first ratio is at most this.
    pub decay_ratio: f64,
    /// Tails are non-decaying when the last/first ratio is at least this.
    pub flat_ratio: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            condition: ConditionConfig::default(),
            solver: SolverConfig::default(),
            tail_radii: None,
            translation_steps: vec![1, 2, 3],
            translation_radius: None,
            decay_ratio: 1e-2,
            flat_ratio: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeVerdict {
    Compatible,
    Incompatible,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub radius: f64,
    /// `max_k tail_k(radius) / lambda_k`, i.e. tails of eigenforms scaled to `Q = 1`.
    pub max_tail: f64,
    pub inf_mu_shell: f64,
    /// `1 / inf_mu_shell`, absent when vacuous.
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationRow {
    pub steps: usize,
    pub shift: f64,
    pub max_defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompactnessDiagnosis {
    pub weight: String,
    pub grid: GridSpec,
    pub condition: ConditionVerdict,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub tail_table: Vec<TailRow>,
    pub tail_decay_ratio: f64,
    pub tails_decay: bool,
    pub tails_flat: bool,
    pub translation_radius: f64,
    pub translation_table: Vec<TranslationRow>,
    pub truncation_mass: f64,
    pub verdict: ProbeVerdict,
    pub reason: String,
}

impl CompactnessDiagnosis {
    pub fn tail_csv(&self) -> String {
        let mut s = String::from("radius,max_tail,inf_mu_shell,bound\n");
        for r in &self.tail_table {
            let b = r.bound.map_or(String::new(), |b| b.to_string());
            s.push_str(&format!("{},{},{},{}\n", r.radius, r.max_tail, r.inf_mu_shell, b));
        }
        s
    }

    pub fn translation_csv(&self) -> String {
        let mut s = String::from("steps,shift,max_defect\n");
        for r in &self.translation_table {
            s.push_str(&format!("{},{},{}\n", r.steps, r.shift, r.max_defect));
        }
        s
    }
}

/// Cross-check the growth of `mu` against eigenform localization.
pub fn compactness_probe(cx: &DbarComplex, cfg: &ProbeConfig) -> Result<CompactnessDiagnosis> {
    let grid = &cx.grid;
    let l = grid.half_width();
    let radii = cfg
        .tail_radii
        .clone()
        .unwrap_or_else(|| vec![l / 6.0, l / 4.0, l / 3.0, l / 2.0]);
    if radii.len() < 2 {
        return Err(config("probe needs at least two tail radii"));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(config("tail radii must increase"));
    }
    for &r in &radii {
        check_radius(r, grid)?;
    }
    let condition = check_condition(&cx.spec, Condition::DoubleStar, &cfg.condition)?;
    let pairs = smallest_eigenpairs(&cx.box_laplacian(), &cfg.solver)?;
    let forms: Vec<(f64, FormField)> = pairs
        .iter()
        .map(|p| p.form(cx).map(|f| (p.lambda, f)))
        .collect::<Result<_>>()?;

    let mut tail_table = Vec::new();
    for &r in &radii {
        let mut max_tail: f64 = 0.0;
        for (lambda, f) in &forms {
            max_tail = max_tail.max(tail_norm_sqr(f, r, cx)? / lambda);
        }
        let inf_mu = shell_inf_mu(&cx.spec, r, l, SHELL_SAMPLES, cfg.condition.seed);
        tail_table.push(TailRow {
            radius: r,
            max_tail,
            inf_mu_shell: inf_mu,
            bound: (inf_mu > 0.0).then(|| 1.0 / inf_mu),
        });
    }
    let first = tail_table[0].max_tail;
    let last = tail_table[tail_table.len() - 1].max_tail;
    let ratio = if first > 0.0 { last / first } else { 0.0 };
    let monotone = tail_table.windows(2).all(|w| w[1].max_tail <= w[0].max_tail);
    let tails_decay = monotone && ratio <= cfg.decay_ratio;
    let tails_flat = ratio >= cfg.flat_ratio;

    let tr = cfg.translation_radius.unwrap_or(0.5 * l);
    let h = grid.spacing();
    let mut translation_table = Vec::new();
    for &st in &cfg.translation_steps {
        let s = st as f64 * h;
        if s + tr >= l {
            continue;
        }
        let mut shift = vec![C64::new(0.0, 0.0); grid.n()];
        shift[0] = C64::new(s, 0.0);
        let mut max_defect: f64 = 0.0;
        for (lambda, f) in &forms {
            max_defect = max_defect.max(translation_defect(f, &shift, tr, cx)? / lambda.sqrt());
        }
        translation_table.push(TranslationRow {
            steps: st,
            shift: s,
            max_defect,
        });
    }

    let (verdict, reason) = match condition.verdict {
        Verdict::Holds if tails_decay => (
            ProbeVerdict::Compatible,
            "mu grows without bound and eigenform tails decay".to_string(),
        ),
        Verdict::Fails if condition.constant_floor() && tails_flat => (
            ProbeVerdict::Incompatible,
            "mu has a constant floor and eigenform tails do not decay".to_string(),
        ),
        v => (
            ProbeVerdict::Inconclusive,
            format!(
                "condition {:?}, tail ratio {ratio:.3e} (decay <= {}, flat >= {})",
                v, cfg.decay_ratio, cfg.flat_ratio
            ),
        ),
    };
    Ok(CompactnessDiagnosis {
        weight: cx.spec.label(),
        grid: grid.clone(),
        condition,
        eigenvalues: pairs.iter().map(|p| p.lambda).collect(),
        residuals: pairs.iter().map(|p| p.residual).collect(),
        tail_table,
        tail_decay_ratio: ratio,
        tails_decay,
        tails_flat,
        translation_radius: tr,
        translation_table,
        truncation_mass: truncation_mass(&cx.spec, l),
        verdict,
        reason,
    })
}
