//! Plurisubharmonic polynomial weights and their complex Hessians.
//!
//! A weight is a nonnegative combination of `a |z_j|^{2m}` and `a (|z|^2)^m`
//! on C^n, n in {1, 2}. Coordinate indices `j` are 1-based, matching `z_1, z_2`.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, LabError, Result};

pub const MAX_EXPONENT: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTerm", into = "RawTerm")]
pub enum WeightTerm {
    /// `a |z_j|^{2m}`
    CoordinatePower { a: f64, j: usize, m: u32 },
    /// `a (|z|^2)^m`
    RadialPower { a: f64, m: u32 },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    a: f64,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    j: Option<usize>,
    m: u32,
}

impl TryFrom<RawTerm> for WeightTerm {
    type Error = String;
    fn try_from(r: RawTerm) -> std::result::Result<Self, String> {
        match r.kind.as_str() {
            "coordinate" => {
                let j = r.j.ok_or("coordinate term needs `j`")?;
                Ok(WeightTerm::CoordinatePower { a: r.a, j, m: r.m })
            }
            "radial" => {
                if r.j.is_some() {
                    return Err("radial term takes no `j`".into());
                }
                Ok(WeightTerm::RadialPower { a: r.a, m: r.m })
            }
            other => Err(format!("unknown term kind `{other}`")),
        }
    }
}

impl From<WeightTerm> for RawTerm {
    fn from(t: WeightTerm) -> Self {
        match t {
            WeightTerm::CoordinatePower { a, j, m } => RawTerm {
                a,
                kind: "coordinate".into(),
                j: Some(j),
                m,
            },
            WeightTerm::RadialPower { a, m } => RawTerm {
                a,
                kind: "radial".into(),
                j: None,
                m,
            },
        }
    }
}

impl WeightTerm {
    pub fn coordinate(a: f64, j: usize, m: u32) -> Self {
        WeightTerm::CoordinatePower { a, j, m }
    }
    pub fn radial(a: f64, m: u32) -> Self {
        WeightTerm::RadialPower { a, m }
    }
    fn coefficient(&self) -> f64 {
        match *self {
            WeightTerm::CoordinatePower { a, .. } | WeightTerm::RadialPower { a, .. } => a,
        }
    }
    fn exponent(&self) -> u32 {
        match *self {
            WeightTerm::CoordinatePower { m, .. } | WeightTerm::RadialPower { m, .. } => m,
        }
    }
}

/// A validated weight `phi` on C^n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct WeightSpec {
    n: usize,
    terms: Vec<WeightTerm>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    n: usize,
    terms: Vec<WeightTerm>,
}

impl TryFrom<RawSpec> for WeightSpec {
    type Error = LabError;
    fn try_from(r: RawSpec) -> Result<Self> {
        WeightSpec::new(r.n, r.terms)
    }
}

impl From<WeightSpec> for RawSpec {
    fn from(w: WeightSpec) -> Self {
        RawSpec {
            n: w.n,
            terms: w.terms,
        }
    }
}

/// Complex Hessian `d^2 phi / dz_j dzbar_k`, padded to 2x2 when n = 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeviMatrix {
    pub n: usize,
    pub entries: [[C64; 2]; 2],
}

impl LeviMatrix {
    pub fn zero(n: usize) -> Self {
        LeviMatrix {
            n,
            entries: [[C64::new(0.0, 0.0); 2]; 2],
        }
    }

    pub fn get(&self, j: usize, k: usize) -> C64 {
        self.entries[j][k]
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        let e = &self.entries;
        if self.n == 1 {
            return e[0][0].re;
        }
        hermitian2_min_eig(e[0][0].re, e[1][1].re, e[0][1])
    }

    /// `sum_{jk} levi[j][k] u_j conj(u_k)`, real for Hermitian input.
    pub fn quadratic(&self, u: &[C64]) -> f64 {
        let mut s = C64::new(0.0, 0.0);
        for j in 0..self.n {
            for k in 0..self.n {
                s += self.entries[j][k] * u[j] * u[k].conj();
            }
        }
        s.re
    }

    pub fn max_abs_diff(&self, other: &LeviMatrix) -> f64 {
        let mut d: f64 = 0.0;
        for j in 0..self.n {
            for k in 0..self.n {
                d = d.max((self.entries[j][k] - other.entries[j][k]).norm());
            }
        }
        d
    }
}

/// Lowest eigenvalue of `[[a, b], [conj(b), d]]`, stable when it is tiny.
pub fn hermitian2_min_eig(a: f64, d: f64, b: C64) -> f64 {
    let half_tr = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    let top = half_tr + disc;
    if top > 0.0 {
        // det / lambda_max avoids cancellation in half_tr - disc
        (a * d - b.norm_sqr()) / top
    } else {
        half_tr - disc
    }
}

fn norm_sqr(z: &[C64]) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum()
}

impl WeightSpec {
    pub fn new(n: usize, terms: Vec<WeightTerm>) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(config(format!("dimension n must be 1 or 2, got {n}")));
        }
        if terms.is_empty() {
            return Err(config("weight needs at least one term"));
        }
        for t in &terms {
            let a = t.coefficient();
            if !a.is_finite() || a < 0.0 {
                return Err(config(format!("coefficient must be finite and >= 0, got {a}")));
            }
            let m = t.exponent();
            if m == 0 || m > MAX_EXPONENT {
                return Err(config(format!("exponent m must lie in 1..={MAX_EXPONENT}, got {m}")));
            }
            if let WeightTerm::CoordinatePower { j, .. } = *t {
                if j == 0 || j > n {
                    return Err(config(format!("coordinate index j={j} outside 1..={n}")));
                }
            }
        }
        Ok(WeightSpec { n, terms })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[WeightTerm] {
        &self.terms
    }

    /// Same weight with every coefficient multiplied by `s >= 0`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .map(|t| match *t {
                WeightTerm::CoordinatePower { a, j, m } => WeightTerm::CoordinatePower { a: a * s, j, m },
                WeightTerm::RadialPower { a, m } => WeightTerm::RadialPower { a: a * s, m },
            })
            .collect();
        WeightSpec::new(self.n, terms)
    }

    /// Short human-readable name, e.g. `|z1|^4+|z2|^4`.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|t| {
                let body = match *t {
                    WeightTerm::CoordinatePower { j, m, .. } => format!("|z{j}|^{}", 2 * m),
                    WeightTerm::RadialPower { m: 1, .. } => "|z|^2".to_string(),
                    WeightTerm::RadialPower { m, .. } if self.n == 1 => format!("|z|^{}", 2 * m),
                    WeightTerm::RadialPower { m, .. } => format!("(|z|^2)^{m}"),
                };
                let a = t.coefficient();
                if a == 1.0 {
                    body
                } else {
                    format!("{a}*{body}")
                }
            })
            .collect();
        parts.join("+")
    }

    fn check_point(&self, z: &[C64]) {
        assert_eq!(z.len(), self.n, "point has {} coordinates, weight lives on C^{}", z.len(), self.n);
    }

    pub fn eval(&self, z: &[C64]) -> f64 {
        self.check_point(z);
        let s = norm_sqr(z);
        self.terms
            .iter()
            .map(|t| match *t {
                WeightTerm::CoordinatePower { a, j, m } => a * z[j - 1].norm_sqr().powi(m as i32),
                WeightTerm::RadialPower { a, m } => a * s.powi(m as i32),
            })
            .sum()
    }

    /// Weight at a point given by real coordinates `(x_1, y_1, x_2, y_2)`.
    pub fn eval_real(&self, x: &[f64]) -> f64 {
        let z: Vec<C64> = (0..self.n).map(|j| C64::new(x[2 * j], x[2 * j + 1])).collect();
        self.eval(&z)
    }

    /// Holomorphic gradient `d phi / dz_j`.
    pub fn eval_gradient(&self, z: &[C64]) -> Vec<C64> {
        self.check_point(z);
        let s = norm_sqr(z);
        let mut g = vec![C64::new(0.0, 0.0); self.n];
        for t in &self.terms {
            match *t {
                WeightTerm::CoordinatePower { a, j, m } => {
                    let zj = z[j - 1];
                    g[j - 1] += a * m as f64 * zj.norm_sqr().powi(m as i32 - 1) * zj.conj();
                }
                WeightTerm::RadialPower { a, m } => {
                    let c = a * m as f64 * s.powi(m as i32 - 1);
                    for (gj, zj) in g.iter_mut().zip(z) {
                        *gj += c * zj.conj();
                    }
                }
            }
        }
        g
    }

    /// Closed-form complex Hessian.
    pub fn eval_levi(&self, z: &[C64]) -> LeviMatrix {
        self.check_point(z);
        let s = norm_sqr(z);
        let mut l = LeviMatrix::zero(self.n);
        for t in &self.terms {
            match *t {
                WeightTerm::CoordinatePower { a, j, m } => {
                    let r2 = z[j - 1].norm_sqr();
                    l.entries[j - 1][j - 1] += a * (m * m) as f64 * r2.powi(m as i32 - 1);
                }
                WeightTerm::RadialPower { a, m } => {
                    let diag = a * m as f64 * s.powi(m as i32 - 1);
                    let cross = if m >= 2 {
                        a * (m * (m - 1)) as f64 * s.powi(m as i32 - 2)
                    } else {
                        0.0
                    };
                    for j in 0..self.n {
                        l.entries[j][j] += diag + cross * z[j].norm_sqr();
                        for k in (0..self.n).filter(|&k| k != j) {
                            l.entries[j][k] += cross * z[j].conj() * z[k];
                        }
                    }
                }
            }
        }
        l
    }

    pub fn lowest_levi_eigenvalue(&self, z: &[C64]) -> f64 {
        self.eval_levi(z).min_eigenvalue()
    }

    /// Levi matrix from central second differences of `phi` in real coordinates.
    pub fn finite_difference_levi(&self, z: &[C64], h: f64) -> LeviMatrix {
        self.check_point(z);
        let d = 2 * self.n;
        let mut x = vec![0.0; d];
        for j in 0..self.n {
            x[2 * j] = z[j].re;
            x[2 * j + 1] = z[j].im;
        }
        let f = |dx: &[(usize, f64)]| {
            let mut y = x.clone();
            for &(i, s) in dx {
                y[i] += s;
            }
            self.eval_real(&y)
        };
        let second = |a: usize, b: usize| -> f64 {
            if a == b {
                (f(&[(a, h)]) - 2.0 * f(&[]) + f(&[(a, -h)])) / (h * h)
            } else {
                (f(&[(a, h), (b, h)]) - f(&[(a, h), (b, -h)]) - f(&[(a, -h), (b, h)])
                    + f(&[(a, -h), (b, -h)]))
                    / (4.0 * h * h)
            }
        };
        let mut l = LeviMatrix::zero(self.n);
        for j in 0..self.n {
            for k in 0..self.n {
                let (xj, yj, xk, yk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
                let re = second(xj, xk) + second(yj, yk);
                let im = second(xj, yk) - second(yj, xk);
                l.entries[j][k] = 0.25 * C64::new(re, im);
            }
        }
        l
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

/// Deterministic quasi-uniform points on the sphere `|z| = r` in C^n.
///
/// n = 1 uses rotated equispaced angles. n = 2 uses Hopf coordinates
/// `(r cos(eta) e^{i t1}, r sin(eta) e^{i t2})` with `cos^2(eta)`, `t1`, `t2`
/// drawn from a shifted Halton sequence, which is uniform for surface measure.
pub fn sphere_samples(n: usize, r: f64, count: usize, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let tau = std::f64::consts::TAU;
    (0..count)
        .map(|k| {
            if n == 1 {
                let t = tau * (k as f64 + shift[0]) / count as f64;
                vec![C64::from_polar(r, t)]
            } else {
                let i = k as u64 + 1;
                let u = [
                    (radical_inverse(i, 2) + shift[0]).fract(),
                    (radical_inverse(i, 3) + shift[1]).fract(),
                    (radical_inverse(i, 5) + shift[2]).fract(),
                ];
                let c = u[0].sqrt();
                let s = (1.0 - u[0]).max(0.0).sqrt();
                vec![C64::from_polar(r * c, tau * u[1]), C64::from_polar(r * s, tau * u[2])]
            }
        })
        .collect()
}

/// Points of `|z| = r` lying on the complex coordinate axes.
pub fn axis_samples(n: usize, r: f64) -> Vec<Vec<C64>> {
    let zero = C64::new(0.0, 0.0);
    let rot = [C64::new(r, 0.0), C64::new(0.0, r), C64::new(-r, 0.0), C64::new(0.0, -r)];
    let mut out = Vec::new();
    for j in 0..n {
        for w in rot {
            let mut z = vec![zero; n];
            z[j] = w;
            out.push(z);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `mu` bounded below by a positive constant near infinity.
    Star,
    /// `mu` tends to infinity at infinity.
    DoubleStar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConditionConfig {
    pub radii: Vec<f64>,
    pub samples_per_sphere: usize,
    /// Positive floor for the Star condition.
    pub star_floor: f64,
    /// The outermost infimum must exceed this for DoubleStar to hold.
    pub growth_floor: f64,
    pub seed: u64,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        ConditionConfig {
            radii: vec![1.0, 2.0, 4.0, 8.0],
            samples_per_sphere: 64,
            star_floor: 1e-6,
            growth_floor: 10.0,
            seed: 0,
        }
    }
}

pub const MIN_SAMPLES_N1: usize = 8;
pub const MIN_SAMPLES_N2: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub condition: Condition,
    pub radii: Vec<f64>,
    pub inf_per_radius: Vec<f64>,
    /// Infimum over the coordinate-axis samples only.
    pub axis_mu_per_radius: Vec<f64>,
    pub verdict: Verdict,
    pub margin: f64,
}

impl ConditionVerdict {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("radius,inf_mu,axis_mu\n");
        for i in 0..self.radii.len() {
            s.push_str(&format!(
                "{},{},{}\n",
                self.radii[i], self.inf_per_radius[i], self.axis_mu_per_radius[i]
            ));
        }
        s
    }

    /// Whether the sampled infima are the same at every radius.
    pub fn constant_floor(&self) -> bool {
        let hi = self.inf_per_radius.iter().cloned().fold(f64::MIN, f64::max);
        let lo = self.inf_per_radius.iter().cloned().fold(f64::MAX, f64::min);
        hi - lo <= 1e-9 * hi.abs().max(1.0)
    }
}

fn check_samples(n: usize, samples: usize) -> Result<()> {
    let min = if n == 1 { MIN_SAMPLES_N1 } else { MIN_SAMPLES_N2 };
    if samples < min {
        return Err(config(format!(
            "samples_per_sphere={samples} too small for n={n} (need >= {min})"
        )));
    }
    Ok(())
}

/// Sampled `(inf mu, inf over axis points)` on the sphere of radius `r`.
pub fn sphere_inf_mu(spec: &WeightSpec, r: f64, samples: usize, seed: u64) -> (f64, f64) {
    let axis = axis_samples(spec.n, r)
        .iter()
        .map(|z| spec.lowest_levi_eigenvalue(z))
        .fold(f64::INFINITY, f64::min);
    let bulk = sphere_samples(spec.n, r, samples, seed)
        .iter()
        .map(|z| spec.lowest_levi_eigenvalue(z))
        .fold(f64::INFINITY, f64::min);
    (bulk.min(axis), axis)
}

/// Sampled infimum of `mu` over the shell `r_in <= |z| <= r_out`.
pub fn shell_inf_mu(spec: &WeightSpec, r_in: f64, r_out: f64, samples: usize, seed: u64) -> f64 {
    const LEVELS: usize = 16;
    (0..=LEVELS)
        .map(|i| {
            let r = r_in + (r_out - r_in) * i as f64 / LEVELS as f64;
            sphere_inf_mu(spec, r, samples, seed).0
        })
        .fold(f64::INFINITY, f64::min)
}

/// Decide Star or DoubleStar from sampled sphere infima of `mu`.
pub fn check_condition(spec: &WeightSpec, which: Condition, cfg: &ConditionConfig) -> Result<ConditionVerdict> {
    check_samples(spec.n, cfg.samples_per_sphere)?;
    if cfg.radii.len() < 3 {
        return Err(config("need at least three radii"));
    }
    if cfg.radii.iter().any(|r| !r.is_finite() || *r <= 0.0) || cfg.radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(config("radii must be positive and strictly increasing"));
    }
    let per: Vec<(f64, f64)> = cfg
        .radii
        .par_iter()
        .map(|&r| sphere_inf_mu(spec, r, cfg.samples_per_sphere, cfg.seed))
        .collect();
    let inf_per_radius: Vec<f64> = per.iter().map(|p| p.0).collect();
    let axis_mu_per_radius: Vec<f64> = per.iter().map(|p| p.1).collect();
    let t = &inf_per_radius[inf_per_radius.len() - 3..];
    let (verdict, margin) = match which {
        Condition::Star => {
            let m = t.iter().cloned().fold(f64::INFINITY, f64::min) - cfg.star_floor;
            (if m >= 0.0 { Verdict::Holds } else { Verdict::Fails }, m)
        }
        Condition::DoubleStar => {
            let (a, b, c) = (t[0], t[1], t[2]);
            let m = (b - a).min(c - b).min(c - cfg.growth_floor);
            let tol = 1e-9 * c.abs().max(1.0);
            let v = if m > 0.0 {
                Verdict::Holds
            } else if c <= a + tol {
                Verdict::Fails
            } else {
                Verdict::Inconclusive
            };
            (v, m)
        }
    };
    Ok(ConditionVerdict {
        condition: which,
        radii: cfg.radii.clone(),
        inf_per_radius,
        axis_mu_per_radius,
        verdict,
        margin,
    })
}

/// Fraction of the `e^{-phi}` mass lying outside the ball `|z| < radius`.
///
/// The ball is inscribed in the box of half-width `radius`, so this bounds
/// the mass missed by truncating to that box.
pub fn truncation_mass(spec: &WeightSpec, radius: f64) -> f64 {
    let n = spec.n;
    let samples = if n == 1 { 64 } else { 256 };
    let dirs = sphere_samples(n, 1.0, samples, 0x5eed);
    let shell = |r: f64| -> f64 {
        let mean: f64 = dirs
            .iter()
            .map(|d| {
                let z: Vec<C64> = d.iter().map(|c| c * r).collect();
                (-spec.eval(&z)).exp()
            })
            .sum::<f64>()
            / dirs.len() as f64;
        mean * r.powi(2 * n as i32 - 1)
    };
    let simpson = |a: f64, b: f64| -> f64 {
        const K: usize = 2000;
        let h = (b - a) / K as f64;
        let mut s = shell(a) + shell(b);
        for i in 1..K {
            s += shell(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let inside = simpson(0.0, radius);
    let mut outside = 0.0;
    let mut a = radius;
    for _ in 0..12 {
        let part = simpson(a, 2.0 * a);
        outside += part;
        if part <= 1e-18 * (inside + outside) {
            break;
        }
        a *= 2.0;
    }
    if inside + outside == 0.0 {
        return 0.0;
    }
    outside / (inside + outside)
}
