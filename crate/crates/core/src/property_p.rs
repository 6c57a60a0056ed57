//! Sampled certificates of Property (P) and (P-tilde) on boundaries of
//! model domains.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{config, LabError, Result};
use crate::weight::{hermitian2_min_eig, sphere_samples, LeviMatrix, WeightSpec, WeightTerm};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    /// `|z|^2 - r^2 < 0` in C^n.
    Ball { n: usize, radius: f64 },
    /// `sum |z_j|^2 / a_j^2 - 1 < 0` in C^2.
    Ellipsoid { semi_axes: [f64; 2] },
    /// `|z_1|^2 + |z_2|^{2p} - 1 < 0` in C^2.
    PBall { p: u32 },
}

const BOUNDARY_TOL: f64 = 1e-10;

impl DomainSpec {
    pub fn n(&self) -> usize {
        match self {
            DomainSpec::Ball { n, .. } => *n,
            _ => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DomainSpec::Ball { n, radius } => {
                if *n != 1 && *n != 2 {
                    return Err(config("ball dimension must be 1 or 2"));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(config("ball radius must be positive"));
                }
            }
            DomainSpec::Ellipsoid { semi_axes } => {
                if semi_axes.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
                    return Err(config("ellipsoid semi-axes must be positive"));
                }
            }
            DomainSpec::PBall { p } => {
                if *p == 0 || *p > 8 {
                    return Err(config("p-ball exponent must lie in 1..=8"));
                }
            }
        }
        Ok(())
    }

    /// Defining function, negative inside.
    pub fn rho(&self, z: &[C64]) -> f64 {
        match self {
            DomainSpec::Ball { radius, .. } => z.iter().map(|c| c.norm_sqr()).sum::<f64>() - radius * radius,
            DomainSpec::Ellipsoid { semi_axes } => {
                z[0].norm_sqr() / (semi_axes[0] * semi_axes[0]) + z[1].norm_sqr() / (semi_axes[1] * semi_axes[1]) - 1.0
            }
            DomainSpec::PBall { p } => z[0].norm_sqr() + z[1].norm_sqr().powi(*p as i32) - 1.0,
        }
    }

    pub fn label(&self) -> String {
        match self {
            DomainSpec::Ball { n, radius } => format!("ball(n={n}, r={radius})"),
            DomainSpec::Ellipsoid { semi_axes } => format!("ellipsoid({}, {})", semi_axes[0], semi_axes[1]),
            DomainSpec::PBall { p } => format!("p-ball(p={p})"),
        }
    }
}

/// Smallest sample count accepted for a domain in C^n.
pub fn min_boundary_samples(n: usize) -> usize {
    if n == 1 {
        4
    } else {
        16
    }
}

/// Deterministic boundary points with `|rho| <= 1e-10`.
pub fn sample_boundary(domain: &DomainSpec, count: usize) -> Result<Vec<Vec<C64>>> {
    domain.validate()?;
    let n = domain.n();
    if count < min_boundary_samples(n) {
        return Err(config(format!(
            "need at least {} boundary samples for n={n}, got {count}",
            min_boundary_samples(n)
        )));
    }
    let pts: Vec<Vec<C64>> = match domain {
        DomainSpec::Ball { radius, .. } if n == 1 => (0..count)
            .map(|k| vec![C64::from_polar(*radius, std::f64::consts::TAU * k as f64 / count as f64)])
            .collect(),
        DomainSpec::Ball { radius, .. } => sphere_samples(2, *radius, count, 0),
        DomainSpec::Ellipsoid { semi_axes } => sphere_samples(2, 1.0, count, 0)
            .into_iter()
            .map(|w| vec![w[0] * semi_axes[0], w[1] * semi_axes[1]])
            .collect(),
        DomainSpec::PBall { .. } => sphere_samples(2, 1.0, count, 0)
            .into_iter()
            .map(|w| {
                let t = ray_root(domain, &w)?;
                Ok(vec![w[0] * t, w[1] * t])
            })
            .collect::<Result<_>>()?,
    };
    for z in &pts {
        let r = domain.rho(z);
        if !(r.abs() <= BOUNDARY_TOL) {
            return Err(LabError::Sampling(format!("boundary residual {r:e} exceeds {BOUNDARY_TOL:e}")));
        }
    }
    Ok(pts)
}

/// `t > 0` with `rho(t w) = 0`; `rho` increases along rays for these domains.
fn ray_root(domain: &DomainSpec, w: &[C64]) -> Result<f64> {
    let f = |t: f64| domain.rho(&[w[0] * t, w[1] * t]);
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut guard = 0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(LabError::Sampling("ray never leaves the domain".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let t = 0.5 * (lo + hi);
    if f(t).abs() > BOUNDARY_TOL {
        return Err(LabError::Sampling(format!("ray root residual {:e}", f(t))));
    }
    Ok(t)
}

/// A family `M -> phi_M` of plurisubharmonic functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightFamily {
    /// `phi_M = M |z|^2`.
    ScaledModulus,
    /// `phi_M = M * weight`.
    Scaled { weight: WeightSpec },
    /// `phi_M = weight`, independent of `M`.
    Fixed { weight: WeightSpec },
    /// `phi_M = exp(M (weight - level))`.
    ExpComposed { weight: WeightSpec, level: f64 },
}

fn modulus_spec(n: usize) -> WeightSpec {
    WeightSpec::new(n, vec![WeightTerm::radial(1.0, 1)]).expect("valid modulus weight")
}

impl WeightFamily {
    pub fn label(&self) -> String {
        match self {
            WeightFamily::ScaledModulus => "M*|z|^2".into(),
            WeightFamily::Scaled { weight } => format!("M*({})", weight.label()),
            WeightFamily::Fixed { weight } => weight.label(),
            WeightFamily::ExpComposed { weight, level } => format!("exp(M*({} - {level}))", weight.label()),
        }
    }

    fn base(&self, n: usize) -> WeightSpec {
        match self {
            WeightFamily::ScaledModulus => modulus_spec(n),
            WeightFamily::Scaled { weight } | WeightFamily::Fixed { weight } | WeightFamily::ExpComposed { weight, .. } => {
                weight.clone()
            }
        }
    }

    pub fn check_dimension(&self, n: usize) -> Result<()> {
        let b = self.base(n);
        if b.n() != n {
            return Err(config(format!("family lives on C^{} but domain on C^{n}", b.n())));
        }
        Ok(())
    }

    /// `(d phi_M / dz_j, complex Hessian of phi_M)` at `z`.
    pub fn derivatives(&self, m: f64, z: &[C64]) -> (Vec<C64>, LeviMatrix) {
        let b = self.base(z.len());
        let g = b.eval_gradient(z);
        let mut h = b.eval_levi(z);
        match self {
            WeightFamily::ScaledModulus | WeightFamily::Scaled { .. } => {
                scale_levi(&mut h, m);
                (g.iter().map(|x| x * m).collect(), h)
            }
            WeightFamily::Fixed { .. } => (g, h),
            WeightFamily::ExpComposed { level, .. } => {
                let e = (m * (b.eval(z) - level)).exp();
                for j in 0..h.n {
                    for k in 0..h.n {
                        h.entries[j][k] = m * e * (h.entries[j][k] + m * g[j] * g[k].conj());
                    }
                }
                (g.iter().map(|x| x * (m * e)).collect(), h)
            }
        }
    }
}

fn scale_levi(h: &mut LeviMatrix, s: f64) {
    for row in h.entries.iter_mut() {
        for v in row.iter_mut() {
            *v *= s;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PCheck {
    pub m: f64,
    pub min_hessian_eig: f64,
    /// `lambda_min(H(p)) - M` per sample.
    pub margins: Vec<f64>,
    pub min_margin: f64,
    pub passed: bool,
}

pub const P_MARGIN_TOL: f64 = 1e-10;

/// Whether `H_{phi_M} >= M` at every sample.
pub fn check_property_p(family: &WeightFamily, m: f64, samples: &[Vec<C64>]) -> PCheck {
    let margins: Vec<f64> = samples
        .iter()
        .map(|z| family.derivatives(m, z).1.min_eigenvalue() - m)
        .collect();
    let min_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    PCheck {
        m,
        min_hessian_eig: min_margin + m,
        margins,
        min_margin,
        passed: min_margin >= -P_MARGIN_TOL,
    }
}

/// `g^H H^{-1} g`, the least `C` with `|<d phi, t>|^2 <= C H(t, t)` for all `t`.
/// `None` when `H` is singular.
pub fn pointwise_c(g: &[C64], h: &LeviMatrix) -> Option<f64> {
    let e = &h.entries;
    if h.n == 1 {
        let a = e[0][0].re;
        return (a > 0.0).then(|| g[0].norm_sqr() / a);
    }
    let (a, d, b) = (e[0][0].re, e[1][1].re, e[0][1]);
    let det = a * d - b.norm_sqr();
    if hermitian2_min_eig(a, d, b) <= 1e-14 * (a.abs() + d.abs()) || det <= 0.0 {
        return None;
    }
    let cross = (g[0].conj() * b * g[1]).re;
    Some((d * g[0].norm_sqr() + a * g[1].norm_sqr() - 2.0 * cross) / det)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimalC {
    pub m: f64,
    /// Largest pointwise constant; infinite if some Hessian is singular.
    pub value: f64,
    pub per_sample: Vec<f64>,
    pub singular: bool,
}

pub fn minimal_c_tilde(family: &WeightFamily, m: f64, samples: &[Vec<C64>]) -> MinimalC {
    let per_sample: Vec<f64> = samples
        .iter()
        .map(|z| {
            let (g, h) = family.derivatives(m, z);
            pointwise_c(&g, &h).unwrap_or(f64::INFINITY)
        })
        .collect();
    let value = per_sample.iter().cloned().fold(0.0, f64::max);
    MinimalC {
        m,
        value,
        singular: value.is_infinite(),
        per_sample,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerM {
    pub m: f64,
    pub min_hessian_eig: f64,
    pub min_margin: f64,
    pub p_passed: bool,
    pub minimal_c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyPCertificate {
    pub domain: DomainSpec,
    pub family: String,
    pub boundary_samples: usize,
    pub m_values: Vec<f64>,
    pub per_m: Vec<PerM>,
    pub p_holds: bool,
    pub p_margin: f64,
    pub p_tilde_holds: bool,
    /// Largest minimal `C` over the tested `M`.
    pub p_tilde_c: f64,
    pub c_max: f64,
    pub scope: String,
}

impl PropertyPCertificate {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("m,min_hessian_eig,min_margin,p_passed,minimal_c\n");
        for r in &self.per_m {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.m, r.min_hessian_eig, r.min_margin, r.p_passed, r.minimal_c
            ));
        }
        s
    }
}

/// Check (P) for each `M` and (P-tilde) with one constant `C <= c_max` for all of them.
pub fn certify(
    domain: &DomainSpec,
    family: &WeightFamily,
    m_values: &[f64],
    count: usize,
    c_max: f64,
) -> Result<PropertyPCertificate> {
    if m_values.is_empty() || m_values.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
        return Err(config("M values must be positive and non-empty"));
    }
    family.check_dimension(domain.n())?;
    let samples = sample_boundary(domain, count)?;
    let mut per_m = Vec::new();
    for &m in m_values {
        let p = check_property_p(family, m, &samples);
        let c = minimal_c_tilde(family, m, &samples);
        per_m.push(PerM {
            m,
            min_hessian_eig: p.min_hessian_eig,
            min_margin: p.min_margin,
            p_passed: p.passed,
            minimal_c: c.value,
        });
    }
    let p_holds = per_m.iter().all(|r| r.p_passed);
    let p_margin = per_m.iter().map(|r| r.min_margin).fold(f64::INFINITY, f64::min);
    let p_tilde_c = per_m.iter().map(|r| r.minimal_c).fold(0.0, f64::max);
    Ok(PropertyPCertificate {
        domain: domain.clone(),
        family: family.label(),
        boundary_samples: samples.len(),
        m_values: m_values.to_vec(),
        per_m,
        p_holds,
        p_margin,
        p_tilde_holds: p_holds && p_tilde_c.is_finite() && p_tilde_c <= c_max,
        p_tilde_c,
        c_max,
        scope: format!(
            "checked at {} sampled boundary points and M in {:?} only",
            samples.len(),
            m_values
        ),
    })
}
