//! Discrete (0,q)-forms on a grid and the weighted inner product.

use num_complex::Complex64 as C64;

use crate::error::{LabError, Result};
use crate::grid::{FormSpace, GridSpec};
use crate::weight::WeightSpec;

/// Component values of a (0,q)-form over every grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct FormField {
    degree: usize,
    n: usize,
    values: Vec<Vec<C64>>,
}

impl FormField {
    pub fn zeros(grid: &GridSpec, degree: usize) -> Self {
        FormField {
            degree,
            n: grid.n(),
            values: vec![vec![C64::new(0.0, 0.0); grid.num_points()]; grid.components(degree)],
        }
    }

    /// Evaluate `f(z)` (one value per component) at the active points; the
    /// Dirichlet layer is left at zero.
    pub fn from_fn<F>(grid: &GridSpec, degree: usize, f: F) -> Self
    where
        F: Fn(&[C64]) -> Vec<C64>,
    {
        let mut out = FormField::zeros(grid, degree);
        for p in grid.active_points(degree) {
            let v = f(&grid.z(p));
            for (c, comp) in out.values.iter_mut().enumerate() {
                comp[p] = v[c];
            }
        }
        out
    }

    pub fn degree(&self) -> usize {
        self.degree
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn components(&self) -> usize {
        self.values.len()
    }
    pub fn component(&self, c: usize) -> &[C64] {
        &self.values[c]
    }
    pub fn component_mut(&mut self, c: usize) -> &mut [C64] {
        &mut self.values[c]
    }

    pub fn expect_degree(&self, degree: usize) -> Result<()> {
        if self.degree != degree {
            return Err(LabError::DegreeMismatch {
                expected: degree,
                got: self.degree,
            });
        }
        Ok(())
    }

    pub fn is_dirichlet_compatible(&self, grid: &GridSpec) -> bool {
        (0..grid.num_points())
            .filter(|&p| grid.in_layer(p, self.degree))
            .all(|p| self.values.iter().all(|c| c[p] == C64::new(0.0, 0.0)))
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn scaled(&self, s: C64) -> FormField {
        let mut out = self.clone();
        out.values.iter_mut().flat_map(|c| c.iter_mut()).for_each(|v| *v *= s);
        out
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: C64, other: &FormField) -> Result<FormField> {
        other.expect_degree(self.degree)?;
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
        Ok(out)
    }

    /// Values at the active points of `space`, components outer.
    pub fn to_stacked(&self, space: &FormSpace) -> Vec<C64> {
        let mut v = Vec::with_capacity(space.dim());
        for c in 0..space.components {
            v.extend(space.points.iter().map(|&p| self.values[c][p]));
        }
        v
    }

    pub fn from_stacked(grid: &GridSpec, space: &FormSpace, v: &[C64]) -> FormField {
        let mut out = FormField::zeros(grid, space.degree);
        for (i, x) in v.iter().enumerate() {
            let (c, p) = space.locate(i);
            out.values[c][p] = *x;
        }
        out
    }

    /// Symmetrized coordinates `u * sqrt(w)` at the active points of `space`.
    pub fn to_symmetrized(&self, space: &FormSpace, measure: &WeightedMeasure) -> Vec<C64> {
        let mut v = Vec::with_capacity(space.dim());
        for c in 0..space.components {
            v.extend(space.points.iter().map(|&p| measure.weighted(p, self.values[c][p])));
        }
        v
    }

    /// Inverse of [`FormField::to_symmetrized`].
    ///
    /// Far out in the box `1/sqrt(w)` overflows. Coefficients there carry no
    /// resolvable weighted mass and are set to zero; if one does carry mass
    /// the conversion fails.
    pub fn from_symmetrized(
        grid: &GridSpec,
        space: &FormSpace,
        measure: &WeightedMeasure,
        v: &[C64],
    ) -> Result<FormField> {
        let total: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        let mut out = FormField::zeros(grid, space.degree);
        for (i, x) in v.iter().enumerate() {
            if *x == C64::new(0.0, 0.0) {
                continue;
            }
            let (c, p) = space.locate(i);
            let log_scale = x.norm().ln() - 0.5 * measure.log_weight(p);
            if log_scale > 600.0 {
                if x.norm_sqr() > 1e-30 * total {
                    return Err(LabError::Numerical(format!(
                        "form coefficient at grid point {p} not representable without the weight"
                    )));
                }
                continue;
            }
            out.values[c][p] = rescale(*x, -0.5 * measure.log_weight(p));
        }
        Ok(out)
    }

    /// CSV rows `index,re,im` with `index = component * num_points + point`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,re,im\n");
        let np = self.values.first().map_or(0, |c| c.len());
        for (c, comp) in self.values.iter().enumerate() {
            for (p, v) in comp.iter().enumerate() {
                s.push_str(&format!("{},{},{}\n", c * np + p, v.re, v.im));
            }
        }
        s
    }
}

/// Pointwise weight `e^{-phi} h^{2n}`, kept in log form.
#[derive(Clone, Debug)]
pub struct WeightedMeasure {
    log_cell: f64,
    phi: Vec<f64>,
}

impl WeightedMeasure {
    pub fn new(spec: &WeightSpec, grid: &GridSpec) -> Result<Self> {
        if spec.n() != grid.n() {
            return Err(LabError::Config(format!(
                "weight lives on C^{} but grid on C^{}",
                spec.n(),
                grid.n()
            )));
        }
        let phi = (0..grid.num_points()).map(|p| spec.eval(&grid.z(p))).collect();
        Ok(WeightedMeasure {
            log_cell: grid.real_dims() as f64 * grid.spacing().ln(),
            phi,
        })
    }

    pub fn phi(&self, p: usize) -> f64 {
        self.phi[p]
    }
    pub fn log_weight(&self, p: usize) -> f64 {
        self.log_cell - self.phi[p]
    }
    pub fn weight(&self, p: usize) -> f64 {
        self.log_weight(p).exp()
    }
    pub fn sqrt_weight(&self, p: usize) -> f64 {
        (0.5 * self.log_weight(p)).exp()
    }
    /// `x * sqrt(w(p))` without forming `sqrt(w)`, which may underflow.
    pub fn weighted(&self, p: usize, x: C64) -> C64 {
        rescale(x, 0.5 * self.log_weight(p))
    }
    pub fn stacked_log_weights(&self, space: &FormSpace) -> Vec<f64> {
        (0..space.dim()).map(|i| self.log_weight(space.locate(i).1)).collect()
    }
}

/// `x * e^{log_factor}` computed in log space so that a huge factor and a
/// tiny `x` (or the reverse) do not overflow.
pub fn rescale(x: C64, log_factor: f64) -> C64 {
    let r = x.norm();
    if r == 0.0 || !r.is_finite() {
        return x * log_factor.exp();
    }
    (x / r) * (r.ln() + log_factor).exp()
}

/// `sum_p sum_c a_c(p) conj(b_c(p)) e^{-phi(p)} h^{2n}`.
pub fn weighted_inner(a: &FormField, b: &FormField, measure: &WeightedMeasure) -> Result<C64> {
    b.expect_degree(a.degree)?;
    let mut s = C64::new(0.0, 0.0);
    for (ca, cb) in a.values.iter().zip(&b.values) {
        for (p, (x, y)) in ca.iter().zip(cb).enumerate() {
            if *x == C64::new(0.0, 0.0) || *y == C64::new(0.0, 0.0) {
                continue;
            }
            s += measure.weighted(p, *x) * measure.weighted(p, *y).conj();
        }
    }
    Ok(s)
}

pub fn weighted_norm_sqr(a: &FormField, measure: &WeightedMeasure) -> f64 {
    a.values
        .iter()
        .flat_map(|c| c.iter().enumerate())
        .filter(|(_, x)| **x != C64::new(0.0, 0.0))
        .map(|(p, x)| measure.weighted(p, *x).norm_sqr())
        .sum()
}

pub fn weighted_norm(a: &FormField, measure: &WeightedMeasure) -> f64 {
    weighted_norm_sqr(a, measure).sqrt()
}
