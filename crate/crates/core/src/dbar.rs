//! Central-difference dbar complex in degrees 0 -> 1 -> 2 with the weighted
//! adjoints, the formula adjoint and the box Laplacian.

use num_complex::Complex64 as C64;

use crate::error::Result;
use crate::form::{weighted_norm_sqr, FormField, WeightedMeasure};
use crate::grid::{FormSpace, GridSpec};
use crate::operator::{discrete_adjoint, CsrMatrix, WeightedOperator};
use crate::weight::WeightSpec;

const I: C64 = C64::new(0.0, 1.0);

/// Coefficients of `d/dzbar_j` (`conj = false`) or `d/dz_j` at the four
/// neighbours `p +- e_x`, `p +- e_y`.
fn stencil(grid: &GridSpec, j: usize, conj: bool) -> [(usize, isize, C64); 4] {
    let c = 1.0 / (4.0 * grid.spacing());
    let iy = if conj { -I } else { I };
    [
        (2 * j, 1, C64::new(c, 0.0)),
        (2 * j, -1, C64::new(-c, 0.0)),
        (2 * j + 1, 1, iy * c),
        (2 * j + 1, -1, -iy * c),
    ]
}

fn shift(grid: &GridSpec, p: usize, axis: usize, dir: isize) -> usize {
    let s = grid.stride(axis) as isize;
    (p as isize + dir * s) as usize
}

/// Matrix of `dbar` from 0-forms to 1-forms, over the stacked active dofs.
pub fn dbar0_matrix(grid: &GridSpec, s0: &FormSpace, s1: &FormSpace) -> CsrMatrix {
    let mut t = Vec::with_capacity(s1.dim() * 4);
    for j in 0..grid.n() {
        for &p in &s1.points {
            let row = s1.dof(j, p).unwrap();
            for (axis, dir, c) in stencil(grid, j, false) {
                let q = shift(grid, p, axis, dir);
                let col = s0.dof(0, q).expect("0-form stencil left the active set");
                t.push((row, col, c));
            }
        }
    }
    CsrMatrix::from_triplets(s1.dim(), s0.dim(), t)
}

/// Matrix of `dbar` from 1-forms to 2-forms: `dbar_1 u_2 - dbar_2 u_1`.
/// Neighbours outside the 1-form support contribute zero.
pub fn dbar1_matrix(grid: &GridSpec, s1: &FormSpace, s2: &FormSpace) -> CsrMatrix {
    let mut t = Vec::new();
    if grid.n() == 2 {
        for &p in &s2.points {
            let row = s2.dof(0, p).unwrap();
            for (k, comp, sign) in [(0usize, 1usize, 1.0), (1, 0, -1.0)] {
                for (axis, dir, c) in stencil(grid, k, false) {
                    let q = shift(grid, p, axis, dir);
                    if let Some(col) = s1.dof(comp, q) {
                        t.push((row, col, c * sign));
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(s2.dim(), s1.dim(), t)
}

fn symmetric_factor(m: &CsrMatrix, lw_src: &[f64], lw_tgt: &[f64]) -> CsrMatrix {
    m.map_entries(|p, q, v| v * (0.5 * (lw_tgt[p] - lw_src[q])).exp())
}

/// The discrete complex for one weight on one grid.
#[derive(Clone, Debug)]
pub struct DbarComplex {
    pub grid: GridSpec,
    pub spec: WeightSpec,
    pub measure: WeightedMeasure,
    pub spaces: [FormSpace; 3],
    pub d0: WeightedOperator,
    pub d1: WeightedOperator,
    pub d0_adj: WeightedOperator,
    pub d1_adj: WeightedOperator,
}

impl DbarComplex {
    pub fn new(spec: &WeightSpec, grid: &GridSpec) -> Result<Self> {
        let measure = WeightedMeasure::new(spec, grid)?;
        let spaces = [grid.space(0), grid.space(1), grid.space(2)];
        let lw: Vec<Vec<f64>> = spaces.iter().map(|s| measure.stacked_log_weights(s)).collect();
        let m0 = dbar0_matrix(grid, &spaces[0], &spaces[1]);
        let m1 = dbar1_matrix(grid, &spaces[1], &spaces[2]);
        let mut d0 = WeightedOperator::new(m0, 0, 1, lw[0].clone(), lw[1].clone());
        d0.symmetrized = Some(symmetric_factor(&d0.matrix, &lw[0], &lw[1]));
        let mut d1 = WeightedOperator::new(m1, 1, 2, lw[1].clone(), lw[2].clone());
        d1.symmetrized = Some(symmetric_factor(&d1.matrix, &lw[1], &lw[2]));
        let d0_adj = discrete_adjoint(&d0);
        let d1_adj = discrete_adjoint(&d1);
        Ok(DbarComplex {
            grid: grid.clone(),
            spec: spec.clone(),
            measure,
            spaces,
            d0,
            d1,
            d0_adj,
            d1_adj,
        })
    }

    pub fn space(&self, degree: usize) -> &FormSpace {
        &self.spaces[degree]
    }

    fn apply(&self, op: &WeightedOperator, f: &FormField) -> Result<FormField> {
        f.expect_degree(op.source_degree)?;
        let x = f.to_stacked(self.space(op.source_degree));
        let y = op.apply(&x);
        Ok(FormField::from_stacked(&self.grid, self.space(op.target_degree), &y))
    }

    /// `dbar` on functions. Values of `f` on the 0-form boundary layer are ignored.
    pub fn dbar_0(&self, f: &FormField) -> Result<FormField> {
        self.apply(&self.d0, f)
    }

    pub fn dbar_1(&self, u: &FormField) -> Result<FormField> {
        self.apply(&self.d1, u)
    }

    /// Exact weighted adjoint of `dbar_0` applied to a 1-form.
    pub fn dbar_star(&self, u: &FormField) -> Result<FormField> {
        self.apply(&self.d0_adj, u)
    }

    /// Exact weighted adjoint of `dbar_1` applied to a 2-form.
    pub fn dbar_star_1(&self, g: &FormField) -> Result<FormField> {
        self.apply(&self.d1_adj, g)
    }

    /// `-sum_j (d u_j/dz_j - dphi/dz_j u_j)` with central differences.
    pub fn dbar_star_formula(&self, u: &FormField) -> Result<FormField> {
        u.expect_degree(1)?;
        let grid = &self.grid;
        let mut out = FormField::zeros(grid, 0);
        for &p in &self.spaces[0].points {
            let grad = self.spec.eval_gradient(&grid.z(p));
            let mut acc = C64::new(0.0, 0.0);
            for (j, gj) in grad.iter().enumerate() {
                let uj = u.component(j);
                for (axis, dir, c) in stencil(grid, j, true) {
                    acc += c * uj[shift(grid, p, axis, dir)];
                }
                acc -= gj * uj[p];
            }
            out.component_mut(0)[p] = -acc;
        }
        Ok(out)
    }

    /// `dbar_zbar_k` applied to one component of a 1-form, on the 0-form support.
    pub fn dzbar_component(&self, u: &FormField, j: usize, k: usize) -> FormField {
        let grid = &self.grid;
        let uj = u.component(j);
        let mut out = FormField::zeros(grid, 0);
        for &p in &self.spaces[0].points {
            let v = stencil(grid, k, false)
                .iter()
                .map(|&(axis, dir, c)| c * uj[shift(grid, p, axis, dir)])
                .sum();
            out.component_mut(0)[p] = v;
        }
        out
    }

    /// `Q(u, v) = <dbar u, dbar v> + <dbar* u, dbar* v>`, evaluated in
    /// symmetrized coordinates.
    pub fn q_form(&self, u: &FormField, v: &FormField) -> Result<C64> {
        u.expect_degree(1)?;
        v.expect_degree(1)?;
        let a = u.to_symmetrized(self.space(1), &self.measure);
        let b = v.to_symmetrized(self.space(1), &self.measure);
        Ok(self.q_form_symmetrized(&a, &b))
    }

    pub fn q_form_symmetrized(&self, a: &[C64], b: &[C64]) -> C64 {
        let b0h = self.d0_adj.symmetrized.as_ref().unwrap();
        let b1 = self.d1.symmetrized.as_ref().unwrap();
        let dot = |x: &[C64], y: &[C64]| -> C64 { x.iter().zip(y).map(|(p, q)| p * q.conj()).sum() };
        dot(&b0h.matvec(a), &b0h.matvec(b)) + dot(&b1.matvec(a), &b1.matvec(b))
    }

    /// `box = dbar_0 dbar_0* + dbar_1* dbar_1` on 1-forms.
    pub fn box_laplacian(&self) -> WeightedOperator {
        let b0 = self.d0.symmetrized.as_ref().unwrap();
        let b1 = self.d1.symmetrized.as_ref().unwrap();
        let s = b0.matmul(&b0.conj_transpose()).add(&b1.conj_transpose().matmul(b1));
        let lw = self.measure.stacked_log_weights(self.space(1));
        let m = s.map_entries(|p, q, v| v * (0.5 * (lw[q] - lw[p])).exp());
        let mut op = WeightedOperator::new(m, 1, 1, lw.clone(), lw);
        op.symmetrized = Some(s);
        op
    }

    pub fn norm_sqr(&self, f: &FormField) -> f64 {
        weighted_norm_sqr(f, &self.measure)
    }
}

/// One-shot helpers for callers that do not keep a [`DbarComplex`].
pub fn dbar_0(f: &FormField, spec: &WeightSpec, grid: &GridSpec) -> Result<FormField> {
    DbarComplex::new(spec, grid)?.dbar_0(f)
}

pub fn dbar_1(u: &FormField, spec: &WeightSpec, grid: &GridSpec) -> Result<FormField> {
    DbarComplex::new(spec, grid)?.dbar_1(u)
}

pub fn dbar_star_formula(u: &FormField, spec: &WeightSpec, grid: &GridSpec) -> Result<FormField> {
    DbarComplex::new(spec, grid)?.dbar_star_formula(u)
}

pub fn assemble_box_laplacian(spec: &WeightSpec, grid: &GridSpec) -> Result<WeightedOperator> {
    Ok(DbarComplex::new(spec, grid)?.box_laplacian())
}
