//! Uniform grids on the box `[-L, L]^{2n}` and the per-degree Dirichlet layers.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{config, LabError, Result};

pub const MIN_POINTS: usize = 9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct GridSpec {
    n: usize,
    half_width: f64,
    points_per_axis: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n: usize,
    half_width: f64,
    points_per_axis: usize,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = LabError;
    fn try_from(r: RawGrid) -> Result<Self> {
        GridSpec::new(r.n, r.half_width, r.points_per_axis)
    }
}

impl From<GridSpec> for RawGrid {
    fn from(g: GridSpec) -> Self {
        RawGrid {
            n: g.n,
            half_width: g.half_width,
            points_per_axis: g.points_per_axis,
        }
    }
}

impl GridSpec {
    /// `points_per_axis` must be odd (so the origin is a node) and at least 9.
    pub fn new(n: usize, half_width: f64, points_per_axis: usize) -> Result<Self> {
        if n != 1 && n != 2 {
            return Err(config(format!("grid dimension n must be 1 or 2, got {n}")));
        }
        if !half_width.is_finite() || half_width <= 0.0 {
            return Err(config(format!("half_width must be positive, got {half_width}")));
        }
        if points_per_axis < MIN_POINTS || points_per_axis.is_multiple_of(2) {
            return Err(config(format!(
                "points_per_axis must be odd and >= {MIN_POINTS}, got {points_per_axis}"
            )));
        }
        Ok(GridSpec {
            n,
            half_width,
            points_per_axis,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn half_width(&self) -> f64 {
        self.half_width
    }
    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points_per_axis - 1) as f64
    }
    /// Number of real axes, `2n`.
    pub fn real_dims(&self) -> usize {
        2 * self.n
    }
    pub fn num_points(&self) -> usize {
        self.points_per_axis.pow(self.real_dims() as u32)
    }
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }
    /// Flat-index stride of a real axis; the last axis varies fastest.
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis.pow((self.real_dims() - 1 - axis) as u32)
    }

    pub fn multi_index(&self, mut p: usize) -> [usize; 4] {
        let mut idx = [0; 4];
        let nn = self.points_per_axis;
        for a in (0..self.real_dims()).rev() {
            idx[a] = p % nn;
            p /= nn;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.points_per_axis + i)
    }

    pub fn real_coords(&self, p: usize) -> [f64; 4] {
        let idx = self.multi_index(p);
        let mut x = [0.0; 4];
        for a in 0..self.real_dims() {
            x[a] = self.coord(idx[a]);
        }
        x
    }

    pub fn z(&self, p: usize) -> Vec<C64> {
        let x = self.real_coords(p);
        (0..self.n).map(|j| C64::new(x[2 * j], x[2 * j + 1])).collect()
    }

    pub fn modulus(&self, p: usize) -> f64 {
        let x = self.real_coords(p);
        x[..self.real_dims()].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Width of the Dirichlet layer for forms of the given degree.
    ///
    /// 1-forms vanish on the outer two rings, 0- and 2-forms on the outer one,
    /// so every difference stencil of the complex stays inside the grid.
    pub fn layer(&self, degree: usize) -> usize {
        if degree == 1 {
            2
        } else {
            1
        }
    }

    pub fn in_layer(&self, p: usize, degree: usize) -> bool {
        let l = self.layer(degree);
        let hi = self.points_per_axis - 1 - l;
        let idx = self.multi_index(p);
        idx[..self.real_dims()].iter().any(|&i| i < l || i > hi)
    }

    /// Grid points where forms of the given degree may be nonzero.
    pub fn active_points(&self, degree: usize) -> Vec<usize> {
        (0..self.num_points()).filter(|&p| !self.in_layer(p, degree)).collect()
    }

    pub fn components(&self, degree: usize) -> usize {
        match (self.n, degree) {
            (_, 0) => 1,
            (n, 1) => n,
            (2, 2) => 1,
            _ => 0,
        }
    }

    pub fn space(&self, degree: usize) -> FormSpace {
        let points = self.active_points(degree);
        let mut position = vec![usize::MAX; self.num_points()];
        for (k, &p) in points.iter().enumerate() {
            position[p] = k;
        }
        FormSpace {
            degree,
            components: self.components(degree),
            points,
            position,
        }
    }
}

/// Degrees of freedom of a form degree: components outer, active points inner.
#[derive(Clone, Debug)]
pub struct FormSpace {
    pub degree: usize,
    pub components: usize,
    pub points: Vec<usize>,
    position: Vec<usize>,
}

impl FormSpace {
    pub fn dim(&self) -> usize {
        self.components * self.points.len()
    }
    /// Stacked index of `(component, grid point)`, if the point is active.
    pub fn dof(&self, component: usize, p: usize) -> Option<usize> {
        let k = self.position[p];
        (k != usize::MAX).then(|| component * self.points.len() + k)
    }
    /// `(component, grid point)` of a stacked index.
    pub fn locate(&self, dof: usize) -> (usize, usize) {
        let m = self.points.len();
        (dof / m, self.points[dof % m])
    }
}
