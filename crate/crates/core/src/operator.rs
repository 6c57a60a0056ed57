//! Complex CSR matrices and operators between weighted form spaces.

use std::io::Write;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::form::rescale;

/// Compressed sparse row matrix with sorted, duplicate-free columns.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Duplicates are summed; explicit zeros are kept.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, C64)>) -> Self {
        t.sort_by_key(|e| (e.0, e.1));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut values: Vec<C64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            assert!(r < nrows && c < ncols, "triplet ({r},{c}) outside {nrows}x{ncols}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    fn from_rows(nrows: usize, ncols: usize, rows: Vec<Vec<(usize, C64)>>) -> Self {
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        let nnz = rows.iter().map(|r| r.len()).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for row in rows {
            for (c, v) in row {
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        match self.indices[a..b].binary_search(&c) {
            Ok(k) => self.values[a + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        (0..self.nrows)
            .into_par_iter()
            .map(|r| self.row(r).fold(C64::new(0.0, 0.0), |s, (c, v)| s + v * x[c]))
            .collect()
    }

    pub fn conj_transpose(&self) -> CsrMatrix {
        let t = self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, t)
    }

    /// Replace every stored entry by `f(row, col, value)`.
    pub fn map_entries<F: Fn(usize, usize, C64) -> C64 + Sync>(&self, f: F) -> CsrMatrix {
        let mut out = self.clone();
        let rows: Vec<Vec<C64>> = (0..self.nrows)
            .into_par_iter()
            .map(|r| self.row(r).map(|(c, v)| f(r, c, v)).collect())
            .collect();
        out.values = rows.into_iter().flatten().collect();
        out
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows, "matmul dimension mismatch");
        let ncols = other.ncols;
        let rows: Vec<Vec<(usize, C64)>> = (0..self.nrows)
            .into_par_iter()
            .map_init(
                || (vec![C64::new(0.0, 0.0); ncols], vec![false; ncols]),
                |(acc, seen), r| {
                    let mut cols = Vec::new();
                    for (k, a) in self.row(r) {
                        for (c, b) in other.row(k) {
                            if !seen[c] {
                                seen[c] = true;
                                cols.push(c);
                            }
                            acc[c] += a * b;
                        }
                    }
                    cols.sort_unstable();
                    cols.iter()
                        .map(|&c| {
                            let v = acc[c];
                            acc[c] = C64::new(0.0, 0.0);
                            seen[c] = false;
                            (c, v)
                        })
                        .collect()
                },
            )
            .collect();
        CsrMatrix::from_rows(self.nrows, ncols, rows)
    }

    pub fn add(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols), "add dimension mismatch");
        let t = self.triplets().chain(other.triplets()).collect();
        CsrMatrix::from_triplets(self.nrows, self.ncols, t)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `max |A - A^H|` over stored entries of either matrix.
    pub fn hermiticity_defect(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<C64>> {
        let mut d = vec![vec![C64::new(0.0, 0.0); self.ncols]; self.nrows];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }

    /// Matrix Market `coordinate complex general`, 1-based indices.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate complex general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(w, "{} {} {:e} {:e}", r + 1, c + 1, v.re, v.im)?;
        }
        Ok(())
    }

    pub fn read_matrix_market(text: &str) -> Result<CsrMatrix> {
        let bad = |m: &str| LabError::Config(format!("matrix market: {m}"));
        let mut lines = text.lines().filter(|l| !l.starts_with('%') && !l.trim().is_empty());
        let header: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("missing size line"))?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad("bad size line")))
            .collect::<Result<_>>()?;
        if header.len() != 3 {
            return Err(bad("size line needs rows cols nnz"));
        }
        let mut t = Vec::with_capacity(header[2]);
        for l in lines {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 4 {
                return Err(bad("entry needs row col re im"));
            }
            let r: usize = f[0].parse().map_err(|_| bad("row"))?;
            let c: usize = f[1].parse().map_err(|_| bad("col"))?;
            let re: f64 = f[2].parse().map_err(|_| bad("re"))?;
            let im: f64 = f[3].parse().map_err(|_| bad("im"))?;
            t.push((r - 1, c - 1, C64::new(re, im)));
        }
        Ok(CsrMatrix::from_triplets(header[0], header[1], t))
    }
}

/// A matrix between stacked form spaces together with the log-weights of
/// its source and target degrees of freedom.
#[derive(Clone, Debug)]
pub struct WeightedOperator {
    pub matrix: CsrMatrix,
    pub source_degree: usize,
    pub target_degree: usize,
    pub source_log_weights: Vec<f64>,
    pub target_log_weights: Vec<f64>,
    /// Set when the matrix was built as the exact weighted adjoint of another.
    pub exact_adjoint: bool,
    /// `W_t^{1/2} A W_s^{-1/2}` when it was assembled directly from
    /// well-scaled factors.
    pub symmetrized: Option<CsrMatrix>,
}

impl WeightedOperator {
    pub fn new(
        matrix: CsrMatrix,
        source_degree: usize,
        target_degree: usize,
        source_log_weights: Vec<f64>,
        target_log_weights: Vec<f64>,
    ) -> Self {
        assert_eq!(matrix.ncols(), source_log_weights.len());
        assert_eq!(matrix.nrows(), target_log_weights.len());
        WeightedOperator {
            matrix,
            source_degree,
            target_degree,
            source_log_weights,
            target_log_weights,
            exact_adjoint: false,
            symmetrized: None,
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.matrix.matvec(x)
    }

    /// Weighted inner product on the source or target side.
    pub fn inner(log_weights: &[f64], a: &[C64], b: &[C64]) -> C64 {
        a.iter()
            .zip(b)
            .zip(log_weights)
            .filter(|((x, y), _)| **x != C64::new(0.0, 0.0) && **y != C64::new(0.0, 0.0))
            .map(|((x, y), lw)| rescale(*x, 0.5 * lw) * rescale(*y, 0.5 * lw).conj())
            .sum()
    }
}

/// `A* = W_src^{-1} A^H W_tgt`, the adjoint for the weighted inner products.
pub fn discrete_adjoint(op: &WeightedOperator) -> WeightedOperator {
    let (ls, lt) = (&op.source_log_weights, &op.target_log_weights);
    let m = op
        .matrix
        .conj_transpose()
        .map_entries(|q, p, v| v * (lt[p] - ls[q]).exp());
    let mut adj = WeightedOperator::new(m, op.target_degree, op.source_degree, lt.clone(), ls.clone());
    adj.exact_adjoint = true;
    adj.symmetrized = op.symmetrized.as_ref().map(|s| s.conj_transpose());
    adj
}

/// `S = W_t^{1/2} A W_s^{-1/2}`; Hermitian when `A` is weighted self-adjoint.
pub fn symmetrize(op: &WeightedOperator) -> Result<CsrMatrix> {
    let s = match &op.symmetrized {
        Some(s) => s.clone(),
        None => {
            let (ls, lt) = (&op.source_log_weights, &op.target_log_weights);
            op.matrix.map_entries(|p, q, v| v * (0.5 * (lt[p] - ls[q])).exp())
        }
    };
    if !s.all_finite() {
        return Err(LabError::Numerical(
            "symmetrized operator has non-finite entries".into(),
        ));
    }
    Ok(s)
}
