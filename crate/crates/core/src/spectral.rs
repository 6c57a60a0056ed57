//! Lowest eigenpairs of the box Laplacian, the dense oracle and the Neumann
//! operator.
//!
//! Everything runs on the symmetrized matrix `S = W^{1/2} box W^{-1/2}`,
//! which is Hermitian positive semidefinite in the plain Euclidean product.
//! Eigenvectors of `S` map to eigenforms by `u = W^{-1/2} v`.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Par, Side};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dbar::DbarComplex;
use crate::error::{config, LabError, Result};
use crate::form::FormField;
use crate::operator::{symmetrize, CsrMatrix, WeightedOperator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub k: usize,
    /// Relative residual target `||S v - lambda v|| <= tol * max(1, lambda)`.
    pub tol: f64,
    /// Budget of Lanczos steps summed over all restarts.
    pub max_iter: usize,
    /// Dense eigendecomposition is used as cross-check (and fallback) up to this dimension.
    pub dense_fallback_dim: usize,
    /// Shift for the shift-invert transform, below the spectrum.
    pub shift: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            k: 8,
            tol: 1e-8,
            max_iter: 6000,
            dense_fallback_dim: 2500,
            shift: -0.1,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(config("solver k must be >= 1"));
        }
        if !(self.tol > 0.0 && self.tol <= 1e-4) {
            return Err(config(format!("solver tol must lie in (0, 1e-4], got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(config("solver max_iter must be >= 1"));
        }
        if !(self.shift < 0.0 && self.shift.is_finite()) {
            return Err(config("solver shift must be negative"));
        }
        Ok(())
    }
}

/// Eigenpair of `S`; `vector` is unit-norm in symmetrized coordinates.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub lambda: f64,
    pub residual: f64,
    pub vector: Vec<C64>,
}

impl EigenPair {
    /// The eigenform in original coordinates, unit norm in `L^2_phi`.
    pub fn form(&self, cx: &DbarComplex) -> Result<FormField> {
        FormField::from_symmetrized(&cx.grid, cx.space(1), &cx.measure, &self.vector)
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(y: &mut [C64], s: C64, x: &[C64]) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += s * b;
    }
}

/// Eigen-decomposition of a real symmetric tridiagonal matrix by implicit QL.
/// Returns ascending eigenvalues and eigenvectors as columns `z[row][col]`.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n.saturating_sub(1)].copy_from_slice(&off[..n.saturating_sub(1)]);
    let mut z = vec![vec![0.0; n]; n];
    for (i, row) in z.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 200, "tridiagonal QL did not converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    let f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let vals = order.iter().map(|&i| d[i]).collect();
    let vecs = z
        .iter()
        .map(|row| order.iter().map(|&i| row[i]).collect())
        .collect();
    (vals, vecs)
}

enum Factor {
    Llt(faer::sparse::linalg::solvers::Llt<usize, C64>),
    Lu(faer::sparse::linalg::solvers::Lu<usize, C64>),
}

/// `x -> (S - sigma I)^{-1} x` through a sparse factorization.
struct ShiftInvert {
    factor: Factor,
    dim: usize,
}

impl ShiftInvert {
    fn new(s: &CsrMatrix, sigma: f64) -> Result<Self> {
        let dim = s.nrows();
        let m = Self::shifted(s, sigma)?;
        let factor = match m.sp_cholesky(Side::Lower) {
            Ok(llt) => Factor::Llt(llt),
            Err(_) => Factor::Lu(m.sp_lu().map_err(|e| LabError::Solver {
                message: format!("shifted operator could not be factored: {e:?}"),
                iterations: 0,
                best_residual: f64::INFINITY,
            })?),
        };
        Ok(ShiftInvert { factor, dim })
    }

    /// Cholesky only; `None` unless `S - sigma I` is numerically positive definite.
    fn cholesky(s: &CsrMatrix, sigma: f64) -> Option<Self> {
        let m = Self::shifted(s, sigma).ok()?;
        let llt = m.sp_cholesky(Side::Lower).ok()?;
        Some(ShiftInvert {
            factor: Factor::Llt(llt),
            dim: s.nrows(),
        })
    }

    fn shifted(s: &CsrMatrix, sigma: f64) -> Result<SparseColMat<usize, C64>> {
        let dim = s.nrows();
        let mut t: Vec<Triplet<usize, usize, C64>> = s
            .triplets()
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
        t.extend((0..dim).map(|i| Triplet::new(i, i, C64::new(-sigma, 0.0))));
        SparseColMat::<usize, C64>::try_new_from_triplets(dim, dim, &t)
            .map_err(|e| LabError::Numerical(format!("sparse assembly: {e:?}")))
    }

    fn apply(&self, x: &[C64]) -> Vec<C64> {
        let mut b = Mat::<C64>::from_fn(self.dim, 1, |i, _| x[i]);
        match &self.factor {
            Factor::Llt(f) => f.solve_in_place(b.as_mut()),
            Factor::Lu(f) => f.solve_in_place(b.as_mut()),
        }
        (0..self.dim).map(|i| b[(i, 0)]).collect()
    }
}

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<C64> {
    (0..dim)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect()
}

fn orthogonalize(w: &mut [C64], basis: &[Vec<C64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            axpy(w, -c, q);
        }
    }
}

struct Candidate {
    lambda: f64,
    residual: f64,
    vector: Vec<C64>,
}

/// One Lanczos run on the shift-inverted operator, restricted to the
/// orthogonal complement of `locked`. Returns Ritz pairs with true residuals,
/// smallest `lambda` first, and the number of steps taken.
fn lanczos_run(
    s: &CsrMatrix,
    op: &ShiftInvert,
    cfg: &SolverConfig,
    locked: &[Vec<C64>],
    want: usize,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Candidate>, usize) {
    let dim = s.nrows();
    let mut q0 = op.apply(&random_vector(rng, dim));
    orthogonalize(&mut q0, locked);
    let n0 = norm(&q0);
    q0.iter_mut().for_each(|x| *x /= n0);
    let mut basis = vec![q0];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut taken = 0;
    for j in 0..steps {
        let mut w = op.apply(&basis[j]);
        taken += 1;
        let a = dot(&basis[j], &w).re;
        axpy(&mut w, C64::new(-a, 0.0), &basis[j]);
        if j > 0 {
            axpy(&mut w, C64::new(-beta[j - 1], 0.0), &basis[j - 1]);
        }
        orthogonalize(&mut w, locked);
        orthogonalize(&mut w, &basis);
        alpha.push(a);
        let b = norm(&w);
        let m = alpha.len();
        let last = j + 1 == steps || m + locked.len() >= dim;
        let invariant = b <= 1e-13 * a.abs().max(f64::MIN_POSITIVE);
        if !last && !invariant && m % 8 == 0 && m >= want {
            let (theta, y) = tridiagonal_eigen(&alpha, &beta);
            let ok = (0..want.min(m)).all(|i| {
                let c = m - 1 - i;
                (b * y[m - 1][c]).abs() <= 1e-3 * cfg.tol * theta[c].abs()
            });
            if ok {
                break;
            }
        }
        if last || invariant {
            break;
        }
        beta.push(b);
        w.iter_mut().for_each(|x| *x /= b);
        basis.push(w);
    }
    let m = alpha.len();
    basis.truncate(m);
    let (theta, y) = tridiagonal_eigen(&alpha, &beta[..m.saturating_sub(1)]);
    let mut out = Vec::new();
    for i in 0..(want + 4).min(m) {
        let c = m - 1 - i;
        if theta[c] <= 0.0 {
            continue;
        }
        let mut v = vec![C64::new(0.0, 0.0); dim];
        for (r, q) in basis.iter().enumerate() {
            axpy(&mut v, C64::new(y[r][c], 0.0), q);
        }
        orthogonalize(&mut v, locked);
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let sv = s.matvec(&v);
        let lambda = dot(&v, &sv).re;
        let mut r = sv;
        axpy(&mut r, C64::new(-lambda, 0.0), &v);
        out.push(Candidate {
            lambda,
            residual: norm(&r),
            vector: v,
        });
    }
    (out, taken)
}

fn accept(c: &Candidate, tol: f64) -> bool {
    c.residual <= tol * c.lambda.abs().max(1.0)
}

/// Lowest `k` eigenpairs of a Hermitian positive semidefinite sparse matrix by
/// shift-invert Lanczos with full reorthogonalization and locking.
///
/// Converged vectors are locked and later runs start from fresh random
/// vectors in their orthogonal complement, so repeated eigenvalues are
/// found with their multiplicity. The search stops once a run in the
/// complement finds nothing below the current `k`-th eigenvalue.
pub fn lanczos_smallest(s: &CsrMatrix, cfg: &SolverConfig) -> Result<(Vec<EigenPair>, usize)> {
    cfg.validate()?;
    faer::set_global_parallelism(Par::Seq);
    let dim = s.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = ShiftInvert::new(s, cfg.shift)?;
    // A short pilot run bounds lambda_min from above; moving the shift just
    // below it separates clustered eigenvalues far better than a fixed shift.
    let (pilot, used) = lanczos_run(s, &base, cfg, &[], 1, PILOT_STEPS.min(dim), &mut rng);
    let estimate = pilot.first().map(|c| c.lambda);
    if let Some(est) = estimate.filter(|e| *e > 0.0) {
        let mut sigma = (1.0 - SHIFT_GAP) * est;
        for _ in 0..6 {
            if sigma <= cfg.shift {
                break;
            }
            if let Some(op) = ShiftInvert::cholesky(s, sigma) {
                let found = locked_search(s, &op, cfg, &mut rng, used)?;
                // the pilot Rayleigh quotient is an upper bound for lambda_min
                if found.0[0].lambda <= est + cfg.tol * est.abs().max(1.0) {
                    return Ok(found);
                }
                break;
            }
            sigma = 0.5 * (sigma + cfg.shift);
        }
    }
    locked_search(s, &base, cfg, &mut rng, used)
}

const PILOT_STEPS: usize = 40;
const SHIFT_GAP: f64 = 0.05;

fn locked_search(
    s: &CsrMatrix,
    op: &ShiftInvert,
    cfg: &SolverConfig,
    rng: &mut ChaCha8Rng,
    mut used: usize,
) -> Result<(Vec<EigenPair>, usize)> {
    let dim = s.nrows();
    let k = cfg.k.min(dim);
    let mut locked: Vec<Vec<C64>> = Vec::new();
    let mut pairs: Vec<EigenPair> = Vec::new();
    let mut steps = (2 * k + 20).max(40);
    let mut best = f64::INFINITY;
    let fail = |pairs: usize, used: usize, best: f64| LabError::Solver {
        message: format!("{} of {} eigenpairs converged", pairs.min(k), k),
        iterations: used,
        best_residual: best,
    };
    loop {
        let remaining = dim - locked.len();
        if remaining == 0 {
            break;
        }
        if used >= cfg.max_iter {
            if pairs.len() >= k {
                break;
            }
            return Err(fail(pairs.len(), used, best));
        }
        let want = k.saturating_sub(pairs.len()).max(1);
        let run_steps = steps.min(remaining).min(cfg.max_iter - used).max(1);
        let (cands, taken) = lanczos_run(s, op, cfg, &locked, want, run_steps, rng);
        used += taken;
        let kth = if pairs.len() >= k {
            let mut l: Vec<f64> = pairs.iter().map(|p| p.lambda).collect();
            l.sort_by(f64::total_cmp);
            Some(l[k - 1])
        } else {
            None
        };
        let mut newly = 0;
        let mut below_kth = false;
        for c in cands {
            best = best.min(c.residual / c.lambda.abs().max(1.0));
            if !accept(&c, cfg.tol) {
                break;
            }
            if let Some(t) = kth {
                if c.lambda < t + cfg.tol * t.abs().max(1.0) {
                    below_kth = true;
                }
            }
            locked.push(c.vector.clone());
            pairs.push(EigenPair {
                lambda: c.lambda,
                residual: c.residual,
                vector: c.vector,
            });
            newly += 1;
        }
        if kth.is_some() && newly > 0 && !below_kth {
            break;
        }
        if newly == 0 {
            steps = (steps * 2).min(remaining);
        }
    }
    pairs.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    pairs.truncate(k);
    Ok((order_pairs(pairs), used))
}

/// Rotate so the first non-negligible entry is real and positive.
fn phase_fix(v: &mut [C64]) {
    let m = v.iter().fold(0.0, |a: f64, x| a.max(x.norm()));
    if let Some(x) = v.iter().find(|x| x.norm() > 1e-8 * m).copied() {
        let ph = x.conj() / x.norm();
        v.iter_mut().for_each(|y| *y *= ph);
    }
}

fn lex_cmp(a: &[C64], b: &[C64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im));
        if o != std::cmp::Ordering::Equal {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

pub fn cluster_tolerance(lambda: f64, tol: f64) -> f64 {
    (10.0 * tol).max(1e-9) * lambda.abs().max(1.0)
}

/// Group sorted eigenvalues into clusters of (numerically) equal values.
pub fn multiplicities(lambdas: &[f64], tol: f64) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for (i, l) in lambdas.iter().enumerate() {
        if i > 0 && (l - lambdas[i - 1]).abs() <= cluster_tolerance(*l, tol) {
            *out.last_mut().unwrap() += 1;
        } else {
            out.push(1);
        }
    }
    out
}

/// Eigenvalues closer than this are ties, ordered by their phase-fixed vectors.
pub const TIE_TOLERANCE: f64 = 1e-12;

fn order_pairs(mut pairs: Vec<EigenPair>) -> Vec<EigenPair> {
    pairs.iter_mut().for_each(|p| phase_fix(&mut p.vector));
    pairs.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len()
            && pairs[end].lambda - pairs[end - 1].lambda <= TIE_TOLERANCE * pairs[end].lambda.abs().max(1.0)
        {
            end += 1;
        }
        pairs[start..end].sort_by(|a, b| lex_cmp(&a.vector, &b.vector));
        start = end;
    }
    pairs
}

/// Full eigendecomposition of a Hermitian sparse matrix, ascending.
pub fn dense_eigen(s: &CsrMatrix, limit: usize) -> Result<(Vec<f64>, Vec<Vec<C64>>)> {
    let dim = s.nrows();
    if dim > limit {
        return Err(LabError::DenseTooLarge { dim, limit });
    }
    let mut m = Mat::<C64>::zeros(dim, dim);
    for (r, c, v) in s.triplets() {
        m[(r, c)] = v;
    }
    faer::set_global_parallelism(Par::Seq);
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| LabError::Numerical(format!("dense eigendecomposition: {e:?}")))?;
    let vals = (0..dim).map(|i| evd.S()[i].re).collect();
    let u = evd.U();
    let vecs = (0..dim).map(|j| (0..dim).map(|i| u[(i, j)]).collect()).collect();
    Ok((vals, vecs))
}

/// All eigenvalues of the operator by dense diagonalization, ascending.
pub fn dense_oracle(op: &WeightedOperator, limit: usize) -> Result<Vec<f64>> {
    let s = symmetrize(op)?;
    let dim = s.nrows();
    if dim > limit {
        return Err(LabError::DenseTooLarge { dim, limit });
    }
    let mut m = Mat::<C64>::zeros(dim, dim);
    for (r, c, v) in s.triplets() {
        m[(r, c)] = v;
    }
    faer::set_global_parallelism(Par::Seq);
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| LabError::Numerical(format!("dense eigenvalues: {e:?}")))
}

/// Lowest `cfg.k` eigenpairs of a weighted self-adjoint operator.
///
/// Falls back to the dense oracle when Lanczos fails and the dimension is
/// at most `cfg.dense_fallback_dim`.
pub fn smallest_eigenpairs(op: &WeightedOperator, cfg: &SolverConfig) -> Result<Vec<EigenPair>> {
    cfg.validate()?;
    let s = symmetrize(op)?;
    match lanczos_smallest(&s, cfg) {
        Ok((p, _)) => Ok(p),
        Err(_) if s.nrows() <= cfg.dense_fallback_dim => dense_smallest(&s, cfg),
        Err(e) => Err(e),
    }
}

fn dense_smallest(s: &CsrMatrix, cfg: &SolverConfig) -> Result<Vec<EigenPair>> {
    let (vals, vecs) = dense_eigen(s, cfg.dense_fallback_dim)?;
    let pairs = vals
        .into_iter()
        .zip(vecs)
        .take(cfg.k)
        .map(|(lambda, vector)| {
            let mut r = s.matvec(&vector);
            axpy(&mut r, C64::new(-lambda, 0.0), &vector);
            EigenPair {
                lambda,
                residual: norm(&r),
                vector,
            }
        })
        .collect();
    Ok(order_pairs(pairs))
}

/// Solves `box u = f` by Jacobi-preconditioned conjugate gradients on the
/// symmetrized system.
pub struct NeumannSolver<'a> {
    cx: &'a DbarComplex,
    s: CsrMatrix,
    inv_diag: Vec<f64>,
    pub max_iter: usize,
}

impl<'a> NeumannSolver<'a> {
    pub fn new(cx: &'a DbarComplex) -> Result<Self> {
        let s = symmetrize(&cx.box_laplacian())?;
        let inv_diag = s
            .diagonal()
            .iter()
            .map(|d| if d.re > 0.0 { 1.0 / d.re } else { 1.0 })
            .collect();
        let max_iter = 20 * s.nrows() + 100;
        Ok(NeumannSolver {
            cx,
            s,
            inv_diag,
            max_iter,
        })
    }

    /// Solve in symmetrized coordinates: `S x = b` with `||S x - b|| <= tol ||b||`.
    pub fn solve_symmetrized(&self, b: &[C64], tol: f64) -> Result<Vec<C64>> {
        let dim = b.len();
        let nb = norm(b);
        let mut x = vec![C64::new(0.0, 0.0); dim];
        if nb == 0.0 {
            return Ok(x);
        }
        let mut r = b.to_vec();
        let mut z: Vec<C64> = r.iter().zip(&self.inv_diag).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z).re;
        let mut best = 1.0;
        for it in 0..self.max_iter {
            let sp = self.s.matvec(&p);
            let curv = dot(&p, &sp).re;
            if curv <= 0.0 {
                return Err(LabError::Solver {
                    message: "operator is not positive definite on the search direction".into(),
                    iterations: it,
                    best_residual: best,
                });
            }
            let a = rz / curv;
            axpy(&mut x, C64::new(a, 0.0), &p);
            axpy(&mut r, C64::new(-a, 0.0), &sp);
            let rel = norm(&r) / nb;
            best = f64::min(best, rel);
            if rel <= tol {
                let mut check = self.s.matvec(&x);
                axpy(&mut check, C64::new(-1.0, 0.0), b);
                if norm(&check) <= tol * nb {
                    return Ok(x);
                }
                r = b.to_vec();
                axpy(&mut r, C64::new(-1.0, 0.0), &self.s.matvec(&x));
            }
            z = r.iter().zip(&self.inv_diag).map(|(a, d)| a * d).collect();
            let rz_new = dot(&r, &z).re;
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        Err(LabError::Solver {
            message: "conjugate gradients did not reach the tolerance".into(),
            iterations: self.max_iter,
            best_residual: best,
        })
    }

    pub fn apply(&self, f: &FormField, tol: f64) -> Result<FormField> {
        f.expect_degree(1)?;
        let space = self.cx.space(1);
        let b = f.to_symmetrized(space, &self.cx.measure);
        let x = self.solve_symmetrized(&b, tol)?;
        FormField::from_symmetrized(&self.cx.grid, space, &self.cx.measure, &x)
    }
}

/// `N f` with `box N f = f`, residual `||box u - f||_phi <= tol ||f||_phi`.
pub fn apply_neumann(f: &FormField, cx: &DbarComplex, tol: f64) -> Result<FormField> {
    NeumannSolver::new(cx)?.apply(f, tol)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundCheck {
    pub lambda_min: f64,
    /// Infimum of the lowest Levi eigenvalue over the grid nodes.
    pub inf_mu: f64,
    pub spacing: f64,
    /// `5 h^2 + 1e-8`.
    pub slack: f64,
    /// `lambda_min - (inf_mu - slack)`; nonnegative when the bound holds.
    pub margin: f64,
    pub passed: bool,
}

pub fn grid_inf_mu(cx: &DbarComplex) -> f64 {
    (0..cx.grid.num_points())
        .map(|p| cx.spec.lowest_levi_eigenvalue(&cx.grid.z(p)))
        .fold(f64::INFINITY, f64::min)
}

pub fn lower_bound_check(lambda_min: f64, cx: &DbarComplex) -> LowerBoundCheck {
    let inf_mu = grid_inf_mu(cx);
    let h = cx.grid.spacing();
    let slack = 5.0 * h * h + 1e-8;
    let margin = lambda_min - (inf_mu - slack);
    LowerBoundCheck {
        lambda_min,
        inf_mu,
        spacing: h,
        slack,
        margin,
        passed: margin >= 0.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCount {
    pub threshold: f64,
    pub count: usize,
    /// Every computed eigenvalue lies below the threshold, so the true count
    /// may be larger.
    pub saturated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseCrossCheck {
    pub dim: usize,
    pub max_relative_deviation: f64,
    /// Largest absolute row sum of the symmetrized matrix. Dense eigenvalues
    /// carry absolute errors up to roughly `1e-16` times this.
    pub operator_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub weight: String,
    pub grid: crate::grid::GridSpec,
    pub dim: usize,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub multiplicities: Vec<usize>,
    pub neumann_norm_estimate: f64,
    pub lower_bound: LowerBoundCheck,
    pub threshold_counts: Vec<ThresholdCount>,
    pub dense_crosscheck: Option<DenseCrossCheck>,
}

impl SpectrumReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,lambda,residual\n");
        for (i, (l, r)) in self.eigenvalues.iter().zip(&self.residuals).enumerate() {
            s.push_str(&format!("{i},{l},{r}\n"));
        }
        s
    }
}

/// Lowest eigenpairs plus the derived report quantities.
pub fn compute_spectrum(
    cx: &DbarComplex,
    cfg: &SolverConfig,
    thresholds: &[f64],
) -> Result<(SpectrumReport, Vec<EigenPair>)> {
    let op = cx.box_laplacian();
    let pairs = smallest_eigenpairs(&op, cfg)?;
    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.lambda).collect();
    let dim = op.matrix.nrows();
    let dense_crosscheck = if dim <= cfg.dense_fallback_dim {
        let dense = dense_oracle(&op, cfg.dense_fallback_dim)?;
        let dev = eigenvalues
            .iter()
            .zip(&dense)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1e-300))
            .fold(0.0, f64::max);
        let s = symmetrize(&op)?;
        let operator_scale = (0..dim)
            .map(|r| s.row(r).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max);
        Some(DenseCrossCheck {
            dim,
            max_relative_deviation: dev,
            operator_scale,
        })
    } else {
        None
    };
    let lambda_min = eigenvalues[0];
    let threshold_counts = thresholds
        .iter()
        .map(|&t| {
            let count = eigenvalues.iter().filter(|&&l| l < t).count();
            ThresholdCount {
                threshold: t,
                count,
                saturated: count == eigenvalues.len(),
            }
        })
        .collect();
    let report = SpectrumReport {
        weight: cx.spec.label(),
        grid: cx.grid.clone(),
        dim,
        residuals: pairs.iter().map(|p| p.residual).collect(),
        multiplicities: multiplicities(&eigenvalues, cfg.tol),
        neumann_norm_estimate: if lambda_min > 0.0 { 1.0 / lambda_min } else { f64::INFINITY },
        lower_bound: lower_bound_check(lambda_min, cx),
        threshold_counts,
        dense_crosscheck,
        eigenvalues,
    };
    Ok((report, pairs))
}
