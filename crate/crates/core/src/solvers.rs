//! FISTA for ℓ1-regularized least squares, on a single matrix or on the
//! stacked JSM operator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::sensing::{dot, MeasurementMatrix};
use crate::{Error, Result};

pub trait LinearOperator {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `out = A x`
    fn apply(&self, x: &[f64], out: &mut [f64]);
    /// `out = Aᵀ r`
    fn apply_transpose(&self, r: &[f64], out: &mut [f64]);
}

impl LinearOperator for MeasurementMatrix {
    fn rows(&self) -> usize {
        MeasurementMatrix::rows(self)
    }

    fn cols(&self) -> usize {
        MeasurementMatrix::cols(self)
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        MeasurementMatrix::apply(self, x, out)
    }

    fn apply_transpose(&self, r: &[f64], out: &mut [f64]) {
        MeasurementMatrix::apply_transpose(self, r, out)
    }
}

/// Regularization weight, either fixed or relative to `‖Aᵀy‖∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    Absolute(f64),
    Relative(f64),
}

impl Lambda {
    /// Resolves against `‖Aᵀy‖∞`. Never returns zero.
    pub fn resolve(self, aty_inf: f64) -> f64 {
        let l = match self {
            Lambda::Absolute(l) => l,
            Lambda::Relative(r) => r * aty_inf,
        };
        l.max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub lambda: Lambda,
    /// Weight smoothing for reweighted solvers, in signal units. It should be
    /// comparable to the nonzero amplitudes or the reweighting locks onto
    /// the all-zero side signal.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Stop once `‖x_k − x_{k−1}‖ < tol·‖x_k‖`.
    pub tol: f64,
    pub lipschitz_iters: usize,
    /// Gradient-based adaptive momentum restart.
    pub restart: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: Lambda::Relative(1e-3),
            epsilon: 3.0,
            max_iters: 3000,
            tol: 1e-4,
            lipschitz_iters: 100,
            restart: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let lambda_ok = match self.lambda {
            Lambda::Absolute(l) | Lambda::Relative(l) => l > 0.0 && l.is_finite(),
        };
        let ok = lambda_ok
            && self.epsilon > 0.0
            && self.max_iters > 0
            && self.tol > 0.0
            && self.tol < 1.0
            && self.lipschitz_iters > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid solver configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub solution: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration on `AᵀA` from a fixed pseudo-random start, times 1.05.
pub fn estimate_lipschitz<O: LinearOperator + ?Sized>(op: &O, iters: usize) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..op.cols()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut av = vec![0.0; op.rows()];
    let mut atav = vec![0.0; op.cols()];
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        let norm = dot(&v, &v).sqrt();
        if norm == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        op.apply(&v, &mut av);
        op.apply_transpose(&av, &mut atav);
        estimate = dot(&v, &atav);
        std::mem::swap(&mut v, &mut atav);
    }
    if !(estimate > 0.0) {
        return Err(Error::ZeroMatrix);
    }
    Ok(1.05 * estimate)
}

pub(crate) fn sq_norm(v: &[f64]) -> f64 {
    dot(v, v)
}

pub(crate) fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn check_rhs<O: LinearOperator + ?Sized>(op: &O, y: &[f64]) -> Result<()> {
    if y.len() != op.rows() {
        return Err(Error::DimensionMismatch {
            expected: op.rows(),
            got: y.len(),
        });
    }
    Ok(())
}

/// Resolved λ for `op` and `y`.
pub fn resolve_lambda<O: LinearOperator + ?Sized>(op: &O, y: &[f64], lambda: Lambda) -> f64 {
    let mut aty = vec![0.0; op.cols()];
    op.apply_transpose(y, &mut aty);
    lambda.resolve(inf_norm(&aty))
}

/// `½‖Ax − y‖² + λ‖x‖₁`
pub fn lasso_objective<O: LinearOperator + ?Sized>(op: &O, y: &[f64], x: &[f64], lambda: f64) -> f64 {
    let mut r = vec![0.0; op.rows()];
    op.apply(x, &mut r);
    r.iter_mut().zip(y).for_each(|(r, y)| *r -= y);
    0.5 * sq_norm(&r) + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
}

/// FISTA on `½‖Ax − y‖² + λ‖x‖₁` from `start` (zero when `None`).
pub fn fista<O: LinearOperator + ?Sized>(
    op: &O,
    y: &[f64],
    lambda: f64,
    cfg: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<RecoveryResult> {
    check_rhs(op, y)?;
    let n = op.cols();
    let lip = estimate_lipschitz(op, cfg.lipschitz_iters)?;
    let gamma = lambda / lip;
    let mut x = match start {
        Some(s) if s.len() == n => s.to_vec(),
        Some(s) => {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: s.len(),
            })
        }
        None => vec![0.0; n],
    };
    let mut x_prev = x.clone();
    let mut u = x.clone();
    let mut r = vec![0.0; op.rows()];
    let mut grad = vec![0.0; n];
    let mut t = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        op.apply(&u, &mut r);
        r.iter_mut().zip(y).for_each(|(r, y)| *r -= y);
        op.apply_transpose(&r, &mut grad);
        std::mem::swap(&mut x, &mut x_prev);
        let mut diff = 0.0;
        let mut restart_score = 0.0;
        for i in 0..n {
            let xi = soft_threshold(u[i] - grad[i] / lip, gamma);
            x[i] = xi;
            let d = xi - x_prev[i];
            diff += d * d;
            restart_score += (u[i] - xi) * d;
        }
        let norm = sq_norm(&x);
        if diff <= cfg.tol * cfg.tol * norm.max(f64::MIN_POSITIVE) || diff == 0.0 {
            converged = true;
            break;
        }
        if cfg.restart && restart_score > 0.0 {
            t = 1.0;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for i in 0..n {
            u[i] = x[i] + beta * (x[i] - x_prev[i]);
        }
        t = t_next;
    }
    let objective = lasso_objective(op, y, &x, lambda);
    Ok(RecoveryResult {
        solution: x,
        objective,
        iterations,
        converged,
    })
}

/// Individual recovery `min ½‖Φx − y‖² + λ‖x‖₁`.
pub fn solve_l1(y: &[f64], mat: &MeasurementMatrix, cfg: &SolverConfig) -> Result<RecoveryResult> {
    check_rhs(mat, y)?;
    let lambda = resolve_lambda(mat, y, cfg.lambda);
    fista(mat, y, lambda, cfg, None)
}

/// Stacked JSM operator `[x_c; z_1; …; z_J] ↦ [Φ_j (x_c + z_j)]_j`, applied
/// through the per-source matrices.
#[derive(Debug, Clone)]
pub struct StackedSystem<'a> {
    mats: Vec<&'a MeasurementMatrix>,
    rhs: Vec<f64>,
    row_offsets: Vec<usize>,
    n: usize,
}

impl<'a> StackedSystem<'a> {
    pub fn sources(&self) -> usize {
        self.mats.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// `(rows, cols)` of the equivalent block matrix.
    pub fn shape(&self) -> (usize, usize) {
        (self.rhs.len(), (self.mats.len() + 1) * self.n)
    }

    /// Column range of block `b` (0 = common part, `j+1` = innovation `j`).
    pub fn block(&self, b: usize) -> std::ops::Range<usize> {
        b * self.n..(b + 1) * self.n
    }

    /// Dense row-major block matrix.
    pub fn to_dense(&self) -> Vec<f64> {
        let (rows, cols) = self.shape();
        let mut out = vec![0.0; rows * cols];
        for (j, m) in self.mats.iter().enumerate() {
            for i in 0..m.rows() {
                let r = self.row_offsets[j] + i;
                let row = m.row(i);
                out[r * cols..r * cols + self.n].copy_from_slice(row);
                let off = r * cols + (j + 1) * self.n;
                out[off..off + self.n].copy_from_slice(row);
            }
        }
        out
    }

    /// Splits a stacked solution into `x_j = x_c + z_j`.
    pub fn recompose(&self, stacked: &[f64]) -> Vec<Vec<f64>> {
        let common = &stacked[self.block(0)];
        (0..self.mats.len())
            .map(|j| {
                common
                    .iter()
                    .zip(&stacked[self.block(j + 1)])
                    .map(|(c, z)| c + z)
                    .collect()
            })
            .collect()
    }
}

impl LinearOperator for StackedSystem<'_> {
    fn rows(&self) -> usize {
        self.rhs.len()
    }

    fn cols(&self) -> usize {
        (self.mats.len() + 1) * self.n
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        let mut sum = vec![0.0; n];
        for (j, m) in self.mats.iter().enumerate() {
            for (i, s) in sum.iter_mut().enumerate() {
                *s = x[i] + x[(j + 1) * n + i];
            }
            let r = self.row_offsets[j];
            m.apply(&sum, &mut out[r..r + m.rows()]);
        }
    }

    fn apply_transpose(&self, r: &[f64], out: &mut [f64]) {
        let n = self.n;
        let (common, rest) = out.split_at_mut(n);
        common.fill(0.0);
        for (j, m) in self.mats.iter().enumerate() {
            let rj = &r[self.row_offsets[j]..self.row_offsets[j] + m.rows()];
            let block = &mut rest[j * n..(j + 1) * n];
            m.apply_transpose(rj, block);
            common.iter_mut().zip(block.iter()).for_each(|(c, b)| *c += b);
        }
    }
}

pub fn build_stacked<'a>(mats: &[&'a MeasurementMatrix], ys: &[&[f64]]) -> Result<StackedSystem<'a>> {
    if mats.is_empty() {
        return Err(Error::EmptyInput);
    }
    if mats.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: mats.len(),
            right: ys.len(),
        });
    }
    let n = mats[0].cols();
    let mut rhs = Vec::new();
    let mut row_offsets = Vec::with_capacity(mats.len());
    for (m, y) in mats.iter().zip(ys) {
        if m.cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m.cols(),
            });
        }
        if y.len() != m.rows() {
            return Err(Error::DimensionMismatch {
                expected: m.rows(),
                got: y.len(),
            });
        }
        row_offsets.push(rhs.len());
        rhs.extend_from_slice(y);
    }
    Ok(StackedSystem {
        mats: mats.to_vec(),
        rhs,
        row_offsets,
        n,
    })
}

/// Joint recovery: stacked solution plus the per-source recompositions.
#[derive(Debug, Clone, PartialEq)]
pub struct JsmSolution {
    pub stacked: RecoveryResult,
    pub sources: Vec<RecoveryResult>,
}

/// Stacked Lasso, optionally warm-started from a previous stacked solution.
pub fn solve_jsm_from(system: &StackedSystem, cfg: &SolverConfig, start: Option<&[f64]>) -> Result<JsmSolution> {
    let lambda = resolve_lambda(system, system.rhs(), cfg.lambda);
    let stacked = fista(system, system.rhs(), lambda, cfg, start)?;
    let sources = system
        .recompose(&stacked.solution)
        .into_iter()
        .map(|solution| RecoveryResult {
            solution,
            objective: stacked.objective,
            iterations: stacked.iterations,
            converged: stacked.converged,
        })
        .collect();
    Ok(JsmSolution { stacked, sources })
}

pub fn solve_jsm(system: &StackedSystem, cfg: &SolverConfig) -> Result<Vec<RecoveryResult>> {
    Ok(solve_jsm_from(system, cfg, None)?.sources)
}

/// `‖a − b‖ / ‖b‖`, or `‖a‖` when `b = 0`.
pub fn relative_error(estimate: &[f64], truth: &[f64]) -> f64 {
    let num: f64 = estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let den = sq_norm(truth).sqrt();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}
