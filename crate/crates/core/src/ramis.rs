//! RAMIS: sequential recovery with multiple incremental side information.
//!
//! Source `x_j` minimizes
//! `½‖Φ_j x − y_j‖² + λ Σ_p β_p ‖W_p (x − x_p)‖₁` over the side-information
//! set `{x_0 = 0, x̂_1, …, x̂_{j−1}}`, with the diagonal weights `W_p` and the
//! inter-signal weights `β_p` re-estimated after every proximal step.

use crate::sensing::MeasurementMatrix;
use crate::solvers::{estimate_lipschitz, resolve_lambda, sq_norm, RecoveryResult, SolverConfig};
use crate::{Error, Result};

/// Ordered side information; index 0 is always the zero signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SiSet {
    signals: Vec<Vec<f64>>,
}

impl SiSet {
    pub fn new(n: usize) -> Self {
        SiSet {
            signals: vec![vec![0.0; n]],
        }
    }

    /// `{0} ∪ others`, in order.
    pub fn with_signals(n: usize, others: impl IntoIterator<Item = Vec<f64>>) -> Result<Self> {
        let mut s = SiSet::new(n);
        for x in others {
            s.push(x)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, x: Vec<f64>) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: x.len(),
            });
        }
        self.signals.push(x);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.signals[0].len()
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn signals(&self) -> &[Vec<f64>] {
        &self.signals
    }
}

/// Intra weights `w_p` (one length-n vector per side signal) and inter
/// weights `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    pub w: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
}

impl WeightState {
    /// `W_0 = I`, `β_0 = 1`, every other weight zero.
    pub fn initial(n: usize, signals: usize) -> Self {
        let mut w = vec![vec![0.0; n]; signals];
        w[0].fill(1.0);
        let mut beta = vec![0.0; signals];
        beta[0] = 1.0;
        WeightState { w, beta }
    }

    /// Plain ℓ1 weights on the zero signal only.
    pub fn l1(n: usize) -> Self {
        Self::initial(n, 1)
    }
}

/// `w_i = n a_i⁻¹ / Σ_l a_l⁻¹` with `a_i = |x_i − x_{p,i}| + ε`.
pub fn intra_weights(x_curr: &[f64], x_p: &[f64], epsilon: f64) -> Vec<f64> {
    let n = x_curr.len();
    let inv: Vec<f64> = x_curr
        .iter()
        .zip(x_p)
        .map(|(a, b)| 1.0 / ((a - b).abs() + epsilon))
        .collect();
    let total: f64 = inv.iter().sum();
    inv.into_iter().map(|v| n as f64 * v / total).collect()
}

/// `β_p = b_p⁻¹ / Σ_l b_l⁻¹` with `b_p = ‖W_p (x − x_p)‖₁ + ε`.
pub fn inter_weights(x_curr: &[f64], si: &SiSet, w: &[Vec<f64>], epsilon: f64) -> Vec<f64> {
    let inv: Vec<f64> = si
        .signals()
        .iter()
        .zip(w)
        .map(|(xp, wp)| {
            let b: f64 = x_curr
                .iter()
                .zip(xp)
                .zip(wp)
                .map(|((x, p), w)| w * (x - p).abs())
                .sum();
            1.0 / (b + epsilon)
        })
        .collect();
    let total: f64 = inv.iter().sum();
    inv.into_iter().map(|v| v / total).collect()
}

/// Recomputes all weights from the current iterate.
pub fn update_weights(x_curr: &[f64], si: &SiSet, epsilon: f64) -> WeightState {
    let w: Vec<Vec<f64>> = si
        .signals()
        .iter()
        .map(|xp| intra_weights(x_curr, xp, epsilon))
        .collect();
    let beta = inter_weights(x_curr, si, &w, epsilon);
    WeightState { w, beta }
}

/// `argmin_x ½(x − v)² + γ Σ_p c_p |x − b_p|` for `c_p ≥ 0`, by scanning the
/// sorted breakpoints. `pairs` is sorted in place.
pub fn prox_scalar(v: f64, gamma: f64, pairs: &mut [(f64, f64)]) -> f64 {
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    // slope contribution left of every breakpoint
    let mut s: f64 = -pairs.iter().map(|p| p.1).sum::<f64>();
    for &(b, c) in pairs.iter() {
        let x = v - gamma * s;
        if x < b {
            return x;
        }
        s += 2.0 * c;
        if v - gamma * s <= b {
            return b;
        }
    }
    v - gamma * s
}

/// Coordinate-wise proximal operator of `γ Σ_p β_p ‖W_p(x − x_p)‖₁`.
pub fn prox_weighted_nl1(v: &[f64], si: &SiSet, weights: &WeightState, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    prox_into(v, si, weights, gamma, &mut out);
    out
}

fn prox_into(v: &[f64], si: &SiSet, weights: &WeightState, gamma: f64, out: &mut [f64]) {
    let mut pairs = Vec::with_capacity(si.len());
    for (i, (o, &vi)) in out.iter_mut().zip(v).enumerate() {
        pairs.clear();
        for ((xp, wp), &beta) in si.signals().iter().zip(&weights.w).zip(&weights.beta) {
            let c = beta * wp[i];
            if c > 0.0 {
                pairs.push((xp[i], c));
            }
        }
        *o = prox_scalar(vi, gamma, &mut pairs);
    }
}

/// `λ Σ_p β_p ‖W_p(x − x_p)‖₁`
pub fn penalty(x: &[f64], si: &SiSet, weights: &WeightState, lambda: f64) -> f64 {
    let mut g = 0.0;
    for ((xp, wp), &beta) in si.signals().iter().zip(&weights.w).zip(&weights.beta) {
        if beta == 0.0 {
            continue;
        }
        let s: f64 = x
            .iter()
            .zip(xp)
            .zip(wp)
            .map(|((x, p), w)| w * (x - p).abs())
            .sum();
        g += beta * s;
    }
    lambda * g
}

/// `H(x)` for fixed weights.
pub fn objective(mat: &MeasurementMatrix, y: &[f64], x: &[f64], si: &SiSet, weights: &WeightState, lambda: f64) -> f64 {
    let mut r = vec![0.0; mat.rows()];
    mat.apply(x, &mut r);
    r.iter_mut().zip(y).for_each(|(r, y)| *r -= y);
    0.5 * sq_norm(&r) + penalty(x, si, weights, lambda)
}

/// `t_{k+1} = (1 + √(1 + 4t_k²)) / 2`
pub fn next_momentum(t: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
}

/// Solution, final weights and the resolved λ of one RAMIS run.
#[derive(Debug, Clone, PartialEq)]
pub struct RamisOutcome {
    pub result: RecoveryResult,
    /// Weights in force at the last proximal step; `result.objective` is
    /// `H` under these.
    pub weights: WeightState,
    pub lambda: f64,
}

/// RAMIS iteration: proximal gradient with momentum and a weight update
/// after every step. With `update = false` the initial weights stay
/// frozen, which makes the iteration plain FISTA on the weighted problem.
pub fn ramis_run(
    y: &[f64],
    mat: &MeasurementMatrix,
    si: &SiSet,
    cfg: &SolverConfig,
    update: bool,
) -> Result<RamisOutcome> {
    if y.len() != mat.rows() {
        return Err(Error::DimensionMismatch {
            expected: mat.rows(),
            got: y.len(),
        });
    }
    if si.n() != mat.cols() {
        return Err(Error::DimensionMismatch {
            expected: mat.cols(),
            got: si.n(),
        });
    }
    let n = mat.cols();
    let lambda = resolve_lambda(mat, y, cfg.lambda);
    let lip = estimate_lipschitz(mat, cfg.lipschitz_iters)?;
    let gamma = lambda / lip;
    let mut weights = WeightState::initial(n, si.len());
    let mut used = weights.clone();
    let mut x = vec![0.0; n];
    let mut x_prev = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut r = vec![0.0; mat.rows()];
    let mut grad = vec![0.0; n];
    let mut t = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        mat.apply(&u, &mut r);
        r.iter_mut().zip(y).for_each(|(r, y)| *r -= y);
        mat.apply_transpose(&r, &mut grad);
        for i in 0..n {
            v[i] = u[i] - grad[i] / lip;
        }
        std::mem::swap(&mut x, &mut x_prev);
        prox_into(&v, si, &weights, gamma, &mut x);
        used.clone_from(&weights);
        if update {
            weights = update_weights(&x, si, cfg.epsilon);
        }
        let diff: f64 = x.iter().zip(&x_prev).map(|(a, b)| (a - b) * (a - b)).sum();
        if diff <= cfg.tol * cfg.tol * sq_norm(&x).max(f64::MIN_POSITIVE) || diff == 0.0 {
            converged = true;
            break;
        }
        let t_next = next_momentum(t);
        let beta = (t - 1.0) / t_next;
        for i in 0..n {
            u[i] = x[i] + beta * (x[i] - x_prev[i]);
        }
        t = t_next;
    }
    let objective = objective(mat, y, &x, si, &used, lambda);
    Ok(RamisOutcome {
        result: RecoveryResult {
            solution: x,
            objective,
            iterations,
            converged,
        },
        weights: used,
        lambda,
    })
}

pub fn ramis_recover_one(y: &[f64], mat: &MeasurementMatrix, si: &SiSet, cfg: &SolverConfig) -> Result<RecoveryResult> {
    Ok(ramis_run(y, mat, si, cfg, true)?.result)
}

/// Recovers `x_1 … x_J` in order, each with the previously recovered
/// sources as side information.
pub fn ramis_recover_all(ys: &[&[f64]], mats: &[&MeasurementMatrix], cfg: &SolverConfig) -> Result<Vec<RecoveryResult>> {
    if ys.is_empty() {
        return Err(Error::EmptyInput);
    }
    if ys.len() != mats.len() {
        return Err(Error::LengthMismatch {
            left: ys.len(),
            right: mats.len(),
        });
    }
    let mut si = SiSet::new(mats[0].cols());
    let mut out = Vec::with_capacity(ys.len());
    for (y, mat) in ys.iter().zip(mats) {
        let r = ramis_recover_one(y, mat, &si, cfg)?;
        si.push(r.solution.clone())?;
        out.push(r);
    }
    Ok(out)
}
