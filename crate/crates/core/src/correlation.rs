//! Laplacian correlation-noise models between side information and the
//! true measurements, their weighted mixtures, and the per-bit soft inputs
//! handed to the Slepian–Wolf decoder.

use std::f64::consts::LN_2;

use crate::quantization::QuantizerSpec;
use crate::slepian_wolf::SoftInput;
use crate::{Error, Result};

pub const ALPHA_MIN: f64 = 1e-3;
pub const ALPHA_MAX: f64 = 1e6;

/// `f(y | ỹ) = (α/2) exp(−α |y − ỹ|)`, variance `2/α²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplacianModel {
    alpha: f64,
}

impl LaplacianModel {
    /// Builds a model, clamping `alpha` into `[ALPHA_MIN, ALPHA_MAX]`.
    /// NaN maps to the flattest model.
    pub fn new(alpha: f64) -> Self {
        let alpha = if alpha.is_nan() {
            ALPHA_MIN
        } else {
            alpha.clamp(ALPHA_MIN, ALPHA_MAX)
        };
        LaplacianModel { alpha }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn variance(&self) -> f64 {
        2.0 / (self.alpha * self.alpha)
    }

    pub fn density(&self, y: f64, center: f64) -> f64 {
        0.5 * self.alpha * (-self.alpha * (y - center).abs()).exp()
    }

    /// `ln ∫_lo^hi f(y | center) dy`. Either bound may be infinite.
    pub fn log_mass(&self, center: f64, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return f64::NEG_INFINITY;
        }
        let a = self.alpha;
        if hi <= center {
            a * (hi - center) - LN_2 + (-(-a * (hi - lo)).exp_m1()).ln()
        } else if lo >= center {
            a * (center - lo) - LN_2 + (-(-a * (hi - lo)).exp_m1()).ln()
        } else {
            (-0.5 * (-a * (center - lo)).exp_m1() - 0.5 * (-a * (hi - center)).exp_m1()).ln()
        }
    }

    /// Log-mass and conditional mean of the density truncated to the finite
    /// interval `[lo, hi)`.
    pub fn truncated_moments(&self, center: f64, lo: f64, hi: f64) -> (f64, f64) {
        let a = self.alpha;
        let log_mass = self.log_mass(center, lo, hi);
        let mean = if center <= lo {
            lo + exp_mean_offset(a, hi - lo)
        } else if center >= hi {
            hi - exp_mean_offset(a, hi - lo)
        } else {
            let left = -0.5 * (-a * (center - lo)).exp_m1();
            let right = -0.5 * (-a * (hi - center)).exp_m1();
            let left_mean = center - exp_mean_offset(a, center - lo);
            let right_mean = center + exp_mean_offset(a, hi - center);
            (left * left_mean + right * right_mean) / (left + right)
        };
        (log_mass, mean)
    }
}

/// Mean of `t ∈ [0, d]` under density ∝ exp(−a t).
fn exp_mean_offset(a: f64, d: f64) -> f64 {
    let ad = a * d;
    if ad < 1e-4 {
        d * (0.5 - ad / 12.0)
    } else {
        1.0 / a - d / ad.exp_m1()
    }
}

/// `ln Σ exp(v)` over finite-or-−∞ inputs.
pub(crate) fn log_sum_exp(values: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.into_iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Maximum-likelihood fit: `b = mean |r|`, `α = 1/b`, clamped.
pub fn fit_laplacian(residuals: &[f64]) -> Result<LaplacianModel> {
    if residuals.is_empty() {
        return Err(Error::EmptyInput);
    }
    let b = residuals.iter().map(|r| r.abs()).sum::<f64>() / residuals.len() as f64;
    Ok(LaplacianModel::new(1.0 / b))
}

/// Simplex weights over side-information hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureWeights {
    u: Vec<f64>,
}

impl MixtureWeights {
    pub fn new(u: Vec<f64>) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::EmptyInput);
        }
        let sum: f64 = u.iter().sum();
        if u.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "mixture weights must be nonnegative and sum to 1, got {u:?}"
            )));
        }
        Ok(MixtureWeights { u })
    }

    pub fn uniform(len: usize) -> Self {
        MixtureWeights {
            u: vec![1.0 / len as f64; len],
        }
    }

    /// Puts all the mass on hypothesis `index`.
    pub fn single(len: usize, index: usize) -> Self {
        let mut u = vec![0.0; len];
        u[index] = 1.0;
        MixtureWeights { u }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.u
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// `Σ_p u_p (α_p/2) exp(−α_p |y − ỹ_p|)`
pub fn mixture_density(
    y: f64,
    sis: &[f64],
    models: &[LaplacianModel],
    weights: &MixtureWeights,
) -> Result<f64> {
    if sis.len() != models.len() || sis.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: sis.len(),
            right: models.len().min(weights.len()),
        });
    }
    Ok(sis
        .iter()
        .zip(models)
        .zip(weights.as_slice())
        .map(|((&c, m), &u)| if u == 0.0 { 0.0 } else { u * m.density(y, c) })
        .sum())
}

/// Inverse-variance weights `u_p ∝ 1/σ_p²`.
pub fn assign_mixture_weights(models: &[LaplacianModel]) -> Result<MixtureWeights> {
    if models.is_empty() {
        return Err(Error::EmptyInput);
    }
    let precision: Vec<f64> = models.iter().map(|m| 1.0 / m.variance()).collect();
    let total: f64 = precision.iter().sum();
    Ok(MixtureWeights {
        u: precision.into_iter().map(|p| p / total).collect(),
    })
}

/// Soft input for bit-plane `plane` (0 = MSB) given the already decoded
/// more-significant planes.
///
/// `prefixes[i]` holds the `plane` decoded MSBs of position `i`. For each
/// position the mixture mass is integrated over the quantization cells that
/// agree with the prefix and have bit `plane` equal to 0 (resp. 1). The two
/// extreme cells extend to ±∞ because the quantizer clamps.
/// `sis[p][i]` is hypothesis `p` at position `i`.
pub fn bitplane_llrs(
    plane: usize,
    prefixes: &[u32],
    spec: &QuantizerSpec,
    sis: &[Vec<f64>],
    models: &[LaplacianModel],
    weights: &MixtureWeights,
) -> Result<SoftInput> {
    let depth = spec.bit_depth() as usize;
    if plane >= depth {
        return Err(Error::InconsistentPrefix { plane });
    }
    if sis.len() != models.len() || sis.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: sis.len(),
            right: models.len().min(weights.len()),
        });
    }
    for s in sis {
        if s.len() != prefixes.len() {
            return Err(Error::LengthMismatch {
                left: s.len(),
                right: prefixes.len(),
            });
        }
    }
    let levels = 1u64 << depth;
    let shift = depth - plane;
    let half = 1u64 << (shift - 1);
    let step = spec.step();
    let edge = |idx: u64| -> f64 {
        if idx == 0 {
            f64::NEG_INFINITY
        } else if idx >= levels {
            f64::INFINITY
        } else {
            spec.lower() + idx as f64 * step
        }
    };
    let log_u: Vec<f64> = weights.as_slice().iter().map(|u| u.ln()).collect();

    let mut llrs = Vec::with_capacity(prefixes.len());
    let mut t0 = vec![f64::NEG_INFINITY; sis.len()];
    let mut t1 = vec![f64::NEG_INFINITY; sis.len()];
    for (i, &prefix) in prefixes.iter().enumerate() {
        if (prefix as u64) >> plane != 0 {
            return Err(Error::InconsistentPrefix { plane });
        }
        let start = (prefix as u64) << shift;
        let (a, b, c) = (edge(start), edge(start + half), edge(start + 2 * half));
        for p in 0..sis.len() {
            if log_u[p] == f64::NEG_INFINITY {
                t0[p] = f64::NEG_INFINITY;
                t1[p] = f64::NEG_INFINITY;
            } else {
                t0[p] = log_u[p] + models[p].log_mass(sis[p][i], a, b);
                t1[p] = log_u[p] + models[p].log_mass(sis[p][i], b, c);
            }
        }
        let lp0 = log_sum_exp(t0.iter().copied());
        let lp1 = log_sum_exp(t1.iter().copied());
        let llr = match (lp0.is_finite(), lp1.is_finite()) {
            (true, true) => lp0 - lp1,
            (true, false) => f64::INFINITY,
            (false, true) => f64::NEG_INFINITY,
            (false, false) => 0.0,
        };
        llrs.push(llr);
    }
    Ok(SoftInput::new(llrs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantization::{quantize, to_bitplanes};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut s = 0.5 * (f(lo) + f(hi));
        for k in 1..n {
            s += f(lo + k as f64 * h);
        }
        s * h
    }

    #[test]
    fn fit_matches_ml_formula() {
        assert_eq!(fit_laplacian(&[1.0, -1.0, 1.0, -1.0]).unwrap().alpha(), 1.0);
        assert_eq!(fit_laplacian(&[0.0; 5]).unwrap().alpha(), ALPHA_MAX);
        assert!(matches!(fit_laplacian(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn fit_is_consistent() {
        // inverse-CDF sampling of Laplace(0, b = 1/2)
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples: Vec<f64> = (0..100_000)
            .map(|_| {
                let u: f64 = rng.random_range(-0.5..0.5);
                -0.5 * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            })
            .collect();
        let alpha = fit_laplacian(&samples).unwrap().alpha();
        assert!((alpha - 2.0).abs() < 0.1, "alpha = {alpha}");
    }

    #[test]
    fn fit_is_scale_equivariant() {
        let r = [0.3, -1.2, 0.7, 2.5, -0.01];
        let base = fit_laplacian(&r).unwrap().alpha();
        for c in [0.25, 2.0, 8.0] {
            let scaled: Vec<f64> = r.iter().map(|v| v * c).collect();
            assert_eq!(fit_laplacian(&scaled).unwrap().alpha(), base / c);
        }
    }

    #[test]
    fn variance_matches_alpha() {
        let m = LaplacianModel::new(3.0);
        assert!((m.variance() - 2.0 / 9.0).abs() < 1e-12);
        assert_eq!(LaplacianModel::new(1e9).alpha(), ALPHA_MAX);
        assert_eq!(LaplacianModel::new(0.0).alpha(), ALPHA_MIN);
    }

    #[test]
    fn mixture_density_peak_and_zero_weight() {
        let m2 = LaplacianModel::new(2.0);
        let w = MixtureWeights::single(1, 0);
        assert_eq!(mixture_density(0.7, &[0.7], &[m2], &w).unwrap(), 1.0);

        let models = [m2, LaplacianModel::new(0.5)];
        let w = MixtureWeights::new(vec![1.0, 0.0]).unwrap();
        let single = mixture_density(0.3, &[0.0], &[m2], &MixtureWeights::single(1, 0)).unwrap();
        assert_eq!(mixture_density(0.3, &[0.0, 5.0], &models, &w).unwrap(), single);
        assert!(matches!(
            mixture_density(0.3, &[0.0], &models, &w),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn mixture_integrates_to_one() {
        let models = [LaplacianModel::new(0.8), LaplacianModel::new(3.0), LaplacianModel::new(1.5)];
        let sis = [-1.0, 0.5, 2.0];
        let w = MixtureWeights::new(vec![0.2, 0.5, 0.3]).unwrap();
        let half_width = 40.0 / 0.8;
        let total = trapezoid(
            |y| mixture_density(y, &sis, &models, &w).unwrap(),
            -half_width,
            half_width,
            400_000,
        );
        assert!((total - 1.0).abs() < 1e-4, "integral = {total}");
    }

    #[test]
    fn inverse_variance_weights() {
        assert_eq!(
            assign_mixture_weights(&[LaplacianModel::new(2.0)]).unwrap().as_slice(),
            &[1.0]
        );
        let w = assign_mixture_weights(&[LaplacianModel::new(1.5); 4]).unwrap();
        for &u in w.as_slice() {
            assert!((u - 0.25).abs() < 1e-15);
        }
        // variances 1 and 4: alpha = sqrt(2) and sqrt(2)/2
        let w = assign_mixture_weights(&[
            LaplacianModel::new(2f64.sqrt()),
            LaplacianModel::new(2f64.sqrt() / 2.0),
        ])
        .unwrap();
        assert!((w.as_slice()[0] - 0.8).abs() < 1e-12);
        assert!((w.as_slice()[1] - 0.2).abs() < 1e-12);
        assert!(assign_mixture_weights(&[]).is_err());
    }

    #[test]
    fn log_mass_matches_cdf_difference() {
        let m = LaplacianModel::new(1.7);
        let cdf = |y: f64, c: f64| {
            if y < c {
                0.5 * (1.7 * (y - c)).exp()
            } else {
                1.0 - 0.5 * (-1.7 * (y - c)).exp()
            }
        };
        for (c, lo, hi) in [(0.0, -1.0, 1.0), (2.0, -1.0, 0.5), (-3.0, 0.2, 0.9), (0.4, 0.4, 3.0)] {
            let expect = cdf(hi, c) - cdf(lo, c);
            assert!((m.log_mass(c, lo, hi).exp() - expect).abs() < 1e-14);
        }
        assert!((m.log_mass(0.3, f64::NEG_INFINITY, f64::INFINITY)).abs() < 1e-15);
        assert!((m.log_mass(0.3, f64::NEG_INFINITY, 0.3).exp() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn llrs_reproduce_index_bits_for_sharp_si() {
        let spec = QuantizerSpec::new(6, 0.0, 6.4).unwrap();
        let y: Vec<f64> = (0..64).map(|k| 0.05 + 0.1 * k as f64).collect();
        let q = quantize(&y, &spec);
        let planes = to_bitplanes(&q);
        let models = [LaplacianModel::new(1e4)];
        let w = MixtureWeights::single(1, 0);
        let mut prefixes = vec![0u32; 64];
        for b in 0..6 {
            let soft = bitplane_llrs(b, &prefixes, &spec, std::slice::from_ref(&y), &models, &w).unwrap();
            for i in 0..64 {
                let bit = (soft.llrs()[i] < 0.0) as u8;
                assert_eq!(bit, planes.planes()[b][i]);
                prefixes[i] = (prefixes[i] << 1) | bit as u32;
            }
        }
        assert_eq!(prefixes, q.indices());
    }

    #[test]
    fn flat_model_is_uninformative() {
        let spec = QuantizerSpec::new(6, -1.0, 1.0).unwrap();
        let models = [LaplacianModel::new(ALPHA_MIN)];
        let w = MixtureWeights::single(1, 0);
        let soft = bitplane_llrs(3, &[5, 2, 6], &spec, &[vec![0.1, -0.4, 0.9]], &models, &w).unwrap();
        for l in soft.llrs() {
            assert!(l.abs() < 1e-2, "llr {l}");
        }
    }

    #[test]
    fn inconsistent_prefix_is_rejected() {
        let spec = QuantizerSpec::new(4, 0.0, 1.0).unwrap();
        let w = MixtureWeights::single(1, 0);
        let r = bitplane_llrs(1, &[2], &spec, &[vec![0.5]], &[LaplacianModel::new(1.0)], &w);
        assert!(matches!(r, Err(Error::InconsistentPrefix { plane: 1 })));
    }

    proptest! {
        #[test]
        fn plane_masses_partition_prefix_mass(
            center in -2.0f64..2.0, alpha in 0.1f64..20.0, plane in 0usize..6, raw_prefix in 0u32..64,
        ) {
            let spec = QuantizerSpec::new(6, -1.0, 1.0).unwrap();
            let prefix = raw_prefix >> (6 - plane);
            let m = LaplacianModel::new(alpha);
            let shift = 6 - plane;
            let edge = |idx: u32| if idx == 0 { f64::NEG_INFINITY } else if idx >= 64 { f64::INFINITY } else { -1.0 + idx as f64 * spec.step() };
            let start = prefix << shift;
            let half = 1u32 << (shift - 1);
            let p0 = m.log_mass(center, edge(start), edge(start + half)).exp();
            let p1 = m.log_mass(center, edge(start + half), edge(start + 2 * half)).exp();
            let whole = m.log_mass(center, edge(start), edge(start + 2 * half)).exp();
            prop_assert!((p0 + p1 - whole).abs() <= 1e-9);
            let soft = bitplane_llrs(plane, &[prefix], &spec, &[vec![center]], &[m], &MixtureWeights::single(1, 0)).unwrap();
            if p0 > 1e-12 && p1 > 1e-12 {
                prop_assert!((soft.llrs()[0] - (p0 / p1).ln().clamp(-30.0, 30.0)).abs() < 1e-6);
            }
        }

        #[test]
        fn weights_are_on_the_simplex(alphas in proptest::collection::vec(1e-3f64..1e3, 1..6)) {
            let models: Vec<LaplacianModel> = alphas.iter().map(|&a| LaplacianModel::new(a)).collect();
            let w = assign_mixture_weights(&models).unwrap();
            prop_assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.as_slice().iter().all(|&u| u >= 0.0));
        }
    }
}
