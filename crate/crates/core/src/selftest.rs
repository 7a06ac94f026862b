//! Built-in numerical self-checks against independent oracles.
//!
//! Each check compares a library routine with a slow reference computed a
//! different way and reports the worst error next to its tolerance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::correlation::{LaplacianModel, MixtureWeights};
use crate::entropy::{entropy_decode, entropy_encode, SymbolAlphabet};
use crate::quantization::{quantize, reconstruct_multihypothesis, to_bitplanes, QuantInterval, QuantizerSpec};
use crate::ramis::{prox_scalar, update_weights, SiSet};
use crate::slepian_wolf::{build_ladder, sw_decode, sw_encode, SoftInput};

/// Scalar prox signature `(v, γ, [(breakpoint, weight)]) -> x`.
pub type ProxFn = fn(f64, f64, &mut [(f64, f64)]) -> f64;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub error: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

pub fn run_selftest() -> Vec<CheckResult> {
    run_selftest_with(prox_scalar)
}

/// Same as [`run_selftest`] with a substitute prox, used to confirm that
/// the suite notices a wrong implementation.
pub fn run_selftest_with(prox: ProxFn) -> Vec<CheckResult> {
    vec![
        check_prox(prox),
        check_weight_sums(),
        check_entropy_roundtrip(),
        check_bitplanes(),
        check_sw_roundtrip(),
        check_reconstruction(),
    ]
}

fn prox_objective(x: f64, v: f64, gamma: f64, pairs: &[(f64, f64)]) -> f64 {
    0.5 * (x - v) * (x - v) + gamma * pairs.iter().map(|&(b, c)| c * (x - b).abs()).sum::<f64>()
}

/// Minimizer by enumeration: every breakpoint and the stationary point of
/// every quadratic piece.
fn prox_oracle(v: f64, gamma: f64, pairs: &[(f64, f64)]) -> f64 {
    let mut candidates: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    for k in 0..=pairs.len() {
        // slope sign pattern: left of the k smallest breakpoints is +1
        let mut sorted = pairs.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let slope: f64 = sorted
            .iter()
            .enumerate()
            .map(|(i, &(_, c))| if i < k { c } else { -c })
            .sum();
        candidates.push(v - gamma * slope);
    }
    candidates
        .into_iter()
        .min_by(|a, b| prox_objective(*a, v, gamma, pairs).total_cmp(&prox_objective(*b, v, gamma, pairs)))
        .unwrap()
}

fn check_prox(prox: ProxFn) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let count = rng.random_range(1..=4);
        let pairs: Vec<(f64, f64)> = (0..count)
            .map(|_| (rng.random_range(-3.0..3.0), rng.random_range(0.0..2.0)))
            .collect();
        let v = rng.random_range(-5.0..5.0);
        let gamma = rng.random_range(0.01..2.0);
        let expected = prox_oracle(v, gamma, &pairs);
        let got = prox(v, gamma, &mut pairs.clone());
        worst = worst.max((got - expected).abs());
    }
    CheckResult {
        name: "prox_vs_enumeration",
        error: worst,
        tolerance: 1e-9,
    }
}

fn check_weight_sums() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 50;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut draw = || (0..n).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
        let x = draw();
        let si = SiSet::with_signals(n, [draw(), draw()]).unwrap();
        let ws = update_weights(&x, &si, 0.1);
        for w in &ws.w {
            worst = worst.max((w.iter().sum::<f64>() - n as f64).abs() / n as f64);
        }
        worst = worst.max((ws.beta.iter().sum::<f64>() - 1.0).abs());
    }
    CheckResult {
        name: "weight_normalization",
        error: worst,
        tolerance: 1e-12,
    }
}

fn check_entropy_roundtrip() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let alphabet = SymbolAlphabet::for_bit_depth(6);
    let symbols: Vec<u32> = (0..2000).map(|_| rng.random_range(0..64u32).min(rng.random_range(0..64))).collect();
    let ok = entropy_encode(&symbols, alphabet)
        .and_then(|bs| entropy_decode(&bs, symbols.len(), alphabet))
        .is_ok_and(|d| d == symbols);
    CheckResult {
        name: "arithmetic_coder_lossless",
        error: if ok { 0.0 } else { 1.0 },
        tolerance: 0.0,
    }
}

fn check_bitplanes() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let y: Vec<f64> = (0..300).map(|_| rng.random_range(-4.0..4.0)).collect();
    let spec = QuantizerSpec::fit(&y, 6).unwrap();
    let q = quantize(&y, &spec);
    let planes = to_bitplanes(&q);
    let rebuilt: Vec<u32> = (0..y.len())
        .map(|i| planes.planes().iter().fold(0, |acc, p| (acc << 1) | p[i] as u32))
        .collect();
    CheckResult {
        name: "bitplane_reassembly",
        error: if rebuilt == q.indices() { 0.0 } else { 1.0 },
        tolerance: 0.0,
    }
}

fn check_sw_roundtrip() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let m = 256;
    let plane: Vec<u8> = (0..m).map(|_| rng.random_bool(0.5) as u8).collect();
    let side: Vec<u8> = plane.iter().map(|&b| b ^ rng.random_bool(0.03) as u8).collect();
    let ok = build_ladder(m, 99)
        .and_then(|ladder| {
            let enc = sw_encode(&plane, &ladder)?;
            sw_decode(&enc, &SoftInput::from_bits(&side, (0.97f64 / 0.03).ln()), &ladder)
        })
        .is_ok_and(|out| out.success && out.bits == plane);
    CheckResult {
        name: "slepian_wolf_lossless",
        error: if ok { 0.0 } else { 1.0 },
        tolerance: 0.0,
    }
}

/// Composite Simpson rule with the integrand rescaled by its peak log value.
fn quadrature_mean(lo: f64, hi: f64, sis: &[(f64, LaplacianModel)], u: &[f64]) -> f64 {
    let steps = 20_000;
    let h = (hi - lo) / steps as f64;
    let log_f = |y: f64| -> Vec<f64> {
        sis.iter()
            .zip(u)
            .map(|(&(c, model), &w)| w.ln() + (0.5 * model.alpha()).ln() - model.alpha() * (y - c).abs())
            .collect()
    };
    let peak = (0..=steps)
        .flat_map(|i| log_f(lo + i as f64 * h))
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=steps {
        let y = lo + i as f64 * h;
        let coef = if i == 0 || i == steps {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let f: f64 = log_f(y).into_iter().map(|l| (l - peak).exp()).sum();
        num += coef * y * f;
        den += coef * f;
    }
    num / den
}

fn check_reconstruction() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let lo = rng.random_range(-2.0..2.0);
        let width = rng.random_range(0.05..1.0);
        let hi = lo + width;
        let count = rng.random_range(1..=3);
        let sis: Vec<(f64, LaplacianModel)> = (0..count)
            .map(|_| (rng.random_range(-3.0..3.0), LaplacianModel::new(rng.random_range(0.5..20.0))))
            .collect();
        let u: Vec<f64> = (0..count).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = u.iter().sum();
        let u: Vec<f64> = u.iter().map(|v| v / total).collect();
        let weights = MixtureWeights::new(u.clone()).unwrap();
        let got = reconstruct_multihypothesis(QuantInterval { lower: lo, upper: hi }, &sis, &weights).unwrap();
        let expected = quadrature_mean(lo, hi, &sis, &u);
        worst = worst.max((got - expected).abs() / width);
    }
    CheckResult {
        name: "multihypothesis_vs_quadrature",
        error: worst,
        tolerance: 1e-6,
    }
}
