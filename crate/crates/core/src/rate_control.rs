//! Encoder-side rate allocation: Intra/Prior mode decision and the greedy
//! choice of the prior projection.

use nalgebra::{DMatrix, DVector};

use crate::entropy::{empirical_entropy, SymbolAlphabet};
use crate::quantization::{dequantize_midpoint, quantize, QuantizerSpec};
use crate::sensing::{make_matrix, MeasurementMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Intra,
    Prior,
}

impl Mode {
    pub fn to_byte(self) -> u8 {
        match self {
            Mode::Intra => 0,
            Mode::Prior => 1,
        }
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Mode::Intra),
            1 => Ok(Mode::Prior),
            _ => Err(Error::MalformedStream(format!("unknown mode byte {b}"))),
        }
    }
}

/// Entropy estimates in bits/symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub h_intra: f64,
    pub h_cond: f64,
    pub h_prior: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeDecision {
    pub mode: Mode,
    /// 0 in Intra mode.
    pub chosen_m_si: usize,
    pub seed: u64,
    /// Estimated payload bits of the chosen mode.
    pub estimated_bits: f64,
}

/// Least-norm preimage of `y_si` under `Φ_SI`, re-projected by `Φ_j`.
pub fn rough_si_estimate(y_si: &[f64], phi_si: &MeasurementMatrix, phi_j: &MeasurementMatrix) -> Result<Vec<f64>> {
    if phi_si.cols() != phi_j.cols() {
        return Err(Error::DimensionMismatch {
            expected: phi_j.cols(),
            got: phi_si.cols(),
        });
    }
    if y_si.len() != phi_si.rows() {
        return Err(Error::DimensionMismatch {
            expected: phi_si.rows(),
            got: y_si.len(),
        });
    }
    let a = DMatrix::from_row_slice(phi_si.rows(), phi_si.cols(), phi_si.data());
    let gram = &a * a.transpose();
    // a tiny ridge only when the Gram matrix is numerically singular
    let chol = gram.clone().cholesky().or_else(|| {
        let mut g = gram;
        for i in 0..g.nrows() {
            g[(i, i)] += 1e-10;
        }
        g.cholesky()
    });
    let z = chol
        .ok_or_else(|| Error::InvalidConfig("prior projection Gram matrix is not positive definite".into()))?
        .solve(&DVector::from_column_slice(y_si));
    let mut x = vec![0.0; phi_si.cols()];
    phi_si.apply_transpose(z.as_slice(), &mut x);
    let mut out = vec![0.0; phi_j.rows()];
    phi_j.apply(&x, &mut out);
    Ok(out)
}

/// Conditional entropy proxy: entropy of the index residual between the
/// quantized measurements and the quantized rough estimate, capped at
/// `h_intra`.
fn residual_entropy(q: &[u32], q_rough: &[u32], bit_depth: u8, h_intra: f64) -> Result<f64> {
    let offset = 1u32 << bit_depth;
    let diff: Vec<u32> = q.iter().zip(q_rough).map(|(a, b)| a + offset - b).collect();
    let h = empirical_entropy(&diff, SymbolAlphabet::for_bit_depth(bit_depth + 1))?;
    Ok(h.min(h_intra))
}

/// Rate estimate and estimated Prior-mode bits for one candidate projection.
/// `x` is the encoder's own source; the prior measurements are `Φ_SI x`.
pub fn estimate_prior(
    x: &[f64],
    y_j: &[f64],
    phi_j: &MeasurementMatrix,
    m_si: usize,
    seed: u64,
    spec: &QuantizerSpec,
) -> Result<(RateEstimate, f64)> {
    let b = spec.bit_depth();
    let alphabet = SymbolAlphabet::for_bit_depth(b);
    let q = quantize(y_j, spec);
    let h_intra = empirical_entropy(q.indices(), alphabet)?;
    let phi_si = make_matrix(m_si, phi_j.cols(), seed)?;
    let mut y_si = vec![0.0; m_si];
    phi_si.apply(x, &mut y_si);
    let q_si = quantize(&y_si, &QuantizerSpec::fit(&y_si, b)?);
    let h_prior = empirical_entropy(q_si.indices(), alphabet)?;
    let rough = rough_si_estimate(&dequantize_midpoint(&q_si), &phi_si, phi_j)?;
    let q_rough = quantize(&rough, spec);
    let h_cond = residual_entropy(q.indices(), q_rough.indices(), b, h_intra)?;
    let bits = y_j.len() as f64 * h_cond + m_si as f64 * h_prior;
    Ok((
        RateEstimate {
            h_intra,
            h_cond,
            h_prior,
        },
        bits,
    ))
}

/// Prior mode with the cheapest candidate iff its estimated total is below
/// the Intra total; ties go to Intra.
pub fn decide_mode(
    x: &[f64],
    y_j: &[f64],
    phi_j: &MeasurementMatrix,
    candidates: &[(usize, u64)],
    spec: &QuantizerSpec,
) -> Result<ModeDecision> {
    assert!(!candidates.is_empty(), "decide_mode needs at least one candidate");
    let q = quantize(y_j, spec);
    let intra_bits = y_j.len() as f64 * empirical_entropy(q.indices(), SymbolAlphabet::for_bit_depth(spec.bit_depth()))?;
    let mut best: Option<(f64, usize, u64)> = None;
    for &(m_si, seed) in candidates {
        let (_, bits) = estimate_prior(x, y_j, phi_j, m_si, seed, spec)?;
        if best.is_none_or(|(b, _, _)| bits < b) {
            best = Some((bits, m_si, seed));
        }
    }
    let (bits, m_si, seed) = best.unwrap();
    Ok(if bits < intra_bits {
        ModeDecision {
            mode: Mode::Prior,
            chosen_m_si: m_si,
            seed,
            estimated_bits: bits,
        }
    } else {
        ModeDecision {
            mode: Mode::Intra,
            chosen_m_si: 0,
            seed: 0,
            estimated_bits: intra_bits,
        }
    })
}

/// `{m/8, m/4, 3m/8, m/2}` without zeros or repeats.
pub fn default_ladder(m_j: usize) -> Vec<usize> {
    let mut l: Vec<usize> = [1, 2, 3, 4].iter().map(|k| k * m_j / 8).filter(|&m| m > 0).collect();
    l.dedup();
    l
}

/// Index of the first local minimum of `cost` scanning left to right.
pub fn first_local_minimum(len: usize, mut cost: impl FnMut(usize) -> Result<f64>) -> Result<usize> {
    if len == 0 {
        return Err(Error::EmptyInput);
    }
    let mut prev = cost(0)?;
    for i in 1..len {
        let c = cost(i)?;
        if c >= prev {
            return Ok(i - 1);
        }
        prev = c;
    }
    Ok(len - 1)
}

/// Greedy prior projection over an increasing ladder of sizes; the matrix
/// seed for size `m` is `seed_base + m`.
pub fn greedy_phi_si(
    x: &[f64],
    y_j: &[f64],
    phi_j: &MeasurementMatrix,
    ladder: &[usize],
    seed_base: u64,
    spec: &QuantizerSpec,
) -> Result<(usize, u64)> {
    let seed_of = |m: usize| seed_base.wrapping_add(m as u64);
    let idx = first_local_minimum(ladder.len(), |i| {
        Ok(estimate_prior(x, y_j, phi_j, ladder[i], seed_of(ladder[i]), spec)?.1)
    })?;
    Ok((ladder[idx], seed_of(ladder[idx])))
}
