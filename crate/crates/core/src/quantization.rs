//! Uniform scalar quantization, MSB-first bit-planes and multi-hypothesis
//! dequantization.

use crate::correlation::{log_sum_exp, LaplacianModel, MixtureWeights};
use crate::{Error, Result};

/// Uniform quantizer over `[lower, upper)` with `2^bit_depth` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerSpec {
    bit_depth: u8,
    lower: f64,
    upper: f64,
}

/// Serialized size of a [`QuantizerSpec`]: depth byte plus two f64.
pub const QUANTIZER_HEADER_BYTES: usize = 17;

impl QuantizerSpec {
    pub fn new(bit_depth: u8, lower: f64, upper: f64) -> Result<Self> {
        if !(1..=16).contains(&bit_depth) {
            return Err(Error::InvalidConfig(format!(
                "bit depth must be in 1..=16, got {bit_depth}"
            )));
        }
        if !(lower.is_finite() && upper.is_finite() && upper > lower) {
            return Err(Error::InvalidConfig(format!(
                "quantizer range [{lower}, {upper}) is empty"
            )));
        }
        Ok(QuantizerSpec {
            bit_depth,
            lower,
            upper,
        })
    }

    /// Range from the min/max of `values`, widened by 1% of the span on each
    /// side. A constant vector gets a unit-width range whose middle cell is
    /// centred on the constant, so midpoint dequantization is exact.
    pub fn fit(values: &[f64], bit_depth: u8) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = max - min;
        if span > 0.0 {
            QuantizerSpec::new(bit_depth, min - 0.01 * span, max + 0.01 * span)
        } else {
            let step = 1.0 / (1u64 << bit_depth) as f64;
            let lower = min - ((1u64 << (bit_depth - 1)) as f64 + 0.5) * step;
            QuantizerSpec::new(bit_depth, lower, lower + 1.0)
        }
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn levels(&self) -> u32 {
        1 << self.bit_depth
    }

    pub fn step(&self) -> f64 {
        (self.upper - self.lower) / self.levels() as f64
    }

    /// Finite interval `[L, U)` of cell `index`.
    pub fn interval(&self, index: u32) -> QuantInterval {
        let step = self.step();
        let lower = self.lower + index as f64 * step;
        QuantInterval {
            lower,
            upper: lower + step,
        }
    }

    pub fn to_bytes(&self) -> [u8; QUANTIZER_HEADER_BYTES] {
        let mut out = [0u8; QUANTIZER_HEADER_BYTES];
        out[0] = self.bit_depth;
        out[1..9].copy_from_slice(&self.lower.to_le_bytes());
        out[9..17].copy_from_slice(&self.upper.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < QUANTIZER_HEADER_BYTES {
            return Err(Error::TruncatedStream);
        }
        let lower = f64::from_le_bytes(bytes[1..9].try_into().unwrap());
        let upper = f64::from_le_bytes(bytes[9..17].try_into().unwrap());
        QuantizerSpec::new(bytes[0], lower, upper)
            .map_err(|e| Error::MalformedStream(format!("quantizer header: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMeasurement {
    indices: Vec<u32>,
    spec: QuantizerSpec,
}

impl QuantizedMeasurement {
    pub fn new(indices: Vec<u32>, spec: QuantizerSpec) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= spec.levels()) {
            return Err(Error::SymbolOutOfRange {
                symbol: bad,
                size: spec.levels(),
            });
        }
        Ok(QuantizedMeasurement { indices, spec })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn spec(&self) -> &QuantizerSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `clamp(floor((y − lower)/step), 0, 2^B − 1)`; out-of-range values clamp.
pub fn quantize(y: &[f64], spec: &QuantizerSpec) -> QuantizedMeasurement {
    let step = spec.step();
    let top = spec.levels() - 1;
    let indices = y
        .iter()
        .map(|&v| {
            let cell = ((v - spec.lower) / step).floor();
            if cell.is_nan() || cell <= 0.0 {
                0
            } else if cell >= top as f64 {
                top
            } else {
                cell as u32
            }
        })
        .collect();
    QuantizedMeasurement {
        indices,
        spec: *spec,
    }
}

/// Cell midpoints `lower + (index + ½)·step`.
pub fn dequantize_midpoint(q: &QuantizedMeasurement) -> Vec<f64> {
    let step = q.spec.step();
    q.indices
        .iter()
        .map(|&i| q.spec.lower + (i as f64 + 0.5) * step)
        .collect()
}

/// `planes[b][i]` is bit `B−1−b` of index `i` (plane 0 is the MSB).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitPlanes {
    planes: Vec<Vec<u8>>,
}

impl BitPlanes {
    pub fn from_planes(planes: Vec<Vec<u8>>) -> Self {
        BitPlanes { planes }
    }

    pub fn planes(&self) -> &[Vec<u8>] {
        &self.planes
    }

    pub fn depth(&self) -> usize {
        self.planes.len()
    }

    /// Reassembles indices from the planes.
    pub fn recompose(&self) -> Vec<u32> {
        let len = self.planes.first().map_or(0, Vec::len);
        let mut out = vec![0u32; len];
        for plane in &self.planes {
            for (o, &bit) in out.iter_mut().zip(plane) {
                *o = (*o << 1) | bit as u32;
            }
        }
        out
    }
}

pub fn to_bitplanes(q: &QuantizedMeasurement) -> BitPlanes {
    let depth = q.spec.bit_depth as usize;
    let planes = (0..depth)
        .map(|b| {
            let shift = depth - 1 - b;
            q.indices.iter().map(|&i| ((i >> shift) & 1) as u8).collect()
        })
        .collect();
    BitPlanes { planes }
}

/// Decoded quantization interval `[lower, upper)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantInterval {
    pub lower: f64,
    pub upper: f64,
}

impl QuantInterval {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Mixture conditional mean over the decoded interval:
///
/// `ȳ = Σ_p u_p ∫_L^U y f_p(y) dy / Σ_p u_p ∫_L^U f_p(y) dy`
///
/// with `f_p` the Laplacian centred at `sis[p].0`. Each hypothesis is reduced
/// to its (log-mass, truncated mean) in closed form, so distant hypotheses do
/// not underflow; only when every hypothesis has zero weight or mass does
/// the result fall back to the interval midpoint.
pub fn reconstruct_multihypothesis(
    interval: QuantInterval,
    sis: &[(f64, LaplacianModel)],
    weights: &MixtureWeights,
) -> Result<f64> {
    let QuantInterval { lower, upper } = interval;
    if !(upper > lower) {
        return Err(Error::DegenerateInterval { lower, upper });
    }
    if sis.len() != weights.len() {
        return Err(Error::LengthMismatch {
            left: sis.len(),
            right: weights.len(),
        });
    }
    let parts: Vec<(f64, f64)> = sis
        .iter()
        .zip(weights.as_slice())
        .filter(|(_, &u)| u > 0.0)
        .map(|(&(center, model), &u)| {
            let (log_mass, mean) = model.truncated_moments(center, lower, upper);
            (u.ln() + log_mass, mean)
        })
        .filter(|(lw, mean)| lw.is_finite() && mean.is_finite())
        .collect();
    if parts.is_empty() {
        return Ok(interval.midpoint());
    }
    let norm = log_sum_exp(parts.iter().map(|p| p.0));
    let value: f64 = parts.iter().map(|(lw, mean)| (lw - norm).exp() * mean).sum();
    Ok(value.clamp(lower, upper.next_down()))
}
