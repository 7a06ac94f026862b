//! DICOSS encoder and joint decoder, the Baseline comparator, and the
//! Monte-Carlo experiment driver.
//!
//! Encoders are independent: [`encode_source`] reads one source and its
//! seeds only. The decoder runs
//!
//! 1. entropy decoding of prior (and Intra) measurements,
//! 2. side-information recovery (JSM or RAMIS),
//! 3. per-source hypotheses `ỹ_{j,p} = Φ_j x̂_p`,
//! 4. Laplacian soft inputs and MSB-first Slepian–Wolf decoding,
//! 5. multi-hypothesis dequantization,
//! 6. final joint recovery.

pub mod experiment;
pub mod wire;

use crate::correlation::{assign_mixture_weights, bitplane_llrs, LaplacianModel, MixtureWeights};
use crate::entropy::{entropy_decode, entropy_encode, Bitstream, SymbolAlphabet};
use crate::par::{self, Execution};
use crate::quantization::{
    dequantize_midpoint, quantize, reconstruct_multihypothesis, to_bitplanes, QuantizedMeasurement, QuantizerSpec,
};
use crate::ramis::ramis_recover_all;
use crate::rate_control::{decide_mode, default_ladder, greedy_phi_si, Mode};
use crate::sensing::{make_matrix, mix_seed, MeasurementMatrix};
use crate::slepian_wolf::{best_soft_input, cached_ladder, sw_encode, SoftInput, SwEncoded, CHECKSUM_BITS};
use crate::solvers::{build_stacked, solve_jsm_from, SolverConfig};
use crate::{Error, Result};

pub use experiment::{run_experiment, write_csv, ExperimentConfig, ExperimentResult, ResultRow, TrialResult};
pub use wire::{EncodedStream, Section, SourceStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Recovery {
    Jsm,
    Ramis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Codec {
    Dicoss,
    Baseline,
}

impl std::fmt::Display for Recovery {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Recovery::Jsm => "jsm",
            Recovery::Ramis => "ramis",
        })
    }
}

impl std::fmt::Display for Codec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Codec::Dicoss => "dicoss",
            Codec::Baseline => "baseline",
        })
    }
}

impl std::str::FromStr for Recovery {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "jsm" => Ok(Recovery::Jsm),
            "ramis" => Ok(Recovery::Ramis),
            other => Err(Error::InvalidConfig(format!("unknown recovery method `{other}`"))),
        }
    }
}

impl std::str::FromStr for Codec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dicoss" => Ok(Codec::Dicoss),
            "baseline" => Ok(Codec::Baseline),
            other => Err(Error::InvalidConfig(format!("unknown codec `{other}`"))),
        }
    }
}

/// Settings shared by encoders and decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    pub bit_depth: u8,
    pub recovery: Recovery,
    pub solver: SolverConfig,
    /// `m_SI = round(prior_fraction · m_j)` when rate control is off.
    pub prior_fraction: f64,
    /// Adaptive mode decision and greedy prior size.
    pub rate_control: bool,
    pub execution: Execution,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            bit_depth: 6,
            recovery: Recovery::Ramis,
            solver: SolverConfig::default(),
            prior_fraction: 0.25,
            rate_control: false,
            execution: Execution::default(),
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.bit_depth) {
            return Err(Error::InvalidConfig(format!("bit depth {} outside 1..=16", self.bit_depth)));
        }
        if !(self.prior_fraction > 0.0 && self.prior_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "prior fraction {} outside (0, 1]",
                self.prior_fraction
            )));
        }
        self.solver.validate()
    }
}

/// Seed of `Φ_j` for source `j` of an ensemble seeded by `base`.
pub fn phi_seed(base: u64, j: usize) -> u64 {
    mix_seed(base, 0x100 + j as u64)
}

/// LDPCA code seed convention for block length `m`.
pub fn ldpca_seed(m: usize) -> u64 {
    mix_seed(0x4C44_5043_4131, m as u64)
}

fn alphabet(bit_depth: u8) -> SymbolAlphabet {
    SymbolAlphabet::for_bit_depth(bit_depth)
}

fn entropy_section(q: &QuantizedMeasurement) -> Result<Section> {
    let bs = entropy_encode(q.indices(), alphabet(q.spec().bit_depth()))?;
    Ok(Section::new(bs.to_wire(q.len()), 32 + bs.bit_length))
}

fn decode_entropy_section(sec: &Section, count: usize, spec: QuantizerSpec) -> Result<QuantizedMeasurement> {
    if sec.bits < 32 {
        return Err(Error::MalformedStream("entropy section shorter than its count".into()));
    }
    let (mut bs, stored) = Bitstream::from_wire(&sec.payload)?;
    if stored != count {
        return Err(Error::MalformedStream(format!("section holds {stored} symbols, header says {count}")));
    }
    bs.bit_length = sec.bits - 32;
    let indices = entropy_decode(&bs, count, alphabet(spec.bit_depth()))?;
    QuantizedMeasurement::new(indices, spec)
}

/// Encodes one source. Only `x` and its own seeds are read.
pub fn encode_source(x: &[f64], m_j: usize, phi_seed: u64, codec: Codec, cfg: &CodecConfig) -> Result<SourceStream> {
    let n = x.len();
    let phi = make_matrix(m_j, n, phi_seed)?;
    let mut y = vec![0.0; m_j];
    phi.apply(x, &mut y);
    let spec = QuantizerSpec::fit(&y, cfg.bit_depth)?;
    let q = quantize(&y, &spec);

    let intra = |q: &QuantizedMeasurement| -> Result<SourceStream> {
        Ok(SourceStream {
            mode: Mode::Intra,
            m_j,
            m_si: 0,
            phi_seed,
            si_seed: 0,
            quantizer: spec,
            prior_quantizer: None,
            sections: vec![entropy_section(q)?],
        })
    };
    if codec == Codec::Baseline {
        return intra(&q);
    }

    let (m_si, si_seed) = if cfg.rate_control {
        let ladder = default_ladder(m_j);
        let choice = greedy_phi_si(x, &y, &phi, &ladder, phi_seed, &spec)?;
        let decision = decide_mode(x, &y, &phi, &[choice], &spec)?;
        if decision.mode == Mode::Intra {
            return intra(&q);
        }
        (decision.chosen_m_si, decision.seed)
    } else {
        let m_si = ((cfg.prior_fraction * m_j as f64).round() as usize).clamp(1, m_j);
        (m_si, phi_seed.wrapping_add(m_si as u64))
    };

    let phi_si = make_matrix(m_si, n, si_seed)?;
    let mut y_si = vec![0.0; m_si];
    phi_si.apply(x, &mut y_si);
    let spec_si = QuantizerSpec::fit(&y_si, cfg.bit_depth)?;
    let q_si = quantize(&y_si, &spec_si);

    let ladder = cached_ladder(m_j, ldpca_seed(m_j))?;
    let mut sections = vec![entropy_section(&q_si)?];
    for plane in to_bitplanes(&q).planes() {
        let enc = sw_encode(plane, &ladder)?;
        sections.push(Section::new(enc.to_bytes(m_j), CHECKSUM_BITS + m_j));
    }
    Ok(SourceStream {
        mode: Mode::Prior,
        m_j,
        m_si,
        phi_seed,
        si_seed,
        quantizer: spec,
        prior_quantizer: Some(spec_si),
        sections,
    })
}

fn encode_all(sources: &[Vec<f64>], m: &[usize], seeds: &[u64], codec: Codec, cfg: &CodecConfig) -> Result<EncodedStream> {
    cfg.validate()?;
    if sources.is_empty() {
        return Err(Error::EmptyInput);
    }
    if sources.len() != m.len() || sources.len() != seeds.len() {
        return Err(Error::LengthMismatch {
            left: sources.len(),
            right: m.len().min(seeds.len()),
        });
    }
    let n = sources[0].len();
    if let Some(bad) = sources.iter().find(|s| s.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: bad.len(),
        });
    }
    let streams = par::map_range(cfg.execution, sources.len(), |j| {
        encode_source(&sources[j], m[j], seeds[j], codec, cfg)
    });
    Ok(EncodedStream {
        n,
        sources: streams.into_iter().collect::<Result<_>>()?,
    })
}

/// DICOSS encoders, one per source. `m[j]` and `seeds[j]` size and seed `Φ_j`.
pub fn encode_dicoss(sources: &[Vec<f64>], m: &[usize], seeds: &[u64], cfg: &CodecConfig) -> Result<EncodedStream> {
    encode_all(sources, m, seeds, Codec::Dicoss, cfg)
}

/// Baseline encoders: quantize and entropy-code `y_j` only.
pub fn encode_baseline(sources: &[Vec<f64>], m: &[usize], seeds: &[u64], cfg: &CodecConfig) -> Result<EncodedStream> {
    encode_all(sources, m, seeds, Codec::Baseline, cfg)
}

/// Decoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub sources: Vec<Vec<f64>>,
    /// Side information recovered from the priors (empty if every source
    /// is Intra).
    pub side_information: Vec<Vec<f64>>,
    /// Syndromes pulled per bit-plane, empty for Intra sources.
    pub syndromes_used: Vec<Vec<usize>>,
    /// Decoded quantization indices of `y_j`.
    pub indices: Vec<Vec<u32>>,
    /// Dequantized measurements fed to the final recovery.
    pub measurements: Vec<Vec<f64>>,
}

/// Side-information recovery inputs of one source.
struct Observation {
    phi: MeasurementMatrix,
    y: Vec<f64>,
}

fn recover(obs: &[Observation], recovery: Recovery, solver: &SolverConfig, warm: Option<&[f64]>) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mats: Vec<&MeasurementMatrix> = obs.iter().map(|o| &o.phi).collect();
    let ys: Vec<&[f64]> = obs.iter().map(|o| o.y.as_slice()).collect();
    match recovery {
        Recovery::Jsm => {
            let system = build_stacked(&mats, &ys)?;
            let sol = solve_jsm_from(&system, solver, warm)?;
            Ok((sol.sources.into_iter().map(|r| r.solution).collect(), sol.stacked.solution))
        }
        Recovery::Ramis => {
            let out = ramis_recover_all(&ys, &mats, solver)?;
            Ok((out.into_iter().map(|r| r.solution).collect(), Vec::new()))
        }
    }
}

/// Laplacian model of `y_j − Φ_j x̂` estimated from the prior residual
/// `Φ_SI x̂ − ŷ_SI`. The residual variance is inflated by the generalized
/// cross-validation factor of the fit, stripped of the prior's quantization
/// noise and rescaled from prior-matrix to `Φ_j` row normalization.
fn residual_model(phi_si: &MeasurementMatrix, y_si: &[f64], step_si: f64, x_hat: &[f64], m_j: usize) -> LaplacianModel {
    let m_si = phi_si.rows();
    let mut r = vec![0.0; m_si];
    phi_si.apply(x_hat, &mut r);
    let ss: f64 = r.iter().zip(y_si).map(|(a, b)| (a - b) * (a - b)).sum();
    let df = x_hat.iter().filter(|v| **v != 0.0).count() as f64;
    let shrink = (1.0 - df / m_si as f64).max(0.1);
    let fit_var = ss / m_si as f64 / (shrink * shrink);
    let quant_var = step_si * step_si / 12.0;
    let signal_var = (fit_var - quant_var).max(0.05 * fit_var).max(1e-18);
    let var = signal_var * m_si as f64 / m_j as f64;
    LaplacianModel::new((2.0 / var).sqrt())
}

/// Per-source Slepian–Wolf decoding context.
struct PriorTarget<'a> {
    stream: &'a SourceStream,
    phi: &'a MeasurementMatrix,
    phi_si: MeasurementMatrix,
    y_si: Vec<f64>,
}

struct TargetOutcome {
    y_bar: Vec<f64>,
    indices: Vec<u32>,
    used: Vec<usize>,
}

fn decode_target(t: &PriorTarget, si: &[Vec<f64>]) -> Result<TargetOutcome> {
    let s = t.stream;
    let spec = s.quantizer;
    let m_j = s.m_j;
    let step_si = s.prior_quantizer.map_or(0.0, |q| q.step());
    let hyps: Vec<Vec<f64>> = si
        .iter()
        .map(|x| {
            let mut out = vec![0.0; m_j];
            t.phi.apply(x, &mut out);
            out
        })
        .collect();
    let models: Vec<LaplacianModel> = si
        .iter()
        .map(|x| residual_model(&t.phi_si, &t.y_si, step_si, x, m_j))
        .collect();
    let mixture = assign_mixture_weights(&models)?;
    let mut weight_sets = vec![mixture.clone()];
    if hyps.len() > 1 {
        weight_sets.extend((0..hyps.len()).map(|p| MixtureWeights::single(hyps.len(), p)));
    }

    let ladder = cached_ladder(m_j, ldpca_seed(m_j))?;
    let depth = spec.bit_depth() as usize;
    let mut prefixes = vec![0u32; m_j];
    let mut used = Vec::with_capacity(depth);
    for (b, sec) in s.plane_sections().iter().enumerate() {
        if sec.bits < CHECKSUM_BITS {
            return Err(Error::MalformedStream(format!("plane {b} section too short")));
        }
        let received = SwEncoded::from_bytes(&sec.payload, sec.bits - CHECKSUM_BITS)?;
        let candidates: Vec<SoftInput> = weight_sets
            .iter()
            .map(|u| bitplane_llrs(b, &prefixes, &spec, &hyps, &models, u))
            .collect::<Result<_>>()?;
        let out = best_soft_input(&candidates, &received, &ladder)?;
        if !out.success {
            return Err(Error::MalformedStream(format!("plane {b} failed its checksum at full rate")));
        }
        used.push(out.syndromes_used);
        for (p, bit) in prefixes.iter_mut().zip(&out.bits) {
            *p = (*p << 1) | *bit as u32;
        }
    }
    debug_assert_eq!(used.len(), depth);

    let y_bar = prefixes
        .iter()
        .enumerate()
        .map(|(i, &idx)| {
            let sis: Vec<(f64, LaplacianModel)> = hyps.iter().zip(&models).map(|(h, m)| (h[i], *m)).collect();
            reconstruct_multihypothesis(spec.interval(idx), &sis, &mixture)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(TargetOutcome {
        y_bar,
        indices: prefixes,
        used,
    })
}

/// Joint decoder for DICOSS and Baseline streams.
pub fn decode(stream: &EncodedStream, cfg: &CodecConfig) -> Result<Decoded> {
    cfg.validate()?;
    let n = stream.n;
    let j_count = stream.sources.len();
    if j_count == 0 {
        return Err(Error::EmptyInput);
    }
    let phis: Vec<MeasurementMatrix> = stream
        .sources
        .iter()
        .map(|s| make_matrix(s.m_j, n, s.phi_seed))
        .collect::<Result<_>>()?;

    // 1. entropy-decoded measurements
    let mut intra_y: Vec<Option<(Vec<f64>, Vec<u32>)>> = vec![None; j_count];
    let mut targets: Vec<Option<PriorTarget>> = Vec::with_capacity(j_count);
    for (j, s) in stream.sources.iter().enumerate() {
        match s.mode {
            Mode::Intra => {
                if s.sections.len() != 1 {
                    return Err(Error::MalformedStream("Intra source needs one section".into()));
                }
                let q = decode_entropy_section(&s.sections[0], s.m_j, s.quantizer)?;
                intra_y[j] = Some((dequantize_midpoint(&q), q.indices().to_vec()));
                targets.push(None);
            }
            Mode::Prior => {
                let spec_si = s
                    .prior_quantizer
                    .ok_or_else(|| Error::MalformedStream("Prior source without prior quantizer".into()))?;
                if s.sections.len() != 1 + s.quantizer.bit_depth() as usize {
                    return Err(Error::MalformedStream("Prior source needs B + 1 sections".into()));
                }
                let q_si = decode_entropy_section(&s.sections[0], s.m_si, spec_si)?;
                targets.push(Some(PriorTarget {
                    stream: s,
                    phi: &phis[j],
                    phi_si: make_matrix(s.m_si, n, s.si_seed)?,
                    y_si: dequantize_midpoint(&q_si),
                }));
            }
        }
    }

    // 2. side information
    let any_prior = targets.iter().any(Option::is_some);
    let (si, warm) = if any_prior {
        let obs: Vec<Observation> = (0..j_count)
            .map(|j| match (&targets[j], &intra_y[j]) {
                (Some(t), _) => Observation {
                    phi: t.phi_si.clone(),
                    y: t.y_si.clone(),
                },
                (None, Some((y, _))) => Observation {
                    phi: phis[j].clone(),
                    y: y.clone(),
                },
                (None, None) => unreachable!(),
            })
            .collect();
        recover(&obs, cfg.recovery, &cfg.solver, None)?
    } else {
        (Vec::new(), Vec::new())
    };

    // 3–5. Slepian–Wolf decoding and reconstruction, concurrently per source
    let outcomes = par::map_range(cfg.execution, j_count, |j| match &targets[j] {
        Some(t) => decode_target(t, &si).map(Some),
        None => Ok(None),
    });
    let mut y_final = Vec::with_capacity(j_count);
    let mut used = Vec::with_capacity(j_count);
    let mut indices = Vec::with_capacity(j_count);
    for (j, o) in outcomes.into_iter().enumerate() {
        match o? {
            Some(t) => {
                y_final.push(t.y_bar);
                used.push(t.used);
                indices.push(t.indices);
            }
            None => {
                let (y, idx) = intra_y[j].take().unwrap();
                y_final.push(y);
                used.push(Vec::new());
                indices.push(idx);
            }
        }
    }

    // 6. final joint recovery
    let obs: Vec<Observation> = phis
        .into_iter()
        .zip(y_final)
        .map(|(phi, y)| Observation { phi, y })
        .collect();
    let warm = (cfg.recovery == Recovery::Jsm && warm.len() == (j_count + 1) * n).then_some(warm.as_slice());
    let (sources, _) = recover(&obs, cfg.recovery, &cfg.solver, warm)?;
    Ok(Decoded {
        sources,
        side_information: si,
        syndromes_used: used,
        indices,
        measurements: obs.into_iter().map(|o| o.y).collect(),
    })
}

pub fn decode_dicoss(stream: &EncodedStream, cfg: &CodecConfig) -> Result<Decoded> {
    decode(stream, cfg)
}

pub fn decode_baseline(stream: &EncodedStream, cfg: &CodecConfig) -> Result<Decoded> {
    if stream.sources.iter().any(|s| s.mode != Mode::Intra) {
        return Err(Error::MalformedStream("Baseline streams carry Intra sources only".into()));
    }
    decode(stream, cfg)
}

/// Truncates every syndrome section to the prefix the decoder pulled over
/// the feedback channel; the stream then holds exactly the bits spent.
pub fn apply_feedback(stream: &mut EncodedStream, decoded: &Decoded) {
    for (s, used) in stream.sources.iter_mut().zip(&decoded.syndromes_used) {
        if s.mode != Mode::Prior {
            continue;
        }
        for (sec, &count) in s.sections[1..].iter_mut().zip(used) {
            let bits = CHECKSUM_BITS + count;
            let mut payload = sec.payload[..bits.div_ceil(8)].to_vec();
            if !bits.is_multiple_of(8) {
                *payload.last_mut().unwrap() &= 0xFFu8 << (8 - bits % 8);
            }
            *sec = Section::new(payload, bits);
        }
    }
}

/// Encode, decode and truncate to the pulled syndromes.
pub fn roundtrip(
    sources: &[Vec<f64>],
    m: &[usize],
    seeds: &[u64],
    codec: Codec,
    cfg: &CodecConfig,
) -> Result<(EncodedStream, Decoded)> {
    let mut stream = encode_all(sources, m, seeds, codec, cfg)?;
    let decoded = decode(&stream, cfg)?;
    apply_feedback(&mut stream, &decoded);
    Ok((stream, decoded))
}
