//! Seeded rate-versus-success sweeps.

use std::io::Write;

use crate::par::{self, Execution};
use crate::rate_control::Mode;
use crate::sensing::{generate_ensemble, mix_seed, SourceConfig, SparseSource};
use crate::solvers::relative_error;
use crate::{Error, Result};

use super::wire::CONTAINER_HEADER_BITS;
use super::{phi_seed, roundtrip, Codec, CodecConfig, Recovery};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: SourceConfig,
    /// Fixed sources used in every trial instead of synthetic ensembles.
    pub histograms: Option<Vec<SparseSource>>,
    pub codecs: Vec<Codec>,
    pub recoveries: Vec<Recovery>,
    /// Per-source measurement counts `m_j`.
    pub rate_points: Vec<usize>,
    pub trials: usize,
    pub threshold: f64,
    pub master_seed: u64,
    pub codec: CodecConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: SourceConfig::default(),
            histograms: None,
            codecs: vec![Codec::Dicoss, Codec::Baseline],
            recoveries: vec![Recovery::Ramis],
            rate_points: vec![200, 250, 300, 350, 400],
            trials: 100,
            threshold: 0.04,
            master_seed: 0,
            codec: CodecConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::InvalidConfig(format!("threshold {} must be positive", self.threshold)));
        }
        if self.rate_points.is_empty() || self.codecs.is_empty() || self.recoveries.is_empty() {
            return Err(Error::InvalidConfig("nothing to sweep".into()));
        }
        let n = match &self.histograms {
            Some(h) => h.first().ok_or(Error::EmptyInput)?.len(),
            None => {
                self.source.validate()?;
                self.source.n
            }
        };
        if let Some(&m) = self.rate_points.iter().find(|&&m| m == 0 || m > n) {
            return Err(Error::InvalidConfig(format!("rate point {m} outside 1..={n}")));
        }
        self.codec.validate()
    }

    pub fn num_sources(&self) -> usize {
        self.histograms.as_ref().map_or(self.source.num_sources, Vec::len)
    }
}

/// One trial of one codec/recovery pair at one rate point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    /// Per-source bits, container header shared equally.
    pub bits: Vec<f64>,
    pub relative_error: Vec<f64>,
    pub success: Vec<bool>,
    pub modes: Vec<Mode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub codec: Codec,
    pub recovery: Recovery,
    pub rate_point: usize,
    pub camera: usize,
    pub mean_bits: f64,
    pub pr_success: f64,
    pub mean_rel_error: f64,
    pub intra_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    /// `trials[c][r][t]` for combination `c`, rate point `r`, trial `t`;
    /// combinations are codec-major.
    pub trials: Vec<Vec<Vec<TrialResult>>>,
}

impl ExperimentResult {
    /// Rows of one combination, by rate point then camera.
    pub fn rows_for(&self, codec: Codec, recovery: Recovery) -> impl Iterator<Item = &ResultRow> {
        self.rows
            .iter()
            .filter(move |r| r.codec == codec && r.recovery == recovery)
    }

    /// `(rate_point, per-camera mean bits, min Pr(success) over cameras)`.
    pub fn curve(&self, codec: Codec, recovery: Recovery) -> Vec<(usize, f64, f64)> {
        let mut out: Vec<(usize, f64, f64, usize)> = Vec::new();
        for r in self.rows_for(codec, recovery) {
            match out.last_mut() {
                Some(last) if last.0 == r.rate_point => {
                    last.1 += r.mean_bits;
                    last.2 = last.2.min(r.pr_success);
                    last.3 += 1;
                }
                _ => out.push((r.rate_point, r.mean_bits, r.pr_success, 1)),
            }
        }
        out.into_iter().map(|(m, b, p, c)| (m, b / c as f64, p)).collect()
    }

    /// Per-camera bits at the first rate point where every camera reaches
    /// Pr(success) = 1.
    pub fn bits_at_full_success(&self, codec: Codec, recovery: Recovery) -> Option<(usize, f64)> {
        self.curve(codec, recovery)
            .into_iter()
            .find(|c| c.2 >= 1.0)
            .map(|c| (c.0, c.1))
    }
}

fn combos(cfg: &ExperimentConfig) -> Vec<(Codec, Recovery)> {
    cfg.codecs
        .iter()
        .flat_map(|&c| cfg.recoveries.iter().map(move |&r| (c, r)))
        .collect()
}

fn run_trial(cfg: &ExperimentConfig, trial: usize) -> Result<Vec<Vec<TrialResult>>> {
    let trial_seed = mix_seed(cfg.master_seed, trial as u64);
    let sources = match &cfg.histograms {
        Some(h) => h.clone(),
        None => {
            generate_ensemble(&SourceConfig {
                seed: trial_seed,
                ..cfg.source
            })?
            .sources
        }
    };
    let j = sources.len();
    let seeds: Vec<u64> = (0..j).map(|i| phi_seed(trial_seed, i)).collect();
    let inner = CodecConfig {
        execution: Execution::Sequential,
        ..cfg.codec.clone()
    };
    combos(cfg)
        .into_iter()
        .map(|(codec, recovery)| {
            let codec_cfg = CodecConfig { recovery, ..inner.clone() };
            cfg.rate_points
                .iter()
                .map(|&m| {
                    let (stream, decoded) = roundtrip(&sources, &vec![m; j], &seeds, codec, &codec_cfg)?;
                    let shared = CONTAINER_HEADER_BITS as f64 / j as f64;
                    let relative_error: Vec<f64> = decoded
                        .sources
                        .iter()
                        .zip(&sources)
                        .map(|(xh, x)| relative_error(xh, x))
                        .collect();
                    Ok(TrialResult {
                        bits: stream.sources.iter().map(|s| s.total_bits() as f64 + shared).collect(),
                        success: relative_error.iter().map(|&e| e <= cfg.threshold).collect(),
                        relative_error,
                        modes: stream.sources.iter().map(|s| s.mode).collect(),
                    })
                })
                .collect()
        })
        .collect()
}

/// Runs every codec/recovery pair at every rate point for `trials` seeded
/// trials. Trials run concurrently under [`Execution::Parallel`]; results are
/// independent of the execution mode.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let per_trial: Vec<Vec<Vec<TrialResult>>> = par::map_range(cfg.codec.execution, cfg.trials, |t| run_trial(cfg, t))
        .into_iter()
        .collect::<Result<_>>()?;

    let combos = combos(cfg);
    let j = cfg.num_sources();
    let trials_f = cfg.trials as f64;
    let mut rows = Vec::new();
    let mut trials = Vec::with_capacity(combos.len());
    for (c, &(codec, recovery)) in combos.iter().enumerate() {
        let mut by_rate = Vec::with_capacity(cfg.rate_points.len());
        for (r, &rate_point) in cfg.rate_points.iter().enumerate() {
            let results: Vec<TrialResult> = per_trial.iter().map(|t| t[c][r].clone()).collect();
            for camera in 0..j {
                let sum = |f: &dyn Fn(&TrialResult) -> f64| results.iter().map(f).sum::<f64>() / trials_f;
                rows.push(ResultRow {
                    codec,
                    recovery,
                    rate_point,
                    camera,
                    mean_bits: sum(&|t| t.bits[camera]),
                    pr_success: results.iter().filter(|t| t.success[camera]).count() as f64 / trials_f,
                    mean_rel_error: sum(&|t| t.relative_error[camera]),
                    intra_fraction: results.iter().filter(|t| t.modes[camera] == Mode::Intra).count() as f64
                        / trials_f,
                });
            }
            by_rate.push(results);
        }
        trials.push(by_rate);
    }
    Ok(ExperimentResult { rows, trials })
}

pub const CSV_HEADER: &str = "codec,recovery,rate_point,camera,mean_bits,pr_success,mean_rel_error";

pub fn write_csv<W: Write>(mut w: W, result: &ExperimentResult) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in &result.rows {
        writeln!(
            w,
            "{},{},{},{},{:.3},{:.2},{:.6}",
            r.codec, r.recovery, r.rate_point, r.camera, r.mean_bits, r.pr_success, r.mean_rel_error
        )?;
    }
    Ok(())
}
