use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dicoss::config::parse_config;
use dicoss::pipeline::{
    decode, encode_baseline, encode_dicoss, phi_seed, run_experiment, write_csv, Codec, EncodedStream,
    ExperimentConfig, ExperimentResult, Recovery,
};
use dicoss::selftest::run_selftest;
use dicoss::sensing::{generate_ensemble, load_histograms, write_histograms, SourceConfig};

/// Distributed coding of correlated sparse sources.
#[derive(Parser, Debug)]
#[command(name = "dicoss", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// key=value configuration file
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output file
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Override one configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed (same as --set seed=N)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic JSM ensemble as histogram CSV
    Generate(Common),
    /// Encode sources at the first rate point with the first codec
    Encode {
        #[command(flatten)]
        common: Common,
        /// Histogram CSV to encode; a synthetic ensemble is drawn otherwise
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Decode a stream and write the recovered sources as CSV
    Decode {
        #[command(flatten)]
        common: Common,
        /// Encoded stream
        stream: PathBuf,
    },
    /// Run the rate sweep and write the result CSV
    Sweep(Common),
    /// Run the built-in oracle checks
    Selftest,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        parse_config(self.config.as_deref(), &overrides).context("reading configuration")
    }
}

/// Writes through a sibling temporary file renamed into place, so a failed
/// run never leaves a partial output.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut tmp_name = path.file_name().context("output path has no file name")?.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let result = (|| -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        fill(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, fill),
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            fill(&mut lock)
        }
    }
}

fn sources_for(cfg: &ExperimentConfig, input: Option<&Path>) -> Result<Vec<Vec<f64>>> {
    if let Some(p) = input {
        return load_histograms(p).with_context(|| format!("reading {}", p.display()));
    }
    if let Some(h) = &cfg.histograms {
        return Ok(h.clone());
    }
    Ok(generate_ensemble(&SourceConfig {
        seed: cfg.master_seed,
        ..cfg.source
    })?
    .sources)
}

fn generate(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let sources = sources_for(&cfg, None)?;
    emit(common.out.as_deref(), |w| Ok(write_histograms(w, &sources)?))
}

fn encode(common: &Common, input: Option<&Path>) -> Result<()> {
    let cfg = common.load()?;
    let sources = sources_for(&cfg, input)?;
    let j = sources.len();
    let m = cfg.rate_points[0];
    if sources[0].len() < m {
        bail!("rate point {m} exceeds source length {}", sources[0].len());
    }
    let seeds: Vec<u64> = (0..j).map(|i| phi_seed(cfg.master_seed, i)).collect();
    let codec_cfg = dicoss::pipeline::CodecConfig {
        recovery: cfg.recoveries[0],
        ..cfg.codec.clone()
    };
    let stream = match cfg.codecs[0] {
        Codec::Dicoss => encode_dicoss(&sources, &vec![m; j], &seeds, &codec_cfg)?,
        Codec::Baseline => encode_baseline(&sources, &vec![m; j], &seeds, &codec_cfg)?,
    };
    let out = common.out.as_deref().context("encode needs --out")?;
    let bytes = stream.to_bytes();
    write_atomic(out, |w| Ok(w.write_all(&bytes)?))?;
    eprintln!("{} sources, m={m}, {} bits", j, stream.total_bits());
    Ok(())
}

fn decode_cmd(common: &Common, stream_path: &Path) -> Result<()> {
    let cfg = common.load()?;
    let bytes = fs::read(stream_path).with_context(|| format!("reading {}", stream_path.display()))?;
    let stream = EncodedStream::from_bytes(&bytes).context("parsing stream")?;
    let codec_cfg = dicoss::pipeline::CodecConfig {
        recovery: cfg.recoveries[0],
        ..cfg.codec.clone()
    };
    let decoded = decode(&stream, &codec_cfg)?;
    let pulled: usize = decoded.syndromes_used.iter().flatten().sum();
    eprintln!("{} sources decoded, {pulled} syndromes pulled", decoded.sources.len());
    emit(common.out.as_deref(), |w| Ok(write_histograms(w, &decoded.sources)?))
}

/// Per-camera bits at full success for every combination, then the saving
/// of each DICOSS combination against Baseline (JSM recovery when swept).
fn summary(cfg: &ExperimentConfig, result: &ExperimentResult) -> Vec<String> {
    let mut lines = vec![format!("{:<10} {:<8} {:>8} {:>12}", "codec", "recovery", "m", "bits/camera")];
    for &codec in &cfg.codecs {
        for &recovery in &cfg.recoveries {
            let cell = match result.bits_at_full_success(codec, recovery) {
                Some((m, bits)) => format!("{m:>8} {bits:>12.1}"),
                None => format!("{:>8} {:>12}", "-", "never"),
            };
            lines.push(format!("{:<10} {:<8} {cell}", codec.to_string(), recovery.to_string()));
        }
    }
    if cfg.codecs.contains(&Codec::Dicoss) && cfg.codecs.contains(&Codec::Baseline) {
        let reference = if cfg.recoveries.contains(&Recovery::Jsm) {
            Recovery::Jsm
        } else {
            cfg.recoveries[0]
        };
        for &recovery in &cfg.recoveries {
            let saving = match (
                result.bits_at_full_success(Codec::Baseline, reference),
                result.bits_at_full_success(Codec::Dicoss, recovery),
            ) {
                (Some((_, base)), Some((_, ours))) => format!("{:.1}%", 100.0 * (base - ours) / base),
                _ => "n/a".to_string(),
            };
            lines.push(format!("saving dicoss-{recovery} vs baseline-{reference}: {saving}"));
        }
    }
    lines
}

fn sweep(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let result = run_experiment(&cfg)?;
    emit(common.out.as_deref(), |w| Ok(write_csv(w, &result)?))?;
    // keep stdout clean when it carries the CSV
    for line in summary(&cfg, &result) {
        if common.out.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    Ok(())
}

fn selftest() -> bool {
    let results = run_selftest();
    for r in &results {
        println!(
            "{:<32} error {:.3e}  tolerance {:.1e}  {}",
            r.name,
            r.error,
            r.tolerance,
            if r.passed() { "PASS" } else { "FAIL" }
        );
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    println!("{} checks, {failed} failed", results.len());
    failed == 0
}

fn run(cli: Cli) -> Result<bool> {
    match &cli.command {
        Command::Generate(c) => generate(c)?,
        Command::Encode { common, input } => encode(common, input.as_deref())?,
        Command::Decode { common, stream } => decode_cmd(common, stream)?,
        Command::Sweep(c) => sweep(c)?,
        Command::Selftest => return Ok(selftest()),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
