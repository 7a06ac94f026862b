//! Plain-text `key=value` experiment configuration.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored.
//! Overrides use the same syntax and are applied after the file.
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `n` | source dimension | 1000 |
//! | `J` | number of sources | 3 |
//! | `k_common`, `k_innov` | JSM sparsities | 40, 10 |
//! | `amplitude_low`, `amplitude_high` | nonzero amplitude range | 1, 4 |
//! | `B` | quantizer bit depth | 6 |
//! | `threshold` | success threshold on relative error | 0.04 |
//! | `trials` | Monte-Carlo trials per rate point | 100 |
//! | `seed` | master seed | 0 |
//! | `rate_points` | comma-separated `m_j` values | 200,250,300,350,400 |
//! | `codecs` | `dicoss`, `baseline` | dicoss,baseline |
//! | `recoveries` | `jsm`, `ramis` | ramis |
//! | `prior_fraction` | `m_SI / m_j` without rate control | 0.25 |
//! | `rate_control` | adaptive mode decision | false |
//! | `lambda` | λ relative to `‖Φᵀy‖∞` | 0.001 |
//! | `epsilon` | RAMIS weight smoothing | 3 |
//! | `max_iters`, `tol` | solver stopping rule | 3000, 1e-4 |
//! | `execution` | `parallel` or `sequential` | parallel |
//! | `histograms` | CSV of fixed sources (overrides `n` and `J`) | none |

use std::path::Path;
use std::str::FromStr;

use crate::par::Execution;
use crate::pipeline::ExperimentConfig;
use crate::sensing::load_histograms;
use crate::solvers::Lambda;
use crate::{Error, Result};

pub const KEYS: &[&str] = &[
    "n",
    "J",
    "k_common",
    "k_innov",
    "amplitude_low",
    "amplitude_high",
    "B",
    "threshold",
    "trials",
    "seed",
    "rate_points",
    "codecs",
    "recoveries",
    "prior_fraction",
    "rate_control",
    "lambda",
    "epsilon",
    "max_iters",
    "tol",
    "execution",
    "histograms",
];

fn parse<T: FromStr>(value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse `{value}`"),
    })
}

fn parse_list<T: FromStr>(value: &str, line: usize) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(s, line))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Parse {
            line,
            msg: "empty list".into(),
        });
    }
    Ok(items)
}

fn positive(v: f64, key: &str, line: usize) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse {
            line,
            msg: format!("`{key}` must be positive, got {v}"),
        })
    }
}

fn at_least_one(v: usize, key: &str, line: usize) -> Result<usize> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(Error::Parse {
            line,
            msg: format!("`{key}` must be at least 1"),
        })
    }
}

fn apply(cfg: &mut ExperimentConfig, key: &str, value: &str, line: usize, base: Option<&Path>) -> Result<()> {
    match key {
        "n" => cfg.source.n = at_least_one(parse(value, line)?, key, line)?,
        "J" => cfg.source.num_sources = at_least_one(parse(value, line)?, key, line)?,
        "k_common" => cfg.source.k_common = parse(value, line)?,
        "k_innov" => cfg.source.k_innov = parse(value, line)?,
        "amplitude_low" => cfg.source.amplitude.0 = parse(value, line)?,
        "amplitude_high" => cfg.source.amplitude.1 = parse(value, line)?,
        "B" => {
            let b: u8 = parse(value, line)?;
            if !(1..=16).contains(&b) {
                return Err(Error::Parse {
                    line,
                    msg: format!("`B` must be in 1..=16, got {b}"),
                });
            }
            cfg.codec.bit_depth = b;
        }
        "threshold" => cfg.threshold = positive(parse(value, line)?, key, line)?,
        "trials" => cfg.trials = at_least_one(parse(value, line)?, key, line)?,
        "seed" => cfg.master_seed = parse(value, line)?,
        "rate_points" => cfg.rate_points = parse_list(value, line)?,
        "codecs" => cfg.codecs = parse_list(value, line)?,
        "recoveries" => cfg.recoveries = parse_list(value, line)?,
        "prior_fraction" => {
            let f = positive(parse(value, line)?, key, line)?;
            if f > 1.0 {
                return Err(Error::Parse {
                    line,
                    msg: "`prior_fraction` must not exceed 1".into(),
                });
            }
            cfg.codec.prior_fraction = f;
        }
        "rate_control" => cfg.codec.rate_control = parse(value, line)?,
        "lambda" => cfg.codec.solver.lambda = Lambda::Relative(positive(parse(value, line)?, key, line)?),
        "epsilon" => cfg.codec.solver.epsilon = positive(parse(value, line)?, key, line)?,
        "max_iters" => cfg.codec.solver.max_iters = at_least_one(parse(value, line)?, key, line)?,
        "tol" => {
            let t = positive(parse(value, line)?, key, line)?;
            if t >= 1.0 {
                return Err(Error::Parse {
                    line,
                    msg: "`tol` must be below 1".into(),
                });
            }
            cfg.codec.solver.tol = t;
        }
        "execution" => {
            cfg.codec.execution = match value.to_ascii_lowercase().as_str() {
                "parallel" => Execution::Parallel,
                "sequential" => Execution::Sequential,
                _ => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("unknown execution mode `{value}`"),
                    })
                }
            }
        }
        "histograms" => {
            let p = Path::new(value);
            let path = match base {
                Some(dir) if p.is_relative() => dir.join(p),
                _ => p.to_path_buf(),
            };
            let h = load_histograms(&path)?;
            cfg.source.n = h[0].len();
            cfg.source.num_sources = h.len();
            cfg.histograms = Some(h);
        }
        _ => {
            return Err(Error::UnknownKey {
                key: key.to_string(),
                line,
            })
        }
    }
    Ok(())
}

fn split_assignment(raw: &str, line: usize) -> Result<Option<(&str, &str)>> {
    let text = raw.split('#').next().unwrap_or("").trim();
    if text.is_empty() {
        return Ok(None);
    }
    let (k, v) = text.split_once('=').ok_or_else(|| Error::Parse {
        line,
        msg: format!("expected key=value, got `{text}`"),
    })?;
    Ok(Some((k.trim(), v.trim())))
}

/// Parses configuration text. Override `i` reports line `0`.
pub fn parse_config_str(text: &str, overrides: &[String], base: Option<&Path>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (i, raw) in text.lines().enumerate() {
        if let Some((k, v)) = split_assignment(raw, i + 1)? {
            apply(&mut cfg, k, v, i + 1, base)?;
        }
    }
    for o in overrides {
        if let Some((k, v)) = split_assignment(o, 0)? {
            apply(&mut cfg, k, v, 0, base)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads `path` (if given) and applies `overrides`.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            parse_config_str(&text, overrides, p.parent())
        }
        None => parse_config_str("", overrides, None),
    }
}
