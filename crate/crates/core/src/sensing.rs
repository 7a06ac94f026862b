//! Correlated sparse sources and seeded Gaussian measurement matrices.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// A nonnegative length-n histogram vector.
pub type SparseSource = Vec<f64>;

/// Parameters of a synthetic joint-sparsity ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceConfig {
    pub n: usize,
    pub num_sources: usize,
    pub k_common: usize,
    pub k_innov: usize,
    /// Amplitudes are drawn uniformly from `[low, high)`.
    pub amplitude: (f64, f64),
    pub seed: u64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            n: 1000,
            num_sources: 3,
            k_common: 40,
            k_innov: 10,
            amplitude: (1.0, 4.0),
            seed: 0,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        if self.num_sources == 0 {
            return Err(Error::InvalidConfig("need at least one source".into()));
        }
        if self.k_common + self.k_innov > self.n {
            return Err(Error::InvalidConfig(format!(
                "k_common + k_innov = {} exceeds n = {}",
                self.k_common + self.k_innov,
                self.n
            )));
        }
        let (low, high) = self.amplitude;
        if !(low >= 0.0 && high >= low && high.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "amplitude range [{low}, {high}) must be nonnegative and ordered"
            )));
        }
        Ok(())
    }
}

/// `sources[j] = common + innovations[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JsmEnsemble {
    pub common: Vec<f64>,
    pub innovations: Vec<Vec<f64>>,
    pub sources: Vec<SparseSource>,
}

/// SplitMix64 finalizer used to derive independent child seeds.
pub fn mix_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn draw_amplitude(rng: &mut ChaCha8Rng, (low, high): (f64, f64)) -> f64 {
    if high > low {
        rng.random_range(low..high)
    } else {
        low
    }
}

/// Draws a JSM ensemble. Innovation supports are disjoint from the common
/// support, so every source has exactly `k_common + k_innov` nonzeros when
/// the amplitude range excludes zero.
pub fn generate_ensemble(cfg: &SourceConfig) -> Result<JsmEnsemble> {
    cfg.validate()?;
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let common_support = index::sample(&mut rng, n, cfg.k_common).into_vec();
    let mut common = vec![0.0; n];
    let mut in_common = vec![false; n];
    for &i in &common_support {
        common[i] = draw_amplitude(&mut rng, cfg.amplitude);
        in_common[i] = true;
    }
    let free: Vec<usize> = (0..n).filter(|&i| !in_common[i]).collect();

    let mut innovations = Vec::with_capacity(cfg.num_sources);
    let mut sources = Vec::with_capacity(cfg.num_sources);
    for _ in 0..cfg.num_sources {
        let mut z = vec![0.0; n];
        for pick in index::sample(&mut rng, free.len(), cfg.k_innov) {
            z[free[pick]] = draw_amplitude(&mut rng, cfg.amplitude);
        }
        let x: Vec<f64> = common.iter().zip(&z).map(|(c, z)| c + z).collect();
        innovations.push(z);
        sources.push(x);
    }
    Ok(JsmEnsemble {
        common,
        innovations,
        sources,
    })
}

/// Parses histogram CSV text: one source per line, comma-separated
/// nonnegative decimals, no header. Blank lines are skipped.
pub fn parse_histograms(text: &str) -> Result<Vec<SparseSource>> {
    let mut rows: Vec<SparseSource> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("not a number: `{}`", field.trim()),
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("histogram bins must be finite and nonnegative, got {v}"),
                });
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("ragged row: {} columns, expected {}", row.len(), first.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "no histogram rows".into(),
        });
    }
    Ok(rows)
}

pub fn load_histograms(path: impl AsRef<Path>) -> Result<Vec<SparseSource>> {
    let text = fs::read_to_string(path)?;
    parse_histograms(&text)
}

pub fn write_histograms<W: Write>(mut w: W, sources: &[SparseSource]) -> Result<()> {
    for row in sources {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Dense row-major m×n matrix with i.i.d. N(0, 1/m) entries, reproducible
/// from `(rows, cols, seed)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    rows: usize,
    cols: usize,
    seed: u64,
    data: Vec<f64>,
    /// Column-major copy for products with sparse vectors.
    columns: Vec<f64>,
}

fn transpose(rows: usize, cols: usize, data: &[f64]) -> Vec<f64> {
    let mut t = vec![0.0; data.len()];
    for (i, row) in data.chunks_exact(cols).enumerate() {
        for (j, &a) in row.iter().enumerate() {
            t[j * rows + i] = a;
        }
    }
    t
}

impl MeasurementMatrix {
    pub fn new(rows: usize, cols: usize, seed: u64) -> Result<Self> {
        if rows == 0 || rows > cols {
            return Err(Error::InvalidDims { rows, cols });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (rows as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
            .collect::<Vec<f64>>();
        Ok(MeasurementMatrix {
            rows,
            cols,
            seed,
            columns: transpose(rows, cols, &data),
            data,
        })
    }

    /// Wraps explicit coefficients. Such a matrix cannot be shared by seed;
    /// it exists for tests and for operators built outside the generator.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDims { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(MeasurementMatrix {
            rows,
            cols,
            seed: 0,
            columns: transpose(rows, cols, &data),
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.columns[j * self.rows..(j + 1) * self.rows].to_vec()
    }

    /// `out = A x`. Sparse `x` is applied column by column.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        let nnz = x.iter().filter(|v| **v != 0.0).count();
        if 3 * nnz < self.cols {
            out.fill(0.0);
            for (&xj, col) in x.iter().zip(self.columns.chunks_exact(self.rows)) {
                if xj != 0.0 {
                    for (o, a) in out.iter_mut().zip(col) {
                        *o += xj * a;
                    }
                }
            }
        } else {
            for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
                *o = dot(row, x);
            }
        }
    }

    /// `out = Aᵀ r`
    pub fn apply_transpose(&self, r: &[f64], out: &mut [f64]) {
        debug_assert_eq!(r.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        self.apply_transpose_add(r, out);
    }

    /// `out += Aᵀ r`
    pub fn apply_transpose_add(&self, r: &[f64], out: &mut [f64]) {
        for (&ri, row) in r.iter().zip(self.data.chunks_exact(self.cols)) {
            if ri != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += ri * a;
                }
            }
        }
    }
}

/// Four-accumulator dot product; lets the compiler vectorize the reduction.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Linear measurements `y = Φ x` tagged with the seed of `Φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub values: Vec<f64>,
    pub matrix_seed: u64,
}

pub fn make_matrix(m: usize, n: usize, seed: u64) -> Result<MeasurementMatrix> {
    MeasurementMatrix::new(m, n, seed)
}

pub fn project(mat: &MeasurementMatrix, x: &[f64]) -> Result<Measurement> {
    if x.len() != mat.cols() {
        return Err(Error::DimensionMismatch {
            expected: mat.cols(),
            got: x.len(),
        });
    }
    let mut values = vec![0.0; mat.rows()];
    mat.apply(x, &mut values);
    Ok(Measurement {
        values,
        matrix_seed: mat.seed(),
    })
}
