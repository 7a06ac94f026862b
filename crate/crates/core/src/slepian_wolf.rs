//! Rate-adaptive LDPC-accumulate (LDPCA) syndrome coding of bit-planes.
//!
//! The mother code is a square `m × m` parity-check matrix with variable
//! degree 3, followed by an accumulator. The encoder sends accumulated
//! syndromes in a fixed nested order; at rate step `k` the decoder holds the
//! first `⌈k·m/16⌉` of them, which split the accumulator into consecutive
//! segments. Each segment is one merged check whose neighbourhood is the
//! mod-2 union of the original checks it spans. At full rate the mother
//! matrix is inverted directly, so decoding always terminates losslessly.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::sensing::mix_seed;
use crate::{Error, Result};

/// Number of rate steps; step `k` transmits `⌈k·m/RATE_STEPS⌉` syndromes.
pub const RATE_STEPS: usize = 16;
pub const MIN_BLOCK: usize = 64;
pub const MAX_BP_ITERS: usize = 100;
/// BP gives up early once the unsatisfied-check count has not improved for
/// this many iterations.
const STALL_ITERS: usize = 20;
pub const LLR_CLAMP: f64 = 30.0;
pub const CHECKSUM_BITS: usize = 32;
const VAR_DEGREE: usize = 3;
const MAX_CONSTRUCTION_ATTEMPTS: u64 = 16;
const MAX_REPAIRS: usize = 256;

/// Per-position log(P(bit = 0) / P(bit = 1)), clamped to ±30.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftInput {
    llrs: Vec<f64>,
}

impl SoftInput {
    /// Clamps to ±30; NaN becomes 0.
    pub fn new(mut llrs: Vec<f64>) -> Self {
        for l in &mut llrs {
            *l = if l.is_nan() {
                0.0
            } else {
                l.clamp(-LLR_CLAMP, LLR_CLAMP)
            };
        }
        SoftInput { llrs }
    }

    /// Soft input with the given hard decisions at confidence `magnitude`.
    pub fn from_bits(bits: &[u8], magnitude: f64) -> Self {
        Self::new(
            bits.iter()
                .map(|&b| if b == 0 { magnitude } else { -magnitude })
                .collect(),
        )
    }

    pub fn llrs(&self) -> &[f64] {
        &self.llrs
    }

    pub fn len(&self) -> usize {
        self.llrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.llrs.is_empty()
    }

    /// Σ h(P(error)) in bits: the conditional entropy of the plane if the
    /// soft input were calibrated. No step below this count can be expected
    /// to decode.
    pub fn entropy_bits(&self) -> f64 {
        self.llrs
            .iter()
            .map(|&l| {
                let p = 1.0 / (1.0 + l.abs().exp());
                binary_entropy(p)
            })
            .sum()
    }
}

/// `h(p) = −p log2 p − (1−p) log2(1−p)`.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Compressed-row bipartite graph: `ptr[c]..ptr[c+1]` indexes `vars`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Graph {
    ptr: Vec<u32>,
    vars: Vec<u32>,
}

impl Graph {
    fn checks(&self) -> usize {
        self.ptr.len() - 1
    }

    fn neighbours(&self, c: usize) -> &[u32] {
        &self.vars[self.ptr[c] as usize..self.ptr[c + 1] as usize]
    }
}

/// Merged code for one rate step.
#[derive(Debug, Clone, PartialEq, Eq)]
struct RateLevel {
    /// Sorted accumulator positions closing each segment.
    ends: Vec<usize>,
    graph: Graph,
}

/// Code structure shared by encoder and decoder, reproducible from
/// `(block_length, code_seed)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyndromeLadder {
    block_length: usize,
    code_seed: u64,
    rate_steps: Vec<usize>,
    /// Accumulator position sent at each transmission slot.
    order: Vec<usize>,
    /// `slot_of[pos]` inverts `order`.
    slot_of: Vec<usize>,
    mother: Graph,
    levels: Vec<RateLevel>,
    /// Rows of the GF(2) inverse of the mother matrix, bit-packed.
    inverse: Vec<Vec<u64>>,
}

impl SyndromeLadder {
    pub fn block_length(&self) -> usize {
        self.block_length
    }

    pub fn code_seed(&self) -> u64 {
        self.code_seed
    }

    /// Cumulative syndrome counts, strictly increasing, last = m.
    pub fn rate_steps(&self) -> &[usize] {
        &self.rate_steps
    }

    /// Variable nodes adjacent to mother check `c`.
    pub fn check_neighbours(&self, c: usize) -> &[u32] {
        self.mother.neighbours(c)
    }

    /// Degree of each variable node in the mother graph.
    pub fn variable_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.block_length];
        for &v in &self.mother.vars {
            deg[v as usize] += 1;
        }
        deg
    }
}

/// Builds the ladder for block length `m`. Graphs whose mother matrix is
/// singular over GF(2) are redrawn from a derived seed.
pub fn build_ladder(m: usize, code_seed: u64) -> Result<SyndromeLadder> {
    if m < MIN_BLOCK {
        return Err(Error::BlockTooShort(m));
    }
    let (mother, inverse) = (0..MAX_CONSTRUCTION_ATTEMPTS)
        .find_map(|attempt| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(code_seed, attempt));
            let lists = peg_graph(m, &mut rng);
            repair_rank(lists, &mut rng)
        })
        .ok_or_else(|| Error::InvalidConfig(format!("no invertible code of length {m}")))?;

    let order = transmission_order(m);
    let mut slot_of = vec![0; m];
    for (slot, &pos) in order.iter().enumerate() {
        slot_of[pos] = slot;
    }
    let rate_steps: Vec<usize> = (1..=RATE_STEPS).map(|k| (k * m).div_ceil(RATE_STEPS)).collect();
    let levels = rate_steps
        .iter()
        .map(|&count| {
            let mut ends = order[..count].to_vec();
            ends.sort_unstable();
            let graph = merge_segments(&mother, &ends, m);
            RateLevel { ends, graph }
        })
        .collect();
    Ok(SyndromeLadder {
        block_length: m,
        code_seed,
        rate_steps,
        order,
        slot_of,
        mother,
        levels,
        inverse,
    })
}

/// Process-wide cache of ladders keyed by `(m, seed)`.
pub fn cached_ladder(m: usize, code_seed: u64) -> Result<Arc<SyndromeLadder>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Arc<SyndromeLadder>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(l) = cache.lock().unwrap().get(&(m, code_seed)) {
        return Ok(Arc::clone(l));
    }
    let ladder = Arc::new(build_ladder(m, code_seed)?);
    cache
        .lock()
        .unwrap()
        .entry((m, code_seed))
        .or_insert_with(|| Arc::clone(&ladder));
    Ok(ladder)
}

/// Variable-regular graph grown edge by edge. Each edge goes to a
/// minimum-degree check, avoiding checks already two hops away so that no
/// length-4 cycle is created while one can be avoided.
fn peg_graph(m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<u32>> {
    let mut check_vars: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut var_checks: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut banned = vec![usize::MAX; m];
    let mut pool = Vec::with_capacity(m);
    for v in 0..m {
        for _ in 0..VAR_DEGREE {
            for &c in &var_checks[v] {
                banned[c as usize] = v;
                for &u in &check_vars[c as usize] {
                    for &c2 in &var_checks[u as usize] {
                        banned[c2 as usize] = v;
                    }
                }
            }
            let pick = |allow_cycles: bool, pool: &mut Vec<usize>| {
                pool.clear();
                let mut best = usize::MAX;
                for c in 0..m {
                    let ok = if allow_cycles {
                        !var_checks[v].contains(&(c as u32))
                    } else {
                        banned[c] != v
                    };
                    if !ok {
                        continue;
                    }
                    let d = check_vars[c].len();
                    if d < best {
                        best = d;
                        pool.clear();
                    }
                    if d == best {
                        pool.push(c);
                    }
                }
            };
            pick(false, &mut pool);
            if pool.is_empty() {
                pick(true, &mut pool);
            }
            let c = *pool.choose(rng).expect("m ≥ 64 leaves a free check");
            check_vars[c].push(v as u32);
            var_checks[v].push(c as u32);
        }
    }
    check_vars
}

fn to_graph(check_vars: &[Vec<u32>]) -> Graph {
    let mut ptr = Vec::with_capacity(check_vars.len() + 1);
    let mut vars = Vec::with_capacity(VAR_DEGREE * check_vars.len());
    ptr.push(0);
    for list in check_vars {
        let mut list = list.clone();
        list.sort_unstable();
        vars.extend(list);
        ptr.push(vars.len() as u32);
    }
    Graph { ptr, vars }
}

fn words(m: usize) -> usize {
    m.div_ceil(64)
}

/// Gauss–Jordan inverse of the check matrix (rows = checks) over GF(2).
fn gf2_inverse(g: &Graph, m: usize) -> std::result::Result<Vec<Vec<u64>>, Vec<usize>> {
    let w = words(m);
    let mut a: Vec<Vec<u64>> = (0..m)
        .map(|c| {
            let mut row = vec![0u64; 2 * w];
            for &v in g.neighbours(c) {
                row[v as usize / 64] ^= 1 << (v % 64);
            }
            row[w + c / 64] |= 1 << (c % 64);
            row
        })
        .collect();
    let mut rank = 0;
    for col in 0..m {
        let (wi, bit) = (col / 64, 1u64 << (col % 64));
        let Some(pivot) = (rank..m).find(|&r| a[r][wi] & bit != 0) else {
            continue;
        };
        a.swap(rank, pivot);
        let prow = a[rank].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != rank && row[wi] & bit != 0 {
                for (x, p) in row.iter_mut().zip(&prow).skip(wi) {
                    *x ^= p;
                }
            }
        }
        rank += 1;
    }
    if rank < m {
        // the first zero row records a set of checks summing to zero
        let combo = &a[rank][w..];
        return Err((0..m).filter(|&c| combo[c / 64] >> (c % 64) & 1 == 1).collect());
    }
    Ok(a.into_iter().map(|row| row[w..].to_vec()).collect())
}

/// Moves single edges out of dependent check sets until the square parity
/// matrix is invertible. Gives up after `MAX_REPAIRS` moves.
fn repair_rank(mut lists: Vec<Vec<u32>>, rng: &mut ChaCha8Rng) -> Option<(Graph, Vec<Vec<u64>>)> {
    let m = lists.len();
    for _ in 0..MAX_REPAIRS {
        let g = to_graph(&lists);
        let dependent = match gf2_inverse(&g, m) {
            Ok(inv) => return Some((g, inv)),
            Err(d) => d,
        };
        let mut in_set = vec![false; m];
        for &c in &dependent {
            in_set[c] = true;
        }
        let from = *dependent.choose(rng)?;
        let slot = rng.random_range(0..lists[from].len());
        let v = lists[from][slot];
        let targets: Vec<usize> = (0..m).filter(|&c| !in_set[c] && !lists[c].contains(&v)).collect();
        let to = *targets.choose(rng)?;
        lists[from].swap_remove(slot);
        lists[to].push(v);
    }
    None
}

/// Nested order of accumulator positions: position `m−1` first, then a
/// van der Corput sweep so every prefix is spread evenly.
fn transmission_order(m: usize) -> Vec<usize> {
    let bits = usize::BITS - (m - 1).leading_zeros();
    let mut seen = vec![false; m];
    let mut order = Vec::with_capacity(m);
    for j in 0..(1usize << bits) {
        let f = j.reverse_bits() >> (usize::BITS - bits);
        let pos = m - 1 - ((f * m) >> bits);
        if !seen[pos] {
            seen[pos] = true;
            order.push(pos);
        }
    }
    debug_assert_eq!(order.len(), m);
    order
}

fn merge_segments(mother: &Graph, ends: &[usize], m: usize) -> Graph {
    let mut parity = vec![false; m];
    let mut touched = Vec::new();
    let mut ptr = vec![0u32];
    let mut vars = Vec::new();
    let mut start = 0;
    for &end in ends {
        for c in start..=end {
            for &v in mother.neighbours(c) {
                parity[v as usize] ^= true;
                touched.push(v);
            }
        }
        touched.sort_unstable();
        touched.dedup();
        for &v in &touched {
            if parity[v as usize] {
                vars.push(v);
                parity[v as usize] = false;
            }
        }
        touched.clear();
        ptr.push(vars.len() as u32);
        start = end + 1;
    }
    Graph { ptr, vars }
}

/// Encoder output for one plane: all `m` accumulated syndromes in
/// transmission order plus the plane checksum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwEncoded {
    pub syndromes: Vec<u8>,
    pub checksum: u32,
}

impl SwEncoded {
    /// Wire form of the first `count` syndromes: 4-byte little-endian CRC,
    /// then the bits packed MSB-first.
    pub fn to_bytes(&self, count: usize) -> Vec<u8> {
        let mut out = self.checksum.to_le_bytes().to_vec();
        out.extend(pack_bits(&self.syndromes[..count]));
        out
    }

    /// Inverse of [`SwEncoded::to_bytes`]; `count` syndromes are read.
    pub fn from_bytes(bytes: &[u8], count: usize) -> Result<Self> {
        if bytes.len() < 4 + count.div_ceil(8) {
            return Err(Error::TruncatedStream);
        }
        let checksum = u32::from_le_bytes(bytes[..4].try_into().unwrap());
        Ok(SwEncoded {
            syndromes: unpack_bits(&bytes[4..], count),
            checksum,
        })
    }
}

pub fn pack_bits(bits: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b != 0 {
            out[i / 8] |= 0x80 >> (i % 8);
        }
    }
    out
}

pub fn unpack_bits(bytes: &[u8], count: usize) -> Vec<u8> {
    (0..count).map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1).collect()
}

pub fn plane_checksum(plane: &[u8]) -> u32 {
    crc32fast::hash(&pack_bits(plane))
}

pub fn sw_encode(plane: &[u8], ladder: &SyndromeLadder) -> Result<SwEncoded> {
    let m = ladder.block_length;
    if plane.len() != m {
        return Err(Error::LengthMismatch {
            left: plane.len(),
            right: m,
        });
    }
    let mut acc = 0u8;
    let accumulated: Vec<u8> = (0..m)
        .map(|c| {
            for &v in ladder.mother.neighbours(c) {
                acc ^= plane[v as usize] & 1;
            }
            acc
        })
        .collect();
    Ok(SwEncoded {
        syndromes: ladder.order.iter().map(|&p| accumulated[p]).collect(),
        checksum: plane_checksum(plane),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub bits: Vec<u8>,
    /// Syndrome plus checksum bits pulled, over `m`.
    pub rate_used: f64,
    /// Number of syndromes pulled.
    pub syndromes_used: usize,
    pub success: bool,
    /// Index of the soft input that decoded.
    pub candidate: usize,
}

impl DecodeOutcome {
    pub fn bits_spent(&self) -> usize {
        self.syndromes_used + CHECKSUM_BITS
    }
}

/// Decodes with one soft input. `received` may hold a prefix of the
/// syndromes; steps beyond it are unavailable.
pub fn sw_decode(received: &SwEncoded, soft: &SoftInput, ladder: &SyndromeLadder) -> Result<DecodeOutcome> {
    best_soft_input(std::slice::from_ref(soft), received, ladder)
}

/// Tries every candidate at each rate step before moving to the next step
/// and returns the first success, i.e. the outcome with minimal rate.
/// Candidates whose soft-input entropy exceeds the step's syndrome count are
/// not attempted at that step.
pub fn best_soft_input(
    candidates: &[SoftInput],
    received: &SwEncoded,
    ladder: &SyndromeLadder,
) -> Result<DecodeOutcome> {
    assert!(!candidates.is_empty(), "best_soft_input needs a candidate");
    let m = ladder.block_length;
    for c in candidates {
        if c.len() != m {
            return Err(Error::LengthMismatch { left: c.len(), right: m });
        }
    }
    let floors: Vec<f64> = candidates.iter().map(SoftInput::entropy_bits).collect();
    let mut decoder = BpDecoder::default();
    let available = received.syndromes.len();
    for (step, &count) in ladder.rate_steps.iter().enumerate() {
        if count > available {
            return Err(Error::TruncatedStream);
        }
        let outcome = |bits: Vec<u8>, candidate| DecodeOutcome {
            bits,
            rate_used: (count + CHECKSUM_BITS) as f64 / m as f64,
            syndromes_used: count,
            success: true,
            candidate,
        };
        if count == m {
            let bits = solve_full_rate(received, ladder);
            let success = plane_checksum(&bits) == received.checksum;
            return Ok(DecodeOutcome {
                success,
                ..outcome(bits, 0)
            });
        }
        let level = &ladder.levels[step];
        let targets = merged_syndromes(level, received, ladder);
        for (ci, cand) in candidates.iter().enumerate() {
            if floors[ci] > count as f64 {
                continue;
            }
            if let Some(bits) = decoder.run(&level.graph, &targets, cand.llrs(), m) {
                if plane_checksum(&bits) == received.checksum {
                    return Ok(outcome(bits, ci));
                }
            }
        }
    }
    unreachable!("last rate step equals the block length")
}

fn accumulated_at(pos: usize, received: &SwEncoded, ladder: &SyndromeLadder) -> u8 {
    received.syndromes[ladder.slot_of[pos]]
}

fn merged_syndromes(level: &RateLevel, received: &SwEncoded, ladder: &SyndromeLadder) -> Vec<u8> {
    let mut prev = 0u8;
    level
        .ends
        .iter()
        .map(|&e| {
            let a = accumulated_at(e, received, ladder);
            let s = a ^ prev;
            prev = a;
            s
        })
        .collect()
}

fn solve_full_rate(received: &SwEncoded, ladder: &SyndromeLadder) -> Vec<u8> {
    let m = ladder.block_length;
    let mut s = vec![0u64; words(m)];
    let mut prev = 0u8;
    for c in 0..m {
        let a = accumulated_at(c, received, ladder);
        if a ^ prev != 0 {
            s[c / 64] |= 1 << (c % 64);
        }
        prev = a;
    }
    ladder
        .inverse
        .iter()
        .map(|row| {
            let ones: u32 = row.iter().zip(&s).map(|(r, s)| (r & s).count_ones()).sum();
            (ones & 1) as u8
        })
        .collect()
}

/// `φ(x) = −ln tanh(x/2)`, its own inverse on (0, ∞).
#[inline]
fn phi(x: f64) -> f64 {
    let x = x.clamp(1e-12, 40.0);
    (2.0 / x.exp_m1()).ln_1p()
}

/// Sum-product decoder in the log-likelihood domain with reusable buffers.
#[derive(Default)]
struct BpDecoder {
    /// Variable-to-check messages, one per edge in check order.
    v2c: Vec<f64>,
    c2v: Vec<f64>,
    /// `phi(|v2c|)` per edge, filled during the check pass.
    phis: Vec<f64>,
    total: Vec<f64>,
    var_ptr: Vec<u32>,
    var_edges: Vec<u32>,
    hard: Vec<u8>,
}

impl BpDecoder {
    fn index_variables(&mut self, g: &Graph, m: usize) {
        self.var_ptr.clear();
        self.var_ptr.resize(m + 1, 0);
        for &v in &g.vars {
            self.var_ptr[v as usize + 1] += 1;
        }
        for i in 0..m {
            self.var_ptr[i + 1] += self.var_ptr[i];
        }
        let mut fill = self.var_ptr[..m].to_vec();
        self.var_edges.clear();
        self.var_edges.resize(g.vars.len(), 0);
        for (e, &v) in g.vars.iter().enumerate() {
            self.var_edges[fill[v as usize] as usize] = e as u32;
            fill[v as usize] += 1;
        }
    }

    fn unsatisfied(&self, g: &Graph, targets: &[u8]) -> usize {
        (0..g.checks())
            .filter(|&c| {
                let p = g.neighbours(c).iter().fold(0u8, |acc, &v| acc ^ self.hard[v as usize]);
                p != targets[c]
            })
            .count()
    }

    /// Returns the hard decision once every merged check is satisfied.
    fn run(&mut self, g: &Graph, targets: &[u8], prior: &[f64], m: usize) -> Option<Vec<u8>> {
        self.index_variables(g, m);
        let edges = g.vars.len();
        self.v2c.clear();
        self.v2c.extend(g.vars.iter().map(|&v| prior[v as usize]));
        self.c2v.clear();
        self.c2v.resize(edges, 0.0);
        self.phis.clear();
        self.phis.resize(edges, 0.0);
        self.total.clear();
        self.total.extend_from_slice(prior);
        self.hard.clear();
        self.hard.extend(prior.iter().map(|&l| u8::from(l < 0.0)));
        let mut best = self.unsatisfied(g, targets);
        if best == 0 {
            return Some(self.hard.clone());
        }
        let mut since_best = 0;
        for _ in 0..MAX_BP_ITERS {
            for (c, &target) in targets.iter().enumerate() {
                let (lo, hi) = (g.ptr[c] as usize, g.ptr[c + 1] as usize);
                let mut sum = 0.0;
                let mut negative = target != 0;
                for e in lo..hi {
                    let l = self.v2c[e];
                    self.phis[e] = phi(l.abs());
                    sum += self.phis[e];
                    negative ^= l < 0.0;
                }
                for e in lo..hi {
                    let l = self.v2c[e];
                    let mag = phi((sum - self.phis[e]).max(0.0));
                    let neg = negative ^ (l < 0.0);
                    self.c2v[e] = if neg { -mag } else { mag };
                }
            }
            for v in 0..m {
                let (lo, hi) = (self.var_ptr[v] as usize, self.var_ptr[v + 1] as usize);
                let t = prior[v]
                    + self.var_edges[lo..hi]
                        .iter()
                        .map(|&e| self.c2v[e as usize])
                        .sum::<f64>();
                self.total[v] = t;
                self.hard[v] = u8::from(t < 0.0);
                for &e in &self.var_edges[lo..hi] {
                    self.v2c[e as usize] = t - self.c2v[e as usize];
                }
            }
            let now = self.unsatisfied(g, targets);
            if now == 0 {
                return Some(self.hard.clone());
            }
            if now < best {
                best = now;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best == STALL_ITERS {
                    return None;
                }
            }
        }
        None
    }
}
