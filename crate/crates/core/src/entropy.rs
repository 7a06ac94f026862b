//! Order-0 adaptive arithmetic coding and plug-in entropy estimates.
//!
//! The coder is the classic integer arithmetic coder with 32-bit `low`/`high`
//! registers; carries are resolved through the pending-bit counter rather
//! than by rewriting emitted bytes. Output is bit-granular and zero padded
//! to a byte boundary; the decoder reads zeros past the end.

use std::collections::HashMap;

use crate::{Error, Result};

const PRECISION: u32 = 32;
const WHOLE: u64 = 1 << PRECISION;
const HALF: u64 = WHOLE / 2;
const QUARTER: u64 = WHOLE / 4;

/// Count added to a symbol each time it is coded.
const INCREMENT: u32 = 8;
/// Counts are halved once their total would exceed this.
const MAX_TOTAL: u32 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymbolAlphabet {
    size: u32,
}

impl SymbolAlphabet {
    pub fn new(size: u32) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidConfig(format!(
                "alphabet needs at least 2 symbols, got {size}"
            )));
        }
        Ok(SymbolAlphabet { size })
    }

    /// Alphabet of `2^bits` quantization indices.
    pub fn for_bit_depth(bits: u8) -> Self {
        SymbolAlphabet { size: 1 << bits }
    }

    pub fn size(&self) -> u32 {
        self.size
    }
}

/// Coded payload. `bit_length` counts the significant bits; `bytes` is zero
/// padded to a whole byte.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Bitstream {
    pub bytes: Vec<u8>,
    pub bit_length: usize,
}

impl Bitstream {
    /// Wire layout: 4-byte little-endian symbol count, then the payload.
    pub fn to_wire(&self, count: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.bytes.len());
        out.extend_from_slice(&(count as u32).to_le_bytes());
        out.extend_from_slice(&self.bytes);
        out
    }

    /// Inverse of [`Bitstream::to_wire`]: returns the payload and symbol count.
    pub fn from_wire(bytes: &[u8]) -> Result<(Bitstream, usize)> {
        if bytes.len() < 4 {
            return Err(Error::TruncatedStream);
        }
        let count = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        let payload = bytes[4..].to_vec();
        let bit_length = 8 * payload.len();
        Ok((
            Bitstream {
                bytes: payload,
                bit_length,
            },
            count,
        ))
    }
}

struct BitWriter {
    bytes: Vec<u8>,
    bits: usize,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter {
            bytes: Vec::new(),
            bits: 0,
        }
    }

    fn push(&mut self, bit: bool) {
        if self.bits.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> (self.bits % 8);
        }
        self.bits += 1;
    }

    fn finish(self) -> Bitstream {
        Bitstream {
            bytes: self.bytes,
            bit_length: self.bits,
        }
    }
}

/// Adaptive frequency table, all counts starting at one.
struct FrequencyModel {
    counts: Vec<u32>,
    total: u32,
}

impl FrequencyModel {
    fn new(size: u32) -> Self {
        FrequencyModel {
            counts: vec![1; size as usize],
            total: size,
        }
    }

    fn range_of(&self, symbol: usize) -> (u64, u64) {
        let low: u64 = self.counts[..symbol].iter().map(|&c| c as u64).sum();
        (low, low + self.counts[symbol] as u64)
    }

    /// Symbol whose cumulative range contains `target`, and that range.
    fn find(&self, target: u64) -> (usize, u64, u64) {
        let mut low = 0u64;
        for (s, &c) in self.counts.iter().enumerate() {
            let high = low + c as u64;
            if target < high {
                return (s, low, high);
            }
            low = high;
        }
        let last = self.counts.len() - 1;
        (last, low - self.counts[last] as u64, low)
    }

    fn update(&mut self, symbol: usize) {
        if self.total + INCREMENT > MAX_TOTAL {
            self.total = 0;
            for c in &mut self.counts {
                *c = (*c / 2).max(1);
                self.total += *c;
            }
        }
        self.counts[symbol] += INCREMENT;
        self.total += INCREMENT;
    }
}

/// Encodes `symbols` with an adaptive order-0 model over `alphabet`.
pub fn entropy_encode(symbols: &[u32], alphabet: SymbolAlphabet) -> Result<Bitstream> {
    if let Some(&bad) = symbols.iter().find(|&&s| s >= alphabet.size) {
        return Err(Error::SymbolOutOfRange {
            symbol: bad,
            size: alphabet.size,
        });
    }
    if symbols.is_empty() {
        return Ok(Bitstream::default());
    }
    let mut model = FrequencyModel::new(alphabet.size);
    let mut out = BitWriter::new();
    let (mut low, mut high) = (0u64, WHOLE - 1);
    let mut pending = 0usize;

    let emit = |out: &mut BitWriter, bit: bool, pending: &mut usize| {
        out.push(bit);
        for _ in 0..*pending {
            out.push(!bit);
        }
        *pending = 0;
    };

    for &s in symbols {
        let (c_lo, c_hi) = model.range_of(s as usize);
        let total = model.total as u64;
        let range = high - low + 1;
        high = low + range * c_hi / total - 1;
        low += range * c_lo / total;
        loop {
            if high < HALF {
                emit(&mut out, false, &mut pending);
            } else if low >= HALF {
                emit(&mut out, true, &mut pending);
                low -= HALF;
                high -= HALF;
            } else if low >= QUARTER && high < 3 * QUARTER {
                pending += 1;
                low -= QUARTER;
                high -= QUARTER;
            } else {
                break;
            }
            low <<= 1;
            high = (high << 1) | 1;
        }
        model.update(s as usize);
    }
    pending += 1;
    emit(&mut out, low >= QUARTER, &mut pending);
    Ok(out.finish())
}

struct BitReader<'a> {
    bytes: &'a [u8],
    limit: usize,
    pos: usize,
}

impl BitReader<'_> {
    fn next(&mut self) -> Result<u64> {
        if self.pos >= self.limit + PRECISION as usize {
            return Err(Error::TruncatedStream);
        }
        let bit = if self.pos < self.limit {
            (self.bytes[self.pos / 8] >> (7 - self.pos % 8)) & 1
        } else {
            0
        };
        self.pos += 1;
        Ok(bit as u64)
    }
}

/// Decodes the first `count` symbols of `bs`.
pub fn entropy_decode(bs: &Bitstream, count: usize, alphabet: SymbolAlphabet) -> Result<Vec<u32>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if bs.bit_length > 8 * bs.bytes.len() {
        return Err(Error::TruncatedStream);
    }
    let mut reader = BitReader {
        bytes: &bs.bytes,
        limit: bs.bit_length,
        pos: 0,
    };
    let mut model = FrequencyModel::new(alphabet.size);
    let (mut low, mut high) = (0u64, WHOLE - 1);
    let mut value = 0u64;
    for _ in 0..PRECISION {
        value = (value << 1) | reader.next()?;
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let total = model.total as u64;
        let range = high - low + 1;
        let target = ((value - low + 1) * total - 1) / range;
        let (s, c_lo, c_hi) = model.find(target);
        high = low + range * c_hi / total - 1;
        low += range * c_lo / total;
        loop {
            if high < HALF {
            } else if low >= HALF {
                low -= HALF;
                high -= HALF;
                value -= HALF;
            } else if low >= QUARTER && high < 3 * QUARTER {
                low -= QUARTER;
                high -= QUARTER;
                value -= QUARTER;
            } else {
                break;
            }
            low <<= 1;
            high = (high << 1) | 1;
            value = (value << 1) | reader.next()?;
        }
        model.update(s);
        out.push(s as u32);
    }
    Ok(out)
}

fn plugin_entropy<I: IntoIterator<Item = usize>>(counts: I, total: usize) -> f64 {
    let n = total as f64;
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0)
}

/// Order-0 plug-in entropy in bits/symbol.
pub fn empirical_entropy(symbols: &[u32], alphabet: SymbolAlphabet) -> Result<f64> {
    if symbols.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut counts = vec![0usize; alphabet.size as usize];
    for &s in symbols {
        let slot = counts.get_mut(s as usize).ok_or(Error::SymbolOutOfRange {
            symbol: s,
            size: alphabet.size,
        })?;
        *slot += 1;
    }
    Ok(plugin_entropy(counts, symbols.len()))
}

/// Plug-in `H(S|T) = H(S,T) − H(T)` in bits/symbol.
pub fn conditional_entropy(symbols: &[u32], side: &[u32], alphabet: SymbolAlphabet) -> Result<f64> {
    if symbols.len() != side.len() {
        return Err(Error::LengthMismatch {
            left: symbols.len(),
            right: side.len(),
        });
    }
    if symbols.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut joint: HashMap<(u32, u32), usize> = HashMap::new();
    let mut marginal: HashMap<u32, usize> = HashMap::new();
    for (&s, &t) in symbols.iter().zip(side) {
        if s >= alphabet.size || t >= alphabet.size {
            return Err(Error::SymbolOutOfRange {
                symbol: s.max(t),
                size: alphabet.size,
            });
        }
        *joint.entry((s, t)).or_default() += 1;
        *marginal.entry(t).or_default() += 1;
    }
    let n = symbols.len();
    let h = plugin_entropy(joint.into_values(), n) - plugin_entropy(marginal.into_values(), n);
    Ok(h.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const K64: SymbolAlphabet = SymbolAlphabet { size: 64 };

    #[test]
    fn constant_input_costs_almost_nothing() {
        let bs = entropy_encode(&[0; 1000], K64).unwrap();
        assert!(bs.bit_length < 100, "{} bits", bs.bit_length);
        assert_eq!(entropy_decode(&bs, 1000, K64).unwrap(), vec![0; 1000]);
    }

    #[test]
    fn uniform_input_costs_six_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s: Vec<u32> = (0..10_000).map(|_| rng.random_range(0..64)).collect();
        let bs = entropy_encode(&s, K64).unwrap();
        let rate = bs.bit_length as f64 / s.len() as f64;
        assert!((5.9..=6.1).contains(&rate), "rate {rate}");
        assert_eq!(entropy_decode(&bs, s.len(), K64).unwrap(), s);
    }

    #[test]
    fn ramp_roundtrip_and_prefix_decode() {
        let s: Vec<u32> = (0..10).flat_map(|_| 0..64).collect();
        let bs = entropy_encode(&s, K64).unwrap();
        assert_eq!(entropy_decode(&bs, s.len(), K64).unwrap(), s);
        assert_eq!(entropy_decode(&bs, s.len() - 1, K64).unwrap(), &s[..s.len() - 1]);
    }

    #[test]
    fn empty_stream() {
        let bs = entropy_encode(&[], K64).unwrap();
        assert_eq!(bs.bit_length, 0);
        assert!(entropy_decode(&Bitstream::default(), 0, K64).unwrap().is_empty());
    }

    #[test]
    fn out_of_range_symbol() {
        assert!(matches!(
            entropy_encode(&[3, 64], K64),
            Err(Error::SymbolOutOfRange { symbol: 64, size: 64 })
        ));
    }

    #[test]
    fn truncated_stream_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s: Vec<u32> = (0..500).map(|_| rng.random_range(0..64)).collect();
        let mut bs = entropy_encode(&s, K64).unwrap();
        bs.bytes.truncate(bs.bytes.len() / 2);
        bs.bit_length = 8 * bs.bytes.len();
        assert!(matches!(entropy_decode(&bs, s.len(), K64), Err(Error::TruncatedStream)));
    }

    #[test]
    fn wire_layout() {
        let bs = entropy_encode(&[1, 2, 3], K64).unwrap();
        let wire = bs.to_wire(3);
        assert_eq!(&wire[..4], &3u32.to_le_bytes());
        let (back, count) = Bitstream::from_wire(&wire).unwrap();
        assert_eq!(count, 3);
        assert_eq!(entropy_decode(&back, count, K64).unwrap(), vec![1, 2, 3]);
        assert!(Bitstream::from_wire(&[1, 0]).is_err());
    }

    #[test]
    fn entropy_examples() {
        let a2 = SymbolAlphabet::new(2).unwrap();
        assert_eq!(empirical_entropy(&[3; 10], K64).unwrap(), 0.0);
        assert_eq!(empirical_entropy(&[0, 1], a2).unwrap(), 1.0);
        assert_eq!(empirical_entropy(&[0, 0, 1, 1, 2, 2, 3, 3], K64).unwrap(), 2.0);
        assert!(matches!(empirical_entropy(&[], K64), Err(Error::EmptyInput)));
        assert!(SymbolAlphabet::new(1).is_err());
    }

    #[test]
    fn conditional_entropy_examples() {
        let s = [0, 5, 5, 9, 1, 0, 3, 3];
        assert_eq!(conditional_entropy(&s, &s, K64).unwrap(), 0.0);
        let h = empirical_entropy(&s, K64).unwrap();
        assert!((conditional_entropy(&s, &[7; 8], K64).unwrap() - h).abs() < 1e-12);
        assert!(matches!(
            conditional_entropy(&s, &[0; 3], K64),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn independent_side_leaves_entropy_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<u32> = (0..100_000).map(|_| rng.random_range(0..64)).collect();
        let t: Vec<u32> = (0..100_000).map(|_| rng.random_range(0..64)).collect();
        let h = empirical_entropy(&s, K64).unwrap();
        let hc = conditional_entropy(&s, &t, K64).unwrap();
        assert!((h - hc).abs() < 0.05, "H = {h}, H(S|T) = {hc}");
    }

    #[test]
    fn coded_rate_tracks_entropy_on_skewed_source() {
        // geometric-ish source over 64 symbols
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<u32> = (0..20_000)
            .map(|_| {
                let u: f64 = rng.random_range(0.0..1.0);
                ((-u.ln() * 4.0) as u32).min(63)
            })
            .collect();
        let h = empirical_entropy(&s, K64).unwrap();
        let rate = entropy_encode(&s, K64).unwrap().bit_length as f64 / s.len() as f64;
        assert!(rate - h <= 0.1 + 64.0 / s.len() as f64, "rate {rate}, H {h}");
    }

    proptest! {
        #[test]
        fn lossless(symbols in proptest::collection::vec(0u32..64, 0..600)) {
            let bs = entropy_encode(&symbols, K64).unwrap();
            prop_assert!(bs.bit_length <= 8 * bs.bytes.len());
            prop_assert_eq!(entropy_decode(&bs, symbols.len(), K64).unwrap(), symbols);
        }

        #[test]
        fn conditioning_reduces_entropy(
            pairs in proptest::collection::vec((0u32..8, 0u32..8), 1..300),
        ) {
            let (s, t): (Vec<u32>, Vec<u32>) = pairs.into_iter().unzip();
            let a = SymbolAlphabet::new(8).unwrap();
            let h = empirical_entropy(&s, a).unwrap();
            let hc = conditional_entropy(&s, &t, a).unwrap();
            prop_assert!(hc >= 0.0 && hc <= h + 1e-9);
        }
    }
}
