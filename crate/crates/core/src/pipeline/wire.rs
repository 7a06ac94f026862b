//! Container format.
//!
//! ```text
//! "DCSS"  version:u8  J:u32  n:u32
//! per source:
//!   mode:u8  m_j:u32  m_si:u32  phi_seed:u64  [si_seed:u64]
//!   quantizer(17)  [prior quantizer(17)]
//!   per section: bits:u32  payload (⌈bits/8⌉ bytes)
//! ```
//!
//! All integers are little-endian. Bracketed fields are present in Prior
//! mode only. Intra sources carry one section (entropy-coded indices);
//! Prior sources carry the entropy-coded prior indices followed by one
//! syndrome section per bit-plane (4-byte CRC, then syndromes MSB-first).

use crate::quantization::{QuantizerSpec, QUANTIZER_HEADER_BYTES};
use crate::rate_control::Mode;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DCSS";
pub const VERSION: u8 = 1;
/// Magic, version, J and n.
pub const CONTAINER_HEADER_BITS: usize = 8 * (4 + 1 + 4 + 4);
const SECTION_LENGTH_BITS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    /// Significant bits in `payload`.
    pub bits: usize,
    pub payload: Vec<u8>,
}

impl Section {
    pub fn new(payload: Vec<u8>, bits: usize) -> Self {
        debug_assert!(bits <= 8 * payload.len());
        Section { bits, payload }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceStream {
    pub mode: Mode,
    pub m_j: usize,
    pub m_si: usize,
    pub phi_seed: u64,
    pub si_seed: u64,
    pub quantizer: QuantizerSpec,
    pub prior_quantizer: Option<QuantizerSpec>,
    pub sections: Vec<Section>,
}

impl SourceStream {
    pub fn header_bits(&self) -> usize {
        let mut bytes = 1 + 4 + 4 + 8 + QUANTIZER_HEADER_BYTES;
        if self.mode == Mode::Prior {
            bytes += 8 + QUANTIZER_HEADER_BYTES;
        }
        8 * bytes
    }

    /// Header, length-field and payload bits.
    pub fn total_bits(&self) -> usize {
        self.header_bits()
            + self
                .sections
                .iter()
                .map(|s| SECTION_LENGTH_BITS + s.bits)
                .sum::<usize>()
    }

    /// Syndrome sections (Prior mode), MSB plane first.
    pub fn plane_sections(&self) -> &[Section] {
        match self.mode {
            Mode::Prior => &self.sections[1..],
            Mode::Intra => &[],
        }
    }
}

/// All sources of one ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedStream {
    pub n: usize,
    pub sources: Vec<SourceStream>,
}

impl EncodedStream {
    pub fn total_bits(&self) -> usize {
        CONTAINER_HEADER_BITS + self.sources.iter().map(SourceStream::total_bits).sum::<usize>()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.sources.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        for s in &self.sources {
            out.push(s.mode.to_byte());
            out.extend_from_slice(&(s.m_j as u32).to_le_bytes());
            out.extend_from_slice(&(s.m_si as u32).to_le_bytes());
            out.extend_from_slice(&s.phi_seed.to_le_bytes());
            if s.mode == Mode::Prior {
                out.extend_from_slice(&s.si_seed.to_le_bytes());
            }
            out.extend_from_slice(&s.quantizer.to_bytes());
            if let Some(q) = &s.prior_quantizer {
                out.extend_from_slice(&q.to_bytes());
            }
            for sec in &s.sections {
                out.extend_from_slice(&(sec.bits as u32).to_le_bytes());
                out.extend_from_slice(&sec.payload[..sec.bits.div_ceil(8)]);
            }
        }
        out
    }

    /// Parses a container; `bit_depth` planes are expected per Prior source.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::MalformedStream("bad magic".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::MalformedStream(format!("unsupported version {version}")));
        }
        let j = r.u32()? as usize;
        let n = r.u32()? as usize;
        let mut sources = Vec::with_capacity(j.min(1024));
        for _ in 0..j {
            let mode = Mode::from_byte(r.u8()?)?;
            let m_j = r.u32()? as usize;
            let m_si = r.u32()? as usize;
            let phi_seed = r.u64()?;
            let si_seed = if mode == Mode::Prior { r.u64()? } else { 0 };
            let quantizer = QuantizerSpec::from_bytes(r.take(QUANTIZER_HEADER_BYTES)?)?;
            let prior_quantizer = match mode {
                Mode::Prior => Some(QuantizerSpec::from_bytes(r.take(QUANTIZER_HEADER_BYTES)?)?),
                Mode::Intra => None,
            };
            let count = match mode {
                Mode::Intra => 1,
                Mode::Prior => 1 + quantizer.bit_depth() as usize,
            };
            let mut sections = Vec::with_capacity(count);
            for _ in 0..count {
                let bits = r.u32()? as usize;
                sections.push(Section::new(r.take(bits.div_ceil(8))?.to_vec(), bits));
            }
            sources.push(SourceStream {
                mode,
                m_j,
                m_si,
                phi_seed,
                si_seed,
                quantizer,
                prior_quantizer,
                sections,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::MalformedStream("trailing bytes".into()));
        }
        Ok(EncodedStream { n, sources })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).ok_or(Error::TruncatedStream)?;
        let s = self.bytes.get(self.pos..end).ok_or(Error::TruncatedStream)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
