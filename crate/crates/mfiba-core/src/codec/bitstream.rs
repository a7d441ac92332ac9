//! FCMB per-scale bitstream container.
//!
//! Little-endian layout:
//!
//! ```text
//! +--------+---------+-------+---------+----------+---------------+----------------+
//! | "FCMB" | version | scale | phi f32 | step f32 | element count | payload length |
//! | 4B     | u16 = 1 | u8    | 4B      | 4B       | u64           | u64            |
//! +--------+---------+-------+---------+----------+---------------+----------------+
//! | payload bytes ...                                                              |
//! +--------------------------------------------------------------------------------+
//! | crc64 of all preceding bytes (u64)                                             |
//! +--------------------------------------------------------------------------------+
//! ```
//!
//! The wire format carries the element count but not the tensor dims, so
//! parsing a record needs the scale's shape from the surrounding context (the
//! pyramid being decoded, or a sidecar next to a stream file). Reported bits
//! for a scale are the full container size, header and checksum included.

use crate::crc64::crc64;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"FCMB";
pub const VERSION: u16 = 1;
/// Bytes before the payload.
pub const HEADER_LEN: usize = 31;
/// Trailing checksum bytes.
pub const TRAILER_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleBitstream {
    pub scale: u8,
    pub phi: f32,
    /// Dead-zone step actually used, already scaled by phi.
    pub step: f32,
    pub element_count: u64,
    pub payload: Vec<u8>,
    /// Tensor dims (channels, height, width); in-memory only, not on the wire.
    pub shape: (u32, u32, u32),
}

impl ScaleBitstream {
    /// Container size in bits: payload plus header and checksum.
    pub fn total_bits(&self) -> u64 {
        ((HEADER_LEN + self.payload.len() + TRAILER_LEN) * 8) as u64
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len() + TRAILER_LEN);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.scale);
        out.extend_from_slice(&self.phi.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.element_count.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        let crc = crc64(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses one record from the front of `bytes`; returns the record and
    /// how many bytes it consumed, so records can be concatenated.
    pub fn from_bytes(bytes: &[u8], shape: (u32, u32, u32)) -> Result<(Self, usize)> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                offset: bytes.len(),
                needed: HEADER_LEN - bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic {
                expected: MAGIC,
                found: magic,
            });
        }
        let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
        if version != VERSION {
            return Err(Error::VersionMismatch {
                expected: VERSION,
                found: version,
            });
        }
        let scale = bytes[6];
        let phi = f32::from_le_bytes(bytes[7..11].try_into().unwrap());
        let step = f32::from_le_bytes(bytes[11..15].try_into().unwrap());
        let element_count = u64::from_le_bytes(bytes[15..23].try_into().unwrap());
        let payload_len = u64::from_le_bytes(bytes[23..31].try_into().unwrap());
        let payload_len = usize::try_from(payload_len)
            .map_err(|_| Error::CorruptBitstream("payload length overflows".into()))?;
        let total = HEADER_LEN
            .checked_add(payload_len)
            .and_then(|t| t.checked_add(TRAILER_LEN))
            .ok_or_else(|| Error::CorruptBitstream("record length overflows".into()))?;
        if bytes.len() < total {
            return Err(Error::Truncated {
                offset: bytes.len(),
                needed: total - bytes.len(),
            });
        }
        let body_end = HEADER_LEN + payload_len;
        let stored = u64::from_le_bytes(bytes[body_end..body_end + 8].try_into().unwrap());
        let computed = crc64(&bytes[..body_end]);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }
        let (c, h, w) = shape;
        let expected = c as u64 * h as u64 * w as u64;
        if element_count != expected {
            return Err(Error::SymbolCountMismatch {
                expected,
                actual: element_count,
            });
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::CorruptBitstream(format!("invalid step {step}")));
        }
        Ok((
            ScaleBitstream {
                scale,
                phi,
                step,
                element_count,
                payload: bytes[HEADER_LEN..body_end].to_vec(),
                shape,
            },
            total,
        ))
    }
}
