//! FPYR pyramid container.
//!
//! Little-endian layout:
//!
//! ```text
//! +--------+---------+-------+----------+------------+
//! | "FPYR" | version | flags | n_scales | channels   |
//! | 4B     | u16 = 1 | u8    | u8       | u32        |
//! +--------+---------+-------+----------+------------+
//! | per scale, base scales then pool:                |
//! |   height u32, width u32, C*H*W f32 payload       |
//! +---------------------------------------------------+
//! | crc64 of all preceding bytes (u64)               |
//! +---------------------------------------------------+
//! ```
//!
//! Flags bit 0 marks a trailing pooled scale; `n_scales` counts base scales
//! only. The container carries tensor data and dims, nothing else, so a
//! loaded pyramid gets default `source_id` and `object_size_param`.

use std::path::Path;

use crate::crc64::crc64;
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;
use crate::pyramid::{FeaturePyramid, FeatureScale};

pub const MAGIC: [u8; 4] = *b"FPYR";
pub const VERSION: u16 = 1;
const FLAG_POOL: u8 = 0b0000_0001;

pub fn save_pyramid(p: &FeaturePyramid, path: &Path) -> Result<()> {
    atomic_write(path, &to_bytes(p)?)
}

pub fn load_pyramid(path: &Path) -> Result<FeaturePyramid> {
    from_bytes(&std::fs::read(path)?)
}

pub fn to_bytes(p: &FeaturePyramid) -> Result<Vec<u8>> {
    p.validate()?;
    let payload: usize = p.scales.iter().map(|s| 8 + 4 * s.element_count()).sum();
    let mut out = Vec::with_capacity(12 + payload + 8);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(if p.has_pool { FLAG_POOL } else { 0 });
    out.push(p.num_base_scales() as u8);
    out.extend_from_slice(&p.scales[0].channels.to_le_bytes());
    for scale in &p.scales {
        out.extend_from_slice(&scale.height.to_le_bytes());
        out.extend_from_slice(&scale.width.to_le_bytes());
        for v in &scale.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc64(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<FeaturePyramid> {
    let mut r = Reader::new(bytes);
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found: magic,
        });
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::VersionMismatch {
            expected: VERSION,
            found: version,
        });
    }
    let flags = r.take(1)?[0];
    if flags & !FLAG_POOL != 0 {
        return Err(Error::InvalidPyramid(format!("unknown flags {flags:#04x}")));
    }
    let has_pool = flags & FLAG_POOL != 0;
    let base_scales = r.take(1)?[0] as usize;
    let channels = u32::from_le_bytes(r.take(4)?.try_into().unwrap());

    let total_scales = base_scales + usize::from(has_pool);
    let mut scales = Vec::with_capacity(total_scales);
    for index in 0..total_scales {
        let height = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        let width = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        let count = channels as usize * height as usize * width as usize;
        let raw = r.take(count.checked_mul(4).ok_or(Error::InvalidPyramid(format!(
            "scale {index} dims overflow"
        )))?)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        scales.push(FeatureScale {
            index,
            channels,
            height,
            width,
            data,
        });
    }

    let body_end = r.offset;
    let stored = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
    if r.remaining() != 0 {
        return Err(Error::TrailingBytes {
            extra: r.remaining(),
        });
    }
    let computed = crc64(&bytes[..body_end]);
    if stored != computed {
        return Err(Error::ChecksumMismatch { stored, computed });
    }

    let pyramid = FeaturePyramid {
        scales,
        has_pool,
        source_id: String::new(),
        object_size_param: 0.5,
    };
    pyramid.validate()?;
    Ok(pyramid)
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, offset: 0 }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.offset < len {
            return Err(Error::Truncated {
                offset: self.offset,
                needed: len - (self.bytes.len() - self.offset),
            });
        }
        let out = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(out)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.offset
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_pyramid(seed: u64, n: usize, c: u32, h0: u32, w0: u32, pool: bool) -> FeaturePyramid {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let mut scales = Vec::new();
        let (mut h, mut w) = (h0, w0);
        for i in 0..n + 1 + usize::from(pool) {
            if i > 0 {
                h = h.div_ceil(2);
                w = w.div_ceil(2);
            }
            let data: Vec<f32> = (0..(c * h * w))
                .map(|_| rng.random_range(-4.0f32..4.0))
                .collect();
            scales.push(FeatureScale::new(i, c, h, w, data).unwrap());
        }
        FeaturePyramid::new(scales, pool).unwrap()
    }

    #[test]
    fn single_element_container_is_exactly_32_bytes() {
        let p = FeaturePyramid::new(
            vec![FeatureScale::new(0, 1, 1, 1, vec![0.0]).unwrap()],
            false,
        )
        .unwrap();
        let bytes = to_bytes(&p).unwrap();
        // 12 header + 8 dims + 4 payload + 8 crc
        assert_eq!(bytes.len(), 32);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back.scales, p.scales);
    }

    #[test]
    fn round_trip_is_element_exact() {
        for seed in 0..20 {
            let p = random_pyramid(seed, 3, 3, 17, 23, seed % 2 == 0);
            let back = from_bytes(&to_bytes(&p).unwrap()).unwrap();
            assert_eq!(back.scales, p.scales, "seed {seed}");
            assert_eq!(back.has_pool, p.has_pool);
        }
    }

    #[test]
    fn save_load_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.fpyr");
        let p = random_pyramid(5, 2, 4, 12, 12, true);
        save_pyramid(&p, &path).unwrap();
        let back = load_pyramid(&path).unwrap();
        assert_eq!(back.scales, p.scales);
        assert_eq!(back.has_pool, p.has_pool);
    }

    #[test]
    fn save_rejects_invalid_pyramid_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.fpyr");
        let mut p = random_pyramid(1, 2, 4, 8, 8, false);
        p.scales[1].channels = 2; // breaks data length vs dims
        assert!(save_pyramid(&p, &path).is_err());
        assert!(!path.exists(), "rejected pyramid still produced a file");
    }

    #[test]
    fn bad_magic_is_distinct() {
        let mut bytes = to_bytes(&random_pyramid(0, 1, 1, 4, 4, false)).unwrap();
        bytes[0] = b'X';
        assert!(matches!(from_bytes(&bytes), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn version_mismatch_is_distinct() {
        let mut bytes = to_bytes(&random_pyramid(0, 1, 1, 4, 4, false)).unwrap();
        bytes[4] = 9;
        assert!(matches!(
            from_bytes(&bytes),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
    }

    #[test]
    fn truncation_is_distinct() {
        let bytes = to_bytes(&random_pyramid(0, 1, 1, 4, 4, false)).unwrap();
        for keep in [3, 11, 15, bytes.len() - 9, bytes.len() - 1] {
            assert!(
                matches!(from_bytes(&bytes[..keep]), Err(Error::Truncated { .. })),
                "prefix of {keep} bytes did not read as truncated"
            );
        }
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = to_bytes(&random_pyramid(0, 1, 1, 4, 4, false)).unwrap();
        bytes.push(0);
        assert!(matches!(
            from_bytes(&bytes),
            Err(Error::TrailingBytes { extra: 1 })
        ));
    }

    #[test]
    fn every_single_byte_flip_is_detected() {
        let bytes = to_bytes(&random_pyramid(9, 1, 2, 6, 6, true)).unwrap();
        for i in 0..bytes.len() {
            let mut copy = bytes.clone();
            copy[i] ^= 0x5A;
            assert!(
                from_bytes(&copy).is_err(),
                "flip at byte {i} loaded successfully"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn round_trip_any_valid_pyramid(
            seed in 0u64..10_000,
            n in 0usize..4,
            c in 1u32..5,
            h0 in 1u32..20,
            w0 in 1u32..20,
            pool in proptest::bool::ANY,
        ) {
            prop_assume!(!(pool && n == 0 && (h0 == 1 && w0 == 1)) || true);
            let p = random_pyramid(seed, n, c, h0, w0, pool);
            let back = from_bytes(&to_bytes(&p).unwrap()).unwrap();
            prop_assert_eq!(back.scales, p.scales);
            prop_assert_eq!(back.has_pool, p.has_pool);
        }
    }
}
