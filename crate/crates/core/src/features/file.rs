//! `BNDF` feature files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "BNDF" | version u32 | n u64 | m u32 | scales m x u32 | mask u16 | n*m*12 f32
//! ```

use std::path::Path;

use super::{FeatureMask, FeatureSet, FEATURE_COLUMNS};
use crate::error::{Error, Result};
use crate::io::write_atomic;

const MAGIC: &[u8; 4] = b"BNDF";
const VERSION: u32 = 1;

pub fn encode_feature_file(set: &FeatureSet) -> Vec<u8> {
    let m = set.scales.len();
    let mut out = Vec::with_capacity(22 + 4 * m + 4 * set.raw().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(set.len() as u64).to_le_bytes());
    out.extend_from_slice(&(m as u32).to_le_bytes());
    for &s in &set.scales {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.extend_from_slice(&set.mask.bits().to_le_bytes());
    for v in set.raw() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse_byte(
                self.bytes.len() as u64,
                format!("truncated feature file while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_feature_file(bytes: &[u8]) -> Result<FeatureSet> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::parse_byte(0, "not a BNDF feature file"));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let n = u64::from_le_bytes(c.take(8, "point count")?.try_into().unwrap());
    let m = c.u32("scale count")? as usize;
    if m == 0 {
        return Err(Error::parse_byte(16, "feature file declares zero scales"));
    }
    let mut scales = Vec::with_capacity(m.min(1024));
    for _ in 0..m {
        scales.push(c.u32("scale list")? as usize);
    }
    let mask_at = c.pos as u64;
    let mask = FeatureMask::from_bits(u16::from_le_bytes(c.take(2, "mask")?.try_into().unwrap()))
        .map_err(|e| Error::parse_byte(mask_at, e.to_string()))?;

    let count = (n as usize)
        .checked_mul(m * FEATURE_COLUMNS)
        .ok_or_else(|| Error::parse_byte(8, "point count overflows"))?;
    let body = c.take(count.saturating_mul(4), "feature values")?;
    if c.pos != bytes.len() {
        return Err(Error::parse_byte(c.pos as u64, "trailing bytes after feature values"));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    FeatureSet::from_raw(scales, mask, data)
}

pub fn write_feature_file(set: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_feature_file(set))
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_feature_file(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureSet {
        let data: Vec<f32> = (0..2 * 24).map(|i| i as f32 * 0.5 - 3.0).collect();
        FeatureSet::from_raw(vec![32, 16], FeatureMask::ALL, data).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_feature_file(&sample());
        assert_eq!(&bytes[0..4], b"BNDF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 32);
        assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 16);
        assert_eq!(u16::from_le_bytes(bytes[28..30].try_into().unwrap()), 0x0FFF);
        assert_eq!(bytes.len(), 30 + 48 * 4);
    }

    #[test]
    fn round_trip_bit_exact() {
        let s = sample();
        let bytes = encode_feature_file(&s);
        let back = decode_feature_file(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(encode_feature_file(&back), bytes);
    }

    #[test]
    fn truncation_and_version_errors() {
        let bytes = encode_feature_file(&sample());
        assert!(matches!(decode_feature_file(&bytes[..bytes.len() - 1]), Err(Error::Parse { .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode_feature_file(&bad), Err(Error::Version { found: 9, .. })));
        assert!(decode_feature_file(b"PLY!").is_err());
    }
}
