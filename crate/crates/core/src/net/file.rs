//! `BNDM` model files.
//!
//! Layout, all little-endian, followed by a CRC-32 of every preceding byte:
//!
//! ```text
//! magic "BNDM" | version u32 | two_class u8 | scale_count u32 | classes u32
//! fusion_width u32 | hidden u32 x 2 | leaky_slope f64 | dropout_p f64
//! scales u32 x scale_count | mask u16 | mean f64 x w | std f64 x w
//! parameter_count u64 | parameters f64 x parameter_count | crc32 u32
//! ```

use std::path::Path;

use super::{Architecture, Model, Standardization};
use crate::error::{Error, Result};
use crate::features::FeatureMask;
use crate::io::write_atomic;

const MAGIC: &[u8; 4] = b"BNDM";
const VERSION: u32 = 1;

pub fn encode_model(model: &Model) -> Vec<u8> {
    let a = &model.arch;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(a.is_two_class() as u8);
    for v in [a.scale_count, a.classes, a.fusion_width, a.hidden[0], a.hidden[1]] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&a.leaky_slope.to_le_bytes());
    out.extend_from_slice(&a.dropout_p.to_le_bytes());
    for &s in &model.scales {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    out.extend_from_slice(&model.mask.bits().to_le_bytes());
    for v in model.standardization.mean.iter().chain(&model.standardization.std) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for p in &model.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Corrupted(format!(
                "model file truncated at byte {} (needed {n} more)",
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Corrupted("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Corrupted("not a BNDM model file".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    if bytes.len() < 12 {
        return Err(Error::Corrupted("model file truncated".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(Error::Corrupted("model file checksum mismatch".into()));
    }

    let mut r = Reader { bytes: body, pos: 8 };
    let two_class = match r.take(1)?[0] {
        0 => false,
        1 => true,
        f => return Err(Error::Corrupted(format!("invalid two-class flag {f}"))),
    };
    let scale_count = r.u32()? as usize;
    let classes = r.u32()? as usize;
    let fusion_width = r.u32()? as usize;
    let hidden = [r.u32()? as usize, r.u32()? as usize];
    let leaky_slope = r.f64()?;
    let dropout_p = r.f64()?;
    if two_class != (classes == 2) {
        return Err(Error::Corrupted("two-class flag disagrees with the class count".into()));
    }
    let arch = Architecture {
        scale_count,
        classes,
        fusion_width,
        hidden,
        leaky_slope,
        dropout_p,
    };
    arch.validate().map_err(|e| Error::Corrupted(e.to_string()))?;
    let mut scales = Vec::with_capacity(scale_count.min(64));
    for _ in 0..scale_count {
        scales.push(r.u32()? as usize);
    }
    let mask = FeatureMask::from_bits(u16::from_le_bytes(r.take(2)?.try_into().unwrap()))
        .map_err(|e| Error::Corrupted(e.to_string()))?;
    let w = arch.layout().input_width;
    let mean = r.f64s(w)?;
    let std = r.f64s(w)?;
    let count = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
    if count != arch.parameter_count() {
        return Err(Error::Corrupted(format!(
            "file holds {count} parameters, architecture needs {}",
            arch.parameter_count()
        )));
    }
    let params = r.f64s(count)?;
    if r.pos != body.len() {
        return Err(Error::Corrupted("trailing bytes in model file".into()));
    }
    if params.iter().chain(&mean).chain(&std).any(|v| !v.is_finite()) {
        return Err(Error::Corrupted("non-finite value in model file".into()));
    }
    let mut model = Model::zeroed(arch, scales, mask, Standardization { mean, std })
        .map_err(|e| Error::Corrupted(e.to_string()))?;
    model.params = params;
    Ok(model)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_model(model))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}
