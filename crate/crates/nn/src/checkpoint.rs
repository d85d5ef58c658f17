//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic      b"MZCK"
//! format     u32 (= 1)
//! version    u64    parameter version counter
//! meta       u32 length + UTF-8 bytes (architecture description)
//! count      u32    number of tensors
//! per tensor u16 name length + name, u8 rank, u32 per dim, f32 values
//! per tensor f32 optimizer accumulator values, same shapes and order
//! checksum   32-byte SHA-256 of everything above
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::NnError;
use crate::optim::ModelParams;
use crate::params::ParamSet;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MZCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelParams,
    pub meta: String,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        b.extend_from_slice(&self.model.version().to_le_bytes());
        b.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        b.extend_from_slice(self.meta.as_bytes());
        let ps = &self.model.params;
        b.extend_from_slice(&(ps.len() as u32).to_le_bytes());
        for (name, t) in ps.iter() {
            b.extend_from_slice(&(name.len() as u16).to_le_bytes());
            b.extend_from_slice(name.as_bytes());
            b.push(t.shape().len() as u8);
            for &d in t.shape() {
                b.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        for t in &self.model.accum {
            for v in t.data() {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&b);
        b.extend_from_slice(&digest);
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        if bytes.len() < 4 + 32 {
            return Err(NnError::Checkpoint("file too short".into()));
        }
        let (body, sum) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != sum {
            return Err(NnError::Checkpoint("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let format = r.u32()?;
        if format != FORMAT_VERSION {
            return Err(NnError::Checkpoint(format!("unsupported format {format}")));
        }
        let version = r.u64()?;
        let meta_len = r.u32()? as usize;
        let meta = String::from_utf8(r.take(meta_len)?.to_vec())
            .map_err(|_| NnError::Checkpoint("meta is not UTF-8".into()))?;
        let count = r.u32()? as usize;
        let mut ps = ParamSet::new();
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| NnError::Checkpoint("name is not UTF-8".into()))?;
            if ps.id(&name).is_some() {
                return Err(NnError::Checkpoint(format!("duplicate tensor {name}")));
            }
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let data = r.f32s(shape.iter().product())?;
            ps.add(name, Tensor::new(&shape, data));
            shapes.push(shape);
        }
        let mut accum = Vec::with_capacity(count);
        for shape in &shapes {
            accum.push(Tensor::new(shape, r.f32s(shape.iter().product())?));
        }
        if r.pos != body.len() {
            return Err(NnError::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint {
            model: ModelParams::from_parts(ps, accum, version),
            meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| NnError::Checkpoint("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, NnError> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| NnError::Checkpoint("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::OptimConfig;
    use crate::params::Gradients;

    fn sample() -> Checkpoint {
        let mut ps = ParamSet::new();
        let a = ps.add("fc.w", Tensor::new(&[2, 2], vec![1.5f32, -0.0, f32::MIN_POSITIVE, 3.25]));
        ps.add("fc.b", Tensor::vector(vec![0.1f32, 0.2]));
        let mut m = ModelParams::new(ps);
        let mut g = Gradients::zeros_like(&m.params);
        *g.get_mut(a) = Tensor::new(&[2, 2], vec![0.5, 1.0, -1.0, 2.0]);
        m.apply(&g, &OptimConfig::default()).unwrap();
        Checkpoint {
            model: m,
            meta: "{\"arch\":\"test\"}".into(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back.meta, c.meta);
        assert_eq!(back.model.version(), 1);
        for (x, y) in back.model.params.tensors().iter().zip(c.model.params.tensors()) {
            let xb: Vec<u32> = x.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u32> = y.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
        assert_eq!(back.model.accum, c.model.accum);
        assert_eq!(back.to_bytes(), c.to_bytes());
    }

    #[test]
    fn corruption_detected() {
        let mut b = sample().to_bytes();
        let mid = b.len() / 2;
        b[mid] ^= 0x40;
        assert!(matches!(Checkpoint::from_bytes(&b), Err(NnError::Checkpoint(_))));
        assert!(Checkpoint::from_bytes(&b[..10]).is_err());
    }
}
