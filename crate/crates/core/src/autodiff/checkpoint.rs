//! Binary named-parameter container (`AVCK`).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes  "AVCK"
//! version    u32      1
//! kind       u32 len + UTF-8
//! hash       u64      FNV-1a of the config JSON
//! config     u32 len + UTF-8 JSON
//! n_params   u32
//!   name     u32 len + UTF-8
//!   rank     u32, dims u32 × rank
//!   data     f32 × prod(dims)
//! n_optim    u32
//!   name     u32 len + UTF-8
//!   step     u64
//!   lr, beta1, beta2, eps   f64 each
//!   n_moments u32
//!     param  u32 len + UTF-8
//!     numel  u32, m f32 × numel, v f32 × numel
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::fnv1a;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AVCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentRecord {
    pub param: String,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamSnapshot {
    pub name: String,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub moments: Vec<MomentRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointBundle {
    pub kind: String,
    pub config_hash: u64,
    pub config_json: String,
    pub params: Vec<NamedArray>,
    pub optimizers: Vec<AdamSnapshot>,
}

pub fn config_hash(config_json: &str) -> u64 {
    fnv1a(config_json.as_bytes())
}

impl CheckpointBundle {
    pub fn new(kind: &str, config_json: String) -> Self {
        Self {
            kind: kind.to_owned(),
            config_hash: config_hash(&config_json),
            config_json,
            params: Vec::new(),
            optimizers: Vec::new(),
        }
    }

    pub fn param(&self, name: &str) -> Option<&NamedArray> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn optimizer(&self, name: &str) -> Option<&AdamSnapshot> {
        self.optimizers.iter().find(|o| o.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.buf.extend_from_slice(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.str(&self.kind);
        w.u64(self.config_hash);
        w.str(&self.config_json);
        w.u32(self.params.len() as u32);
        for p in &self.params {
            w.str(&p.name);
            w.u32(p.shape.len() as u32);
            for &d in &p.shape {
                w.u32(d as u32);
            }
            w.f32s(&p.data);
        }
        w.u32(self.optimizers.len() as u32);
        for o in &self.optimizers {
            w.str(&o.name);
            w.u64(o.step);
            for x in [o.lr, o.beta1, o.beta2, o.eps] {
                w.buf.extend_from_slice(&x.to_le_bytes());
            }
            w.u32(o.moments.len() as u32);
            for m in &o.moments {
                w.str(&m.param);
                w.u32(m.m.len() as u32);
                w.f32s(&m.m);
                w.f32s(&m.v);
            }
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic (not an AVCK checkpoint)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }
        let kind = r.str()?;
        let stored_hash = r.u64()?;
        let config_json = r.str()?;
        if config_hash(&config_json) != stored_hash {
            return Err(Error::Checkpoint("config hash does not match embedded config".into()));
        }
        let n = r.u32()? as usize;
        let mut params = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.str()?;
            let rank = r.u32()? as usize;
            let shape: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
            let numel = shape.iter().product();
            let data = r.f32s(numel)?;
            params.push(NamedArray { name, shape, data });
        }
        let n_opt = r.u32()? as usize;
        let mut optimizers = Vec::with_capacity(n_opt);
        for _ in 0..n_opt {
            let name = r.str()?;
            let step = r.u64()?;
            let lr = r.f64()?;
            let beta1 = r.f64()?;
            let beta2 = r.f64()?;
            let eps = r.f64()?;
            let nm = r.u32()? as usize;
            let mut moments = Vec::with_capacity(nm);
            for _ in 0..nm {
                let param = r.str()?;
                let numel = r.u32()? as usize;
                let m = r.f32s(numel)?;
                let v = r.f32s(numel)?;
                moments.push(MomentRecord { param, m, v });
            }
            optimizers.push(AdamSnapshot {
                name,
                step,
                lr,
                beta1,
                beta2,
                eps,
                moments,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after optimizer section",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            kind,
            config_hash: stored_hash,
            config_json,
            params,
            optimizers,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(d) => Error::Checkpoint(format!("{}: {d}", path.display())),
            other => other,
        })
    }
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn f32s(&mut self, v: &[f32]) {
        self.buf.reserve(v.len() * 4);
        for x in v {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid UTF-8 in string field".into()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CheckpointBundle {
        let mut b = CheckpointBundle::new("melgan_like", "{\"a\":1}".into());
        b.params.push(NamedArray {
            name: "w".into(),
            shape: vec![2, 3],
            data: vec![1.0, -2.0, 3.5, 0.0, f32::MIN_POSITIVE, 7.0],
        });
        b.optimizers.push(AdamSnapshot {
            name: "generator".into(),
            step: 12,
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
            moments: vec![MomentRecord {
                param: "w".into(),
                m: vec![0.1; 6],
                v: vec![0.2; 6],
            }],
        });
        b
    }

    #[test]
    fn bytes_round_trip() {
        let b = sample();
        let bytes = b.to_bytes();
        let back = CheckpointBundle::from_bytes(&bytes).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut bytes = sample().to_bytes();
        assert!(CheckpointBundle::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        bytes[0] = b'X';
        assert!(CheckpointBundle::from_bytes(&bytes).is_err());
    }

    #[test]
    fn rejects_other_version() {
        let mut bytes = sample().to_bytes();
        bytes[4] = 9;
        let err = CheckpointBundle::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("version"));
    }
}
