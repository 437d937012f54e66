//! Self-describing binary container for trained networks.
//!
//! Layout (little-endian):
//! magic `TSNNCKPT` | version u32 | kind u8 | arch u8 | reserved u16 |
//! meta length u32 | meta JSON | tensor count u32 |
//! per tensor: name length u16, name, rank u8, dims u32…, offset u64 |
//! value count u64 | f32 values | extra count u32 | f64 extras | sha256 of all preceding bytes.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{EstimatorError, Result};
use crate::params::{ParamLayout, TensorSpec};

pub const MAGIC: &[u8; 8] = b"TSNNCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ContainerKind {
    Estimator = 1,
    Policy = 2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: ContainerKind,
    pub arch_tag: u8,
    pub meta_json: String,
    pub layout: ParamLayout,
    pub params: Vec<f32>,
    /// Float64 side block: normalizer statistics or policy constants.
    pub extras: Vec<f64>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(64 + self.meta_json.len() + 4 * self.params.len());
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.push(self.kind as u8);
        b.push(self.arch_tag);
        b.extend_from_slice(&[0, 0]);
        b.extend_from_slice(&(self.meta_json.len() as u32).to_le_bytes());
        b.extend_from_slice(self.meta_json.as_bytes());
        b.extend_from_slice(&(self.layout.tensors.len() as u32).to_le_bytes());
        for t in &self.layout.tensors {
            b.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            b.extend_from_slice(t.name.as_bytes());
            b.push(t.shape.len() as u8);
            for &d in &t.shape {
                b.extend_from_slice(&(d as u32).to_le_bytes());
            }
            b.extend_from_slice(&(t.offset as u64).to_le_bytes());
        }
        b.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in &self.params {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b.extend_from_slice(&(self.extras.len() as u32).to_le_bytes());
        for v in &self.extras {
            b.extend_from_slice(&v.to_le_bytes());
        }
        let digest = Sha256::digest(&b);
        b.extend_from_slice(&digest);
        b
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let err = |reason: &str| EstimatorError::checkpoint(path, reason);
        if bytes.len() < MAGIC.len() + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(err("not a checkpoint (bad magic or too short)"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        let mut r = Reader { buf: body, pos: MAGIC.len(), path };
        let version = r.u32()?;
        if version != VERSION {
            return Err(err(&format!("unsupported version {version} (expected {VERSION})")));
        }
        let kind = match r.u8()? {
            1 => ContainerKind::Estimator,
            2 => ContainerKind::Policy,
            k => return Err(err(&format!("unknown container kind {k}"))),
        };
        let arch_tag = r.u8()?;
        r.take(2)?;
        let meta_len = r.u32()? as usize;
        let meta_json = String::from_utf8(r.take(meta_len)?.to_vec()).map_err(|_| err("metadata is not UTF-8"))?;
        let count = r.u32()? as usize;
        let mut layout = ParamLayout::default();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| err("tensor name is not UTF-8"))?;
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let offset = r.u64()? as usize;
            layout.tensors.push(TensorSpec { name, shape, offset });
        }
        let n = r.u64()? as usize;
        if n != layout.total() {
            return Err(err(&format!("tensor table covers {} values but {n} are stored", layout.total())));
        }
        let raw = r.take(n.checked_mul(4).ok_or_else(|| err("value count overflows"))?)?;
        let params = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let n_extra = r.u32()? as usize;
        let mut extras = Vec::with_capacity(n_extra.min(1024));
        for _ in 0..n_extra {
            extras.push(f64::from_bits(r.u64()?));
        }
        if r.pos != body.len() {
            return Err(err("trailing bytes after extras block"));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(err("checksum mismatch (file is corrupt)"));
        }
        Ok(Self {
            kind,
            arch_tag,
            meta_json,
            layout,
            params,
            extras,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        tendonsim_core::fsutil::write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| EstimatorError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(EstimatorError::checkpoint(self.path, format!("truncated at byte {}", self.pos))),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
