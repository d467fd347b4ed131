//! Self-describing binary parameter container.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   b"MVNCKPT\0"
//! version    u32       currently 1
//! n_meta     u32
//!   key_len  u32, key   (UTF-8)
//!   val_len  u32, value (UTF-8)          × n_meta, keys in ascending order
//! n_blocks   u32
//!   name_len u32, name  (UTF-8)
//!   precision u8        4 = f32, 8 = f64
//!   rows     u32
//!   cols     u32
//!   values   rows·cols × precision bytes, row-major, IEEE-754 LE   × n_blocks
//! ```
//!
//! Blocks keep insertion order. Reading then writing reproduces the input
//! bytes exactly.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

use super::Matrix;

pub const MAGIC: &[u8; 8] = b"MVNCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    fn width(self) -> u8 {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub precision: Precision,
    pub matrix: Matrix,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub metadata: BTreeMap<String, String>,
    pub blocks: Vec<ParamBlock>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.metadata.insert(key.into(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.metadata
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Parse(format!("checkpoint lacks metadata key `{key}`")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta(key)?;
        raw.parse()
            .map_err(|_| Error::Parse(format!("checkpoint metadata `{key}` = `{raw}` is malformed")))
    }

    pub fn push(&mut self, name: impl Into<String>, matrix: Matrix, precision: Precision) {
        let matrix = match precision {
            Precision::F64 => matrix,
            Precision::F32 => matrix.map(|v| v as f32 as f64),
        };
        self.blocks.push(ParamBlock {
            name: name.into(),
            precision,
            matrix,
        });
    }

    pub fn block(&self, name: &str) -> Result<&Matrix> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .map(|b| &b.matrix)
            .ok_or_else(|| Error::Parse(format!("checkpoint lacks block `{name}`")))
    }

    pub fn has_block(&self, name: &str) -> bool {
        self.blocks.iter().any(|b| b.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            put_str(&mut out, &b.name);
            out.push(b.precision.width());
            out.extend_from_slice(&(b.matrix.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(b.matrix.cols() as u32).to_le_bytes());
            for &v in b.matrix.data() {
                match b.precision {
                    Precision::F64 => out.extend_from_slice(&v.to_le_bytes()),
                    Precision::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Parse("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
        }
        let mut ckpt = Checkpoint::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            ckpt.metadata.insert(k, v);
        }
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let precision = match r.take(1)?[0] {
                4 => Precision::F32,
                8 => Precision::F64,
                w => return Err(Error::Parse(format!("block `{name}`: bad precision {w}"))),
            };
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Parse(format!("block `{name}`: size overflow")))?;
            let raw = r.take(n * precision.width() as usize)?;
            let data: Vec<f64> = match precision {
                Precision::F64 => raw
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
                Precision::F32 => raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect(),
            };
            let matrix = Matrix::from_vec(rows, cols, data)?;
            ckpt.blocks.push(ParamBlock {
                name,
                precision,
                matrix,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Parse(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Parse(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Parse("non-UTF-8 string in checkpoint".into()))
    }
}
