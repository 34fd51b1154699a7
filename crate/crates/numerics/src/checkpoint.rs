//! `TLOC` parameter files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"TLOC"  u16 version
//! repeated until end of file:
//!     u32 name length, name bytes (UTF-8)
//!     u32 rank, rank × u32 dims
//!     prod(dims) × f32 values
//! ```

use crate::{NumericsError, Result};
use std::io::{Read, Write};

pub const MAGIC: &[u8; 4] = b"TLOC";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TlocEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

impl TlocEntry {
    pub fn new(name: impl Into<String>, dims: &[usize], values: Vec<f32>) -> Self {
        TlocEntry {
            name: name.into(),
            dims: dims.to_vec(),
            values,
        }
    }
}

pub fn write_tloc<W: Write>(mut w: W, entries: &[TlocEntry]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for e in entries {
        let n: usize = e.dims.iter().product();
        if n != e.values.len() {
            return Err(NumericsError::Checkpoint(format!(
                "entry {} has dims {:?} but {} values",
                e.name,
                e.dims,
                e.values.len()
            )));
        }
        w.write_all(&(e.name.len() as u32).to_le_bytes())?;
        w.write_all(e.name.as_bytes())?;
        w.write_all(&(e.dims.len() as u32).to_le_bytes())?;
        for &d in &e.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(4 * n);
        for v in &e.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tloc<R: Read>(mut r: R) -> Result<Vec<TlocEntry>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<Vec<TlocEntry>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(NumericsError::Checkpoint("missing TLOC magic".into()));
    }
    let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(NumericsError::Checkpoint(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let mut out = Vec::new();
    while cur.pos < bytes.len() {
        let len = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(len)?.to_vec())
            .map_err(|_| NumericsError::Checkpoint("entry name is not UTF-8".into()))?;
        let rank = cur.u32()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u32()? as usize);
        }
        let n: usize = dims.iter().product();
        let raw = cur.take(4 * n)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(TlocEntry { name, dims, values });
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(NumericsError::Checkpoint(format!(
                "truncated file: need {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
