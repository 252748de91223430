//! `DCW1` parameter checkpoints.
//!
//! Layout: the magic `DCW1\n`, then one record per parameter in declaration
//! order until end of file. A record is a `u32` name length, the UTF-8 name,
//! a `u32` rank, `rank` `u32` extents and the little-endian `f32` payload.
//! All integers are little-endian.

use std::io::{Read, Write};

use super::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"DCW1\n";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor<f32>,
}

fn io_err(e: std::io::Error) -> Error {
    Error::Format {
        kind: "DCW1",
        detail: e.to_string(),
    }
}

pub fn write_checkpoint<W: Write>(mut out: W, params: &[NamedTensor]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    for p in params {
        let name = p.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        buf.extend_from_slice(&(p.tensor.rank() as u32).to_le_bytes());
        for &e in p.tensor.shape() {
            buf.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for v in p.tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(io_err)
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Vec<NamedTensor>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(io_err)?;
    let bad = |detail: &str| Error::Format {
        kind: "DCW1",
        detail: detail.to_string(),
    };
    let rest = bytes
        .strip_prefix(CHECKPOINT_MAGIC.as_slice())
        .ok_or_else(|| bad("missing DCW1 magic"))?;
    let mut cursor = Cursor { rest };
    let mut params = Vec::new();
    while !cursor.rest.is_empty() {
        let name_len = cursor.u32()? as usize;
        let name = std::str::from_utf8(cursor.take(name_len)?)
            .map_err(|_| bad("parameter name is not UTF-8"))?
            .to_string();
        let rank = cursor.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cursor.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let data = cursor
            .take(numel * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push(NamedTensor {
            name,
            tensor: Tensor::new(shape, data)?,
        });
    }
    Ok(params)
}

struct Cursor<'a> {
    rest: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.rest.len() < n {
            return Err(Error::Format {
                kind: "DCW1",
                detail: "truncated record".into(),
            });
        }
        let (head, tail) = self.rest.split_at(n);
        self.rest = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
