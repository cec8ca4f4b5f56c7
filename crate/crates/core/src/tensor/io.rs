//! Little-endian tensor serialization.
//!
//! ```text
//! "TNSR" | rank: u32 | extents: rank × u64 | payload: numel × f64
//! ```

use std::io::{Read, Write};

use super::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TNSR";

// Guards against allocating from corrupted headers.
const MAX_RANK: u32 = 8;
const MAX_NUMEL: u64 = 1 << 32;

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(t.rank() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(t.numel() * 8);
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub(crate) fn read_exact<R: Read, const N: usize>(r: &mut R, what: &'static str) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::format(what, format!("truncated input ({e})")))?;
    Ok(b)
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor> {
    let magic: [u8; 4] = read_exact(r, "tensor")?;
    if &magic != MAGIC {
        return Err(Error::format("tensor", format!("bad magic {magic:?}")));
    }
    let rank = u32::from_le_bytes(read_exact(r, "tensor")?);
    if rank > MAX_RANK {
        return Err(Error::format("tensor", format!("rank {rank} too large")));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    let mut numel: u64 = 1;
    for _ in 0..rank {
        let d = u64::from_le_bytes(read_exact(r, "tensor")?);
        numel = numel.saturating_mul(d);
        shape.push(d as usize);
    }
    if numel == 0 || numel > MAX_NUMEL {
        return Err(Error::format("tensor", format!("implausible shape {shape:?}")));
    }
    let mut buf = vec![0u8; numel as usize * 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::format("tensor", format!("truncated payload ({e})")))?;
    let data = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Tensor::new(&shape, data)
}
