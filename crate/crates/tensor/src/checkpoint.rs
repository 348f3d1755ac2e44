//! Binary parameter checkpoints.
//!
//! Layout (little-endian): magic `MFW1`, `u32` parameter count, then per
//! parameter a `u16` name length, the UTF-8 name, a `u8` rank, `rank` `u32`
//! dims and the raw `f32` payload.

use std::io::{Read, Write};

use crate::error::{Result, TensorError};
use crate::param::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MFW1";

pub fn write_checkpoint<W: Write>(store: &ParamStore, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(store.len() as u32).to_le_bytes())?;
    for p in store.iter() {
        let name = p.name.as_bytes();
        let len = u16::try_from(name.len())
            .map_err(|_| TensorError::Format(format!("parameter name `{}` too long", p.name)))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(name)?;
        let shape = p.tensor.shape();
        out.write_all(&[shape.len() as u8])?;
        for &d in shape {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut payload = Vec::with_capacity(p.tensor.numel() * 4);
        for v in p.tensor.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&payload)?;
    }
    out.flush()?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => TensorError::Format(format!("truncated checkpoint while reading {what}")),
        _ => TensorError::Io(e),
    })
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(TensorError::Format(format!("bad checkpoint magic {magic:?}")));
    }
    let mut b4 = [0u8; 4];
    read_exact(&mut r, &mut b4, "parameter count")?;
    let count = u32::from_le_bytes(b4) as usize;
    let mut entries = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let mut b2 = [0u8; 2];
        read_exact(&mut r, &mut b2, "name length")?;
        let mut name = vec![0u8; u16::from_le_bytes(b2) as usize];
        read_exact(&mut r, &mut name, "name")?;
        let name = String::from_utf8(name).map_err(|_| TensorError::Format("parameter name is not UTF-8".into()))?;
        let mut rank = [0u8; 1];
        read_exact(&mut r, &mut rank, "rank")?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            read_exact(&mut r, &mut b4, "dims")?;
            shape.push(u32::from_le_bytes(b4) as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n < (1 << 31))
            .ok_or_else(|| TensorError::Format(format!("dims {shape:?} of `{name}` overflow")))?;
        let mut payload = vec![0u8; numel * 4];
        read_exact(&mut r, &mut payload, "payload")?;
        let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let tensor = Tensor::new(&shape, data).map_err(|e| TensorError::Format(e.to_string()))?;
        entries.push((name, tensor));
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let mut s = ParamStore::new();
        s.add("a", Tensor::new(&[2], vec![1.5, -2.0]).unwrap(), true).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&s, &mut bytes).unwrap();
        // magic + count + (len + "a" + rank + dim) + payload
        assert_eq!(bytes.len(), 4 + 4 + 2 + 1 + 1 + 4 + 8);
        let back = read_checkpoint(&bytes[..]).unwrap();
        assert_eq!(back[0].0, "a");
        assert_eq!(back[0].1.data(), &[1.5, -2.0]);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(matches!(read_checkpoint(&b"MFX1\0\0\0\0"[..]), Err(TensorError::Format(_))));
        let mut s = ParamStore::new();
        s.add("a", Tensor::zeros(&[3]), true).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&s, &mut bytes).unwrap();
        bytes.pop();
        assert!(matches!(read_checkpoint(&bytes[..]), Err(TensorError::Format(_))));
    }
}
