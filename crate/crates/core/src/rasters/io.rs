//! MFR1 raster files: magic, u8 dtype (0 = f32, 1 = u8), u8 rank,
//! little-endian u32 dims, raw little-endian payload.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{BinaryMask, LabelMap, MultiChannelRaster};

pub const MAGIC: &[u8; 4] = b"MFR1";
pub const DTYPE_F32: u8 = 0;
pub const DTYPE_U8: u8 = 1;
/// Sanity bound on element count, well above anything this tool produces.
const MAX_ELEMENTS: u64 = 1 << 34;

#[derive(Debug, Clone, PartialEq)]
pub enum RasterPayload {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRaster {
    pub dims: Vec<usize>,
    pub payload: RasterPayload,
}

pub fn encode(dims: &[usize], payload: &RasterPayload) -> Vec<u8> {
    let (dtype, width) = match payload {
        RasterPayload::F32(_) => (DTYPE_F32, 4),
        RasterPayload::U8(_) => (DTYPE_U8, 1),
    };
    let n: usize = dims.iter().product();
    let mut out = Vec::with_capacity(6 + 4 * dims.len() + width * n);
    out.extend_from_slice(MAGIC);
    out.push(dtype);
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match payload {
        RasterPayload::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        RasterPayload::U8(v) => out.extend_from_slice(v),
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<RawRaster> {
    if bytes.len() < 6 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not an MFR1 raster (bad magic)".into()));
    }
    let dtype = bytes[4];
    let rank = bytes[5] as usize;
    let header = 6 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::Format("truncated raster header".into()));
    }
    let mut dims = Vec::with_capacity(rank);
    let mut count: u64 = 1;
    for i in 0..rank {
        let d = u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().unwrap());
        count = count
            .checked_mul(d as u64)
            .filter(|&c| c <= MAX_ELEMENTS)
            .ok_or_else(|| Error::Format("raster dimensions overflow".into()))?;
        dims.push(d as usize);
    }
    let width = match dtype {
        DTYPE_F32 => 4,
        DTYPE_U8 => 1,
        other => return Err(Error::Format(format!("unknown raster dtype {other}"))),
    };
    let body = &bytes[header..];
    let expected = count * width;
    if (body.len() as u64) < expected {
        return Err(Error::Format(format!("truncated raster payload: {} of {expected} bytes", body.len())));
    }
    if body.len() as u64 > expected {
        return Err(Error::Format("trailing bytes after raster payload".into()));
    }
    let payload = if dtype == DTYPE_F32 {
        RasterPayload::F32(body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    } else {
        RasterPayload::U8(body.to_vec())
    };
    Ok(RawRaster { dims, payload })
}

fn read_file(path: &Path) -> Result<RawRaster> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_raster(raster: &MultiChannelRaster, path: &Path) -> Result<()> {
    let dims = [raster.channels, raster.height, raster.width];
    write_file(path, &encode(&dims, &RasterPayload::F32(raster.data.clone())))
}

/// Reads an f32 raster of rank 3 (or rank 2, treated as one channel).
pub fn read_raster(path: &Path) -> Result<MultiChannelRaster> {
    let raw = read_file(path)?;
    let data = match raw.payload {
        RasterPayload::F32(v) => v,
        RasterPayload::U8(_) => return Err(Error::Format(format!("{}: expected f32 raster", path.display()))),
    };
    let (c, h, w) = match raw.dims[..] {
        [c, h, w] => (c, h, w),
        [h, w] => (1, h, w),
        _ => return Err(Error::Format(format!("{}: raster rank {}", path.display(), raw.dims.len()))),
    };
    MultiChannelRaster::new(c, h, w, data).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_labels(labels: &LabelMap, path: &Path) -> Result<()> {
    write_file(path, &encode(&[labels.height, labels.width], &RasterPayload::U8(labels.values.clone())))
}

fn read_u8_grid(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let raw = read_file(path)?;
    match (&raw.dims[..], raw.payload) {
        (&[h, w], RasterPayload::U8(v)) if h > 0 && w > 0 => Ok((h, w, v)),
        _ => Err(Error::Format(format!("{}: expected a non-empty rank-2 u8 raster", path.display()))),
    }
}

pub fn read_labels(path: &Path) -> Result<LabelMap> {
    let (h, w, values) = read_u8_grid(path)?;
    Ok(LabelMap { height: h, width: w, values })
}

/// Stores a map layer as a u8 grid of zeros and ones.
pub fn write_mask(mask: &BinaryMask, path: &Path) -> Result<()> {
    let v = mask.bits.iter().map(|&b| b as u8).collect();
    write_file(path, &encode(&[mask.height, mask.width], &RasterPayload::U8(v)))
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let (h, w, v) = read_u8_grid(path)?;
    if v.iter().any(|&b| b > 1) {
        return Err(Error::Format(format!("{}: map layer values must be 0 or 1", path.display())));
    }
    Ok(BinaryMask { height: h, width: w, bits: v.into_iter().map(|b| b == 1).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_raster_size() {
        let bytes = encode(&[1, 1, 1], &RasterPayload::F32(vec![0.0]));
        assert_eq!(bytes.len(), 4 + 1 + 1 + 3 * 4 + 4);
    }

    #[test]
    fn decode_errors() {
        let good = encode(&[2, 3], &RasterPayload::U8(vec![1; 6]));
        assert!(decode(&good).is_ok());
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Format(_))));
        assert!(matches!(decode(&good[..good.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(decode(&good[..8]), Err(Error::Format(_))));
        let mut huge = b"MFR1\x01\x03".to_vec();
        for d in [u32::MAX, u32::MAX, 4] {
            huge.extend_from_slice(&d.to_le_bytes());
        }
        assert!(matches!(decode(&huge), Err(Error::Format(_))));
        let mut dtype = good.clone();
        dtype[4] = 9;
        assert!(matches!(decode(&dtype), Err(Error::Format(_))));
    }
}
