//! Binary tensor container.
//!
//! Layout (all integers little-endian, no padding):
//!
//! ```text
//! magic   4 bytes  "MESP"
//! version u32      currently 1
//! dtype   u8       1 = f32
//! rank    u8       number of axes (1..=8)
//! axes    rank × u64
//! payload product(axes) × f32, row-major
//! ```
//!
//! Readers reject wrong magic/version/dtype, zero axes, truncated payloads,
//! and trailing bytes, naming the offending field.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{format_err, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"MESP";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 1;
const MAX_RANK: usize = 8;

/// Serializes a tensor into the container byte layout.
pub fn tensor_to_bytes(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(10 + t.rank() * 8 + t.numel() * 4);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(DTYPE_F32);
    out.push(t.rank() as u8);
    for &ax in t.shape() {
        out.extend_from_slice(&(ax as u64).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Reads one tensor from a byte stream, leaving the cursor just past its
/// payload (checkpoints store several tensors back to back).
pub fn read_tensor(r: &mut impl Read) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    read_exact_named(r, &mut magic, "magic")?;
    if magic != MAGIC {
        return format_err(format!("magic: expected {:?}, found {magic:?}", MAGIC));
    }
    let mut v4 = [0u8; 4];
    read_exact_named(r, &mut v4, "version")?;
    let version = u32::from_le_bytes(v4);
    if version != VERSION {
        return format_err(format!("version: expected {VERSION}, found {version}"));
    }
    let mut b1 = [0u8; 1];
    read_exact_named(r, &mut b1, "dtype")?;
    if b1[0] != DTYPE_F32 {
        return format_err(format!(
            "dtype: expected {DTYPE_F32} (f32), found {}",
            b1[0]
        ));
    }
    read_exact_named(r, &mut b1, "rank")?;
    let rank = b1[0] as usize;
    if rank == 0 || rank > MAX_RANK {
        return format_err(format!("rank: {rank} outside 1..={MAX_RANK}"));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut n: usize = 1;
    for i in 0..rank {
        let mut a8 = [0u8; 8];
        read_exact_named(r, &mut a8, "axes")?;
        let ax = u64::from_le_bytes(a8);
        if ax == 0 {
            return format_err(format!("axes: axis {i} has length 0"));
        }
        let ax: usize = ax
            .try_into()
            .map_err(|_| crate::error::Error::Format(format!("axes: axis {i} too large")))?;
        n = n
            .checked_mul(ax)
            .ok_or_else(|| crate::error::Error::Format("axes: element count overflows".into()))?;
        shape.push(ax);
    }
    let mut payload = vec![0u8; n * 4];
    read_exact_named(r, &mut payload, "payload")?;
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(&shape, data)
}

fn read_exact_named(r: &mut impl Read, buf: &mut [u8], field: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| crate::error::Error::Format(format!("{field}: truncated ({e})")))
}

/// Parses a complete container; trailing bytes are an error.
pub fn tensor_from_bytes(bytes: &[u8]) -> Result<Tensor> {
    let mut cursor = bytes;
    let t = read_tensor(&mut cursor)?;
    if !cursor.is_empty() {
        return format_err(format!(
            "payload: {} trailing bytes after tensor",
            cursor.len()
        ));
    }
    Ok(t)
}

/// Writes a tensor container file.
pub fn save_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&tensor_to_bytes(t))?;
    w.flush()?;
    Ok(())
}

/// Reads a tensor container file (the file must contain exactly one tensor).
pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    tensor_from_bytes(&bytes)
}
