//! Named-array checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   8 bytes  "RVDCKPT1"
//! count   u32      number of arrays
//! per array:
//!   name_len u16, name (UTF-8)
//!   ndim     u8,  dims u64 × ndim
//!   data     f32 × ∏dims
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{structural, Result};

pub const MAGIC: &[u8; 8] = b"RVDCKPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn write_to<W: Write>(mut w: W, arrays: &[NamedArray]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(arrays.len() as u32).to_le_bytes())?;
    for a in arrays {
        if a.shape.iter().product::<usize>() != a.data.len() {
            return Err(structural!("array {} has shape {:?} but {} values", a.name, a.shape, a.data.len()));
        }
        let name = a.name.as_bytes();
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[a.shape.len() as u8])?;
        for &d in &a.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &x in &a.data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_from<R: Read>(mut r: R) -> Result<Vec<NamedArray>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(structural!("not a checkpoint file (bad magic)"));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b)?;
    let count = u32::from_le_bytes(u32b) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut u16b = [0u8; 2];
        r.read_exact(&mut u16b)?;
        let mut name = vec![0u8; u16::from_le_bytes(u16b) as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| structural!("array name is not UTF-8"))?;
        let mut ndim = [0u8; 1];
        r.read_exact(&mut ndim)?;
        let mut shape = Vec::with_capacity(ndim[0] as usize);
        for _ in 0..ndim[0] {
            let mut u64b = [0u8; 8];
            r.read_exact(&mut u64b)?;
            shape.push(u64::from_le_bytes(u64b) as usize);
        }
        let len: usize = shape.iter().product();
        let mut bytes = vec![0u8; len * 4];
        r.read_exact(&mut bytes)?;
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        out.push(NamedArray { name, shape, data });
    }
    Ok(out)
}

pub fn save(path: impl AsRef<Path>, arrays: &[NamedArray]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_to(&mut w, arrays)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<NamedArray>> {
    let file = std::fs::File::open(path)?;
    read_from(std::io::BufReader::new(file))
}
