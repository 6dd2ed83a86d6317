//! Parameter container: a versioned binary file mapping parameter name
//! to shape and raw little-endian f64 values.
//!
//! Layout: magic "PDNF1\n", then u32 entry count, then per entry a
//! u32 name length + UTF-8 name, u32 rank, u64 dims, f64 values. All
//! integers little-endian.

use super::Tensor;
use crate::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Version string carried in the file header.
pub const CHECKPOINT_VERSION: &str = "PDNF1";

const MAGIC: &[u8; 6] = b"PDNF1\n";

pub fn save_checkpoint(path: &Path, entries: &[(String, Tensor)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, tensor) in entries {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u32).to_le_bytes())?;
        w.write_all(name_bytes)?;
        w.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
        for &d in tensor.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let file = File::open(path).map_err(|e| Error::Format {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let mut r = BufReader::new(file);
    let bad = |msg: &str| Error::Format {
        path: path.display().to_string(),
        msg: msg.to_string(),
    };
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic, not a PDNF1 checkpoint"));
    }
    let count = read_u32(&mut r).map_err(|_| bad("truncated entry count"))? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r).map_err(|_| bad("truncated name length"))? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(|_| bad("truncated name"))?;
        let name = String::from_utf8(name_bytes).map_err(|_| bad("name is not UTF-8"))?;
        let rank = read_u32(&mut r).map_err(|_| bad("truncated rank"))? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| bad("truncated shape"))?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| bad("truncated values"))?;
            data.push(f64::from_le_bytes(b));
        }
        entries.push((name, Tensor::new(shape, data)?));
    }
    Ok(entries)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
