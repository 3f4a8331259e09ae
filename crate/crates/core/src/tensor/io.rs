//! Binary tensor files.
//!
//! Layout (little-endian): magic `STN1`, one `u8` order, `order` × `u64`
//! dimensions, then the row-major payload as `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::DenseTensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"STN1";

pub fn write_tensor<T: Scalar, W: Write>(t: &DenseTensor<T>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[t.order() as u8])?;
    for &d in t.dims() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn encode(t: &DenseTensor<f64>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(5 + 8 * (t.order() + t.len()));
    write_tensor(t, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated {what}")),
        _ => Error::Io(e),
    })
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<DenseTensor<f64>> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(&mut r, &mut magic, "header")?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut order = [0u8; 1];
    read_exact_or_truncated(&mut r, &mut order, "header")?;
    let mut dims = Vec::with_capacity(order[0] as usize);
    for _ in 0..order[0] {
        let mut b = [0u8; 8];
        read_exact_or_truncated(&mut r, &mut b, "dimensions")?;
        let d = u64::from_le_bytes(b);
        dims.push(usize::try_from(d).map_err(|_| Error::Format(format!("dimension {d} too large")))?);
    }
    let total: u128 = dims.iter().map(|&d| d as u128).product();
    if total > super::DEFAULT_ELEMENT_BUDGET as u128 {
        return Err(Error::SizeLimit {
            requested: total,
            budget: super::DEFAULT_ELEMENT_BUDGET,
        });
    }
    let mut data = Vec::with_capacity(total as usize);
    let mut b = [0u8; 8];
    for _ in 0..total {
        read_exact_or_truncated(&mut r, &mut b, "payload")?;
        data.push(f64::from_le_bytes(b));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after payload".into()));
    }
    DenseTensor::new(dims, data)
}

pub fn decode(bytes: &[u8]) -> Result<DenseTensor<f64>> {
    read_tensor(bytes)
}

pub fn save(path: impl AsRef<Path>, t: &DenseTensor<f64>) -> Result<()> {
    write_tensor(t, BufWriter::new(File::create(path)?))
}

pub fn load(path: impl AsRef<Path>) -> Result<DenseTensor<f64>> {
    read_tensor(BufReader::new(File::open(path)?))
}
