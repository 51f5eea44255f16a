use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Leading bytes of every raw tensor record.
pub const TENSOR_MAGIC: &[u8; 8] = b"LUTENSR1";

/// Writes one tensor record: magic, `u32` rank, `u32` dims, then the data as
/// little-endian `f32`.
pub fn write_tensor_to<T: Real, W: Write>(tensor: &Tensor<T>, mut w: W) -> std::io::Result<()> {
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&(tensor.rank() as u32).to_le_bytes())?;
    for &d in tensor.shape() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in tensor.data() {
        w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor_from<T: Real, R: Read>(mut r: R) -> Result<Tensor<T>> {
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != TENSOR_MAGIC {
        return Err(Error::Format(format!("bad tensor magic {magic:?}")));
    }
    let rank = read_u32(&mut r, "rank")? as usize;
    if rank == 0 || rank > 16 {
        return Err(Error::Format(format!("implausible tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u32(&mut r, "dimension")? as usize);
    }
    let len = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n > 0 && n <= 1 << 31)
        .ok_or_else(|| Error::Format(format!("implausible tensor shape {shape:?}")))?;
    let mut bytes = vec![0u8; len * 4];
    read_exact(&mut r, &mut bytes, "tensor data")?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect();
    Tensor::new(shape, data)
}

pub fn write_tensor<T: Real>(tensor: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_tensor_to(tensor, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_tensor<T: Real>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tensor_from(BufReader::new(file))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Format(format!("truncated tensor record ({what}): {e}")))
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_layout() {
        let t = Tensor::<f32>::new([2, 1], vec![1.0, -2.0]).unwrap();
        let mut buf = Vec::new();
        write_tensor_to(&t, &mut buf).unwrap();
        let mut expected = b"LUTENSR1".to_vec();
        for v in [2u32, 2, 1] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(buf, expected);
        assert_eq!(read_tensor_from::<f32, _>(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn truncated_record_rejected() {
        let t = Tensor::<f32>::zeros([3, 3]);
        let mut buf = Vec::new();
        write_tensor_to(&t, &mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(matches!(read_tensor_from::<f32, _>(buf.as_slice()), Err(Error::Format(_))));
    }
}
