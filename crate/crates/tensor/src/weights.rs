//! Versioned container of named f64 arrays.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   b"PEMW"
//! u32     format version
//! u32     array count
//! repeated:
//!   u32   name length, then UTF-8 name bytes
//!   u32   rank, then rank x u64 dimensions
//!   f64   values, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"PEMW";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn write_weights<W: Write>(mut w: W, arrays: &[(String, Tensor)]) -> Result<()> {
    w.write_all(WEIGHTS_MAGIC)?;
    w.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
    w.write_all(&u32::try_from(arrays.len()).map_err(|_| fmt("too many arrays"))?.to_le_bytes())?;
    for (name, t) in arrays {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for x in t.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_weights<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != WEIGHTS_MAGIC {
        return Err(fmt("bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != WEIGHTS_VERSION {
        return Err(fmt(&format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| fmt("array name is not UTF-8"))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            shape.push(usize::try_from(u64::from_le_bytes(b)).map_err(|_| fmt("dimension overflow"))?);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

pub fn save_weights(path: &Path, arrays: &[(String, Tensor)]) -> Result<()> {
    let mut buf = Vec::new();
    write_weights(&mut buf, arrays)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = std::fs::read(path)?;
    read_weights(bytes.as_slice())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn fmt(msg: &str) -> TensorError {
    TensorError::Format(msg.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let arrays = vec![
            ("att_ps.0.u1_key".to_string(), Tensor::new(vec![2, 3], vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300, -7.25, 3.0]).unwrap()),
            ("ffn.2.weight".to_string(), Tensor::scalar(std::f64::consts::PI)),
        ];
        let mut buf = Vec::new();
        write_weights(&mut buf, &arrays).unwrap();
        let back = read_weights(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        for ((n1, t1), (n2, t2)) in arrays.iter().zip(&back) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
            let b1: Vec<u64> = t1.data().iter().map(|x| x.to_bits()).collect();
            let b2: Vec<u64> = t2.data().iter().map(|x| x.to_bits()).collect();
            assert_eq!(b1, b2);
        }
    }

    #[test]
    fn rejects_bad_header() {
        assert!(matches!(read_weights(&b"XXXX\x01\0\0\0\0\0\0\0"[..]), Err(TensorError::Format(_))));
        assert!(matches!(read_weights(&b"PEMW\x09\0\0\0\0\0\0\0"[..]), Err(TensorError::Format(_))));
        assert!(matches!(read_weights(&b"PEMW\x01\0\0\0\x01\0\0\0"[..]), Err(TensorError::Io(_))));
    }
}
