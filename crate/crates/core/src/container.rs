//! DGT1 tensor container: the on-disk format for datasets, spectrograms and
//! model parameters.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset  size        field
//! 0       4           magic  b"DGT1"
//! 4       2           version (u16) = 1
//! 6       1           dtype code (u8): 0 = f32, 1 = f64
//! 7       1           rank (u8)
//! 8       rank * 8    extents (u64 each)
//! ...     numel * sz  payload, row-major
//! ```
//!
//! Round trips are bit-exact: the payload is raw IEEE-754 bits.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Dtype, Element, Tensor};

const MAGIC: &[u8; 4] = b"DGT1";
const VERSION: u16 = 1;

/// Serializes a tensor to the DGT1 byte layout.
pub fn to_bytes<T: Element>(t: &Tensor<T>) -> Vec<u8> {
    let dims = t.dims();
    let data = t.data();
    let mut out = Vec::with_capacity(8 + dims.len() * 8 + data.len() * T::DTYPE.size_bytes());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::DTYPE.code());
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match T::DTYPE {
        Dtype::F32 => {
            for &v in data.iter() {
                out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in data.iter() {
                out.extend_from_slice(&v.to_f64().to_le_bytes());
            }
        }
    }
    out
}

/// Parses a DGT1 byte buffer into a tensor of the requested element type.
/// The stored dtype must match `T` exactly; no silent casting.
pub fn from_bytes<T: Element>(bytes: &[u8]) -> Result<Tensor<T>> {
    let bad = |msg: String| Error::BadContainer(msg);
    if bytes.len() < 8 {
        return Err(bad(format!("file too short: {} bytes", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad(format!("bad magic {:?}", &bytes[0..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let dtype = Dtype::from_code(bytes[6]).ok_or_else(|| bad(format!("bad dtype code {}", bytes[6])))?;
    if dtype != T::DTYPE {
        return Err(bad(format!("dtype is {:?}, requested {:?}", dtype, T::DTYPE)));
    }
    let rank = bytes[7] as usize;
    let header = 8 + rank * 8;
    if bytes.len() < header {
        return Err(bad("truncated extents".into()));
    }
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        let o = 8 + i * 8;
        let d = u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        dims.push(usize::try_from(d).map_err(|_| bad(format!("extent {d} overflows usize")))?);
    }
    let numel: usize = dims.iter().product();
    let esz = dtype.size_bytes();
    let need = header + numel * esz;
    if bytes.len() != need {
        return Err(bad(format!("payload size {} != expected {}", bytes.len() - header, numel * esz)));
    }
    let mut data = Vec::with_capacity(numel);
    match dtype {
        Dtype::F32 => {
            for i in 0..numel {
                let o = header + i * 4;
                let v = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
                data.push(T::from_f64(v as f64));
            }
        }
        Dtype::F64 => {
            for i in 0..numel {
                let o = header + i * 8;
                let v = f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
                data.push(T::from_f64(v));
            }
        }
    }
    Tensor::from_vec(&dims, data)
}

pub fn write_tensor<T: Element>(path: &Path, t: &Tensor<T>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&to_bytes(t))?;
    Ok(())
}

pub fn read_tensor<T: Element>(path: &Path) -> Result<Tensor<T>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    from_bytes(&bytes).map_err(|e| match e {
        Error::BadContainer(msg) => Error::BadContainer(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn header_layout_is_pinned() {
        let t = Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 6]).unwrap();
        let b = to_bytes(&t);
        assert_eq!(&b[0..4], b"DGT1");
        assert_eq!(u16::from_le_bytes([b[4], b[5]]), 1);
        assert_eq!(b[6], 0, "f32 dtype code");
        assert_eq!(b[7], 2, "rank");
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(b[16..24].try_into().unwrap()), 3);
        assert_eq!(b.len(), 24 + 6 * 4);
    }

    #[test]
    fn f32_roundtrip_bit_exact() {
        let vals = vec![0.0f32, -0.0, 1.5, -3.25e-7, 1.0e20, f32::MIN_POSITIVE];
        let t = Tensor::from_vec(&[6], vals.clone()).unwrap();
        let back: Tensor<f32> = from_bytes(&to_bytes(&t)).unwrap();
        for (a, b) in vals.iter().zip(back.to_vec()) {
            assert_eq!(a.to_bits(), b.to_bits(), "bit-exact round trip");
        }
    }

    #[test]
    fn f64_roundtrip_bit_exact() {
        let vals = vec![0.1f64, std::f64::consts::PI, -1.0 / 3.0, 2.2250738585072014e-308];
        let t = Tensor::from_vec(&[2, 2], vals.clone()).unwrap();
        let back: Tensor<f64> = from_bytes(&to_bytes(&t)).unwrap();
        for (a, b) in vals.iter().zip(back.to_vec()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rank0_roundtrip() {
        let t = Tensor::<f64>::scalar(42.5);
        let back: Tensor<f64> = from_bytes(&to_bytes(&t)).unwrap();
        assert_eq!(back.rank(), 0);
        assert_eq!(back.item().unwrap(), 42.5);
    }

    #[test]
    fn rejects_corruption() {
        let t = Tensor::<f32>::from_vec(&[3], vec![1., 2., 3.]).unwrap();
        let good = to_bytes(&t);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(from_bytes::<f32>(&bad_magic).is_err());

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(from_bytes::<f32>(&bad_version).is_err());

        let mut bad_dtype = good.clone();
        bad_dtype[6] = 7;
        assert!(from_bytes::<f32>(&bad_dtype).is_err());

        let truncated = &good[..good.len() - 1];
        assert!(from_bytes::<f32>(truncated).is_err());

        // wrong element type requested
        assert!(from_bytes::<f64>(&good).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.dgt");
        let t = Tensor::<f32>::from_vec(&[2, 2, 2], (0..8).map(|i| i as f32 * 0.5).collect()).unwrap();
        write_tensor(&path, &t).unwrap();
        let back: Tensor<f32> = read_tensor(&path).unwrap();
        assert_eq!(back.dims(), t.dims());
        assert_eq!(back.to_vec(), t.to_vec());
    }
}
