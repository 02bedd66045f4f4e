//! Flat binary parameter container.
//!
//! Layout: magic `HIFT`, version `u32`, count `u32`, then for each parameter
//! a `u16` name length, the UTF-8 name, a `u8` rank, `u32` extents and the
//! `f64` values. All integers and floats are little-endian.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{HiftError, Result};
use crate::param::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"HIFT";
pub const VERSION: u32 = 1;

pub fn write_params<W: Write>(store: &ParamStore, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let count = u32::try_from(store.len()).map_err(|_| HiftError::Format("too many parameters".into()))?;
    w.write_all(&count.to_le_bytes())?;
    for p in store.iter() {
        let name = p.name.as_bytes();
        let len =
            u16::try_from(name.len()).map_err(|_| HiftError::Format(format!("parameter name too long: {}", p.name)))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name)?;
        let shape = p.value.shape();
        let rank = u8::try_from(shape.len()).map_err(|_| HiftError::Format("rank exceeds 255".into()))?;
        w.write_all(&[rank])?;
        for &d in shape {
            let d = u32::try_from(d).map_err(|_| HiftError::Format("extent exceeds u32".into()))?;
            w.write_all(&d.to_le_bytes())?;
        }
        for v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| HiftError::Format(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

pub fn read_params<R: Read>(mut r: R) -> Result<ParamStore> {
    if &read_array::<4, _>(&mut r)? != MAGIC {
        return Err(HiftError::Format("not a checkpoint (bad magic)".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(HiftError::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = u32::from_le_bytes(read_array(&mut r)?);
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(read_array(&mut r)?) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)
            .map_err(|e| HiftError::Format(format!("truncated checkpoint: {e}")))?;
        let name = String::from_utf8(name).map_err(|e| HiftError::Format(format!("parameter name: {e}")))?;
        let rank = read_array::<1, _>(&mut r)?[0] as usize;
        let shape = (0..rank)
            .map(|_| Ok(u32::from_le_bytes(read_array(&mut r)?) as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| Ok(f64::from_le_bytes(read_array(&mut r)?)))
            .collect::<Result<Vec<_>>>()?;
        if store.id(&name).is_some() {
            return Err(HiftError::Format(format!("duplicate parameter {name}")));
        }
        store.add(name, Tensor::new(&shape, data)?);
    }
    Ok(store)
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    write_params(store, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load(path: &Path) -> Result<ParamStore> {
    read_params(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamStore {
        let mut s = ParamStore::new();
        s.add(
            "a.weight",
            Tensor::new(&[2, 3], vec![1.0, -2.5, 3.0, 0.125, f64::MIN_POSITIVE, 7.0]).unwrap(),
        );
        s.add("γ", Tensor::scalar(0.5));
        s
    }

    #[test]
    fn round_trip_is_exact() {
        let s = sample();
        let mut buf = Vec::new();
        write_params(&s, &mut buf).unwrap();
        let back = read_params(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in s.iter().zip(back.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_params(&sample(), &mut buf).unwrap();
        assert_eq!(&buf[..4], b"HIFT");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 2);
        assert_eq!(u16::from_le_bytes(buf[12..14].try_into().unwrap()), 8);
        assert_eq!(&buf[14..22], b"a.weight");
        assert_eq!(buf[22], 2);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(read_params(&b"NOPE\x01\0\0\0\0\0\0\0"[..]).is_err());
        let mut buf = Vec::new();
        write_params(&sample(), &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_params(buf.as_slice()).is_err());
    }
}
