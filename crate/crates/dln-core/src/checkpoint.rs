//! Binary checkpoint format for parameter stores.
//!
//! Layout: magic `DLN1`, format version (u32 LE), entry count (u32 LE), then
//! per entry: name length (u32 LE) + UTF-8 name, rank (u32 LE), dims
//! (u32 LE each), values as little-endian IEEE-754 binary32 in row-major
//! order, and one trailing flag byte (1 = trainable, 0 = frozen).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{DlnError, Result};
use crate::store::ParamStore;
use crate::tensor::{Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"DLN1";
pub const VERSION: u32 = 1;

pub fn save_store<T: Scalar>(store: &ParamStore<T>, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_store(store, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_store<T: Scalar, W: Write>(store: &ParamStore<T>, w: &mut W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (name, param) in store.iter() {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        let shape = param.tensor.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &dim in shape {
            w.write_all(&(dim as u32).to_le_bytes())?;
        }
        for v in param.tensor.values() {
            w.write_all(&v.as_f32().to_le_bytes())?;
        }
        w.write_all(&[u8::from(param.trainable)])?;
    }
    Ok(())
}

pub fn load_store<T: Scalar>(path: &Path) -> Result<ParamStore<T>> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    read_store(&mut r, &path.display().to_string())
}

pub fn read_store<T: Scalar, R: Read>(r: &mut R, origin: &str) -> Result<ParamStore<T>> {
    let fail = |msg: String| DlnError::Format {
        path: origin.to_string(),
        line: 0,
        msg,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(fail(format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(fail(format!("unsupported version {version}")));
    }
    let count = read_u32(r)? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u32(r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| fail(format!("invalid UTF-8 name: {e}")))?;
        let rank = read_u32(r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut values = Vec::with_capacity(numel);
        let mut buf = [0u8; 4];
        for _ in 0..numel {
            r.read_exact(&mut buf)?;
            values.push(T::from_f32(f32::from_le_bytes(buf)));
        }
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let tensor = Tensor::new(shape, values)
            .map_err(|e| fail(format!("entry `{name}`: {e}")))?;
        store.register(&name, tensor, flag[0] != 0)?;
    }
    Ok(store)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::uniform_init;

    fn sample_store() -> ParamStore<f32> {
        let mut store = ParamStore::new();
        store
            .register("lstm.i.ie", uniform_init(vec![3, 2], 0.5, 1).unwrap(), true)
            .unwrap();
        store
            .register("ln.source.i.g", Tensor::filled(vec![3], 1.0), true)
            .unwrap();
        store
            .register("frozen.thing", uniform_init(vec![4], 0.5, 2).unwrap(), false)
            .unwrap();
        store
    }

    #[test]
    fn roundtrip_preserves_everything() {
        let store = sample_store();
        let mut bytes = Vec::new();
        write_store(&store, &mut bytes).unwrap();
        let loaded: ParamStore<f32> = read_store(&mut bytes.as_slice(), "mem").unwrap();
        assert_eq!(loaded.len(), store.len());
        for ((n1, p1), (n2, p2)) in store.iter().zip(loaded.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(p1.trainable, p2.trainable);
            assert_eq!(p1.tensor.shape(), p2.tensor.shape());
            assert_eq!(p1.tensor.values(), p2.tensor.values());
        }
    }

    #[test]
    fn header_layout_is_fixed() {
        let store = sample_store();
        let mut bytes = Vec::new();
        write_store(&store, &mut bytes).unwrap();
        assert_eq!(&bytes[0..4], b"DLN1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        // first entry name
        let name_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        assert_eq!(&bytes[16..16 + name_len], b"lstm.i.ie");
    }

    #[test]
    fn serialization_is_deterministic() {
        let store = sample_store();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_store(&store, &mut a).unwrap();
        write_store(&store, &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let bytes = b"NOPE\x01\x00\x00\x00\x00\x00\x00\x00".to_vec();
        let res: Result<ParamStore<f32>> = read_store(&mut bytes.as_slice(), "mem");
        assert!(matches!(res, Err(DlnError::Format { .. })));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let store = sample_store();
        save_store(&store, &path).unwrap();
        let loaded: ParamStore<f32> = load_store(&path).unwrap();
        assert_eq!(loaded.flat_values(), store.flat_values());
    }
}
