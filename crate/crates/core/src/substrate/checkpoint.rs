//! Named-tensor checkpoint archive: a JSON manifest (name, shape, dtype, byte
//! offset) followed by raw little-endian values. Round-trips are bit-exact.

use super::{NdArray, Real};
use crate::{DriveError, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

pub const CKPT_VERSION: &str = "drive-ckpt-v1";
const MAGIC: &[u8; 4] = b"DRVC";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: String,
    dtype: String,
    tensors: Vec<TensorEntry>,
    scalars: BTreeMap<String, f64>,
    counters: BTreeMap<String, u64>,
    meta: BTreeMap<String, String>,
}

/// In-memory checkpoint contents. Tensor order is preserved on disk, so
/// save -> load -> save reproduces identical bytes.
#[derive(Clone, Debug, Default)]
pub struct Checkpoint<R> {
    pub tensors: Vec<(String, NdArray<R>)>,
    pub scalars: BTreeMap<String, f64>,
    pub counters: BTreeMap<String, u64>,
    pub meta: BTreeMap<String, String>,
}

impl<R: Real> Checkpoint<R> {
    pub fn tensor(&self, name: &str) -> Result<&NdArray<R>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| DriveError::config(format!("checkpoint missing tensor '{name}'")))
    }
}

/// Write atomically: temp file in the target directory, then rename.
pub fn save_checkpoint<R: Real>(path: &Path, ckpt: &Checkpoint<R>) -> Result<()> {
    let mut offset = 0u64;
    let mut entries = Vec::with_capacity(ckpt.tensors.len());
    for (name, t) in &ckpt.tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            dtype: R::DTYPE.to_string(),
            offset,
        });
        offset += (t.len() * R::BYTE_WIDTH) as u64;
    }
    let manifest = Manifest {
        version: CKPT_VERSION.to_string(),
        dtype: R::DTYPE.to_string(),
        tensors: entries,
        scalars: ckpt.scalars.clone(),
        counters: ckpt.counters.clone(),
        meta: ckpt.meta.clone(),
    };
    let mjson = serde_json::to_vec(&manifest)
        .map_err(|e| DriveError::config(format!("manifest encode: {e}")))?;

    let mut buf = Vec::with_capacity(16 + mjson.len() + offset as usize);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(mjson.len() as u32).to_le_bytes());
    buf.extend_from_slice(&mjson);
    for (_, t) in &ckpt.tensors {
        for &v in t.data() {
            v.write_le(&mut buf);
        }
    }
    write_atomic(path, &buf)
}

pub fn load_checkpoint<R: Real>(path: &Path) -> Result<Checkpoint<R>> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(DriveError::format(0, "bad checkpoint magic"));
    }
    let mlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + mlen {
        return Err(DriveError::format(bytes.len() as u64, "truncated manifest"));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[8..8 + mlen])
        .map_err(|e| DriveError::format(8, format!("manifest decode: {e}")))?;
    if manifest.version != CKPT_VERSION {
        return Err(DriveError::UnsupportedVersion(manifest.version));
    }
    if manifest.dtype != R::DTYPE {
        return Err(DriveError::config(format!(
            "checkpoint dtype {} does not match requested precision {}",
            manifest.dtype,
            R::DTYPE
        )));
    }
    let data = &bytes[8 + mlen..];
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        let n: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start + n * R::BYTE_WIDTH;
        if end > data.len() {
            return Err(DriveError::format(
                (8 + mlen + data.len()) as u64,
                format!("truncated tensor data for '{}'", e.name),
            ));
        }
        let mut vals = Vec::with_capacity(n);
        for i in 0..n {
            vals.push(R::read_le(&data[start + i * R::BYTE_WIDTH..]));
        }
        tensors.push((e.name.clone(), NdArray::from_vec(&e.shape, vals)?));
    }
    Ok(Checkpoint {
        tensors,
        scalars: manifest.scalars,
        counters: manifest.counters,
        meta: manifest.meta,
    })
}

/// Shared atomic-write helper (temp file + rename in the same directory).
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let mut ck = Checkpoint::<f32>::default();
        ck.tensors.push((
            "w".into(),
            NdArray::from_fn(&[3, 2], |i| ((i as f32) * 0.37).sin()),
        ));
        ck.tensors.push(("b".into(), NdArray::from_fn(&[2], |i| i as f32 + 0.125)));
        ck.scalars.insert("alpha".into(), 0.2);
        ck.counters.insert("adam.w".into(), 17);
        ck.meta.insert("config_hash".into(), "deadbeef".into());
        save_checkpoint(&path, &ck).unwrap();
        let back = load_checkpoint::<f32>(&path).unwrap();
        assert_eq!(back.tensors, ck.tensors);
        assert_eq!(back.scalars, ck.scalars);
        assert_eq!(back.counters, ck.counters);
        assert_eq!(back.meta, ck.meta);

        // save again; bytes must match exactly
        let path2 = dir.path().join("b.ckpt");
        save_checkpoint(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn wrong_dtype_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        let mut ck = Checkpoint::<f32>::default();
        ck.tensors.push(("w".into(), NdArray::zeros(&[2])));
        save_checkpoint(&path, &ck).unwrap();
        assert!(load_checkpoint::<f64>(&path).is_err());
    }

    #[test]
    fn corrupt_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOPE....").unwrap();
        match load_checkpoint::<f32>(&path) {
            Err(DriveError::Format { .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
