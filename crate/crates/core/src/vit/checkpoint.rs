//! Checkpoints: a JSON config sidecar plus an `EGPC` parameter blob.
//!
//! Blob layout (all integers little-endian `u32`):
//!
//! ```text
//! b"EGPC" | version | count | count × { name_len | name (UTF-8) | ndim | dims… | values (f64 LE)… }
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::SiameseModel;
use crate::tensor::Tensor;

use super::config::ModelConfig;
use super::params::ParamStore;

pub const MAGIC: &[u8; 4] = b"EGPC";
pub const VERSION: u32 = 1;
pub const CONFIG_FILE: &str = "model.json";
pub const PARAMS_FILE: &str = "model.bin";

pub fn write_params(store: &ParamStore, mut w: impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (name, t) in store.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
        for d in t.shape() {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_params(mut r: impl Read, path: &Path) -> Result<ParamStore> {
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("missing EGPC magic"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| bad("parameter name is not UTF-8"))?;
        let ndim = read_u32(&mut r)? as usize;
        let shape = (0..ndim).map(|_| read_u32(&mut r).map(|d| d as usize)).collect::<std::io::Result<Vec<_>>>()?;
        let numel: usize = shape.iter().product();
        let mut raw = vec![0u8; numel * 8];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        store.add(name, Tensor::new(shape, data)?);
    }
    Ok(store)
}

pub fn config_path(dir: &Path) -> PathBuf {
    dir.join(CONFIG_FILE)
}

pub fn params_path(dir: &Path) -> PathBuf {
    dir.join(PARAMS_FILE)
}

/// Writes `model.json` and `model.bin` into `dir`, creating it if needed.
pub fn save_checkpoint(model: &SiameseModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut cfg = serde_json::to_string_pretty(model.config())?;
    cfg.push('\n');
    fs::write(config_path(dir), cfg)?;
    let mut buf = Vec::with_capacity(model.params.num_scalars() * 8 + 1024);
    write_params(&model.params, &mut buf)?;
    fs::write(params_path(dir), buf)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<SiameseModel> {
    let config: ModelConfig = serde_json::from_slice(&fs::read(config_path(dir))?)?;
    let path = params_path(dir);
    let bytes = fs::read(&path)?;
    let store = read_params(bytes.as_slice(), &path)?;
    SiameseModel::from_params(&config, store)
}
