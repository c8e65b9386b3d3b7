//! `FSCK` checkpoint container.
//!
//! Layout (little-endian): magic `FSCK`, version u16, config JSON length u32
//! followed by the UTF-8 JSON of the [`TrainConfig`], array count u32, then
//! per array: name length u32, name bytes, ndim u32, ndim x u32 dims and the
//! f32 values in row-major order.

use std::fs;
use std::path::Path;

use crate::autograd::Matrix;
use crate::error::{Error, Result};
use crate::harness::config::TrainConfig;
use crate::model::FusionModel;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FSCK";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn encode_checkpoint(config: &TrainConfig, model: &FusionModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let json = serde_json::to_vec(config)?;
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for (_, name, m) in model.params().iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.data() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.bytes.len() as u64, format!("truncated while reading {what}")));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

/// Rebuilds the model described by the embedded config and loads every
/// parameter array into it.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(TrainConfig, FusionModel)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic").ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(Error::format(0, "bad magic, expected `FSCK`"));
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().expect("2 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let json_len = r.u32("config length")? as usize;
    let json_at = r.pos as u64;
    let config: TrainConfig = serde_json::from_slice(r.take(json_len, "config")?)
        .map_err(|e| Error::format(json_at, format!("invalid config: {e}")))?;
    config.validate()?;
    let mut model = FusionModel::new(config.model_config()?, config.seed)?;
    let count = r.u32("array count")? as usize;
    if count != model.params().len() {
        return Err(Error::format(
            r.pos as u64 - 4,
            format!("{count} arrays, the model has {}", model.params().len()),
        ));
    }
    for _ in 0..count {
        let at = r.pos as u64;
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::format(at, "array name is not UTF-8"))?
            .to_string();
        let id = model
            .params()
            .id(&name)
            .ok_or_else(|| Error::format(at, format!("unknown array `{name}`")))?;
        let ndim = r.u32("ndim")?;
        if ndim != 2 {
            return Err(Error::format(at, format!("array `{name}` has {ndim} dims, expected 2")));
        }
        let (rows, cols) = (r.u32("dims")? as usize, r.u32("dims")? as usize);
        if model.params().get(id).shape() != (rows, cols) {
            return Err(Error::format(at, format!("array `{name}` has shape {rows}x{cols}")));
        }
        let raw = r.take(4 * rows * cols, "array data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        *model.params_mut().get_mut(id) = Matrix::from_vec(rows, cols, data);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, "trailing bytes after the last array"));
    }
    Ok((config, model))
}

pub fn save_checkpoint(path: &Path, config: &TrainConfig, model: &FusionModel) -> Result<()> {
    let bytes = encode_checkpoint(config, model)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(TrainConfig, FusionModel)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainConfig {
        TrainConfig {
            frames: 4,
            height: 8,
            width: 8,
            patch_size: 4,
            enc_depth: 2,
            enc_width: 8,
            enc_heads: 2,
            dec_depth: 1,
            dec_width: 4,
            dec_heads: 1,
            ..TrainConfig::desk()
        }
    }

    #[test]
    fn round_trip_rounds_to_f32() {
        let config = tiny();
        let model = FusionModel::new(config.model_config().unwrap(), 3).unwrap();
        let bytes = encode_checkpoint(&config, &model).unwrap();
        let (loaded_config, loaded) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(loaded_config, config);
        for ((_, name, a), (_, other, b)) in model.params().iter().zip(loaded.params().iter()) {
            assert_eq!(name, other);
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(*x as f32 as f64, *y);
            }
        }
        // a second round trip is exact
        assert_eq!(encode_checkpoint(&config, &loaded).unwrap(), bytes);
    }

    #[test]
    fn malformed_checkpoints() {
        let config = tiny();
        let model = FusionModel::new(config.model_config().unwrap(), 3).unwrap();
        let bytes = encode_checkpoint(&config, &model).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'Z';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 1]),
            Err(Error::Format { .. })
        ));
        let mut trailing = bytes.clone();
        trailing.push(1);
        assert!(matches!(decode_checkpoint(&trailing), Err(Error::Format { .. })));
    }
}
