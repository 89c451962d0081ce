//! Model checkpoint file: config plus all tensors, versioned and checksummed.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic            8 bytes "ATRCKPT1"
//! version          u32     1
//! feature_dim      u32
//! num_subspaces    u32
//! num_categories   u32
//! attention_hidden u32
//! flags            u8      bit0 = l2_normalize, bit1 = learn_projector
//! model_rng_seed   u64
//! margin           f64
//! aggregation      u8      0 = min, 1 = average
//! distance         u8      0 = euclidean, 1 = squared euclidean
//! masks            k*d f64 (row-major; then attn_w1 2C*h, attn_b1 h,
//!                  attn_w2 h*k, attn_b2 k)
//! has_projector    u8
//! [raw_dim u32, weights raw_dim*d f64]  when has_projector = 1
//! checksum         u64     FNV-1a 64 over all preceding bytes
//! ```
//!
//! Loading validates the magic, version, shape invariants, finiteness and
//! checksum.

use std::fs;
use std::path::Path;

use attire_core::checksum::Fnv64;
use attire_core::loss::{Aggregation, DistanceKind, LossConfig};
use attire_core::model::{ModelConfig, ModelParams, Projector};
use attire_core::Error as CoreError;

use crate::error::{CliError, CliResult};

const MAGIC: &[u8; 8] = b"ATRCKPT1";
const VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, params: &ModelParams, loss: &LossConfig) -> CliResult<()> {
    params.validate()?;
    let cfg = &params.config;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(cfg.feature_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.num_subspaces as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.num_categories as u32).to_le_bytes());
    buf.extend_from_slice(&(cfg.attention_hidden as u32).to_le_bytes());
    let flags = (cfg.l2_normalize as u8) | ((cfg.learn_projector as u8) << 1);
    buf.push(flags);
    buf.extend_from_slice(&cfg.rng_seed.to_le_bytes());
    buf.extend_from_slice(&loss.margin.to_le_bytes());
    buf.push(match loss.aggregation {
        Aggregation::Min => 0,
        Aggregation::Average => 1,
    });
    buf.push(match loss.distance {
        DistanceKind::Euclidean => 0,
        DistanceKind::SquaredEuclidean => 1,
    });
    for tensor in [&params.masks, &params.attn_w1, &params.attn_b1, &params.attn_w2, &params.attn_b2]
    {
        for &v in tensor.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    match &params.backbone_proj {
        Some(p) => {
            buf.push(1);
            buf.extend_from_slice(&(p.raw_dim as u32).to_le_bytes());
            for &v in &p.weights {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        None => buf.push(0),
    }
    let mut hash = Fnv64::new();
    hash.write(&buf);
    buf.extend_from_slice(&hash.finish().to_le_bytes());
    fs::write(path, buf).map_err(CliError::io(path))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> CliResult<(ModelParams, LossConfig)> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    let mut r = Reader::new(&bytes, path);
    let magic = r.take(8)?;
    if magic != MAGIC {
        return Err(r.integrity("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.integrity(&format!("unsupported version {version}")));
    }
    let feature_dim = r.u32()? as usize;
    let num_subspaces = r.u32()? as usize;
    let num_categories = r.u32()? as usize;
    let attention_hidden = r.u32()? as usize;
    let flags = r.u8()?;
    let rng_seed = r.u64()?;
    let margin = r.f64()?;
    let aggregation = match r.u8()? {
        0 => Aggregation::Min,
        1 => Aggregation::Average,
        other => return Err(r.integrity(&format!("unknown aggregation tag {other}"))),
    };
    let distance = match r.u8()? {
        0 => DistanceKind::Euclidean,
        1 => DistanceKind::SquaredEuclidean,
        other => return Err(r.integrity(&format!("unknown distance tag {other}"))),
    };
    let config = ModelConfig {
        feature_dim,
        num_subspaces,
        num_categories,
        attention_hidden,
        l2_normalize: flags & 1 != 0,
        learn_projector: flags & 2 != 0,
        rng_seed,
    };
    let masks = r.f64_vec(num_subspaces * feature_dim)?;
    let attn_w1 = r.f64_vec(2 * num_categories * attention_hidden)?;
    let attn_b1 = r.f64_vec(attention_hidden)?;
    let attn_w2 = r.f64_vec(attention_hidden * num_subspaces)?;
    let attn_b2 = r.f64_vec(num_subspaces)?;
    let backbone_proj = match r.u8()? {
        0 => None,
        1 => {
            let raw_dim = r.u32()? as usize;
            let weights = r.f64_vec(raw_dim * feature_dim)?;
            Some(Projector { raw_dim, weights })
        }
        other => return Err(r.integrity(&format!("unknown projector tag {other}"))),
    };
    let body_end = r.offset();
    let stored = r.u64()?;
    if r.offset() != bytes.len() {
        return Err(r.integrity("trailing bytes after checksum"));
    }
    let mut hash = Fnv64::new();
    hash.write(&bytes[..body_end]);
    if hash.finish() != stored {
        return Err(r.integrity("checksum mismatch"));
    }
    let params =
        ModelParams { config, masks, attn_w1, attn_b1, attn_w2, attn_b2, backbone_proj };
    params.validate()?;
    let loss = LossConfig { margin, aggregation, distance };
    loss.validate()?;
    Ok((params, loss))
}

/// Bounds-checked little-endian reader shared by the binary formats.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Reader { bytes, offset: 0, path }
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn integrity(&self, message: &str) -> CliError {
        CliError::Core(CoreError::Integrity(format!("{}: {message}", self.path.display())))
    }

    pub fn take(&mut self, n: usize) -> CliResult<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(self.integrity("unexpected end of file"));
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    pub fn u8(&mut self) -> CliResult<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> CliResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> CliResult<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> CliResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64_vec(&mut self, n: usize) -> CliResult<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| self.integrity("length overflow"))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample() -> (ModelParams, LossConfig) {
        let mut cfg = ModelConfig::new(3);
        cfg.feature_dim = 4;
        cfg.num_subspaces = 2;
        cfg.attention_hidden = 3;
        cfg.rng_seed = 42;
        let params = ModelParams::init(cfg, Some(6)).unwrap();
        (params, LossConfig::default())
    }

    #[test]
    fn round_trip_preserves_everything() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let (params, loss) = sample();
        save_checkpoint(&path, &params, &loss).unwrap();
        let (back, loss_back) = load_checkpoint(&path).unwrap();
        assert_eq!(back, params);
        assert_eq!(loss_back, loss);
        assert_eq!(back.checksum(), params.checksum());
    }

    #[test]
    fn corrupt_tensor_fails_checksum() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let (params, loss) = sample();
        save_checkpoint(&path, &params, &loss).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
        fs::write(&path, bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert_eq!(err.exit_code(), 5);
    }

    #[test]
    fn truncated_file_is_integrity_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let (params, loss) = sample();
        save_checkpoint(&path, &params, &loss).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(40);
        fs::write(&path, bytes).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap_err().exit_code(), 5);
    }

    #[test]
    fn missing_file_is_data_error() {
        let err = load_checkpoint(Path::new("/nonexistent/m.ckpt")).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
