//! Binary feature file: little-endian f32 vectors with a small header.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic    8 bytes  "ATRFEAT1"
//! version  u32      1
//! count    u64      number of vectors
//! dim      u32      vector dimensionality
//! data     count * dim * f32
//! checksum u64      FNV-1a 64 over the raw data bytes
//! ```

use std::fs;
use std::path::Path;

use attire_core::checksum::Fnv64;
use attire_core::Error as CoreError;

use crate::error::{CliError, CliResult};

const MAGIC: &[u8; 8] = b"ATRFEAT1";
const VERSION: u32 = 1;

/// Write feature vectors (converted to f32) to `path`.
pub fn write_features(path: &Path, vectors: &[Vec<f64>], dim: usize) -> CliResult<()> {
    let mut buf = Vec::with_capacity(24 + vectors.len() * dim * 4 + 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(vectors.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    let data_start = buf.len();
    for v in vectors {
        debug_assert_eq!(v.len(), dim);
        for &x in v {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let mut hash = Fnv64::new();
    hash.write(&buf[data_start..]);
    buf.extend_from_slice(&hash.finish().to_le_bytes());
    fs::write(path, buf).map_err(CliError::io(path))?;
    Ok(())
}

/// Read all feature vectors (widened to f64).
pub fn read_features(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    let integrity = |message: String| CliError::Core(CoreError::Integrity(message));
    if bytes.len() < 24 + 8 {
        return Err(integrity(format!("{}: truncated feature file", path.display())));
    }
    if &bytes[..8] != MAGIC {
        return Err(integrity(format!("{}: bad magic", path.display())));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(integrity(format!("{}: unsupported version {version}", path.display())));
    }
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as usize;
    let data_len = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| integrity(format!("{}: corrupt header counts", path.display())))?;
    if bytes.len() != 24 + data_len + 8 {
        return Err(integrity(format!(
            "{}: expected {} bytes for {count} x {dim} vectors, found {}",
            path.display(),
            24 + data_len + 8,
            bytes.len()
        )));
    }
    let data = &bytes[24..24 + data_len];
    let stored = u64::from_le_bytes(bytes[24 + data_len..].try_into().unwrap());
    let mut hash = Fnv64::new();
    hash.write(data);
    if hash.finish() != stored {
        return Err(integrity(format!("{}: checksum mismatch", path.display())));
    }
    let mut out = Vec::with_capacity(count);
    for row in 0..count {
        let mut v = Vec::with_capacity(dim);
        for j in 0..dim {
            let off = (row * dim + j) * 4;
            v.push(f32::from_le_bytes(data[off..off + 4].try_into().unwrap()) as f64);
        }
        out.push(v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn round_trip_is_exact_for_f32_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let vectors: Vec<Vec<f64>> = vec![
            vec![1.0, -0.5, 0.25],
            vec![(0.1f32) as f64, (2.7f32) as f64, 0.0],
        ];
        write_features(&path, &vectors, 3).unwrap();
        let back = read_features(&path).unwrap();
        assert_eq!(back, vectors);
    }

    #[test]
    fn truncation_is_an_integrity_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.bin");
        write_features(&path, &[vec![1.0, 2.0]], 2).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, bytes).unwrap();
        let err = read_features(&path).unwrap_err();
        assert_eq!(err.exit_code(), 5);
    }

    #[test]
    fn corruption_is_an_integrity_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.bin");
        write_features(&path, &[vec![1.0, 2.0]], 2).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let mid = 24 + 2;
        bytes[mid] ^= 0xFF;
        fs::write(&path, bytes).unwrap();
        let err = read_features(&path).unwrap_err();
        assert_eq!(err.exit_code(), 5);
    }
}
