//! Persisted index file.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic            8 bytes "ATRIDX01"
//! version          u32     1
//! feature_dim      u32
//! num_categories   u32
//! distance         u8      0 = euclidean, 1 = squared euclidean
//! approx           u8      0 = exact only, 1 = graph parameters follow
//! [max_neighbors u32, ef_construction u32, ef_search u32]  when approx = 1
//! model_checksum   u64
//! total_entries    u64
//! buckets          C*C of { count u64, ids count*u64, vectors count*d*f64 }
//!                  in (item_category, query_category) row-major order
//! checksum         u64     FNV-1a 64 over all preceding bytes
//! ```
//!
//! Graphs for approximate search are not serialized; they are rebuilt
//! deterministically from the stored vectors on load, so queries against a
//! loaded index match the original exactly.

use std::fs;
use std::path::Path;

use attire_core::checksum::Fnv64;
use attire_core::index::{assemble_index, CategoryIndex, NswConfig};
use attire_core::loss::DistanceKind;
use attire_core::model::ItemId;

use crate::checkpoint::Reader;
use crate::error::{CliError, CliResult};

const MAGIC: &[u8; 8] = b"ATRIDX01";
const VERSION: u32 = 1;

pub fn save_index(path: &Path, index: &CategoryIndex) -> CliResult<()> {
    let c = index.num_categories();
    let d = index.feature_dim();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    buf.extend_from_slice(&(c as u32).to_le_bytes());
    buf.push(match index.distance() {
        DistanceKind::Euclidean => 0,
        DistanceKind::SquaredEuclidean => 1,
    });
    match index.approx_config() {
        Some(cfg) => {
            buf.push(1);
            buf.extend_from_slice(&(cfg.max_neighbors as u32).to_le_bytes());
            buf.extend_from_slice(&(cfg.ef_construction as u32).to_le_bytes());
            buf.extend_from_slice(&(cfg.ef_search as u32).to_le_bytes());
        }
        None => buf.push(0),
    }
    buf.extend_from_slice(&index.model_checksum().to_le_bytes());
    buf.extend_from_slice(&(index.num_entries() as u64).to_le_bytes());
    for item_cat in 0..c {
        for query_cat in 0..c {
            let bucket = index
                .bucket(
                    attire_core::model::CategoryId(item_cat),
                    attire_core::model::CategoryId(query_cat),
                )
                .expect("category bounds hold by construction");
            buf.extend_from_slice(&(bucket.len() as u64).to_le_bytes());
            for pos in 0..bucket.len() {
                buf.extend_from_slice(&bucket.id(pos).0.to_le_bytes());
            }
            for pos in 0..bucket.len() {
                for &v in bucket.vector(pos) {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
    }
    let mut hash = Fnv64::new();
    hash.write(&buf);
    buf.extend_from_slice(&hash.finish().to_le_bytes());
    fs::write(path, buf).map_err(CliError::io(path))?;
    Ok(())
}

/// Loaded index plus any non-fatal observations.
#[derive(Debug)]
pub struct LoadedIndex {
    pub index: CategoryIndex,
    /// Set when the caller supplied a parameter checksum that does not match
    /// the stored one (queries against such an index are meaningless).
    pub model_mismatch: bool,
}

pub fn load_index(path: &Path, expected_model: Option<u64>) -> CliResult<LoadedIndex> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    // Verify the trailing checksum before trusting any lengths.
    if bytes.len() < 8 {
        let r = Reader::new(&bytes, path);
        return Err(r.integrity("truncated index file"));
    }
    let body_end = bytes.len() - 8;
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().unwrap());
    let mut hash = Fnv64::new();
    hash.write(&bytes[..body_end]);
    if hash.finish() != stored {
        let r = Reader::new(&bytes, path);
        return Err(r.integrity("checksum mismatch (corrupt or truncated index)"));
    }

    let mut r = Reader::new(&bytes[..body_end], path);
    if r.take(8)? != MAGIC {
        return Err(r.integrity("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.integrity(&format!("unsupported version {version}")));
    }
    let feature_dim = r.u32()? as usize;
    let num_categories = r.u32()? as usize;
    let distance = match r.u8()? {
        0 => DistanceKind::Euclidean,
        1 => DistanceKind::SquaredEuclidean,
        other => return Err(r.integrity(&format!("unknown distance tag {other}"))),
    };
    let approx = match r.u8()? {
        0 => None,
        1 => Some(NswConfig {
            max_neighbors: r.u32()? as usize,
            ef_construction: r.u32()? as usize,
            ef_search: r.u32()? as usize,
        }),
        other => return Err(r.integrity(&format!("unknown approx tag {other}"))),
    };
    let model_checksum = r.u64()?;
    let total_entries = r.u64()? as usize;

    let mut parts = Vec::with_capacity(num_categories * num_categories);
    let mut seen_entries = 0usize;
    for _ in 0..num_categories * num_categories {
        let count = r.u64()? as usize;
        seen_entries += count;
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            ids.push(ItemId(r.u64()?));
        }
        let vectors = r.f64_vec(count * feature_dim)?;
        parts.push((ids, vectors));
    }
    if seen_entries != total_entries {
        return Err(r.integrity(&format!(
            "header claims {total_entries} entries but buckets hold {seen_entries}"
        )));
    }
    if r.offset() != body_end {
        return Err(r.integrity("trailing bytes before checksum"));
    }

    let index =
        assemble_index(feature_dim, num_categories, distance, model_checksum, approx, parts)?;
    let model_mismatch = expected_model.is_some_and(|sum| sum != model_checksum);
    Ok(LoadedIndex { index, model_mismatch })
}
