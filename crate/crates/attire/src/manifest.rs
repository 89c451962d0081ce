//! JSON dataset manifest and dataset loading/saving.
//!
//! The manifest carries category names, items (with the row of their
//! feature vector in the companion binary feature file), outfits with split
//! labels, and the disjoint flag. Schema:
//!
//! ```json
//! {
//!   "version": 1,
//!   "disjoint": false,
//!   "categories": [{"id": 0, "name": "shoes"}],
//!   "items": [{"id": 17, "category": 0, "feature_row": 3}],
//!   "outfits": [{"id": 0, "items": [17, 21], "split": "train"}]
//! }
//! ```
//!
//! Category ids must be dense (`id == position`); item ids are arbitrary
//! u64. Real feature sets can replace the synthetic ones without code
//! changes as long as they follow this schema.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use attire_core::data::{Dataset, Outfit, Split};
use attire_core::model::Item;
use attire_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::features::{read_features, write_features};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    #[serde(default)]
    pub disjoint: bool,
    pub categories: Vec<CategoryDef>,
    pub items: Vec<ItemDef>,
    pub outfits: Vec<OutfitDef>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CategoryDef {
    pub id: usize,
    pub name: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ItemDef {
    pub id: u64,
    pub category: usize,
    pub feature_row: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OutfitDef {
    pub id: u64,
    pub items: Vec<u64>,
    pub split: String,
}

fn parse_error(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Parse { path: path.to_path_buf(), message: message.into() }
}

/// Load a dataset from a manifest plus its feature file.
pub fn load_dataset(manifest_path: &Path, features_path: &Path) -> CliResult<Dataset> {
    let text = fs::read_to_string(manifest_path).map_err(CliError::io(manifest_path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| parse_error(manifest_path, e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(parse_error(
            manifest_path,
            format!("unsupported manifest version {}", manifest.version),
        ));
    }
    for (pos, cat) in manifest.categories.iter().enumerate() {
        if cat.id != pos {
            return Err(parse_error(
                manifest_path,
                format!("category ids must be dense: id {} at position {pos}", cat.id),
            ));
        }
    }
    let features = read_features(features_path)?;

    let mut items = Vec::with_capacity(manifest.items.len());
    let mut id_to_index: BTreeMap<u64, usize> = BTreeMap::new();
    for def in &manifest.items {
        let feature = features.get(def.feature_row).ok_or_else(|| {
            parse_error(
                manifest_path,
                format!(
                    "item {} references feature row {} but the feature file has {} rows",
                    def.id,
                    def.feature_row,
                    features.len()
                ),
            )
        })?;
        if id_to_index.insert(def.id, items.len()).is_some() {
            return Err(CliError::Core(CoreError::InvalidInput(format!(
                "duplicate item id {}",
                def.id
            ))));
        }
        items.push(Item::new(def.id, def.category, feature.clone()));
    }

    let mut outfits = Vec::with_capacity(manifest.outfits.len());
    for def in &manifest.outfits {
        let mut item_indices = Vec::with_capacity(def.items.len());
        for &item_id in &def.items {
            let &idx = id_to_index.get(&item_id).ok_or(CliError::Core(CoreError::DanglingItem {
                outfit: def.id,
                item: item_id,
            }))?;
            item_indices.push(idx);
        }
        let split = Split::parse(&def.split)?;
        outfits.push(Outfit { id: def.id, item_indices, split });
    }

    let categories = manifest.categories.into_iter().map(|c| c.name).collect();
    Ok(Dataset::new(categories, items, outfits, manifest.disjoint)?)
}

/// Write a dataset as a manifest + feature file pair.
pub fn save_dataset(dataset: &Dataset, manifest_path: &Path, features_path: &Path) -> CliResult<()> {
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        disjoint: dataset.disjoint(),
        categories: dataset
            .category_names()
            .iter()
            .enumerate()
            .map(|(id, name)| CategoryDef { id, name: clone_name(name) })
            .collect(),
        items: dataset
            .items()
            .iter()
            .enumerate()
            .map(|(row, item)| ItemDef { id: item.id.0, category: item.category.0, feature_row: row })
            .collect(),
        outfits: dataset
            .outfits()
            .iter()
            .map(|o| OutfitDef {
                id: o.id,
                items: o.item_indices.iter().map(|&i| dataset.item(i).id.0).collect(),
                split: o.split.as_str().to_string(),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| parse_error(manifest_path, e.to_string()))?;
    fs::write(manifest_path, text).map_err(CliError::io(manifest_path))?;
    let vectors: Vec<Vec<f64>> = dataset.items().iter().map(|i| i.raw_feature.clone()).collect();
    write_features(features_path, &vectors, dataset.raw_dim())
}

fn clone_name(name: &str) -> String {
    name.to_string()
}

/// Resolve the conventional file pair inside a dataset directory.
pub fn dataset_paths(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    (dir.join("manifest.json"), dir.join("features.bin"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use attire_core::data::{generate_synthetic, SyntheticSpec};
    use tempfile::tempdir;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            num_outfits: 10,
            items_per_outfit: 2,
            num_categories: 3,
            latent_dim: 2,
            raw_dim: 5,
            noise_sigma: 0.1,
            rng_seed: 12,
        }
    }

    #[test]
    fn round_trip_preserves_structures() {
        let dir = tempdir().unwrap();
        let (mpath, fpath) = dataset_paths(dir.path());
        let ds = generate_synthetic(&spec()).unwrap();
        save_dataset(&ds, &mpath, &fpath).unwrap();
        let back = load_dataset(&mpath, &fpath).unwrap();
        assert_eq!(back.items(), ds.items());
        assert_eq!(back.outfits(), ds.outfits());
        assert_eq!(back.category_names(), ds.category_names());
        assert_eq!(back.disjoint(), ds.disjoint());
    }

    #[test]
    fn minimal_manifest_round_trips() {
        let dir = tempdir().unwrap();
        let (mpath, fpath) = dataset_paths(dir.path());
        fs::write(
            &mpath,
            r#"{
  "version": 1,
  "categories": [{"id": 0, "name": "top"}, {"id": 1, "name": "shoe"}],
  "items": [
    {"id": 100, "category": 0, "feature_row": 0},
    {"id": 200, "category": 1, "feature_row": 1}
  ],
  "outfits": [{"id": 0, "items": [100, 200], "split": "train"}]
}"#,
        )
        .unwrap();
        write_features(&fpath, &[vec![1.0, 2.0], vec![3.0, 4.0]], 2).unwrap();
        let ds = load_dataset(&mpath, &fpath).unwrap();
        assert_eq!(ds.items().len(), 2);
        assert_eq!(ds.outfits().len(), 1);
        assert_eq!(ds.item(0).id.0, 100);
        // Write it back out and reload: identical structures.
        let m2 = dir.path().join("m2.json");
        let f2 = dir.path().join("f2.bin");
        save_dataset(&ds, &m2, &f2).unwrap();
        let again = load_dataset(&m2, &f2).unwrap();
        assert_eq!(again.items(), ds.items());
        assert_eq!(again.outfits(), ds.outfits());
    }

    #[test]
    fn dangling_item_reference_is_named() {
        let dir = tempdir().unwrap();
        let (mpath, fpath) = dataset_paths(dir.path());
        fs::write(
            &mpath,
            r#"{
  "version": 1,
  "categories": [{"id": 0, "name": "top"}],
  "items": [{"id": 1, "category": 0, "feature_row": 0}],
  "outfits": [{"id": 7, "items": [1, 999], "split": "train"}]
}"#,
        )
        .unwrap();
        write_features(&fpath, &[vec![1.0]], 1).unwrap();
        let err = load_dataset(&mpath, &fpath).unwrap_err();
        match err {
            CliError::Core(CoreError::DanglingItem { outfit: 7, item: 999 }) => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn disjoint_violation_is_rejected_at_load() {
        let dir = tempdir().unwrap();
        let (mpath, fpath) = dataset_paths(dir.path());
        fs::write(
            &mpath,
            r#"{
  "version": 1,
  "disjoint": true,
  "categories": [{"id": 0, "name": "top"}, {"id": 1, "name": "shoe"}],
  "items": [
    {"id": 1, "category": 0, "feature_row": 0},
    {"id": 2, "category": 1, "feature_row": 1},
    {"id": 3, "category": 1, "feature_row": 2}
  ],
  "outfits": [
    {"id": 0, "items": [1, 2], "split": "train"},
    {"id": 1, "items": [1, 3], "split": "test"}
  ]
}"#,
        )
        .unwrap();
        write_features(&fpath, &[vec![1.0], vec![2.0], vec![3.0]], 1).unwrap();
        let err = load_dataset(&mpath, &fpath).unwrap_err();
        match err {
            CliError::Core(CoreError::SplitOverlap { item: 1 }) => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn bad_feature_row_is_a_parse_error() {
        let dir = tempdir().unwrap();
        let (mpath, fpath) = dataset_paths(dir.path());
        fs::write(
            &mpath,
            r#"{
  "version": 1,
  "categories": [{"id": 0, "name": "top"}],
  "items": [{"id": 1, "category": 0, "feature_row": 5}],
  "outfits": []
}"#,
        )
        .unwrap();
        write_features(&fpath, &[vec![1.0]], 1).unwrap();
        let err = load_dataset(&mpath, &fpath).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("feature row 5"));
    }
}
