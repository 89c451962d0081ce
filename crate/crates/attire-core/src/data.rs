//! In-memory datasets, the planted-structure synthetic generator, and
//! training-triple sampling.
//!
//! Items and outfits are referenced by dense indices internally; id
//! resolution happens once when a dataset is constructed (or loaded by the
//! companion crate). The synthetic generator plants a shared latent style
//! per outfit: every item's raw feature is a fixed per-category linear image
//! of that latent plus noise, so outfit compatibility is learnable from
//! features alone.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::loss::{LossConfig, LossVariant, TrainingTriple};
use crate::mining::{select_random, select_semi_hard, MiningKind};
use crate::model::{CategoryId, Item, ModelParams};
use crate::rng::Rng;

/// Dataset split label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidInput(format!("unknown split label '{other}'"))),
        }
    }
}

/// An outfit: an ordered set of item indices plus its split label.
#[derive(Debug, Clone, PartialEq)]
pub struct Outfit {
    pub id: u64,
    pub item_indices: Vec<usize>,
    pub split: Split,
}

/// Immutable in-memory dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    categories: Vec<String>,
    items: Vec<Item>,
    outfits: Vec<Outfit>,
    by_category: Vec<Vec<usize>>,
    raw_dim: usize,
    disjoint: bool,
}

impl Dataset {
    /// Build and validate a dataset from resolved components.
    ///
    /// Checks: consistent finite feature vectors, unique item ids, item
    /// category indices in range, outfit item indices in range and unique
    /// within an outfit, and (in disjoint mode) that no item is shared
    /// between train outfits and val/test outfits.
    pub fn new(
        categories: Vec<String>,
        items: Vec<Item>,
        outfits: Vec<Outfit>,
        disjoint: bool,
    ) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::EmptyInput("categories"));
        }
        if items.is_empty() {
            return Err(Error::EmptyInput("items"));
        }
        let raw_dim = items[0].raw_feature.len();
        let mut seen_ids = alloc::collections::BTreeSet::new();
        for item in &items {
            if item.raw_feature.len() != raw_dim {
                return Err(Error::DimensionMismatch {
                    context: "item feature",
                    expected: raw_dim,
                    actual: item.raw_feature.len(),
                });
            }
            if !item.raw_feature.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidInput(format!("item {} has non-finite feature", item.id)));
            }
            if item.category.0 >= categories.len() {
                return Err(Error::CategoryOutOfRange {
                    index: item.category.0,
                    num_categories: categories.len(),
                });
            }
            if !seen_ids.insert(item.id.0) {
                return Err(Error::InvalidInput(format!("duplicate item id {}", item.id)));
            }
        }
        let mut train_items = alloc::collections::BTreeSet::new();
        let mut heldout_items = alloc::collections::BTreeSet::new();
        for outfit in &outfits {
            let mut in_outfit = alloc::collections::BTreeSet::new();
            for &idx in &outfit.item_indices {
                if idx >= items.len() {
                    return Err(Error::InvalidInput(format!(
                        "outfit {} references item index {idx} out of range",
                        outfit.id
                    )));
                }
                if !in_outfit.insert(idx) {
                    return Err(Error::InvalidInput(format!(
                        "outfit {} lists item {} twice",
                        outfit.id, items[idx].id
                    )));
                }
                match outfit.split {
                    Split::Train => {
                        train_items.insert(idx);
                    }
                    Split::Val | Split::Test => {
                        heldout_items.insert(idx);
                    }
                }
            }
        }
        if disjoint {
            if let Some(&idx) = train_items.intersection(&heldout_items).next() {
                return Err(Error::SplitOverlap { item: items[idx].id.0 });
            }
        }
        let mut by_category = vec![Vec::new(); categories.len()];
        for (idx, item) in items.iter().enumerate() {
            by_category[item.category.0].push(idx);
        }
        Ok(Dataset { categories, items, outfits, by_category, raw_dim, disjoint })
    }

    pub fn num_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn category_names(&self) -> &[String] {
        &self.categories
    }

    pub fn raw_dim(&self) -> usize {
        self.raw_dim
    }

    pub fn disjoint(&self) -> bool {
        self.disjoint
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn item(&self, index: usize) -> &Item {
        &self.items[index]
    }

    pub fn outfits(&self) -> &[Outfit] {
        &self.outfits
    }

    /// Indices of outfits in a split, in dataset order.
    pub fn outfit_indices(&self, split: Split) -> Vec<usize> {
        self.outfits
            .iter()
            .enumerate()
            .filter(|(_, o)| o.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Item indices of one category.
    pub fn category_items(&self, category: CategoryId) -> &[usize] {
        &self.by_category[category.0]
    }

    /// Clone the items of an outfit.
    pub fn outfit_items(&self, outfit: &Outfit) -> Vec<Item> {
        outfit.item_indices.iter().map(|&i| self.items[i].clone()).collect()
    }
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

/// Parameters of the planted-structure generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_outfits: usize,
    pub items_per_outfit: usize,
    pub num_categories: usize,
    pub latent_dim: usize,
    pub raw_dim: usize,
    pub noise_sigma: f64,
    pub rng_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_outfits: 2000,
            items_per_outfit: 4,
            num_categories: 6,
            latent_dim: 4,
            raw_dim: 64,
            noise_sigma: 0.1,
            rng_seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_outfits == 0 || self.items_per_outfit == 0 {
            return Err(Error::InvalidInput(String::from(
                "num_outfits and items_per_outfit must be positive",
            )));
        }
        if self.num_categories < 2 {
            return Err(Error::InvalidInput(String::from("num_categories must be at least 2")));
        }
        if self.items_per_outfit > self.num_categories {
            return Err(Error::InvalidInput(format!(
                "items_per_outfit {} exceeds num_categories {} (outfit slots use distinct categories)",
                self.items_per_outfit, self.num_categories
            )));
        }
        if self.latent_dim == 0 || self.latent_dim > self.raw_dim {
            return Err(Error::InvalidInput(format!(
                "latent_dim must be in [1, raw_dim]; got {} with raw_dim {}",
                self.latent_dim, self.raw_dim
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidInput(String::from("noise_sigma must be >= 0")));
        }
        Ok(())
    }
}

/// Outfit split fractions for generated data (train / val, rest is test).
const SYNTH_TRAIN_FRACTION: f64 = 0.8;
const SYNTH_VAL_FRACTION: f64 = 0.1;

/// The fixed per-category mixing matrices (`raw_dim x latent_dim` row-major),
/// exposed so tests can recover the planted latents.
pub fn synthetic_category_maps(spec: &SyntheticSpec) -> Vec<Vec<f64>> {
    let mut rng = Rng::derive(spec.rng_seed, 0xA);
    let scale = 1.0 / libm::sqrt(spec.latent_dim as f64);
    (0..spec.num_categories)
        .map(|_| (0..spec.raw_dim * spec.latent_dim).map(|_| rng.next_gaussian() * scale).collect())
        .collect()
}

/// Generate a dataset with a planted compatibility signal.
///
/// Each outfit draws a latent style `s ~ N(0, I_z)` and fills
/// `items_per_outfit` distinct category slots with
/// `raw = A_c s + sigma * noise`, where `A_c` is the fixed per-category map.
/// Ground-truth compatibility is co-membership in a generating outfit.
/// Features are rounded to f32 precision so the binary feature file
/// round-trips bit for bit. Outfits are split 80/10/10 into train/val/test
/// in generation order.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let maps = synthetic_category_maps(spec);
    let mut rng = Rng::derive(spec.rng_seed, 0xB);

    let categories: Vec<String> = (0..spec.num_categories).map(|c| format!("cat{c}")).collect();
    let mut items = Vec::with_capacity(spec.num_outfits * spec.items_per_outfit);
    let mut outfits = Vec::with_capacity(spec.num_outfits);

    let train_end = ((spec.num_outfits as f64) * SYNTH_TRAIN_FRACTION) as usize;
    let val_end =
        ((spec.num_outfits as f64) * (SYNTH_TRAIN_FRACTION + SYNTH_VAL_FRACTION)) as usize;

    let mut next_id: u64 = 0;
    for o in 0..spec.num_outfits {
        let latent: Vec<f64> = (0..spec.latent_dim).map(|_| rng.next_gaussian()).collect();
        let cats = rng.sample_indices(spec.num_categories, spec.items_per_outfit);
        let mut item_indices = Vec::with_capacity(spec.items_per_outfit);
        for &cat in &cats {
            let map = &maps[cat];
            let mut raw = vec![0.0; spec.raw_dim];
            for j in 0..spec.raw_dim {
                let row = &map[j * spec.latent_dim..(j + 1) * spec.latent_dim];
                let mut v = 0.0;
                for (l, &a) in row.iter().enumerate() {
                    v += a * latent[l];
                }
                if spec.noise_sigma > 0.0 {
                    v += spec.noise_sigma * rng.next_gaussian();
                }
                raw[j] = (v as f32) as f64;
            }
            item_indices.push(items.len());
            items.push(Item::new(next_id, cat, raw));
            next_id += 1;
        }
        let split = if o < train_end {
            Split::Train
        } else if o < val_end {
            Split::Val
        } else {
            Split::Test
        };
        outfits.push(Outfit { id: o as u64, item_indices, split });
    }
    Dataset::new(categories, items, outfits, false)
}

// ---------------------------------------------------------------------------
// Triple sampling
// ---------------------------------------------------------------------------

/// One planned triple before negative mining: which outfit, which held-out
/// slot, and the candidate pool (dataset item indices, all of the positive's
/// category, none from this outfit).
#[derive(Debug, Clone)]
pub struct TripleAssignment {
    pub outfit_index: usize,
    pub positive_slot: usize,
    pub pool: Vec<usize>,
}

/// All assignments for one epoch.
#[derive(Debug, Clone)]
pub struct EpochPlan {
    pub assignments: Vec<TripleAssignment>,
    /// Outfits skipped because they cannot form a triple (single item, or no
    /// same-category candidates outside the outfit).
    pub skipped: usize,
}

/// Plan the epoch's triples: shuffled outfit order, rotating positive slot,
/// seeded candidate pools of up to `pool_size` same-category items drawn
/// from outside each outfit.
pub fn plan_epoch(
    dataset: &Dataset,
    split: Split,
    epoch: usize,
    pool_size: usize,
    rng: &mut Rng,
) -> EpochPlan {
    let mut outfit_order = dataset.outfit_indices(split);
    rng.shuffle(&mut outfit_order);

    let mut assignments = Vec::with_capacity(outfit_order.len());
    let mut skipped = 0;
    for (seq, &outfit_index) in outfit_order.iter().enumerate() {
        let outfit = &dataset.outfits()[outfit_index];
        let n = outfit.item_indices.len();
        if n < 2 {
            skipped += 1;
            continue;
        }
        // Positive selection rotates over the outfit per epoch; the sequence
        // offset staggers rotation across outfits within an epoch.
        let positive_slot = (epoch + seq) % n;
        let positive_idx = outfit.item_indices[positive_slot];
        let cat = dataset.item(positive_idx).category;

        let candidates: Vec<usize> = dataset
            .category_items(cat)
            .iter()
            .copied()
            .filter(|i| !outfit.item_indices.contains(i))
            .collect();
        if candidates.is_empty() {
            skipped += 1;
            continue;
        }
        let chosen = rng.sample_indices(candidates.len(), pool_size);
        let pool: Vec<usize> = chosen.into_iter().map(|i| candidates[i]).collect();
        assignments.push(TripleAssignment { outfit_index, positive_slot, pool });
    }
    EpochPlan { assignments, skipped }
}

/// Turn one assignment into a training triple by mining negatives with the
/// current parameters.
///
/// Under [`LossVariant::Triplet`] the partial outfit is cut down to one
/// seeded random anchor item before mining, which reduces the ranking loss
/// to the plain triplet baseline.
#[allow(clippy::too_many_arguments)]
pub fn realize_triple(
    dataset: &Dataset,
    assignment: &TripleAssignment,
    params: &ModelParams,
    loss_cfg: &LossConfig,
    variant: LossVariant,
    mining: MiningKind,
    m_neg: usize,
    order_flip: bool,
    rng: &mut Rng,
) -> Result<TrainingTriple> {
    let outfit_def = &dataset.outfits()[assignment.outfit_index];
    let mut outfit = Vec::with_capacity(outfit_def.item_indices.len() - 1);
    let mut positive = None;
    for (slot, &idx) in outfit_def.item_indices.iter().enumerate() {
        if slot == assignment.positive_slot {
            positive = Some(dataset.item(idx).clone());
        } else {
            outfit.push(dataset.item(idx).clone());
        }
    }
    let positive = positive.expect("positive slot in range");
    if variant == LossVariant::Triplet && outfit.len() > 1 {
        let anchor = rng.below(outfit.len());
        outfit = alloc::vec![outfit[anchor].clone()];
    }
    let pool: Vec<Item> = assignment.pool.iter().map(|&i| dataset.item(i).clone()).collect();
    let negatives = match mining {
        MiningKind::SemiHard => {
            select_semi_hard(params, &outfit, &positive, &pool, loss_cfg, m_neg, rng)?
        }
        MiningKind::Random => select_random(&pool, m_neg, rng)?,
    };
    let mut triple = TrainingTriple::new(outfit, positive, negatives);
    if order_flip {
        triple.order_flipped = rng.next_u64() & 1 == 1;
    }
    Ok(triple)
}

/// Sample one epoch's worth of training triples in one call.
///
/// For each eligible outfit, one item is held out as the positive (slot
/// rotating per epoch), the remaining items form the partial outfit, and
/// negatives are mined from a seeded same-category candidate pool. Returns
/// the triples plus the skipped-outfit count.
#[allow(clippy::too_many_arguments)]
pub fn sample_triples(
    dataset: &Dataset,
    split: Split,
    epoch: usize,
    params: &ModelParams,
    loss_cfg: &LossConfig,
    variant: LossVariant,
    mining: MiningKind,
    m_neg: usize,
    pool_size: usize,
    order_flip: bool,
    rng: &mut Rng,
) -> Result<(Vec<TrainingTriple>, usize)> {
    let plan = plan_epoch(dataset, split, epoch, pool_size, rng);
    let mut triples = Vec::with_capacity(plan.assignments.len());
    for assignment in &plan.assignments {
        triples.push(realize_triple(
            dataset, assignment, params, loss_cfg, variant, mining, m_neg, order_flip, rng,
        )?);
    }
    Ok((triples, plan.skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny_dataset() -> Dataset {
        // Two categories, three outfits of two items each.
        let items = vec![
            Item::new(0, 0, vec![1.0, 0.0]),
            Item::new(1, 1, vec![0.0, 1.0]),
            Item::new(2, 0, vec![1.0, 1.0]),
            Item::new(3, 1, vec![0.5, 0.5]),
            Item::new(4, 0, vec![0.2, 0.8]),
            Item::new(5, 1, vec![0.9, 0.1]),
        ];
        let outfits = vec![
            Outfit { id: 0, item_indices: vec![0, 1], split: Split::Train },
            Outfit { id: 1, item_indices: vec![2, 3], split: Split::Train },
            Outfit { id: 2, item_indices: vec![4, 5], split: Split::Test },
        ];
        Dataset::new(vec!["a".into(), "b".into()], items, outfits, false).unwrap()
    }

    #[test]
    fn dataset_validation_catches_duplicates_and_ranges() {
        let items = vec![Item::new(0, 0, vec![1.0]), Item::new(0, 0, vec![2.0])];
        let err = Dataset::new(vec!["a".into()], items, vec![], false).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));

        let items = vec![Item::new(0, 5, vec![1.0])];
        let err = Dataset::new(vec!["a".into()], items, vec![], false).unwrap_err();
        assert!(matches!(err, Error::CategoryOutOfRange { .. }));

        let items = vec![Item::new(0, 0, vec![1.0])];
        let outfits = vec![Outfit { id: 9, item_indices: vec![3], split: Split::Train }];
        let err = Dataset::new(vec!["a".into()], items, outfits, false).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn disjoint_mode_rejects_shared_items() {
        let items = vec![
            Item::new(0, 0, vec![1.0]),
            Item::new(1, 1, vec![2.0]),
            Item::new(2, 1, vec![3.0]),
        ];
        let outfits = vec![
            Outfit { id: 0, item_indices: vec![0, 1], split: Split::Train },
            Outfit { id: 1, item_indices: vec![0, 2], split: Split::Test },
        ];
        let err = Dataset::new(vec!["a".into(), "b".into()], items.clone(), outfits.clone(), true)
            .unwrap_err();
        assert!(matches!(err, Error::SplitOverlap { item: 0 }));
        // Same structure is fine without the flag.
        assert!(Dataset::new(vec!["a".into(), "b".into()], items, outfits, false).is_ok());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec {
            num_outfits: 12,
            items_per_outfit: 3,
            num_categories: 4,
            latent_dim: 2,
            raw_dim: 8,
            noise_sigma: 0.1,
            rng_seed: 77,
        };
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(a.items(), b.items());
        assert_eq!(a.outfits(), b.outfits());
    }

    #[test]
    fn synthetic_respects_spec_shape() {
        let spec = SyntheticSpec {
            num_outfits: 20,
            items_per_outfit: 3,
            num_categories: 5,
            latent_dim: 2,
            raw_dim: 6,
            noise_sigma: 0.0,
            rng_seed: 1,
        };
        let ds = generate_synthetic(&spec).unwrap();
        assert_eq!(ds.items().len(), 60);
        assert_eq!(ds.outfits().len(), 20);
        assert_eq!(ds.raw_dim(), 6);
        assert_eq!(ds.outfit_indices(Split::Train).len(), 16);
        assert_eq!(ds.outfit_indices(Split::Val).len(), 2);
        assert_eq!(ds.outfit_indices(Split::Test).len(), 2);
        for outfit in ds.outfits() {
            let mut cats: Vec<usize> =
                outfit.item_indices.iter().map(|&i| ds.item(i).category.0).collect();
            cats.sort_unstable();
            cats.dedup();
            assert_eq!(cats.len(), 3, "categories distinct within an outfit");
        }
    }

    #[test]
    fn synthetic_rejects_too_many_slots() {
        let spec = SyntheticSpec {
            num_outfits: 2,
            items_per_outfit: 5,
            num_categories: 3,
            latent_dim: 2,
            raw_dim: 4,
            noise_sigma: 0.0,
            rng_seed: 0,
        };
        assert!(generate_synthetic(&spec).is_err());
    }

    // Small dense least-squares oracle: solves (A^T A) s = A^T x by Gaussian
    // elimination. Test-only.
    fn least_squares(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
        let mut ata = vec![0.0; cols * cols];
        let mut atx = vec![0.0; cols];
        for r in 0..rows {
            let row = &a[r * cols..(r + 1) * cols];
            for i in 0..cols {
                atx[i] += row[i] * x[r];
                for j in 0..cols {
                    ata[i * cols + j] += row[i] * row[j];
                }
            }
        }
        let n = cols;
        let mut aug = vec![0.0; n * (n + 1)];
        for i in 0..n {
            for j in 0..n {
                aug[i * (n + 1) + j] = ata[i * n + j];
            }
            aug[i * (n + 1) + n] = atx[i];
        }
        for col in 0..n {
            let mut pivot = col;
            for r in col + 1..n {
                if aug[r * (n + 1) + col].abs() > aug[pivot * (n + 1) + col].abs() {
                    pivot = r;
                }
            }
            for j in 0..n + 1 {
                aug.swap(col * (n + 1) + j, pivot * (n + 1) + j);
            }
            let diag = aug[col * (n + 1) + col];
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = aug[r * (n + 1) + col] / diag;
                for j in col..n + 1 {
                    aug[r * (n + 1) + j] -= factor * aug[col * (n + 1) + j];
                }
            }
        }
        (0..n).map(|i| aug[i * (n + 1) + n] / aug[i * (n + 1) + i]).collect()
    }

    #[test]
    fn noiseless_latent_recoverable_by_least_squares() {
        let spec = SyntheticSpec {
            num_outfits: 6,
            items_per_outfit: 3,
            num_categories: 4,
            latent_dim: 3,
            raw_dim: 10,
            noise_sigma: 0.0,
            rng_seed: 3,
        };
        let ds = generate_synthetic(&spec).unwrap();
        let maps = synthetic_category_maps(&spec);
        for outfit in ds.outfits() {
            let latents: Vec<Vec<f64>> = outfit
                .item_indices
                .iter()
                .map(|&i| {
                    let item = ds.item(i);
                    least_squares(
                        &maps[item.category.0],
                        spec.raw_dim,
                        spec.latent_dim,
                        &item.raw_feature,
                    )
                })
                .collect();
            for l in &latents[1..] {
                for (a, b) in l.iter().zip(&latents[0]) {
                    // f32 feature quantization bounds the residual.
                    assert!((a - b).abs() < 1e-4, "latents differ: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn within_outfit_alignment_beats_cross_outfit() {
        let spec = SyntheticSpec {
            num_outfits: 40,
            items_per_outfit: 3,
            num_categories: 6,
            latent_dim: 4,
            raw_dim: 64,
            noise_sigma: 0.1,
            rng_seed: 5,
        };
        let ds = generate_synthetic(&spec).unwrap();
        let maps = synthetic_category_maps(&spec);
        let latent_of = |idx: usize| {
            let item = ds.item(idx);
            least_squares(&maps[item.category.0], spec.raw_dim, spec.latent_dim, &item.raw_feature)
        };
        let cosine = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = libm::sqrt(a.iter().map(|x| x * x).sum());
            let nb: f64 = libm::sqrt(b.iter().map(|x| x * x).sum());
            dot / (na * nb)
        };
        let mut within = 0.0;
        let mut within_n = 0;
        let mut cross = 0.0;
        let mut cross_n = 0;
        let outfits = ds.outfits();
        for (oi, outfit) in outfits.iter().enumerate() {
            let lats: Vec<Vec<f64>> = outfit.item_indices.iter().map(|&i| latent_of(i)).collect();
            for i in 0..lats.len() {
                for j in i + 1..lats.len() {
                    within += cosine(&lats[i], &lats[j]);
                    within_n += 1;
                }
            }
            if oi + 1 < outfits.len() {
                let other = latent_of(outfits[oi + 1].item_indices[0]);
                cross += cosine(&lats[0], &other);
                cross_n += 1;
            }
        }
        let within_mean = within / within_n as f64;
        let cross_mean = cross / cross_n as f64;
        assert!(within_mean > cross_mean + 0.5, "within {within_mean} vs cross {cross_mean}");
    }

    #[test]
    fn minimal_outfit_split_forms_triple() {
        let ds = tiny_dataset();
        let params = ModelParams::init(ModelConfig::new(2), Some(2)).unwrap();
        let mut rng = Rng::seed_from_u64(0);
        let (triples, skipped) = sample_triples(
            &ds,
            Split::Train,
            0,
            &params,
            &LossConfig::default(),
            LossVariant::OutfitRanking,
            MiningKind::Random,
            2,
            10,
            false,
            &mut rng,
        )
        .unwrap();
        assert_eq!(skipped, 0);
        assert_eq!(triples.len(), 2);
        for t in &triples {
            assert_eq!(t.outfit.len(), 1);
            t.validate().unwrap();
            for neg in &t.negatives {
                assert_eq!(neg.category, t.positive.category);
                assert_ne!(neg.id, t.positive.id);
            }
        }
    }

    #[test]
    fn positive_rotation_is_uniform() {
        // Over many epochs each slot of a 2-item outfit is held out equally
        // often.
        let ds = tiny_dataset();
        let mut counts = alloc::collections::BTreeMap::new();
        for epoch in 0..1000 {
            let mut rng = Rng::derive(9, epoch as u64);
            let plan = plan_epoch(&ds, Split::Train, epoch, 10, &mut rng);
            for a in &plan.assignments {
                let outfit = &ds.outfits()[a.outfit_index];
                let pos_item = outfit.item_indices[a.positive_slot];
                *counts.entry(pos_item).or_insert(0usize) += 1;
            }
        }
        // 2 outfits x 1000 epochs, each item should be positive ~500 times.
        for (&item, &count) in &counts {
            let freq = count as f64 / 1000.0;
            assert!((freq - 0.5).abs() <= 0.05, "item {item}: freq {freq}");
        }
    }

    #[test]
    fn triplet_variant_keeps_one_anchor() {
        let spec = SyntheticSpec {
            num_outfits: 10,
            items_per_outfit: 4,
            num_categories: 5,
            latent_dim: 2,
            raw_dim: 6,
            noise_sigma: 0.1,
            rng_seed: 8,
        };
        let ds = generate_synthetic(&spec).unwrap();
        let mut mc = ModelConfig::new(5);
        mc.feature_dim = 6;
        let params = ModelParams::init(mc, Some(6)).unwrap();
        let mut rng = Rng::seed_from_u64(3);
        let (triples, _) = sample_triples(
            &ds,
            Split::Train,
            0,
            &params,
            &LossConfig::default(),
            LossVariant::Triplet,
            MiningKind::Random,
            2,
            10,
            false,
            &mut rng,
        )
        .unwrap();
        assert!(!triples.is_empty());
        for t in &triples {
            assert_eq!(t.outfit.len(), 1, "triplet variant keeps a single anchor");
        }
    }

    #[test]
    fn single_item_outfits_are_skipped() {
        let items = vec![
            Item::new(0, 0, vec![1.0]),
            Item::new(1, 1, vec![2.0]),
            Item::new(2, 0, vec![3.0]),
            Item::new(3, 1, vec![4.0]),
        ];
        let outfits = vec![
            Outfit { id: 0, item_indices: vec![0], split: Split::Train },
            Outfit { id: 1, item_indices: vec![1, 2], split: Split::Train },
            Outfit { id: 2, item_indices: vec![3], split: Split::Train },
        ];
        let ds = Dataset::new(vec!["a".into(), "b".into()], items, outfits, false).unwrap();
        let mut rng = Rng::seed_from_u64(1);
        let plan = plan_epoch(&ds, Split::Train, 0, 5, &mut rng);
        assert_eq!(plan.skipped, 2);
        assert_eq!(plan.assignments.len(), 1);
    }

    #[test]
    fn pools_exclude_own_outfit() {
        let ds = tiny_dataset();
        for epoch in 0..6u64 {
            let mut rng = Rng::derive(2, epoch);
            let plan = plan_epoch(&ds, Split::Train, epoch as usize, 10, &mut rng);
            for a in &plan.assignments {
                let outfit = &ds.outfits()[a.outfit_index];
                let pos_idx = outfit.item_indices[a.positive_slot];
                let cat = ds.item(pos_idx).category;
                for &cand in &a.pool {
                    assert!(!outfit.item_indices.contains(&cand));
                    assert_eq!(ds.item(cand).category, cat);
                }
            }
        }
    }
}
