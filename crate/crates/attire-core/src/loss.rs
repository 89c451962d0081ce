//! Distances and ranking losses.
//!
//! The outfit-level distance between a candidate and an outfit is the mean
//! of per-item pairwise distances, where each pair conditions both
//! embeddings on (outfit item category, candidate category). The outfit
//! ranking loss is a hinge on the gap between the positive candidate's
//! outfit distance and an aggregate (min or average) over the negatives'
//! outfit distances. The plain triplet loss is kept as the ablation
//! baseline.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{CategoryId, Item, ModelParams};

/// How the per-negative distances collapse into a single negative distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Min,
    Average,
}

/// Which loss drives training.
///
/// `Triplet` is the ablation baseline: each sampled triple keeps a single
/// random outfit item as the anchor, which reduces the ranking loss to the
/// classic triplet form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossVariant {
    OutfitRanking,
    Triplet,
}

/// Pairwise distance in embedding space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    Euclidean,
    SquaredEuclidean,
}

/// Loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Hinge margin.
    pub margin: f64,
    pub aggregation: Aggregation,
    pub distance: DistanceKind,
}

impl Default for LossConfig {
    /// Margin 0.3, min aggregation, unsquared Euclidean distance.
    fn default() -> Self {
        LossConfig { margin: 0.3, aggregation: Aggregation::Min, distance: DistanceKind::Euclidean }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0) {
            return Err(Error::InvalidInput(format!("margin must be >= 0, got {}", self.margin)));
        }
        Ok(())
    }
}

/// One training sample: a partial outfit, the held-out positive item, and a
/// set of mined negatives of the positive's category.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTriple {
    pub outfit: Vec<Item>,
    pub positive: Item,
    pub negatives: Vec<Item>,
    /// Category-order augmentation: when set, every embedding in this triple
    /// feeds the attention net with (target, source) instead of
    /// (source, target). Off unless the trainer's order-flip flag is on.
    pub order_flipped: bool,
}

impl TrainingTriple {
    pub fn new(outfit: Vec<Item>, positive: Item, negatives: Vec<Item>) -> Self {
        TrainingTriple { outfit, positive, negatives, order_flipped: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outfit.is_empty() {
            return Err(Error::EmptyInput("triple outfit"));
        }
        if self.negatives.is_empty() {
            return Err(Error::EmptyInput("triple negatives"));
        }
        for n in &self.negatives {
            if n.category != self.positive.category {
                return Err(Error::InvalidInput(format!(
                    "negative {} has category {} but positive {} has category {}",
                    n.id, n.category, self.positive.id, self.positive.category
                )));
            }
        }
        Ok(())
    }
}

/// Pairwise distance between two embeddings.
pub fn pair_distance(a: &[f64], b: &[f64], cfg: &LossConfig) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "pair_distance",
            expected: a.len(),
            actual: b.len(),
        });
    }
    let mut sq = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let diff = x - y;
        sq += diff * diff;
    }
    Ok(match cfg.distance {
        DistanceKind::Euclidean => libm::sqrt(sq),
        DistanceKind::SquaredEuclidean => sq,
    })
}

/// Embed one (outfit item, candidate) pairing.
///
/// Both sides condition on (outfit item category, candidate category); the
/// candidate therefore has one embedding per outfit item pairing. Honors the
/// triple-level order flip.
pub(crate) fn pair_embeddings(
    params: &ModelParams,
    outfit_item: &Item,
    candidate: &Item,
    flipped: bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (source, target) = orient(outfit_item.category, candidate.category, flipped);
    let xo = params.project(&outfit_item.raw_feature)?;
    let xc = params.project(&candidate.raw_feature)?;
    let fo = params.embed(&xo, source, target)?;
    let fc = params.embed(&xc, source, target)?;
    Ok((fo, fc))
}

#[inline]
pub(crate) fn orient(
    source: CategoryId,
    target: CategoryId,
    flipped: bool,
) -> (CategoryId, CategoryId) {
    if flipped {
        (target, source)
    } else {
        (source, target)
    }
}

/// Mean pairwise distance from a candidate item to the entire outfit.
pub fn outfit_distance(
    params: &ModelParams,
    outfit: &[Item],
    candidate: &Item,
    cfg: &LossConfig,
) -> Result<f64> {
    outfit_distance_oriented(params, outfit, candidate, cfg, false)
}

pub(crate) fn outfit_distance_oriented(
    params: &ModelParams,
    outfit: &[Item],
    candidate: &Item,
    cfg: &LossConfig,
    flipped: bool,
) -> Result<f64> {
    if outfit.is_empty() {
        return Err(Error::EmptyInput("outfit"));
    }
    let mut sum = 0.0;
    for item in outfit {
        let (fo, fc) = pair_embeddings(params, item, candidate, flipped)?;
        sum += pair_distance(&fo, &fc, cfg)?;
    }
    Ok(sum / outfit.len() as f64)
}

/// Collapse per-negative distances into one negative distance.
pub fn aggregate_negatives(distances: &[f64], cfg: &LossConfig) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::EmptyInput("negative distances"));
    }
    Ok(match cfg.aggregation {
        Aggregation::Min => distances.iter().copied().fold(f64::INFINITY, f64::min),
        Aggregation::Average => distances.iter().sum::<f64>() / distances.len() as f64,
    })
}

/// Outfit ranking hinge loss: `max(0, D_p - D_N + margin)`.
pub fn outfit_ranking_loss(
    params: &ModelParams,
    triple: &TrainingTriple,
    cfg: &LossConfig,
) -> Result<f64> {
    triple.validate()?;
    let d_pos = outfit_distance_oriented(params, &triple.outfit, &triple.positive, cfg, triple.order_flipped)?;
    let mut d_negs = Vec::with_capacity(triple.negatives.len());
    for neg in &triple.negatives {
        d_negs.push(outfit_distance_oriented(params, &triple.outfit, neg, cfg, triple.order_flipped)?);
    }
    let d_neg = aggregate_negatives(&d_negs, cfg)?;
    let raw = d_pos - d_neg + cfg.margin;
    Ok(if raw > 0.0 { raw } else { 0.0 })
}

/// Plain triplet loss baseline: `max(0, d(f_a, f_p) - d(f_a, f_n) + margin)`
/// with every embedding conditioned on (anchor category, positive category).
pub fn triplet_loss(
    params: &ModelParams,
    anchor: &Item,
    positive: &Item,
    negative: &Item,
    cfg: &LossConfig,
) -> Result<f64> {
    if negative.category != positive.category {
        return Err(Error::InvalidInput(format!(
            "triplet negative {} category {} differs from positive {} category {}",
            negative.id, negative.category, positive.id, positive.category
        )));
    }
    let (fa_p, fp) = pair_embeddings(params, anchor, positive, false)?;
    let (fa_n, fn_) = pair_embeddings(params, anchor, negative, false)?;
    let d_ap = pair_distance(&fa_p, &fp, cfg)?;
    let d_an = pair_distance(&fa_n, &fn_, cfg)?;
    let raw = d_ap - d_an + cfg.margin;
    Ok(if raw > 0.0 { raw } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelParams};
    use crate::rng::Rng;
    use alloc::vec;

    fn cfg() -> LossConfig {
        LossConfig::default()
    }

    fn model(seed: u64) -> ModelParams {
        let mc = ModelConfig {
            feature_dim: 4,
            num_subspaces: 2,
            num_categories: 4,
            attention_hidden: 3,
            l2_normalize: false,
            learn_projector: false,
            rng_seed: seed,
        };
        ModelParams::init(mc, None).unwrap()
    }

    fn rand_item(rng: &mut Rng, id: u64, cat: usize, d: usize) -> Item {
        Item::new(id, cat, (0..d).map(|_| rng.next_gaussian()).collect())
    }

    #[test]
    fn identical_points_have_zero_distance() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(pair_distance(&a, &a, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn three_four_five() {
        let a = [0.0, 0.0];
        let b = [3.0, 4.0];
        assert_eq!(pair_distance(&a, &b, &cfg()).unwrap(), 5.0);
        let sq = LossConfig { distance: DistanceKind::SquaredEuclidean, ..cfg() };
        assert_eq!(pair_distance(&a, &b, &sq).unwrap(), 25.0);
    }

    #[test]
    fn distance_matches_componentwise_oracle() {
        let mut rng = Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a: Vec<f64> = (0..8).map(|_| rng.next_gaussian()).collect();
            let b: Vec<f64> = (0..8).map(|_| rng.next_gaussian()).collect();
            let mut sum = 0.0;
            for j in 0..8 {
                sum += (a[j] - b[j]) * (a[j] - b[j]);
            }
            let d = pair_distance(&a, &b, &cfg()).unwrap();
            assert!((d - libm::sqrt(sum)).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_dimension_mismatch() {
        let err = pair_distance(&[1.0], &[1.0, 2.0], &cfg()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn aggregation_modes() {
        let ds = [0.4, 0.9, 0.2];
        let min = LossConfig { aggregation: Aggregation::Min, ..cfg() };
        let avg = LossConfig { aggregation: Aggregation::Average, ..cfg() };
        assert_eq!(aggregate_negatives(&ds, &min).unwrap(), 0.2);
        assert!((aggregate_negatives(&ds, &avg).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(aggregate_negatives(&[0.7], &min).unwrap(), 0.7);
        assert_eq!(aggregate_negatives(&[0.7], &avg).unwrap(), 0.7);
        assert!(aggregate_negatives(&[], &min).is_err());
    }

    #[test]
    fn single_item_outfit_distance_is_pair_distance() {
        let params = model(5);
        let mut rng = Rng::seed_from_u64(2);
        let o = rand_item(&mut rng, 1, 0, 4);
        let c = rand_item(&mut rng, 2, 1, 4);
        let d_outfit = outfit_distance(&params, core::slice::from_ref(&o), &c, &cfg()).unwrap();
        let (fo, fc) = pair_embeddings(&params, &o, &c, false).unwrap();
        let d_pair = pair_distance(&fo, &fc, &cfg()).unwrap();
        assert_eq!(d_outfit, d_pair);
    }

    #[test]
    fn identical_embeddings_give_zero_outfit_distance() {
        // Same feature and same category on both sides of every pair.
        let params = model(6);
        let item = rand_item(&mut Rng::seed_from_u64(3), 1, 2, 4);
        let outfit = vec![item.clone(), item.clone()];
        let d = outfit_distance(&params, &outfit, &item, &cfg()).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn outfit_distance_matches_bruteforce_composition() {
        let params = model(7);
        let mut rng = Rng::seed_from_u64(4);
        let outfit: Vec<Item> = (0..3).map(|i| rand_item(&mut rng, i, i as usize, 4)).collect();
        let cand = rand_item(&mut rng, 10, 3, 4);
        let got = outfit_distance(&params, &outfit, &cand, &cfg()).unwrap();

        // Oracle: explicit composition of embed + pair_distance.
        let mut sum = 0.0;
        for o in &outfit {
            let fo = params.embed_item(o, cand.category).unwrap();
            let fc = params
                .embed(&params.project(&cand.raw_feature).unwrap(), o.category, cand.category)
                .unwrap();
            sum += pair_distance(&fo, &fc, &cfg()).unwrap();
        }
        let expected = sum / 3.0;
        assert!((got - expected).abs() < 1e-15, "got {got} expected {expected}");
    }

    #[test]
    fn empty_outfit_rejected() {
        let params = model(8);
        let c = rand_item(&mut Rng::seed_from_u64(5), 1, 0, 4);
        assert!(matches!(outfit_distance(&params, &[], &c, &cfg()), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn ranking_loss_zero_when_margin_satisfied() {
        // D_p = 0 by construction (positive identical to sole outfit item,
        // same category), negatives far away.
        let params = model(9);
        let mut rng = Rng::seed_from_u64(6);
        let anchor = rand_item(&mut rng, 1, 1, 4);
        let mut far = rand_item(&mut rng, 2, 1, 4);
        for v in &mut far.raw_feature {
            *v += 100.0;
        }
        let triple = TrainingTriple::new(vec![anchor.clone()], anchor.clone(), vec![far]);
        let loss = outfit_ranking_loss(&params, &triple, &cfg()).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn ranking_loss_equals_margin_on_tie() {
        let params = model(10);
        let mut rng = Rng::seed_from_u64(7);
        let o = rand_item(&mut rng, 1, 0, 4);
        let p = rand_item(&mut rng, 2, 1, 4);
        // Negative identical to positive -> D_p == D_N bitwise.
        let mut n = p.clone();
        n.id = crate::model::ItemId(3);
        let triple = TrainingTriple::new(vec![o], p, vec![n]);
        let loss = outfit_ranking_loss(&params, &triple, &cfg()).unwrap();
        assert_eq!(loss, cfg().margin);
    }

    #[test]
    fn ranking_loss_matches_end_to_end_oracle() {
        // n=2, m_neg=2, k=2, d=2: recompute everything from raw tensors.
        let mc = ModelConfig {
            feature_dim: 2,
            num_subspaces: 2,
            num_categories: 3,
            attention_hidden: 2,
            l2_normalize: false,
            learn_projector: false,
            rng_seed: 42,
        };
        let params = ModelParams::init(mc.clone(), None).unwrap();
        let mut rng = Rng::seed_from_u64(8);
        let outfit: Vec<Item> = vec![rand_item(&mut rng, 1, 0, 2), rand_item(&mut rng, 2, 1, 2)];
        let positive = rand_item(&mut rng, 3, 2, 2);
        let negatives: Vec<Item> = vec![rand_item(&mut rng, 4, 2, 2), rand_item(&mut rng, 5, 2, 2)];

        let psi = |item: &Item, s: usize, t: usize| -> Vec<f64> {
            let w = params.attention_weights(CategoryId(s), CategoryId(t)).unwrap();
            let d = mc.feature_dim;
            let mut f = vec![0.0; d];
            for i in 0..mc.num_subspaces {
                for j in 0..d {
                    f[j] += w[i] * item.raw_feature[j] * params.masks[i * d + j];
                }
            }
            f
        };
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
        };
        let d_out = |cand: &Item| -> f64 {
            let mut sum = 0.0;
            for o in &outfit {
                let fo = psi(o, o.category.0, cand.category.0);
                let fc = psi(cand, o.category.0, cand.category.0);
                sum += dist(&fo, &fc);
            }
            sum / outfit.len() as f64
        };
        let d_p = d_out(&positive);
        let d_n = d_out(&negatives[0]).min(d_out(&negatives[1]));
        let expected = (d_p - d_n + 0.3).max(0.0);

        let triple = TrainingTriple::new(outfit.clone(), positive, negatives);
        let got = outfit_ranking_loss(&params, &triple, &cfg()).unwrap();
        assert!((got - expected).abs() < 1e-12, "got {got} expected {expected}");
    }

    #[test]
    fn triplet_equals_single_negative_ranking_loss_bitwise() {
        let params = model(11);
        let mut rng = Rng::seed_from_u64(9);
        for trial in 0..20 {
            let anchor = rand_item(&mut rng, 1, trial % 4, 4);
            let positive = rand_item(&mut rng, 2, (trial + 1) % 4, 4);
            let mut negative = rand_item(&mut rng, 3, 0, 4);
            negative.category = positive.category;
            for agg in [Aggregation::Min, Aggregation::Average] {
                let lc = LossConfig { aggregation: agg, ..cfg() };
                let triple = TrainingTriple::new(
                    vec![anchor.clone()],
                    positive.clone(),
                    vec![negative.clone()],
                );
                let a = outfit_ranking_loss(&params, &triple, &lc).unwrap();
                let b = triplet_loss(&params, &anchor, &positive, &negative, &lc).unwrap();
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn triplet_tie_and_dominance() {
        let params = model(12);
        let mut rng = Rng::seed_from_u64(10);
        let anchor = rand_item(&mut rng, 1, 0, 4);
        let positive = rand_item(&mut rng, 2, 1, 4);
        // Identical positive and negative -> loss == margin.
        let mut tie = positive.clone();
        tie.id = crate::model::ItemId(3);
        let loss = triplet_loss(&params, &anchor, &positive, &tie, &cfg()).unwrap();
        assert_eq!(loss, cfg().margin);

        // Positive identical to anchor embeddings (same item, same category),
        // negative far -> loss 0.
        let mut p2 = anchor.clone();
        p2.id = crate::model::ItemId(4);
        let mut far = anchor.clone();
        far.id = crate::model::ItemId(5);
        for v in &mut far.raw_feature {
            *v += 50.0;
        }
        let loss = triplet_loss(&params, &anchor, &p2, &far, &cfg()).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn triplet_category_mismatch_rejected() {
        let params = model(13);
        let mut rng = Rng::seed_from_u64(11);
        let a = rand_item(&mut rng, 1, 0, 4);
        let p = rand_item(&mut rng, 2, 1, 4);
        let n = rand_item(&mut rng, 3, 2, 4);
        assert!(triplet_loss(&params, &a, &p, &n, &cfg()).is_err());
    }

    #[test]
    fn min_aggregation_never_below_average_loss() {
        let params = model(14);
        let mut rng = Rng::seed_from_u64(12);
        for _ in 0..10 {
            let outfit: Vec<Item> =
                (0..2).map(|i| rand_item(&mut rng, i, i as usize, 4)).collect();
            let positive = rand_item(&mut rng, 10, 2, 4);
            let negatives: Vec<Item> =
                (0..4).map(|i| rand_item(&mut rng, 20 + i, 2, 4)).collect();
            let triple = TrainingTriple::new(outfit, positive, negatives);
            let l_min = outfit_ranking_loss(
                &params,
                &triple,
                &LossConfig { aggregation: Aggregation::Min, ..cfg() },
            )
            .unwrap();
            let l_avg = outfit_ranking_loss(
                &params,
                &triple,
                &LossConfig { aggregation: Aggregation::Average, ..cfg() },
            )
            .unwrap();
            assert!(l_min >= l_avg);
        }
    }
}
