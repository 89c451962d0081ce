//! Evaluation protocols: compatibility AUC, FITB accuracy, recall@k, and
//! benchmark construction.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::index::CategoryIndex;
use crate::loss::{pair_distance, LossConfig};
use crate::model::{CategoryId, Item, ItemId, ModelParams};
use crate::retrieval::{compatibility_score, fitb_answer};
use crate::rng::Rng;

// ---------------------------------------------------------------------------
// AUC
// ---------------------------------------------------------------------------

/// Probability that a random positive outscores a random negative, ties
/// counted half (the Mann-Whitney formulation). Computed rank-based in
/// `O(n log n)` with midranks for tied groups.
pub fn auc(scores_pos: &[f64], scores_neg: &[f64]) -> Result<f64> {
    if scores_pos.is_empty() {
        return Err(Error::EmptyInput("positive scores"));
    }
    if scores_neg.is_empty() {
        return Err(Error::EmptyInput("negative scores"));
    }
    if !scores_pos.iter().chain(scores_neg).all(|v| v.is_finite()) {
        return Err(Error::NonFinite { context: "auc scores" });
    }
    let mut all: Vec<(f64, bool)> = Vec::with_capacity(scores_pos.len() + scores_neg.len());
    all.extend(scores_pos.iter().map(|&s| (s, true)));
    all.extend(scores_neg.iter().map(|&s| (s, false)));
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    let n = all.len();
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && all[j].0 == all[i].0 {
            j += 1;
        }
        // 1-based midrank of the tied group [i, j).
        let midrank = (i + 1 + j) as f64 / 2.0;
        for entry in &all[i..j] {
            if entry.1 {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let np = scores_pos.len() as f64;
    let nn = scores_neg.len() as f64;
    let u = rank_sum_pos - np * (np + 1.0) / 2.0;
    Ok(u / (np * nn))
}

// ---------------------------------------------------------------------------
// FITB
// ---------------------------------------------------------------------------

/// One fill-in-the-blank question.
#[derive(Debug, Clone)]
pub struct FitbQuestion {
    pub outfit: Vec<Item>,
    pub candidates: Vec<Item>,
    pub positive_index: usize,
}

/// FITB evaluation summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FitbOutcome {
    pub correct: usize,
    pub answered: usize,
    /// Questions dropped for having no outfit or no candidates.
    pub skipped: usize,
}

impl FitbOutcome {
    pub fn accuracy(&self) -> f64 {
        if self.answered == 0 {
            0.0
        } else {
            self.correct as f64 / self.answered as f64
        }
    }
}

/// Fraction of questions whose positive candidate is chosen.
///
/// Questions with an empty outfit or empty candidate list are filtered and
/// counted in `skipped`; structurally malformed questions (bad positive
/// index, fewer than two candidates) are errors naming the question.
pub fn fitb_accuracy(
    params: &ModelParams,
    questions: &[FitbQuestion],
    cfg: &LossConfig,
) -> Result<FitbOutcome> {
    let mut outcome = FitbOutcome { correct: 0, answered: 0, skipped: 0 };
    for (qi, q) in questions.iter().enumerate() {
        if q.outfit.is_empty() || q.candidates.is_empty() {
            outcome.skipped += 1;
            continue;
        }
        if q.candidates.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "fitb question {qi} has {} candidate(s), need at least 2",
                q.candidates.len()
            )));
        }
        if q.positive_index >= q.candidates.len() {
            return Err(Error::InvalidInput(format!(
                "fitb question {qi} positive index {} out of range",
                q.positive_index
            )));
        }
        let chosen = fitb_answer(params, &q.outfit, &q.candidates, cfg)?;
        outcome.answered += 1;
        if chosen == q.positive_index {
            outcome.correct += 1;
        }
    }
    Ok(outcome)
}

/// Build FITB questions from a split: hold one item out of each outfit and
/// offer it among same-category distractors drawn from other outfits of the
/// split. Outfits that cannot produce a full question are skipped (second
/// return value).
pub fn build_fitb_questions(
    dataset: &Dataset,
    split: Split,
    num_candidates: usize,
    rng: &mut Rng,
) -> (Vec<FitbQuestion>, usize) {
    let mut questions = Vec::new();
    let mut skipped = 0;
    for &oi in &dataset.outfit_indices(split) {
        let outfit_def = &dataset.outfits()[oi];
        let n = outfit_def.item_indices.len();
        if n < 2 {
            skipped += 1;
            continue;
        }
        let held_slot = rng.below(n);
        let positive_idx = outfit_def.item_indices[held_slot];
        let positive = dataset.item(positive_idx);
        let distractor_pool: Vec<usize> = dataset
            .category_items(positive.category)
            .iter()
            .copied()
            .filter(|i| !outfit_def.item_indices.contains(i))
            .collect();
        if distractor_pool.len() < num_candidates - 1 {
            skipped += 1;
            continue;
        }
        let picks = rng.sample_indices(distractor_pool.len(), num_candidates - 1);
        let mut candidates: Vec<Item> =
            picks.into_iter().map(|p| dataset.item(distractor_pool[p]).clone()).collect();
        let positive_index = rng.below(num_candidates);
        candidates.insert(positive_index, positive.clone());

        let outfit: Vec<Item> = outfit_def
            .item_indices
            .iter()
            .enumerate()
            .filter(|(slot, _)| *slot != held_slot)
            .map(|(_, &idx)| dataset.item(idx).clone())
            .collect();
        questions.push(FitbQuestion { outfit, candidates, positive_index });
    }
    (questions, skipped)
}

// ---------------------------------------------------------------------------
// Retrieval benchmark and recall@k
// ---------------------------------------------------------------------------

/// One retrieval query: partial outfit, the held-out positive, and its
/// fixed-size candidate pool.
#[derive(Debug, Clone)]
pub struct BenchmarkQuery {
    pub outfit: Vec<Item>,
    pub positive: ItemId,
    pub category: CategoryId,
    pub pool: Vec<ItemId>,
}

/// Retrieval benchmark: equal-size per-query pools.
#[derive(Debug, Clone)]
pub struct RetrievalBenchmark {
    pub pool_size: usize,
    pub queries: Vec<BenchmarkQuery>,
}

/// Benchmark construction diagnostics.
#[derive(Debug, Clone, Default)]
pub struct BenchmarkWarnings {
    /// Categories lacking enough items for a pool, with the outfit count
    /// they cost.
    pub skipped_categories: Vec<(CategoryId, usize)>,
    /// Outfits skipped for size reasons.
    pub skipped_outfits: usize,
}

/// Build the retrieval benchmark from the test split.
///
/// Every test outfit with at least two items becomes a query: one item is
/// held out as the positive, and its pool is the positive plus `P - 1`
/// same-category distractors drawn first from test items, then train items.
/// Categories that cannot fill a pool are skipped with a warning.
pub fn build_retrieval_benchmark(
    dataset: &Dataset,
    pool_size: usize,
    rng: &mut Rng,
) -> Result<(RetrievalBenchmark, BenchmarkWarnings)> {
    if pool_size < 2 {
        return Err(Error::InvalidInput(format!("pool_size must be at least 2")));
    }
    let mut warnings = BenchmarkWarnings::default();
    let mut skipped_by_category: BTreeMap<usize, usize> = BTreeMap::new();

    // Distractor priority per category: test items first, then train.
    let mut test_items: Vec<Vec<usize>> = alloc::vec![Vec::new(); dataset.num_categories()];
    let mut train_items: Vec<Vec<usize>> = alloc::vec![Vec::new(); dataset.num_categories()];
    for outfit in dataset.outfits() {
        let target = match outfit.split {
            Split::Test => &mut test_items,
            Split::Train => &mut train_items,
            Split::Val => continue,
        };
        for &idx in &outfit.item_indices {
            target[dataset.item(idx).category.0].push(idx);
        }
    }
    for per_cat in [&mut test_items, &mut train_items] {
        for list in per_cat.iter_mut() {
            list.sort_unstable();
            list.dedup();
        }
    }

    let mut queries = Vec::new();
    for &oi in &dataset.outfit_indices(Split::Test) {
        let outfit_def = &dataset.outfits()[oi];
        let n = outfit_def.item_indices.len();
        if n < 2 {
            warnings.skipped_outfits += 1;
            continue;
        }
        let held_slot = rng.below(n);
        let positive_idx = outfit_def.item_indices[held_slot];
        let positive = dataset.item(positive_idx);
        let cat = positive.category;

        let exclude =
            |idx: &usize| *idx != positive_idx && !outfit_def.item_indices.contains(idx);
        let test_pool: Vec<usize> =
            test_items[cat.0].iter().copied().filter(exclude).collect();
        let train_pool: Vec<usize> =
            train_items[cat.0].iter().copied().filter(|i| exclude(i) && !test_pool.contains(i)).collect();
        if test_pool.len() + train_pool.len() < pool_size - 1 {
            *skipped_by_category.entry(cat.0).or_insert(0) += 1;
            continue;
        }
        let mut pool: Vec<ItemId> = Vec::with_capacity(pool_size);
        pool.push(positive.id);
        let take_test = (pool_size - 1).min(test_pool.len());
        for p in rng.sample_indices(test_pool.len(), take_test) {
            pool.push(dataset.item(test_pool[p]).id);
        }
        let rest = pool_size - 1 - take_test;
        for p in rng.sample_indices(train_pool.len(), rest) {
            pool.push(dataset.item(train_pool[p]).id);
        }

        let outfit: Vec<Item> = outfit_def
            .item_indices
            .iter()
            .enumerate()
            .filter(|(slot, _)| *slot != held_slot)
            .map(|(_, &idx)| dataset.item(idx).clone())
            .collect();
        queries.push(BenchmarkQuery { outfit, positive: positive.id, category: cat, pool });
    }
    warnings.skipped_categories =
        skipped_by_category.into_iter().map(|(c, n)| (CategoryId(c), n)).collect();
    Ok((RetrievalBenchmark { pool_size, queries }, warnings))
}

/// Recall table: per-category recall at each requested k, plus the mean over
/// categories.
#[derive(Debug, Clone)]
pub struct RecallTable {
    pub ks: Vec<usize>,
    pub per_category: Vec<CategoryRecall>,
    /// Mean of per-category recalls (mean of means).
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CategoryRecall {
    pub category: CategoryId,
    pub queries: usize,
    pub recalls: Vec<f64>,
}

/// Rank every query's pool by exact fused distance and report the fraction
/// of queries whose positive lands in the top k, per category and averaged
/// over categories.
pub fn recall_at_k(
    benchmark: &RetrievalBenchmark,
    params: &ModelParams,
    index: &CategoryIndex,
    ks: &[usize],
) -> Result<RecallTable> {
    if benchmark.queries.is_empty() {
        return Err(Error::EmptyInput("benchmark queries"));
    }
    if ks.is_empty() {
        return Err(Error::EmptyInput("ks"));
    }
    if params.checksum() != index.model_checksum() {
        return Err(Error::InvalidInput(format!(
            "index was built from different parameters"
        )));
    }
    let cfg = LossConfig { distance: index.distance(), ..LossConfig::default() };
    let mut hits: BTreeMap<usize, (usize, Vec<usize>)> = BTreeMap::new();

    for (qi, query) in benchmark.queries.iter().enumerate() {
        if !query.pool.contains(&query.positive) {
            return Err(Error::InvalidInput(format!(
                "benchmark query {qi}: positive {} missing from its pool",
                query.positive
            )));
        }
        // Query-side embeddings toward the positive's category.
        let mut embeddings = Vec::with_capacity(query.outfit.len());
        for item in &query.outfit {
            let emb = params.embed_item(item, query.category)?;
            let bucket = index.bucket(query.category, item.category)?;
            embeddings.push((emb, bucket));
        }
        let n = query.outfit.len() as f64;
        let fused = |id: ItemId| -> Result<f64> {
            let mut sum = 0.0;
            for (emb, bucket) in &embeddings {
                let pos = bucket.find(id).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "benchmark query {qi}: pool item {id} is not indexed"
                    ))
                })?;
                sum += pair_distance(emb, bucket.vector(pos), &cfg)?;
            }
            Ok(sum / n)
        };
        let positive_score = fused(query.positive)?;
        // Rank = 1 + number of pool entries strictly better under the
        // (distance, id) order.
        let mut rank = 1usize;
        for &cand in &query.pool {
            if cand == query.positive {
                continue;
            }
            let s = fused(cand)?;
            if s < positive_score || (s == positive_score && cand < query.positive) {
                rank += 1;
            }
        }
        let entry = hits.entry(query.category.0).or_insert_with(|| (0, alloc::vec![0; ks.len()]));
        entry.0 += 1;
        for (ki, &k) in ks.iter().enumerate() {
            if rank <= k {
                entry.1[ki] += 1;
            }
        }
    }

    let mut per_category = Vec::with_capacity(hits.len());
    let mut mean = alloc::vec![0.0; ks.len()];
    for (cat, (count, hit_counts)) in &hits {
        let recalls: Vec<f64> =
            hit_counts.iter().map(|&h| h as f64 / *count as f64).collect();
        for (m, r) in mean.iter_mut().zip(&recalls) {
            *m += r;
        }
        per_category.push(CategoryRecall {
            category: CategoryId(*cat),
            queries: *count,
            recalls,
        });
    }
    let cats = per_category.len() as f64;
    for m in &mut mean {
        *m /= cats;
    }
    Ok(RecallTable { ks: ks.to_vec(), per_category, mean })
}

// ---------------------------------------------------------------------------
// Compatibility AUC over a split
// ---------------------------------------------------------------------------

/// Synthetic compatibility-AUC protocol: real outfits of the split are the
/// positives; each contributes one negative outfit built by replacing every
/// item with a random same-category item from the split. Scores come from
/// [`compatibility_score`].
pub fn compatibility_auc(
    params: &ModelParams,
    dataset: &Dataset,
    split: Split,
    cfg: &LossConfig,
    rng: &mut Rng,
) -> Result<f64> {
    let mut split_items: Vec<Vec<usize>> = alloc::vec![Vec::new(); dataset.num_categories()];
    for &oi in &dataset.outfit_indices(split) {
        for &idx in &dataset.outfits()[oi].item_indices {
            split_items[dataset.item(idx).category.0].push(idx);
        }
    }
    for list in &mut split_items {
        list.sort_unstable();
        list.dedup();
    }

    let mut pos_scores = Vec::new();
    let mut neg_scores = Vec::new();
    for &oi in &dataset.outfit_indices(split) {
        let outfit_def = &dataset.outfits()[oi];
        if outfit_def.item_indices.len() < 2 {
            continue;
        }
        let outfit = dataset.outfit_items(outfit_def);
        pos_scores.push(compatibility_score(params, &outfit, cfg)?);

        let negative: Vec<Item> = outfit_def
            .item_indices
            .iter()
            .map(|&idx| {
                let original = dataset.item(idx);
                let same_cat: Vec<usize> = split_items[original.category.0]
                    .iter()
                    .copied()
                    .filter(|&i| i != idx)
                    .collect();
                if same_cat.is_empty() {
                    original.clone()
                } else {
                    dataset.item(same_cat[rng.below(same_cat.len())]).clone()
                }
            })
            .collect();
        neg_scores.push(compatibility_score(params, &negative, cfg)?);
    }
    auc(&pos_scores, &neg_scores)
}
