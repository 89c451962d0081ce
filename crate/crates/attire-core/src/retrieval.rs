//! Query-time pipeline: per-query-item embeddings, per-item KNN, average
//! fusion, FITB answering, and outfit compatibility scoring.
//!
//! Exact retrieval scores every candidate of the target bucket with the mean
//! per-query-item distance, which reproduces the outfit distance bit for
//! bit. Approximate retrieval unions per-item graph shortlists and
//! exact-rescores the union.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::index::{CategoryIndex, SearchMode};
use crate::loss::{outfit_distance, pair_distance, LossConfig};
use crate::model::{CategoryId, Item, ItemId, ModelParams};

/// A retrieval request: partial outfit, missing category, result count.
#[derive(Debug, Clone)]
pub struct Query {
    pub outfit: Vec<Item>,
    pub target_category: CategoryId,
    pub k_results: usize,
}

/// Ranked retrieval output: ascending fused distance, unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub entries: Vec<(ItemId, f64)>,
}

/// Per-item shortlist depth multiplier for approximate retrieval.
pub const APPROX_SHORTLIST_FACTOR: usize = 10;

/// Retrieve the `k_results` most compatible items of the target category.
///
/// Each outfit item contributes the distance between its query-side
/// embedding (toward the target category) and the candidate's indexed
/// embedding for that item's category; candidate scores fuse by averaging in
/// outfit order. Ties break by ascending item id.
pub fn retrieve(
    params: &ModelParams,
    index: &CategoryIndex,
    query: &Query,
    mode: SearchMode,
) -> Result<RankedResult> {
    if query.outfit.is_empty() {
        return Err(Error::EmptyInput("query outfit"));
    }
    if query.k_results == 0 {
        return Err(Error::InvalidInput(format!("k_results must be positive")));
    }
    if params.checksum() != index.model_checksum() {
        return Err(Error::InvalidInput(format!(
            "index was built from different parameters (checksum {:#x} vs {:#x})",
            index.model_checksum(),
            params.checksum()
        )));
    }
    let target = query.target_category;

    // Query-side embeddings and their buckets, one per outfit item.
    let mut embeddings = Vec::with_capacity(query.outfit.len());
    for item in &query.outfit {
        let emb = params.embed_item(item, target)?;
        let bucket = index.bucket(target, item.category)?;
        if bucket.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no indexed items of category {} for query category {}",
                target, item.category
            )));
        }
        embeddings.push((emb, bucket));
    }

    let cfg = LossConfig { distance: index.distance(), ..LossConfig::default() };
    let n = query.outfit.len() as f64;
    let fuse = |id: ItemId| -> Result<f64> {
        let mut sum = 0.0;
        for (emb, bucket) in &embeddings {
            let pos = bucket.find(id).ok_or_else(|| {
                Error::Integrity(format!("item {id} missing from a sibling bucket"))
            })?;
            sum += pair_distance(emb, bucket.vector(pos), &cfg)?;
        }
        Ok(sum / n)
    };

    let candidates: Vec<ItemId> = match mode {
        SearchMode::Exact => embeddings[0].1.ids().to_vec(),
        SearchMode::Approx => {
            let depth = query.k_results.saturating_mul(APPROX_SHORTLIST_FACTOR);
            let mut union = BTreeSet::new();
            for (item, (emb, _)) in query.outfit.iter().zip(&embeddings) {
                let shortlist = index.knn(target, item.category, emb, depth, SearchMode::Approx)?;
                union.extend(shortlist.into_iter().map(|(id, _)| id));
            }
            union.into_iter().collect()
        }
    };

    let mut scored = Vec::with_capacity(candidates.len());
    for id in candidates {
        scored.push((id, fuse(id)?));
    }
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(query.k_results);
    Ok(RankedResult { entries: scored })
}

/// Pick the most compatible of the candidates: argmin outfit distance, first
/// index on ties.
pub fn fitb_answer(
    params: &ModelParams,
    outfit: &[Item],
    candidates: &[Item],
    cfg: &LossConfig,
) -> Result<usize> {
    if outfit.is_empty() {
        return Err(Error::EmptyInput("fitb outfit"));
    }
    if candidates.is_empty() {
        return Err(Error::EmptyInput("fitb candidates"));
    }
    let category = candidates[0].category;
    for cand in candidates {
        if cand.category != category {
            return Err(Error::InvalidInput(format!(
                "fitb candidates mix categories {} and {}",
                category, cand.category
            )));
        }
    }
    let mut best = 0;
    let mut best_dist = outfit_distance(params, outfit, &candidates[0], cfg)?;
    for (i, cand) in candidates.iter().enumerate().skip(1) {
        let d = outfit_distance(params, outfit, cand, cfg)?;
        if d < best_dist {
            best = i;
            best_dist = d;
        }
    }
    Ok(best)
}

/// Outfit compatibility score: negative mean over all unordered item pairs
/// of the category-conditioned pairwise distance. Higher is more compatible;
/// zero is the maximum.
pub fn compatibility_score(params: &ModelParams, outfit: &[Item], cfg: &LossConfig) -> Result<f64> {
    if outfit.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "compatibility needs at least 2 items, got {}",
            outfit.len()
        )));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..outfit.len() {
        for j in i + 1..outfit.len() {
            let a = &outfit[i];
            let b = &outfit[j];
            let fa = params.embed_item(a, b.category)?;
            let fb = params.embed_item(b, a.category)?;
            sum += pair_distance(&fa, &fb, cfg)?;
            pairs += 1;
        }
    }
    Ok(-(sum / pairs as f64))
}
