//! Category-enumerated embedding index.
//!
//! Every item is embedded once per possible query category: the entry for
//! item `I` (category `t`) and query category `q` is
//! `embed(project(raw_I), source = q, target = t)`, stored in bucket
//! `(t, q)`. A query item of category `q` looking for category `t` reads
//! bucket `(t, q)`, so query-time attention conditioning is a bucket lookup.
//! The index therefore holds exactly `C` entries per item.
//!
//! Exact KNN is a bounded-heap scan; approximate KNN runs best-first search
//! over a navigable-small-world graph built per bucket. Graph construction
//! uses no randomness, so rebuilding from the stored vectors reproduces
//! queries exactly.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::loss::{pair_distance, DistanceKind, LossConfig};
use crate::model::{CategoryId, Item, ItemId, ModelParams};

/// Exact or graph-approximate search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    Exact,
    Approx,
}

/// Small-world graph parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NswConfig {
    /// Links added per inserted node.
    pub max_neighbors: usize,
    /// Beam width during construction.
    pub ef_construction: usize,
    /// Beam width during search (raised to `k` when smaller).
    pub ef_search: usize,
}

impl Default for NswConfig {
    fn default() -> Self {
        NswConfig { max_neighbors: 16, ef_construction: 100, ef_search: 120 }
    }
}

/// One `(item_category, query_category)` bucket: ids in insertion order and
/// their embeddings, plus the optional search graph.
#[derive(Debug, Clone)]
pub struct Bucket {
    ids: Vec<ItemId>,
    vectors: Vec<f64>,
    dim: usize,
    /// Positions sorted by item id, for id lookups.
    by_id: Vec<u32>,
    graph: Option<NswGraph>,
}

impl Bucket {
    fn new(dim: usize) -> Self {
        Bucket { ids: Vec::new(), vectors: Vec::new(), dim, by_id: Vec::new(), graph: None }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, pos: usize) -> ItemId {
        self.ids[pos]
    }

    pub fn ids(&self) -> &[ItemId] {
        &self.ids
    }

    pub fn vector(&self, pos: usize) -> &[f64] {
        &self.vectors[pos * self.dim..(pos + 1) * self.dim]
    }

    /// Position of an item id, if present.
    pub fn find(&self, id: ItemId) -> Option<usize> {
        self.by_id
            .binary_search_by(|&p| self.ids[p as usize].cmp(&id))
            .ok()
            .map(|i| self.by_id[i] as usize)
    }

    fn finalize(&mut self, approx: Option<&NswConfig>, distance: DistanceKind) {
        let mut order: Vec<u32> = (0..self.ids.len() as u32).collect();
        order.sort_by_key(|&p| self.ids[p as usize]);
        self.by_id = order;
        if let Some(cfg) = approx {
            if !self.ids.is_empty() {
                self.graph = Some(NswGraph::build(&self.vectors, self.dim, distance, cfg));
            }
        }
    }
}

/// The full index: `C x C` buckets plus metadata tying it to the model.
#[derive(Debug, Clone)]
pub struct CategoryIndex {
    feature_dim: usize,
    num_categories: usize,
    distance: DistanceKind,
    model_checksum: u64,
    approx: Option<NswConfig>,
    buckets: Vec<Bucket>,
}

impl CategoryIndex {
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn distance(&self) -> DistanceKind {
        self.distance
    }

    pub fn model_checksum(&self) -> u64 {
        self.model_checksum
    }

    pub fn approx_config(&self) -> Option<NswConfig> {
        self.approx
    }

    /// Total entry count (`C x |items|` after a full build).
    pub fn num_entries(&self) -> usize {
        self.buckets.iter().map(Bucket::len).sum()
    }

    /// Bucket holding items of `item_category` embedded for queries of
    /// `query_category`.
    pub fn bucket(&self, item_category: CategoryId, query_category: CategoryId) -> Result<&Bucket> {
        if item_category.0 >= self.num_categories {
            return Err(Error::CategoryOutOfRange {
                index: item_category.0,
                num_categories: self.num_categories,
            });
        }
        if query_category.0 >= self.num_categories {
            return Err(Error::CategoryOutOfRange {
                index: query_category.0,
                num_categories: self.num_categories,
            });
        }
        Ok(&self.buckets[item_category.0 * self.num_categories + query_category.0])
    }

    /// K nearest entries of a bucket to `query`, ranked by distance with
    /// ties broken by ascending item id.
    pub fn knn(
        &self,
        item_category: CategoryId,
        query_category: CategoryId,
        query: &[f64],
        k_results: usize,
        mode: SearchMode,
    ) -> Result<Vec<(ItemId, f64)>> {
        if k_results == 0 {
            return Err(Error::InvalidInput(format!("k_results must be positive")));
        }
        if query.len() != self.feature_dim {
            return Err(Error::DimensionMismatch {
                context: "knn query",
                expected: self.feature_dim,
                actual: query.len(),
            });
        }
        let bucket = self.bucket(item_category, query_category)?;
        if bucket.is_empty() {
            return Err(Error::EmptyInput("index bucket"));
        }
        let cfg = LossConfig { distance: self.distance, ..LossConfig::default() };
        match mode {
            SearchMode::Exact => {
                // Bounded max-heap keeps the k best; the brute-force oracle
                // in the tests full-sorts instead.
                let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k_results + 1);
                for pos in 0..bucket.len() {
                    let dist = pair_distance(query, bucket.vector(pos), &cfg)?;
                    heap.push(HeapEntry { dist, id: bucket.id(pos) });
                    if heap.len() > k_results {
                        heap.pop();
                    }
                }
                let mut out: Vec<(ItemId, f64)> =
                    heap.into_iter().map(|e| (e.id, e.dist)).collect();
                out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
                Ok(out)
            }
            SearchMode::Approx => {
                let graph = bucket.graph.as_ref().ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "index was built without approximate search structures"
                    ))
                })?;
                let nsw_cfg = self.approx.expect("graph implies config");
                let ef = nsw_cfg.ef_search.max(k_results);
                let found = graph.search(&self.distance, bucket, query, ef)?;
                let mut out: Vec<(ItemId, f64)> = found
                    .into_iter()
                    .map(|(pos, dist)| (bucket.id(pos), dist))
                    .collect();
                out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
                out.truncate(k_results);
                Ok(out)
            }
        }
    }
}

/// Build the index: `C` entries per item, one per possible query category.
pub fn build_index(
    params: &ModelParams,
    items: &[Item],
    distance: DistanceKind,
    approx: Option<NswConfig>,
) -> Result<CategoryIndex> {
    if items.is_empty() {
        return Err(Error::EmptyInput("items"));
    }
    params.validate()?;
    let c = params.config.num_categories;
    let d = params.config.feature_dim;
    let mut buckets: Vec<Bucket> = (0..c * c).map(|_| Bucket::new(d)).collect();

    for item in items {
        if item.category.0 >= c {
            return Err(Error::CategoryOutOfRange {
                index: item.category.0,
                num_categories: c,
            });
        }
        let x = params.project(&item.raw_feature)?;
        for q in 0..c {
            // Same arithmetic as the candidate side of the outfit distance.
            let emb = params.embed(&x, CategoryId(q), item.category)?;
            let bucket = &mut buckets[item.category.0 * c + q];
            bucket.ids.push(item.id);
            bucket.vectors.extend_from_slice(&emb);
        }
    }
    for bucket in &mut buckets {
        bucket.finalize(approx.as_ref(), distance);
    }
    Ok(CategoryIndex {
        feature_dim: d,
        num_categories: c,
        distance,
        model_checksum: params.checksum(),
        approx,
        buckets,
    })
}

/// Reassemble an index from persisted parts (used by the file format; the
/// graphs are rebuilt deterministically).
pub fn assemble_index(
    feature_dim: usize,
    num_categories: usize,
    distance: DistanceKind,
    model_checksum: u64,
    approx: Option<NswConfig>,
    parts: Vec<(Vec<ItemId>, Vec<f64>)>,
) -> Result<CategoryIndex> {
    if parts.len() != num_categories * num_categories {
        return Err(Error::Integrity(format!(
            "expected {} buckets, found {}",
            num_categories * num_categories,
            parts.len()
        )));
    }
    let mut buckets = Vec::with_capacity(parts.len());
    for (ids, vectors) in parts {
        if vectors.len() != ids.len() * feature_dim {
            return Err(Error::Integrity(format!(
                "bucket vector block has {} values for {} ids of dim {}",
                vectors.len(),
                ids.len(),
                feature_dim
            )));
        }
        let mut bucket = Bucket { ids, vectors, dim: feature_dim, by_id: Vec::new(), graph: None };
        bucket.finalize(approx.as_ref(), distance);
        buckets.push(bucket);
    }
    Ok(CategoryIndex {
        feature_dim,
        num_categories,
        distance,
        model_checksum,
        approx,
        buckets,
    })
}

/// Max-heap entry ordered worst-first (largest distance on top, larger id
/// breaking ties so the smaller id survives eviction).
struct HeapEntry {
    dist: f64,
    id: ItemId,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.id == other.id
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.dist.total_cmp(&other.dist).then_with(|| self.id.cmp(&other.id))
    }
}

// ---------------------------------------------------------------------------
// Navigable small world graph
// ---------------------------------------------------------------------------

/// Single-layer small-world graph over bucket positions. Construction is
/// sequential insertion with beam search; no randomness anywhere.
#[derive(Debug, Clone)]
pub struct NswGraph {
    neighbors: Vec<Vec<u32>>,
}

/// Min-heap candidate (closest first) via reversed max-heap ordering.
struct Candidate {
    dist: f64,
    pos: u32,
}
impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.pos == other.pos
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.pos.cmp(&self.pos))
    }
}

impl NswGraph {
    fn build(vectors: &[f64], dim: usize, distance: DistanceKind, cfg: &NswConfig) -> Self {
        let n = vectors.len() / dim;
        let max_degree = cfg.max_neighbors * 2;
        let mut graph = NswGraph { neighbors: Vec::with_capacity(n) };
        let metric = LossConfig { distance, ..LossConfig::default() };
        for i in 0..n {
            if i == 0 {
                graph.neighbors.push(Vec::new());
                continue;
            }
            let query = &vectors[i * dim..(i + 1) * dim];
            let found = graph.search_over(vectors, dim, &metric, query, cfg.ef_construction, i);
            graph.neighbors.push(Vec::new());
            for &(pos, _) in found.iter().take(cfg.max_neighbors) {
                graph.neighbors[i].push(pos);
                graph.neighbors[pos as usize].push(i as u32);
                if graph.neighbors[pos as usize].len() > max_degree {
                    Self::prune(&mut graph.neighbors, pos as usize, vectors, dim, &metric, max_degree);
                }
            }
        }
        graph
    }

    /// Keep a node's closest `max_degree` links.
    fn prune(
        neighbors: &mut [Vec<u32>],
        node: usize,
        vectors: &[f64],
        dim: usize,
        metric: &LossConfig,
        max_degree: usize,
    ) {
        let own = &vectors[node * dim..(node + 1) * dim];
        let mut scored: Vec<(f64, u32)> = neighbors[node]
            .iter()
            .map(|&nb| {
                let v = &vectors[nb as usize * dim..(nb as usize + 1) * dim];
                (pair_distance(own, v, metric).expect("same dims"), nb)
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        scored.truncate(max_degree);
        neighbors[node] = scored.into_iter().map(|(_, nb)| nb).collect();
    }

    /// Best-first beam search over the first `limit` nodes.
    fn search_over(
        &self,
        vectors: &[f64],
        dim: usize,
        metric: &LossConfig,
        query: &[f64],
        ef: usize,
        limit: usize,
    ) -> Vec<(u32, f64)> {
        let entry = 0u32;
        let mut visited = vec![false; limit];
        visited[0] = true;
        let d0 = pair_distance(query, &vectors[..dim], metric).expect("same dims");
        let mut frontier: BinaryHeap<Candidate> = BinaryHeap::new();
        frontier.push(Candidate { dist: d0, pos: entry });
        // Worst-first heap of current best ef results.
        let mut best: BinaryHeap<HeapPos> = BinaryHeap::new();
        best.push(HeapPos { dist: d0, pos: entry });

        while let Some(cand) = frontier.pop() {
            let worst = best.peek().map(|b| b.dist).unwrap_or(f64::INFINITY);
            if best.len() >= ef && cand.dist > worst {
                break;
            }
            for &nb in &self.neighbors[cand.pos as usize] {
                let nb_us = nb as usize;
                if nb_us >= limit || visited[nb_us] {
                    continue;
                }
                visited[nb_us] = true;
                let d = pair_distance(query, &vectors[nb_us * dim..(nb_us + 1) * dim], metric)
                    .expect("same dims");
                let worst = best.peek().map(|b| b.dist).unwrap_or(f64::INFINITY);
                if best.len() < ef || d < worst {
                    frontier.push(Candidate { dist: d, pos: nb });
                    best.push(HeapPos { dist: d, pos: nb });
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        let mut out: Vec<(u32, f64)> = best.into_iter().map(|b| (b.pos, b.dist)).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    fn search(
        &self,
        distance: &DistanceKind,
        bucket: &Bucket,
        query: &[f64],
        ef: usize,
    ) -> Result<Vec<(usize, f64)>> {
        let metric = LossConfig { distance: *distance, ..LossConfig::default() };
        let found =
            self.search_over(&bucket.vectors, bucket.dim, &metric, query, ef, bucket.len());
        Ok(found.into_iter().map(|(pos, dist)| (pos as usize, dist)).collect())
    }
}

/// Worst-first heap entry over graph positions.
struct HeapPos {
    dist: f64,
    pos: u32,
}
impl PartialEq for HeapPos {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.pos == other.pos
    }
}
impl Eq for HeapPos {}
impl PartialOrd for HeapPos {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapPos {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.dist.total_cmp(&other.dist).then_with(|| self.pos.cmp(&other.pos))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelParams};
    use crate::rng::Rng;

    fn model(c: usize, d: usize) -> ModelParams {
        let mc = ModelConfig {
            feature_dim: d,
            num_subspaces: 2,
            num_categories: c,
            attention_hidden: 3,
            l2_normalize: false,
            learn_projector: false,
            rng_seed: 31,
        };
        ModelParams::init(mc, None).unwrap()
    }

    fn rand_items(rng: &mut Rng, n: usize, c: usize, d: usize) -> Vec<Item> {
        (0..n)
            .map(|i| Item::new(i as u64, i % c, (0..d).map(|_| rng.next_gaussian()).collect()))
            .collect()
    }

    #[test]
    fn entry_count_law() {
        let params = model(3, 4);
        let mut rng = Rng::seed_from_u64(1);
        let items = rand_items(&mut rng, 10, 3, 4);
        let index = build_index(&params, &items, DistanceKind::Euclidean, None).unwrap();
        assert_eq!(index.num_entries(), 3 * 10);
        // One item alone still gets C entries.
        let index = build_index(&params, &items[..1], DistanceKind::Euclidean, None).unwrap();
        assert_eq!(index.num_entries(), 3);
    }

    #[test]
    fn entries_match_fresh_embedding_calls() {
        let params = model(3, 4);
        let mut rng = Rng::seed_from_u64(2);
        let items = rand_items(&mut rng, 6, 3, 4);
        let index = build_index(&params, &items, DistanceKind::Euclidean, None).unwrap();
        for item in &items {
            for q in 0..3 {
                let bucket = index.bucket(item.category, CategoryId(q)).unwrap();
                let pos = bucket.find(item.id).unwrap();
                let x = params.project(&item.raw_feature).unwrap();
                let fresh = params.embed(&x, CategoryId(q), item.category).unwrap();
                assert_eq!(bucket.vector(pos), fresh.as_slice());
            }
        }
    }

    #[test]
    fn self_query_ranks_first_with_zero_distance() {
        let params = model(3, 4);
        let mut rng = Rng::seed_from_u64(3);
        let items = rand_items(&mut rng, 9, 3, 4);
        let index = build_index(&params, &items, DistanceKind::Euclidean, None).unwrap();
        let target = &items[0];
        let bucket_cat = target.category;
        let q = CategoryId(1);
        let bucket = index.bucket(bucket_cat, q).unwrap();
        let pos = bucket.find(target.id).unwrap();
        let stored = bucket.vector(pos).to_vec();
        let hits = index.knn(bucket_cat, q, &stored, 2, SearchMode::Exact).unwrap();
        assert_eq!(hits[0].0, target.id);
        assert_eq!(hits[0].1, 0.0);
    }

    #[test]
    fn oversized_k_returns_whole_bucket_sorted() {
        let params = model(2, 3);
        let mut rng = Rng::seed_from_u64(4);
        let items = rand_items(&mut rng, 8, 2, 3);
        let index = build_index(&params, &items, DistanceKind::Euclidean, None).unwrap();
        let query = [0.1, -0.2, 0.3];
        let hits = index.knn(CategoryId(0), CategoryId(1), &query, 100, SearchMode::Exact).unwrap();
        let bucket = index.bucket(CategoryId(0), CategoryId(1)).unwrap();
        assert_eq!(hits.len(), bucket.len());
        for w in hits.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn exact_knn_matches_full_sort_oracle() {
        let params = model(2, 6);
        let mut rng = Rng::seed_from_u64(5);
        let items = rand_items(&mut rng, 200, 2, 6);
        let index = build_index(&params, &items, DistanceKind::Euclidean, None).unwrap();
        let cfg = LossConfig::default();
        for trial in 0..10 {
            let query: Vec<f64> = (0..6).map(|_| rng.next_gaussian()).collect();
            let k = 1 + trial;
            let hits = index.knn(CategoryId(1), CategoryId(0), &query, k, SearchMode::Exact).unwrap();
            // Oracle: full sort of every (distance, id) pair.
            let bucket = index.bucket(CategoryId(1), CategoryId(0)).unwrap();
            let mut all: Vec<(f64, ItemId)> = (0..bucket.len())
                .map(|pos| {
                    (pair_distance(&query, bucket.vector(pos), &cfg).unwrap(), bucket.id(pos))
                })
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            assert_eq!(hits.len(), k);
            for (hit, want) in hits.iter().zip(&all) {
                assert_eq!(hit.0, want.1);
                assert_eq!(hit.1.to_bits(), want.0.to_bits());
            }
        }
    }

    #[test]
    fn knn_ties_break_by_item_id() {
        // Duplicate vectors force distance ties.
        let mc = ModelConfig {
            feature_dim: 2,
            num_subspaces: 1,
            num_categories: 2,
            attention_hidden: 2,
            l2_normalize: false,
            learn_projector: false,
            rng_seed: 0,
        };
        let mut params = ModelParams::zeros(mc, None).unwrap();
        params.masks.iter_mut().for_each(|m| *m = 1.0);
        let items = vec![
            Item::new(30, 0, vec![1.0, 0.0]),
            Item::new(10, 0, vec![1.0, 0.0]),
            Item::new(20, 0, vec![1.0, 0.0]),
        ];
        let index = build_index(&params, &items, DistanceKind::Euclidean, None).unwrap();
        let hits =
            index.knn(CategoryId(0), CategoryId(1), &[1.0, 0.0], 3, SearchMode::Exact).unwrap();
        let ids: Vec<u64> = hits.iter().map(|h| h.0 .0).collect();
        assert_eq!(ids, vec![10, 20, 30]);
    }

    #[test]
    fn approx_recall_on_moderate_bucket() {
        // Full 3000-vector recall runs in the acceptance suite; this is the
        // smoke-scale version.
        let params = model(2, 8);
        let mut rng = Rng::seed_from_u64(6);
        let items = rand_items(&mut rng, 600, 2, 8);
        let index = build_index(
            &params,
            &items,
            DistanceKind::Euclidean,
            Some(NswConfig::default()),
        )
        .unwrap();
        let mut overlap = 0usize;
        let trials = 20;
        for _ in 0..trials {
            let query: Vec<f64> = (0..8).map(|_| rng.next_gaussian()).collect();
            let exact = index.knn(CategoryId(0), CategoryId(1), &query, 10, SearchMode::Exact).unwrap();
            let approx = index.knn(CategoryId(0), CategoryId(1), &query, 10, SearchMode::Approx).unwrap();
            for (id, _) in &approx {
                if exact.iter().any(|(eid, _)| eid == id) {
                    overlap += 1;
                }
            }
        }
        let recall = overlap as f64 / (10 * trials) as f64;
        assert!(recall >= 0.95, "recall {recall}");
    }

    #[test]
    fn approx_without_graph_is_an_input_error() {
        let params = model(2, 3);
        let mut rng = Rng::seed_from_u64(7);
        let items = rand_items(&mut rng, 4, 2, 3);
        let index = build_index(&params, &items, DistanceKind::Euclidean, None).unwrap();
        assert!(index
            .knn(CategoryId(0), CategoryId(0), &[0.0, 0.0, 0.0], 1, SearchMode::Approx)
            .is_err());
    }

    #[test]
    fn empty_bucket_is_an_error() {
        let params = model(3, 3);
        // No items of category 2: bucket (2, *) stays empty.
        let items = vec![Item::new(0, 0, vec![1.0, 2.0, 3.0])];
        let index = build_index(&params, &items, DistanceKind::Euclidean, None).unwrap();
        let err =
            index.knn(CategoryId(2), CategoryId(0), &[0.0; 3], 1, SearchMode::Exact).unwrap_err();
        assert!(matches!(err, Error::EmptyInput(_)));
    }
}
