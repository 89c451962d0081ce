//! Category-conditioned subspace embeddings.
//!
//! An item's feature vector `x` is gated by `k` learned elementwise masks
//! into subspace projections `x ⊙ m_i`. A small two-layer network maps the
//! concatenated one-hot (source, target) category pair to softmax attention
//! weights `w`, and the final embedding is the weighted sum
//! `f = Σ_i w_i (x ⊙ m_i)`. Because the attention depends only on the two
//! categories (never on a second image), every item can be embedded offline
//! once per possible partner category, which is what makes indexed retrieval
//! possible.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::checksum::Fnv64;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Semantic category, an index into `[0, num_categories)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CategoryId(pub usize);

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Opaque item identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemId(pub u64);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A catalog item: identifier, semantic category, and its precomputed raw
/// feature vector (the stand-in for a CNN output).
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: ItemId,
    pub category: CategoryId,
    pub raw_feature: Vec<f64>,
}

impl Item {
    pub fn new(id: u64, category: usize, raw_feature: Vec<f64>) -> Self {
        Item { id: ItemId(id), category: CategoryId(category), raw_feature }
    }
}

/// Model hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Embedding dimension `d`.
    pub feature_dim: usize,
    /// Number of subspaces `k`.
    pub num_subspaces: usize,
    /// Number of semantic categories `C`.
    pub num_categories: usize,
    /// Hidden width of the attention subnetwork.
    pub attention_hidden: usize,
    /// L2-normalize final embeddings (experimentation flag; off by default,
    /// distances are plain Euclidean on unnormalized embeddings).
    pub l2_normalize: bool,
    /// Attach a learnable raw-to-embedding projector even when the raw
    /// dimension equals `feature_dim` (the trainer always attaches one when
    /// the dimensions differ). The projector is the stand-in for a CNN
    /// backbone.
    pub learn_projector: bool,
    /// Seed for parameter initialization.
    pub rng_seed: u64,
}

impl ModelConfig {
    /// Defaults: `d = 64`, `k = 5`, `h = 32`, unnormalized, learnable
    /// projector.
    pub fn new(num_categories: usize) -> Self {
        ModelConfig {
            feature_dim: 64,
            num_subspaces: 5,
            num_categories,
            attention_hidden: 32,
            l2_normalize: false,
            learn_projector: true,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.num_subspaces == 0 || self.attention_hidden == 0 {
            return Err(Error::InvalidInput(String::from(
                "feature_dim, num_subspaces and attention_hidden must be positive",
            )));
        }
        if self.num_categories < 2 {
            return Err(Error::InvalidInput(String::from("num_categories must be at least 2")));
        }
        Ok(())
    }
}

/// Learnable linear map from raw feature space to embedding space.
///
/// Stands in for the CNN backbone: raw features of dimension `raw_dim` are
/// projected to `feature_dim` before masking. Stored row-major as
/// `raw_dim x feature_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub raw_dim: usize,
    pub weights: Vec<f64>,
}

/// All learnable tensors.
///
/// Shapes (row-major):
/// - `masks`: `k x d`
/// - `attn_w1`: `2C x h`, `attn_b1`: `h`
/// - `attn_w2`: `h x k`, `attn_b2`: `k`
/// - `backbone_proj`: optional `raw_dim x d`
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub masks: Vec<f64>,
    pub attn_w1: Vec<f64>,
    pub attn_b1: Vec<f64>,
    pub attn_w2: Vec<f64>,
    pub attn_b2: Vec<f64>,
    pub backbone_proj: Option<Projector>,
}

/// Intermediate values of one attention forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    /// Pre-activation of the hidden layer.
    pub hidden_pre: Vec<f64>,
    /// ReLU output.
    pub hidden: Vec<f64>,
    /// Softmax output, the attention weights.
    pub weights: Vec<f64>,
}

// Mask entries start near identity so no subspace is dead at step 0.
const MASK_INIT_LO: f64 = 0.9;
const MASK_INIT_HI: f64 = 1.1;

// Projector entries start small: early training then shapes the projection
// from near zero, which is what lets a short low-LR schedule reorganize the
// embedding geometry.
const PROJ_INIT_SCALE: f64 = 0.05;

impl ModelParams {
    /// Seeded initialization.
    ///
    /// Masks are near-identity uniform `[0.9, 1.1]`; attention weights use
    /// fan-in-scaled uniform with zero biases (near-uniform initial
    /// attention); the optional projector uses small uniform entries scaled
    /// by `1/sqrt(raw_dim)`.
    pub fn init(config: ModelConfig, raw_dim: Option<usize>) -> Result<Self> {
        config.validate()?;
        let d = config.feature_dim;
        let k = config.num_subspaces;
        let c2 = 2 * config.num_categories;
        let h = config.attention_hidden;
        let mut rng = Rng::seed_from_u64(config.rng_seed);

        let masks: Vec<f64> =
            (0..k * d).map(|_| rng.range_f64(MASK_INIT_LO, MASK_INIT_HI)).collect();

        let bound1 = 1.0 / libm::sqrt(c2 as f64);
        let attn_w1: Vec<f64> = (0..c2 * h).map(|_| rng.range_f64(-bound1, bound1)).collect();
        let attn_b1 = vec![0.0; h];
        let bound2 = 1.0 / libm::sqrt(h as f64);
        let attn_w2: Vec<f64> = (0..h * k).map(|_| rng.range_f64(-bound2, bound2)).collect();
        let attn_b2 = vec![0.0; k];

        let backbone_proj = match raw_dim {
            Some(rd) => {
                let scale = PROJ_INIT_SCALE / libm::sqrt(rd as f64);
                let weights: Vec<f64> =
                    (0..rd * d).map(|_| rng.range_f64(-scale, scale)).collect();
                Some(Projector { raw_dim: rd, weights })
            }
            None => None,
        };

        Ok(ModelParams {
            config,
            masks,
            attn_w1,
            attn_b1,
            attn_w2,
            attn_b2,
            backbone_proj,
        })
    }

    /// All-zero parameters (useful for tests: softmax of zero logits is
    /// uniform attention).
    pub fn zeros(config: ModelConfig, raw_dim: Option<usize>) -> Result<Self> {
        config.validate()?;
        let d = config.feature_dim;
        let k = config.num_subspaces;
        let c2 = 2 * config.num_categories;
        let h = config.attention_hidden;
        let backbone_proj = raw_dim.map(|rd| Projector { raw_dim: rd, weights: vec![0.0; rd * d] });
        Ok(ModelParams {
            config,
            masks: vec![0.0; k * d],
            attn_w1: vec![0.0; c2 * h],
            attn_b1: vec![0.0; h],
            attn_w2: vec![0.0; h * k],
            attn_b2: vec![0.0; k],
            backbone_proj,
        })
    }

    /// Validate tensor shapes against the config and check all entries are
    /// finite.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let d = self.config.feature_dim;
        let k = self.config.num_subspaces;
        let c2 = 2 * self.config.num_categories;
        let h = self.config.attention_hidden;
        let check = |name: &'static str, v: &[f64], want: usize| -> Result<()> {
            if v.len() != want {
                return Err(Error::DimensionMismatch { context: name, expected: want, actual: v.len() });
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite { context: name });
            }
            Ok(())
        };
        check("masks", &self.masks, k * d)?;
        check("attn_w1", &self.attn_w1, c2 * h)?;
        check("attn_b1", &self.attn_b1, h)?;
        check("attn_w2", &self.attn_w2, h * k)?;
        check("attn_b2", &self.attn_b2, k)?;
        if let Some(p) = &self.backbone_proj {
            check("backbone_proj", &p.weights, p.raw_dim * d)?;
        }
        Ok(())
    }

    /// Dimension expected of `Item::raw_feature`.
    pub fn raw_dim(&self) -> usize {
        match &self.backbone_proj {
            Some(p) => p.raw_dim,
            None => self.config.feature_dim,
        }
    }

    /// Checksum over all tensor entries; identifies the exact parameter
    /// values an index was built from.
    pub fn checksum(&self) -> u64 {
        let mut h = Fnv64::new();
        h.write_u64(self.config.feature_dim as u64);
        h.write_u64(self.config.num_subspaces as u64);
        h.write_u64(self.config.num_categories as u64);
        h.write_u64(self.config.attention_hidden as u64);
        h.write_u64(self.config.l2_normalize as u64);
        h.write_f64_slice(&self.masks);
        h.write_f64_slice(&self.attn_w1);
        h.write_f64_slice(&self.attn_b1);
        h.write_f64_slice(&self.attn_w2);
        h.write_f64_slice(&self.attn_b2);
        if let Some(p) = &self.backbone_proj {
            h.write_u64(p.raw_dim as u64);
            h.write_f64_slice(&p.weights);
        }
        h.finish()
    }

    fn check_category(&self, c: CategoryId) -> Result<()> {
        if c.0 >= self.config.num_categories {
            return Err(Error::CategoryOutOfRange {
                index: c.0,
                num_categories: self.config.num_categories,
            });
        }
        Ok(())
    }

    /// Full attention forward pass with intermediates retained.
    ///
    /// Because the input is the concatenation of two one-hot vectors, the
    /// first linear layer reduces to summing two rows of `attn_w1`.
    pub fn attention_forward(&self, source: CategoryId, target: CategoryId) -> Result<AttentionTrace> {
        self.check_category(source)?;
        self.check_category(target)?;
        let h = self.config.attention_hidden;
        let k = self.config.num_subspaces;
        let c = self.config.num_categories;

        let row_s = &self.attn_w1[source.0 * h..(source.0 + 1) * h];
        let row_t = &self.attn_w1[(c + target.0) * h..(c + target.0 + 1) * h];
        let mut hidden_pre = vec![0.0; h];
        for l in 0..h {
            hidden_pre[l] = row_s[l] + row_t[l] + self.attn_b1[l];
        }
        let hidden: Vec<f64> = hidden_pre.iter().map(|&z| if z > 0.0 { z } else { 0.0 }).collect();

        let mut logits = self.attn_b2.clone();
        for (l, &a) in hidden.iter().enumerate() {
            let row = &self.attn_w2[l * k..(l + 1) * k];
            for (j, &w) in row.iter().enumerate() {
                logits[j] += a * w;
            }
        }
        let weights = softmax(&logits);
        Ok(AttentionTrace { hidden_pre, hidden, weights })
    }

    /// Attention weights for a (source, target) category pair: nonnegative,
    /// summing to one.
    pub fn attention_weights(&self, source: CategoryId, target: CategoryId) -> Result<Vec<f64>> {
        Ok(self.attention_forward(source, target)?.weights)
    }

    /// Map a raw feature vector into embedding space.
    ///
    /// Applies the projector when present; otherwise requires
    /// `raw.len() == feature_dim` and passes the feature through unchanged.
    pub fn project(&self, raw: &[f64]) -> Result<Vec<f64>> {
        match &self.backbone_proj {
            Some(p) => {
                if raw.len() != p.raw_dim {
                    return Err(Error::DimensionMismatch {
                        context: "project input",
                        expected: p.raw_dim,
                        actual: raw.len(),
                    });
                }
                let d = self.config.feature_dim;
                let mut out = vec![0.0; d];
                for (r, &x) in raw.iter().enumerate() {
                    let row = &p.weights[r * d..(r + 1) * d];
                    for (j, &w) in row.iter().enumerate() {
                        out[j] += x * w;
                    }
                }
                Ok(out)
            }
            None => {
                if raw.len() != self.config.feature_dim {
                    return Err(Error::DimensionMismatch {
                        context: "project input",
                        expected: self.config.feature_dim,
                        actual: raw.len(),
                    });
                }
                Ok(raw.to_vec())
            }
        }
    }

    /// The `k` subspace projections `x ⊙ m_i`, flattened `k x d` row-major.
    pub fn subspace_projections(&self, x: &[f64]) -> Vec<f64> {
        let d = self.config.feature_dim;
        let k = self.config.num_subspaces;
        debug_assert_eq!(x.len(), d);
        let mut out = vec![0.0; k * d];
        for i in 0..k {
            let mask = &self.masks[i * d..(i + 1) * d];
            let dst = &mut out[i * d..(i + 1) * d];
            for j in 0..d {
                dst[j] = x[j] * mask[j];
            }
        }
        out
    }

    /// Assemble the final embedding from subspace projections and attention
    /// weights: `f_j = Σ_i w_i p_i[j]`, then optional L2 normalization.
    ///
    /// Both the direct path ([`ModelParams::embed`]) and the cached training
    /// path go through this one function, so their outputs are bitwise
    /// identical.
    pub fn assemble(&self, projections: &[f64], weights: &[f64]) -> Vec<f64> {
        let d = self.config.feature_dim;
        let k = self.config.num_subspaces;
        debug_assert_eq!(projections.len(), k * d);
        debug_assert_eq!(weights.len(), k);
        let mut f = vec![0.0; d];
        for (i, &w) in weights.iter().enumerate() {
            let p = &projections[i * d..(i + 1) * d];
            for j in 0..d {
                f[j] += w * p[j];
            }
        }
        if self.config.l2_normalize {
            let norm = libm::sqrt(f.iter().map(|v| v * v).sum::<f64>());
            if norm > 0.0 {
                for v in &mut f {
                    *v /= norm;
                }
            }
        }
        f
    }

    /// Embed a feature vector already in embedding space (`d`-dimensional)
    /// conditioned on a (source, target) category pair.
    pub fn embed(&self, feature: &[f64], source: CategoryId, target: CategoryId) -> Result<Vec<f64>> {
        if feature.len() != self.config.feature_dim {
            return Err(Error::DimensionMismatch {
                context: "embed input",
                expected: self.config.feature_dim,
                actual: feature.len(),
            });
        }
        let trace = self.attention_forward(source, target)?;
        let projections = self.subspace_projections(feature);
        Ok(self.assemble(&projections, &trace.weights))
    }

    /// Embed an item toward a target category, using the item's own category
    /// as the source: projects the raw feature first.
    pub fn embed_item(&self, item: &Item, target: CategoryId) -> Result<Vec<f64>> {
        let x = self.project(&item.raw_feature)?;
        self.embed(&x, item.category, target)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
