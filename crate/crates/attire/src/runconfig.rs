//! Run configuration: TOML file + command-line overrides.
//!
//! Every field is optional in the file; defaults fill the gaps and flags
//! override file values. The fully resolved configuration is echoed to the
//! run log so any successful run can be reproduced from its log alone.

use std::fs;
use std::path::Path;

use attire_core::loss::{Aggregation, DistanceKind, LossConfig, LossVariant};
use attire_core::mining::MiningKind;
use attire_core::model::ModelConfig;
use attire_core::optim::{OptimizerKind, Schedule};
use attire_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Default, Deserialize)]
pub struct FileConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub feature_dim: Option<usize>,
    pub num_subspaces: Option<usize>,
    pub num_categories: Option<usize>,
    pub attention_hidden: Option<usize>,
    pub l2_normalize: Option<bool>,
    pub learn_projector: Option<bool>,
    pub rng_seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    pub margin: Option<f64>,
    pub aggregation: Option<String>,
    pub distance: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub schedule: Option<String>,
    pub optimizer: Option<String>,
    pub epochs: Option<usize>,
    pub m_neg: Option<usize>,
    pub mining: Option<String>,
    pub loss_variant: Option<String>,
    pub pool_size: Option<usize>,
    pub order_flip: Option<bool>,
    pub use_cache: Option<bool>,
    pub rng_seed: Option<u64>,
}

pub fn read_config_file(path: &Path) -> CliResult<FileConfig> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Parse { path: path.to_path_buf(), message: e.to_string() })
}

// --- enum <-> string -------------------------------------------------------

pub fn parse_aggregation(s: &str) -> CliResult<Aggregation> {
    match s {
        "min" => Ok(Aggregation::Min),
        "average" | "avg" => Ok(Aggregation::Average),
        other => Err(CliError::Usage(format!("unknown aggregation '{other}' (min|average)"))),
    }
}

pub fn aggregation_name(a: Aggregation) -> &'static str {
    match a {
        Aggregation::Min => "min",
        Aggregation::Average => "average",
    }
}

pub fn parse_distance(s: &str) -> CliResult<DistanceKind> {
    match s {
        "euclidean" => Ok(DistanceKind::Euclidean),
        "squared_euclidean" | "squared" => Ok(DistanceKind::SquaredEuclidean),
        other => Err(CliError::Usage(format!(
            "unknown distance '{other}' (euclidean|squared_euclidean)"
        ))),
    }
}

pub fn distance_name(d: DistanceKind) -> &'static str {
    match d {
        DistanceKind::Euclidean => "euclidean",
        DistanceKind::SquaredEuclidean => "squared_euclidean",
    }
}

pub fn parse_mining(s: &str) -> CliResult<MiningKind> {
    match s {
        "semi_hard" | "semi-hard" => Ok(MiningKind::SemiHard),
        "random" => Ok(MiningKind::Random),
        other => Err(CliError::Usage(format!("unknown mining '{other}' (semi_hard|random)"))),
    }
}

pub fn mining_name(m: MiningKind) -> &'static str {
    match m {
        MiningKind::SemiHard => "semi_hard",
        MiningKind::Random => "random",
    }
}

pub fn parse_loss_variant(s: &str) -> CliResult<LossVariant> {
    match s {
        "outfit_ranking" | "outfit-ranking" => Ok(LossVariant::OutfitRanking),
        "triplet" => Ok(LossVariant::Triplet),
        other => Err(CliError::Usage(format!(
            "unknown loss variant '{other}' (outfit_ranking|triplet)"
        ))),
    }
}

pub fn loss_variant_name(v: LossVariant) -> &'static str {
    match v {
        LossVariant::OutfitRanking => "outfit_ranking",
        LossVariant::Triplet => "triplet",
    }
}

pub fn parse_schedule(s: &str) -> CliResult<Schedule> {
    match s {
        "constant" => Ok(Schedule::Constant),
        "linear_decay" | "linear" => Ok(Schedule::LinearDecay),
        other => Err(CliError::Usage(format!("unknown schedule '{other}' (constant|linear_decay)"))),
    }
}

pub fn schedule_name(s: Schedule) -> &'static str {
    match s {
        Schedule::Constant => "constant",
        Schedule::LinearDecay => "linear_decay",
    }
}

pub fn parse_optimizer(s: &str) -> CliResult<OptimizerKind> {
    match s {
        "adam" => Ok(OptimizerKind::adam()),
        "sgd" => Ok(OptimizerKind::Sgd),
        other => Err(CliError::Usage(format!("unknown optimizer '{other}' (adam|sgd)"))),
    }
}

pub fn optimizer_name(o: OptimizerKind) -> &'static str {
    match o {
        OptimizerKind::Adam { .. } => "adam",
        OptimizerKind::Sgd => "sgd",
    }
}

// --- resolved configuration -------------------------------------------------

/// Fully resolved run configuration, serialized into logs.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub model: ResolvedModel,
    pub loss: ResolvedLoss,
    pub train: ResolvedTrain,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedModel {
    pub feature_dim: usize,
    pub num_subspaces: usize,
    pub num_categories: usize,
    pub attention_hidden: usize,
    pub l2_normalize: bool,
    pub learn_projector: bool,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedLoss {
    pub margin: f64,
    pub aggregation: &'static str,
    pub distance: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedTrain {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: &'static str,
    pub optimizer: &'static str,
    pub epochs: usize,
    pub m_neg: usize,
    pub mining: &'static str,
    pub loss_variant: &'static str,
    pub pool_size: usize,
    pub order_flip: bool,
    pub use_cache: bool,
    pub rng_seed: u64,
}

impl ResolvedConfig {
    pub fn new(model: &ModelConfig, loss: &LossConfig, train: &TrainConfig) -> Self {
        ResolvedConfig {
            model: ResolvedModel {
                feature_dim: model.feature_dim,
                num_subspaces: model.num_subspaces,
                num_categories: model.num_categories,
                attention_hidden: model.attention_hidden,
                l2_normalize: model.l2_normalize,
                learn_projector: model.learn_projector,
                rng_seed: model.rng_seed,
            },
            loss: ResolvedLoss {
                margin: loss.margin,
                aggregation: aggregation_name(loss.aggregation),
                distance: distance_name(loss.distance),
            },
            train: ResolvedTrain {
                batch_size: train.batch_size,
                learning_rate: train.learning_rate,
                schedule: schedule_name(train.schedule),
                optimizer: optimizer_name(train.optimizer),
                epochs: train.epochs,
                m_neg: train.m_neg,
                mining: mining_name(train.mining),
                loss_variant: loss_variant_name(train.loss_variant),
                pool_size: train.pool_size,
                order_flip: train.order_flip,
                use_cache: train.use_cache,
                rng_seed: train.rng_seed,
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("resolved config serializes")
    }
}

/// Apply the file layer onto defaults (flags come later, in the CLI).
pub fn apply_file(
    file: &FileConfig,
    model: &mut ModelConfig,
    loss: &mut LossConfig,
    train: &mut TrainConfig,
) -> CliResult<()> {
    let m = &file.model;
    if let Some(v) = m.feature_dim {
        model.feature_dim = v;
    }
    if let Some(v) = m.num_subspaces {
        model.num_subspaces = v;
    }
    if let Some(v) = m.num_categories {
        model.num_categories = v;
    }
    if let Some(v) = m.attention_hidden {
        model.attention_hidden = v;
    }
    if let Some(v) = m.l2_normalize {
        model.l2_normalize = v;
    }
    if let Some(v) = m.learn_projector {
        model.learn_projector = v;
    }
    if let Some(v) = m.rng_seed {
        model.rng_seed = v;
    }

    let l = &file.loss;
    if let Some(v) = l.margin {
        loss.margin = v;
    }
    if let Some(ref v) = l.aggregation {
        loss.aggregation = parse_aggregation(v)?;
    }
    if let Some(ref v) = l.distance {
        loss.distance = parse_distance(v)?;
    }

    let t = &file.train;
    if let Some(v) = t.batch_size {
        train.batch_size = v;
    }
    if let Some(v) = t.learning_rate {
        train.learning_rate = v;
    }
    if let Some(ref v) = t.schedule {
        train.schedule = parse_schedule(v)?;
    }
    if let Some(ref v) = t.optimizer {
        train.optimizer = parse_optimizer(v)?;
    }
    if let Some(v) = t.epochs {
        train.epochs = v;
    }
    if let Some(v) = t.m_neg {
        train.m_neg = v;
    }
    if let Some(ref v) = t.mining {
        train.mining = parse_mining(v)?;
    }
    if let Some(ref v) = t.loss_variant {
        train.loss_variant = parse_loss_variant(v)?;
    }
    if let Some(v) = t.pool_size {
        train.pool_size = v;
    }
    if let Some(v) = t.order_flip {
        train.order_flip = v;
    }
    if let Some(v) = t.use_cache {
        train.use_cache = v;
    }
    if let Some(v) = t.rng_seed {
        train.rng_seed = v;
    }
    Ok(())
}
