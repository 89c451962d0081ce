//! The batched training loop.
//!
//! Per epoch: plan triples (shuffled outfits, rotating positive slot, seeded
//! candidate pools), then per batch mine negatives with the *current*
//! parameters, compute the cached loss/gradient, and step the optimizer
//! under the learning-rate schedule. Validation FITB accuracy is computed on
//! a fixed held-out question set after every epoch.
//!
//! Everything is single-threaded and deterministic: identical seeds and
//! configs reproduce the metrics history bit for bit.

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{plan_epoch, realize_triple, Dataset, Split};
use crate::error::{Error, Result};
use crate::eval::{build_fitb_questions, fitb_accuracy, FitbQuestion};
use crate::grad::loss_gradient;
use crate::loss::{LossConfig, LossVariant};
use crate::mining::MiningKind;
use crate::model::{ModelConfig, ModelParams};
use crate::optim::{learning_rate, Optimizer, OptimizerKind, Schedule};
use crate::rng::Rng;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub optimizer: OptimizerKind,
    pub epochs: usize,
    /// Negatives per triple.
    pub m_neg: usize,
    pub mining: MiningKind,
    /// Outfit ranking loss, or the single-anchor triplet baseline.
    pub loss_variant: LossVariant,
    /// Candidate-pool size fed to the miner.
    pub pool_size: usize,
    /// Randomly swap the (source, target) category order per triple.
    pub order_flip: bool,
    /// Reuse subspace projections and attention weights across a batch.
    /// Pure optimization: results are bitwise identical either way.
    pub use_cache: bool,
    pub rng_seed: u64,
}

impl TrainConfig {
    /// Defaults: batch 96, Adam, lr 5e-5 with linear decay to zero and no
    /// warmup, 10 semi-hard negatives from 50-candidate pools.
    pub fn new(epochs: usize) -> Self {
        TrainConfig {
            batch_size: 96,
            learning_rate: 5e-5,
            schedule: Schedule::LinearDecay,
            optimizer: OptimizerKind::adam(),
            epochs,
            m_neg: 10,
            mining: MiningKind::SemiHard,
            loss_variant: LossVariant::OutfitRanking,
            pool_size: 50,
            order_flip: false,
            use_cache: true,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.m_neg == 0 || self.pool_size == 0 {
            return Err(Error::InvalidInput(String::from(
                "batch_size, epochs, m_neg and pool_size must be positive",
            )));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::InvalidInput(String::from("learning_rate must be >= 0")));
        }
        Ok(())
    }
}

/// Per-epoch log record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Triple-weighted mean training loss over the epoch.
    pub mean_loss: f64,
    /// Validation FITB accuracy (`None` when the val split yields no
    /// questions).
    pub val_fitb: Option<f64>,
    pub triples: usize,
    pub skipped_outfits: usize,
    /// Learning rate at the first step of the epoch.
    pub lr_start: f64,
}

/// Final parameters plus the per-epoch metrics history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
}

/// Abort carrying the last finite parameter state so callers can checkpoint
/// it.
#[derive(Debug, Clone)]
pub struct TrainFailure {
    pub error: Error,
    pub last_good: ModelParams,
    pub epoch: usize,
    pub step: u64,
    pub history: Vec<EpochRecord>,
}

/// Number of candidates per validation FITB question.
pub const FITB_CANDIDATES: usize = 4;

/// Train a model on the dataset's train split.
///
/// A learnable projector (the backbone stand-in) is attached whenever
/// `model_cfg.learn_projector` is set or the dataset's raw dimension differs
/// from the embedding dimension. `on_epoch` observes each record as it is
/// produced.
pub fn train(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    loss_cfg: &LossConfig,
    train_cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> core::result::Result<TrainOutcome, TrainFailure> {
    let setup = (|| -> Result<(ModelParams, Vec<FitbQuestion>)> {
        model_cfg.validate()?;
        loss_cfg.validate()?;
        train_cfg.validate()?;
        let raw_dim = dataset.raw_dim();
        if dataset.num_categories() > model_cfg.num_categories {
            return Err(Error::InvalidInput(alloc::format!(
                "dataset has {} categories but the model is configured for {}",
                dataset.num_categories(),
                model_cfg.num_categories
            )));
        }
        let projector = (model_cfg.learn_projector || raw_dim != model_cfg.feature_dim)
            .then_some(raw_dim);
        let params = ModelParams::init(model_cfg.clone(), projector)?;
        let mut val_rng = Rng::derive(train_cfg.rng_seed, 0x56414C);
        let (questions, _) =
            build_fitb_questions(dataset, Split::Val, FITB_CANDIDATES, &mut val_rng);
        Ok((params, questions))
    })();
    let (mut params, val_questions) = match setup {
        Ok(v) => v,
        Err(error) => {
            // Nothing trained yet; surface a zeroed placeholder state.
            return Err(TrainFailure {
                error,
                last_good: ModelParams::zeros(model_cfg.clone(), None)
                    .unwrap_or_else(|_| panic!("invalid model config")),
                epoch: 0,
                step: 0,
                history: Vec::new(),
            });
        }
    };

    let eligible = dataset
        .outfit_indices(Split::Train)
        .iter()
        .filter(|&&i| dataset.outfits()[i].item_indices.len() >= 2)
        .count();
    let batches_per_epoch = eligible.div_ceil(train_cfg.batch_size).max(1);
    let total_steps = (train_cfg.epochs * batches_per_epoch) as u64;

    let mut optimizer = Optimizer::new(train_cfg.optimizer, &params);
    let mut history: Vec<EpochRecord> = Vec::with_capacity(train_cfg.epochs);
    let mut step: u64 = 0;

    for epoch in 0..train_cfg.epochs {
        let mut rng = Rng::derive(train_cfg.rng_seed, 0x1000_0000 + epoch as u64);
        let plan = plan_epoch(dataset, Split::Train, epoch, train_cfg.pool_size, &mut rng);
        let mut loss_weighted = 0.0;
        let mut triples_seen = 0usize;
        let lr_start = learning_rate(train_cfg.learning_rate, train_cfg.schedule, step, total_steps);

        for chunk in plan.assignments.chunks(train_cfg.batch_size) {
            let batch: Result<Vec<_>> = chunk
                .iter()
                .map(|assignment| {
                    realize_triple(
                        dataset,
                        assignment,
                        &params,
                        loss_cfg,
                        train_cfg.loss_variant,
                        train_cfg.mining,
                        train_cfg.m_neg,
                        train_cfg.order_flip,
                        &mut rng,
                    )
                })
                .collect();
            let outcome = batch.and_then(|batch| {
                let (loss, grads) = loss_gradient(&params, &batch, loss_cfg, train_cfg.use_cache)?;
                Ok((batch.len(), loss, grads))
            });
            match outcome {
                Ok((len, loss, grads)) => {
                    loss_weighted += loss * len as f64;
                    triples_seen += len;
                    let lr = learning_rate(
                        train_cfg.learning_rate,
                        train_cfg.schedule,
                        step,
                        total_steps,
                    );
                    optimizer.apply(&mut params, &grads, lr);
                    step += 1;
                }
                Err(error) => {
                    return Err(TrainFailure {
                        error,
                        last_good: params,
                        epoch,
                        step,
                        history,
                    });
                }
            }
        }

        let val_fitb = if val_questions.is_empty() {
            None
        } else {
            match fitb_accuracy(&params, &val_questions, loss_cfg) {
                Ok(outcome) if outcome.answered > 0 => Some(outcome.accuracy()),
                Ok(_) => None,
                Err(error) => {
                    return Err(TrainFailure { error, last_good: params, epoch, step, history });
                }
            }
        };

        let record = EpochRecord {
            epoch,
            mean_loss: if triples_seen > 0 { loss_weighted / triples_seen as f64 } else { 0.0 },
            val_fitb,
            triples: triples_seen,
            skipped_outfits: plan.skipped,
            lr_start,
        };
        on_epoch(&record);
        history.push(record);
    }

    Ok(TrainOutcome { params, history })
}
