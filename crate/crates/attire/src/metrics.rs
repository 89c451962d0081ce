//! Line-delimited metrics log records.
//!
//! Every record is one JSON object with a `record` discriminator. Given the
//! same configuration and seed, a run writes a byte-identical log.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use attire_core::eval::RecallTable;
use attire_core::trainer::EpochRecord;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::runconfig::ResolvedConfig;

#[derive(Serialize)]
struct ConfigLine<'a> {
    record: &'static str,
    config: &'a ResolvedConfig,
}

#[derive(Serialize)]
struct EpochLine {
    record: &'static str,
    epoch: usize,
    mean_loss: f64,
    val_fitb: Option<f64>,
    triples: usize,
    skipped_outfits: usize,
    lr_start: f64,
}

#[derive(Serialize)]
pub struct EvalSummary {
    pub split: String,
    pub fitb_accuracy: f64,
    pub fitb_answered: usize,
    pub fitb_skipped: usize,
    pub compat_auc: f64,
    pub recall: Option<RecallDto>,
}

#[derive(Serialize)]
pub struct RecallDto {
    pub ks: Vec<usize>,
    pub mean: Vec<f64>,
    pub per_category: Vec<CategoryRecallDto>,
    pub pool_size: usize,
}

#[derive(Serialize)]
pub struct CategoryRecallDto {
    pub category: usize,
    pub queries: usize,
    pub recalls: Vec<f64>,
}

impl RecallDto {
    pub fn from_table(table: &RecallTable, pool_size: usize) -> Self {
        RecallDto {
            ks: table.ks.clone(),
            mean: table.mean.clone(),
            per_category: table
                .per_category
                .iter()
                .map(|c| CategoryRecallDto {
                    category: c.category.0,
                    queries: c.queries,
                    recalls: c.recalls.clone(),
                })
                .collect(),
            pool_size,
        }
    }
}

#[derive(Serialize)]
struct EvalLine<'a> {
    record: &'static str,
    #[serde(flatten)]
    summary: &'a EvalSummary,
}

/// JSONL writer over an optional file (no file, no output).
pub struct MetricsLog {
    out: Option<BufWriter<File>>,
}

impl MetricsLog {
    pub fn create(path: Option<&Path>) -> CliResult<Self> {
        let out = match path {
            Some(p) => {
                let file = File::create(p).map_err(CliError::io(p))?;
                Some(BufWriter::new(file))
            }
            None => None,
        };
        Ok(MetricsLog { out })
    }

    fn write_line(&mut self, value: &impl Serialize) -> CliResult<()> {
        if let Some(out) = &mut self.out {
            let line = serde_json::to_string(value).expect("metrics records serialize");
            writeln!(out, "{line}").map_err(|e| CliError::Io {
                path: "metrics log".into(),
                source: e,
            })?;
        }
        Ok(())
    }

    pub fn config(&mut self, config: &ResolvedConfig) -> CliResult<()> {
        self.write_line(&ConfigLine { record: "config", config })
    }

    pub fn epoch(&mut self, r: &EpochRecord) -> CliResult<()> {
        self.write_line(&EpochLine {
            record: "epoch",
            epoch: r.epoch,
            mean_loss: r.mean_loss,
            val_fitb: r.val_fitb,
            triples: r.triples,
            skipped_outfits: r.skipped_outfits,
            lr_start: r.lr_start,
        })
    }

    pub fn eval(&mut self, summary: &EvalSummary) -> CliResult<()> {
        self.write_line(&EvalLine { record: "eval", summary })
    }

    pub fn finish(mut self) -> CliResult<()> {
        if let Some(out) = &mut self.out {
            out.flush().map_err(|e| CliError::Io { path: "metrics log".into(), source: e })?;
        }
        Ok(())
    }
}
