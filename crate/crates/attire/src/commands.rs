//! CLI subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use attire_core::data::{generate_synthetic, Dataset, Split, SyntheticSpec};
use attire_core::eval::{
    build_fitb_questions, build_retrieval_benchmark, compatibility_auc, fitb_accuracy,
    recall_at_k,
};
use attire_core::grad::{gradient_check, GRADCHECK_FLOOR, GRADCHECK_STEP};
use attire_core::index::{build_index, CategoryIndex, NswConfig, SearchMode};
use attire_core::loss::{LossConfig, TrainingTriple};
use attire_core::model::{CategoryId, Item, ModelConfig, ModelParams};
use attire_core::retrieval::{retrieve, Query};
use attire_core::rng::Rng;
use attire_core::trainer::{train, TrainConfig, FITB_CANDIDATES};
use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::error::{CliError, CliResult};
use crate::index_io::{load_index, save_index};
use crate::manifest::{dataset_paths, load_dataset, save_dataset};
use crate::metrics::{EvalSummary, MetricsLog, RecallDto};
use crate::runconfig::{
    apply_file, parse_aggregation, parse_distance, parse_loss_variant, parse_mining,
    parse_optimizer, parse_schedule, read_config_file, ResolvedConfig,
};

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with a planted compatibility signal.
    GenSynthetic(GenSyntheticArgs),
    /// Train a model on a dataset's train split.
    Train(TrainArgs),
    /// Build the category-enumerated embedding index for a dataset.
    Index(IndexArgs),
    /// Rank catalog items for partial outfits.
    Query(QueryArgs),
    /// Evaluate FITB accuracy, compatibility AUC and recall@k.
    Eval(EvalArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::GenSynthetic(args) => gen_synthetic(args),
        Command::Train(args) => run_train(args),
        Command::Index(args) => run_index(args),
        Command::Query(args) => run_query(args),
        Command::Eval(args) => run_eval(args),
        Command::Gradcheck(args) => run_gradcheck(args),
    }
}

fn load_dataset_dir(dir: &Path) -> CliResult<Dataset> {
    let (manifest, features) = dataset_paths(dir);
    load_dataset(&manifest, &features)
}

fn parse_mode(s: &str) -> CliResult<SearchMode> {
    match s {
        "exact" => Ok(SearchMode::Exact),
        "approx" => Ok(SearchMode::Approx),
        other => Err(CliError::Usage(format!("unknown mode '{other}' (exact|approx)"))),
    }
}

// ---------------------------------------------------------------------------
// gen-synthetic
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct GenSyntheticArgs {
    /// Output directory (will contain manifest.json and features.bin).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub num_outfits: usize,
    #[arg(long, default_value_t = 4)]
    pub items_per_outfit: usize,
    #[arg(long, default_value_t = 6)]
    pub categories: usize,
    #[arg(long, default_value_t = 4)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub raw_dim: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn gen_synthetic(args: GenSyntheticArgs) -> CliResult<()> {
    let spec = SyntheticSpec {
        num_outfits: args.num_outfits,
        items_per_outfit: args.items_per_outfit,
        num_categories: args.categories,
        latent_dim: args.latent_dim,
        raw_dim: args.raw_dim,
        noise_sigma: args.noise_sigma,
        rng_seed: args.seed,
    };
    let dataset = generate_synthetic(&spec)?;
    fs::create_dir_all(&args.out).map_err(CliError::io(&args.out))?;
    let (manifest, features) = dataset_paths(&args.out);
    save_dataset(&dataset, &manifest, &features)?;
    eprintln!(
        "wrote {} items in {} outfits ({} categories, raw dim {}) to {}",
        dataset.items().len(),
        dataset.outfits().len(),
        dataset.num_categories(),
        dataset.raw_dim(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML run configuration (flags override file values).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Metrics log (JSON lines).
    #[arg(long)]
    pub log: Option<PathBuf>,

    // Model overrides.
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub subspaces: Option<usize>,
    #[arg(long)]
    pub attention_hidden: Option<usize>,
    #[arg(long)]
    pub l2_normalize: Option<bool>,
    #[arg(long)]
    pub learn_projector: Option<bool>,
    #[arg(long)]
    pub model_seed: Option<u64>,

    // Loss overrides.
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub aggregation: Option<String>,
    #[arg(long)]
    pub distance: Option<String>,

    // Train overrides.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub m_neg: Option<usize>,
    #[arg(long)]
    pub mining: Option<String>,
    #[arg(long)]
    pub loss_variant: Option<String>,
    #[arg(long)]
    pub pool_size: Option<usize>,
    #[arg(long)]
    pub order_flip: Option<bool>,
    #[arg(long)]
    pub use_cache: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn resolve_train_config(
    args: &TrainArgs,
    dataset: &Dataset,
) -> CliResult<(ModelConfig, LossConfig, TrainConfig)> {
    let mut model = ModelConfig::new(dataset.num_categories());
    let mut loss = LossConfig::default();
    let mut train_cfg = TrainConfig::new(30);
    if let Some(path) = &args.config {
        let file = read_config_file(path)?;
        apply_file(&file, &mut model, &mut loss, &mut train_cfg)?;
    }
    if let Some(v) = args.feature_dim {
        model.feature_dim = v;
    }
    if let Some(v) = args.subspaces {
        model.num_subspaces = v;
    }
    if let Some(v) = args.attention_hidden {
        model.attention_hidden = v;
    }
    if let Some(v) = args.l2_normalize {
        model.l2_normalize = v;
    }
    if let Some(v) = args.learn_projector {
        model.learn_projector = v;
    }
    if let Some(v) = args.model_seed {
        model.rng_seed = v;
    }
    if let Some(v) = args.margin {
        loss.margin = v;
    }
    if let Some(v) = &args.aggregation {
        loss.aggregation = parse_aggregation(v)?;
    }
    if let Some(v) = &args.distance {
        loss.distance = parse_distance(v)?;
    }
    if let Some(v) = args.epochs {
        train_cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        train_cfg.batch_size = v;
    }
    if let Some(v) = args.learning_rate {
        train_cfg.learning_rate = v;
    }
    if let Some(v) = &args.schedule {
        train_cfg.schedule = parse_schedule(v)?;
    }
    if let Some(v) = &args.optimizer {
        train_cfg.optimizer = parse_optimizer(v)?;
    }
    if let Some(v) = args.m_neg {
        train_cfg.m_neg = v;
    }
    if let Some(v) = &args.mining {
        train_cfg.mining = parse_mining(v)?;
    }
    if let Some(v) = &args.loss_variant {
        train_cfg.loss_variant = parse_loss_variant(v)?;
    }
    if let Some(v) = args.pool_size {
        train_cfg.pool_size = v;
    }
    if let Some(v) = args.order_flip {
        train_cfg.order_flip = v;
    }
    if let Some(v) = args.use_cache {
        train_cfg.use_cache = v;
    }
    if let Some(v) = args.seed {
        train_cfg.rng_seed = v;
    }
    Ok((model, loss, train_cfg))
}

fn run_train(args: TrainArgs) -> CliResult<()> {
    let dataset = load_dataset_dir(&args.data)?;
    let (model_cfg, loss_cfg, train_cfg) = resolve_train_config(&args, &dataset)?;

    let resolved = ResolvedConfig::new(&model_cfg, &loss_cfg, &train_cfg);
    eprintln!("# resolved configuration\n{}", resolved.to_toml());

    let mut log = MetricsLog::create(args.log.as_deref())?;
    log.config(&resolved)?;

    let mut log_error = None;
    let result = train(&dataset, &model_cfg, &loss_cfg, &train_cfg, |record| {
        eprintln!(
            "epoch {:3}  loss {:.6}  val_fitb {}  triples {}",
            record.epoch,
            record.mean_loss,
            record
                .val_fitb
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "n/a".to_string()),
            record.triples,
        );
        if log_error.is_none() {
            if let Err(e) = log.epoch(record) {
                log_error = Some(e);
            }
        }
    });
    if let Some(e) = log_error {
        return Err(e);
    }

    match result {
        Ok(outcome) => {
            save_checkpoint(&args.out, &outcome.params, &loss_cfg)?;
            log.finish()?;
            eprintln!("checkpoint written to {}", args.out.display());
            Ok(())
        }
        Err(failure) => {
            // Keep the last finite state so the run is not lost.
            save_checkpoint(&args.out, &failure.last_good, &loss_cfg)?;
            log.finish()?;
            eprintln!(
                "training aborted at epoch {} step {}: {} (last good state saved to {})",
                failure.epoch,
                failure.step,
                failure.error,
                args.out.display()
            );
            Err(CliError::Core(failure.error))
        }
    }
}

// ---------------------------------------------------------------------------
// index
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// exact: linear-scan searches only; approx: also build graphs.
    #[arg(long, default_value = "exact")]
    pub mode: String,
    #[arg(long, default_value_t = 16)]
    pub max_neighbors: usize,
    #[arg(long, default_value_t = 100)]
    pub ef_construction: usize,
    #[arg(long, default_value_t = 120)]
    pub ef_search: usize,
}

fn run_index(args: IndexArgs) -> CliResult<()> {
    let (params, loss_cfg) = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset_dir(&args.data)?;
    let approx = match parse_mode(&args.mode)? {
        SearchMode::Exact => None,
        SearchMode::Approx => Some(NswConfig {
            max_neighbors: args.max_neighbors,
            ef_construction: args.ef_construction,
            ef_search: args.ef_search,
        }),
    };
    let index = build_index(&params, dataset.items(), loss_cfg.distance, approx)?;
    save_index(&args.out, &index)?;
    eprintln!(
        "indexed {} items x {} categories = {} entries to {}",
        dataset.items().len(),
        index.num_categories(),
        index.num_entries(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// query
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub index: PathBuf,
    /// Dataset directory (resolves outfit item ids).
    #[arg(long)]
    pub data: PathBuf,
    /// Query manifest (JSON); alternative to --outfit/--target-category.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Comma-separated item ids of the partial outfit.
    #[arg(long)]
    pub outfit: Option<String>,
    /// Missing category to fill.
    #[arg(long)]
    pub target_category: Option<usize>,
    #[arg(short, long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value = "exact")]
    pub mode: String,
    /// Write results here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct QueryManifest {
    version: u32,
    queries: Vec<QueryDef>,
}

#[derive(Debug, Deserialize)]
struct QueryDef {
    outfit: Vec<u64>,
    target_category: usize,
    #[serde(default)]
    k: Option<usize>,
}

#[derive(Serialize)]
struct QueryOutput {
    results: Vec<QueryResult>,
}

#[derive(Serialize)]
struct QueryResult {
    query: usize,
    target_category: usize,
    items: Vec<RankedItem>,
}

#[derive(Serialize)]
struct RankedItem {
    id: u64,
    distance: f64,
}

fn resolve_outfit(dataset: &Dataset, ids: &[u64]) -> CliResult<Vec<Item>> {
    ids.iter()
        .map(|&id| {
            dataset
                .items()
                .iter()
                .find(|item| item.id.0 == id)
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("item id {id} not found in dataset")))
        })
        .collect()
}

fn run_query(args: QueryArgs) -> CliResult<()> {
    let (params, _) = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset_dir(&args.data)?;
    let loaded = load_index(&args.index, Some(params.checksum()))?;
    if loaded.model_mismatch {
        eprintln!(
            "warning: index {} was built from different parameters than {}",
            args.index.display(),
            args.checkpoint.display()
        );
    }
    let mode = parse_mode(&args.mode)?;

    let defs: Vec<QueryDef> = match (&args.queries, &args.outfit, args.target_category) {
        (Some(path), None, None) => {
            let text = fs::read_to_string(path).map_err(CliError::io(path))?;
            let manifest: QueryManifest = serde_json::from_str(&text)
                .map_err(|e| CliError::Parse { path: path.clone(), message: e.to_string() })?;
            if manifest.version != 1 {
                return Err(CliError::Parse {
                    path: path.clone(),
                    message: format!("unsupported query manifest version {}", manifest.version),
                });
            }
            manifest.queries
        }
        (None, Some(outfit), Some(target)) => {
            let ids: Result<Vec<u64>, _> =
                outfit.split(',').map(|s| s.trim().parse::<u64>()).collect();
            let ids = ids.map_err(|e| CliError::Usage(format!("bad --outfit item id: {e}")))?;
            vec![QueryDef { outfit: ids, target_category: target, k: None }]
        }
        _ => {
            return Err(CliError::Usage(
                "provide either --queries FILE or both --outfit and --target-category".into(),
            ))
        }
    };

    let mut results = Vec::with_capacity(defs.len());
    for (qi, def) in defs.iter().enumerate() {
        let outfit = resolve_outfit(&dataset, &def.outfit)?;
        let query = Query {
            outfit,
            target_category: CategoryId(def.target_category),
            k_results: def.k.unwrap_or(args.k),
        };
        let ranked = retrieve(&params, &loaded.index, &query, mode)?;
        results.push(QueryResult {
            query: qi,
            target_category: def.target_category,
            items: ranked
                .entries
                .into_iter()
                .map(|(id, distance)| RankedItem { id: id.0, distance })
                .collect(),
        });
    }

    let text = serde_json::to_string_pretty(&QueryOutput { results })
        .expect("query output serializes");
    match &args.out {
        Some(path) => fs::write(path, text).map_err(CliError::io(path))?,
        None => println!("{text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Persisted index; built in memory when omitted.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Candidate-pool size per retrieval query.
    #[arg(long, default_value_t = 200)]
    pub pool_size: usize,
    /// Comma-separated recall cutoffs.
    #[arg(long, default_value = "10,30,50")]
    pub ks: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Metrics log (JSON lines).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Skip the retrieval benchmark (FITB and AUC only).
    #[arg(long, default_value_t = false)]
    pub no_recall: bool,
}

fn run_eval(args: EvalArgs) -> CliResult<()> {
    let (params, loss_cfg) = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset_dir(&args.data)?;
    let split = Split::parse(&args.split)?;
    let ks: Result<Vec<usize>, _> = args.ks.split(',').map(|s| s.trim().parse()).collect();
    let ks = ks.map_err(|e| CliError::Usage(format!("bad --ks: {e}")))?;

    let mut fitb_rng = Rng::derive(args.seed, 0xF17B);
    let (questions, fitb_build_skipped) =
        build_fitb_questions(&dataset, split, FITB_CANDIDATES, &mut fitb_rng);
    let fitb = fitb_accuracy(&params, &questions, &loss_cfg)?;

    let mut auc_rng = Rng::derive(args.seed, 0xA0C);
    let compat = compatibility_auc(&params, &dataset, split, &loss_cfg, &mut auc_rng)?;

    println!("metric            value");
    println!(
        "fitb_accuracy     {:.4}   ({} answered, {} skipped, {} unbuildable)",
        fitb.accuracy(),
        fitb.answered,
        fitb.skipped,
        fitb_build_skipped
    );
    println!("compat_auc        {compat:.4}");

    let recall_dto = if args.no_recall {
        None
    } else {
        let index = match &args.index {
            Some(path) => {
                let loaded = load_index(path, Some(params.checksum()))?;
                if loaded.model_mismatch {
                    eprintln!(
                        "warning: index {} was built from different parameters",
                        path.display()
                    );
                }
                loaded.index
            }
            None => build_index(&params, dataset.items(), loss_cfg.distance, None)?,
        };
        let mut bench_rng = Rng::derive(args.seed, 0xBE7C);
        let (benchmark, warnings) =
            build_retrieval_benchmark(&dataset, args.pool_size, &mut bench_rng)?;
        for (cat, count) in &warnings.skipped_categories {
            eprintln!(
                "warning: category {cat} lacks items for pool size {}; {count} queries skipped",
                args.pool_size
            );
        }
        if benchmark.queries.is_empty() {
            eprintln!("warning: no retrieval queries could be built; skipping recall");
            None
        } else {
            let table = recall_at_k(&benchmark, &params, &index, &ks)?;
            for (ki, k) in table.ks.iter().enumerate() {
                println!("recall@{k:<10} {:.4}   (mean over {} categories)", table.mean[ki], table.per_category.len());
            }
            for cat in &table.per_category {
                let per: Vec<String> =
                    cat.recalls.iter().map(|r| format!("{r:.4}")).collect();
                println!(
                    "  category {}  [{}]  ({} queries)",
                    cat.category,
                    per.join(", "),
                    cat.queries
                );
            }
            Some(RecallDto::from_table(&table, args.pool_size))
        }
    };

    let mut log = MetricsLog::create(args.log.as_deref())?;
    log.eval(&EvalSummary {
        split: args.split.clone(),
        fitb_accuracy: fitb.accuracy(),
        fitb_answered: fitb.answered,
        fitb_skipped: fitb.skipped,
        compat_auc: compat,
        recall: recall_dto,
    })?;
    log.finish()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub feature_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub subspaces: usize,
    #[arg(long, default_value_t = 4)]
    pub categories: usize,
    #[arg(long, default_value_t = 5)]
    pub attention_hidden: usize,
    /// Raw feature dimension; 0 disables the projector.
    #[arg(long, default_value_t = 10)]
    pub raw_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub outfit_items: usize,
    #[arg(long, default_value_t = 4)]
    pub num_negatives: usize,
    #[arg(long, default_value_t = 3)]
    pub batch: usize,
    #[arg(long, default_value = "min")]
    pub aggregation: String,
    #[arg(long, default_value = "euclidean")]
    pub distance: String,
    #[arg(long, default_value_t = false)]
    pub l2_normalize: bool,
    /// Pass/fail threshold on the max relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub threshold: f64,
}

fn run_gradcheck(args: GradcheckArgs) -> CliResult<()> {
    let model_cfg = ModelConfig {
        feature_dim: args.feature_dim,
        num_subspaces: args.subspaces,
        num_categories: args.categories,
        attention_hidden: args.attention_hidden,
        l2_normalize: args.l2_normalize,
        learn_projector: args.raw_dim != 0,
        rng_seed: args.seed,
    };
    let raw_dim = if args.raw_dim == 0 { args.feature_dim } else { args.raw_dim };
    let projector = (args.raw_dim != 0).then_some(raw_dim);
    let params = ModelParams::init(model_cfg, projector)?;
    let loss_cfg = LossConfig {
        margin: 0.3,
        aggregation: parse_aggregation(&args.aggregation)?,
        distance: parse_distance(&args.distance)?,
    };

    let mut rng = Rng::derive(args.seed, 0x6C);
    let mut batch = Vec::with_capacity(args.batch);
    for b in 0..args.batch {
        let mut item = |id: u64, cat: usize| {
            Item::new(id, cat, (0..raw_dim).map(|_| rng.next_gaussian()).collect())
        };
        let base = (b * 1000) as u64;
        let outfit: Vec<Item> =
            (0..args.outfit_items).map(|i| item(base + i as u64, i % args.categories)).collect();
        let pos_cat = args.outfit_items % args.categories;
        let positive = item(base + 500, pos_cat);
        let negatives: Vec<Item> =
            (0..args.num_negatives).map(|j| item(base + 600 + j as u64, pos_cat)).collect();
        batch.push(TrainingTriple::new(outfit, positive, negatives));
    }

    let report = gradient_check(&params, &batch, &loss_cfg, GRADCHECK_STEP, GRADCHECK_FLOOR)?;
    println!(
        "max relative gradient error: {:.3e} over {} parameters (worst at index {}: analytic {:.6e}, numeric {:.6e})",
        report.max_rel_error,
        report.num_params,
        report.worst_index,
        report.analytic_at_worst,
        report.numeric_at_worst
    );
    if report.max_rel_error < args.threshold {
        Ok(())
    } else {
        Err(CliError::GradCheck { max_rel_error: report.max_rel_error, threshold: args.threshold })
    }
}

/// Build an in-memory index for library consumers that skip persistence.
pub fn build_eval_index(params: &ModelParams, dataset: &Dataset, loss: &LossConfig) -> CliResult<CategoryIndex> {
    Ok(build_index(params, dataset.items(), loss.distance, None)?)
}
