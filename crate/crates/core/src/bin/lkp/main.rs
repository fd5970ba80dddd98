//! Command-line front end: dataset ingestion and synthesis, diversity
//! kernel pretraining, model training, evaluation, probability-trend
//! diagnostics, k/n sweeps, and the self-check oracle suite.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use lkp::config::{ConfigError, RunConfig};
use lkp::data::{self, InteractionDataset, DEFAULT_SPLIT, DEFAULT_THRESHOLD};
use lkp::diversity::{self, DiversityKernel};
use lkp::eval::{self, TargetSplit};
use lkp::model::{self, KernelMode, ModelError, Objective, TrainConfig};
use lkp::sampling::{self, SamplerMode};
use lkp::verify;

#[derive(Parser)]
#[command(
    name = "lkp",
    version,
    about = "Set-level personalized ranking via k-DPP subset probabilities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert rating and category CSVs into a dataset container
    Ingest(CommonArgs),
    /// Generate the bundled block-structured synthetic dataset
    Synth(CommonArgs),
    /// Pre-train the low-rank diversity kernel from diverse set pairs
    TrainKernel(CommonArgs),
    /// Train a ranking model
    Train(CommonArgs),
    /// Evaluate a model checkpoint on the test split
    Evaluate(CommonArgs),
    /// Subset-probability trends by target count at chosen epochs
    Trend(CommonArgs),
    /// Train and evaluate over a grid of k or n values
    Sweep(CommonArgs),
    /// Run the oracle self-checks (normalizer, normalization, gradients)
    Verify(CommonArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON config file; command-line flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset container path
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory (default: current directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Diversity kernel checkpoint path
    #[arg(long)]
    kernel: Option<PathBuf>,
    /// Model checkpoint path
    #[arg(long)]
    model: Option<PathBuf>,
    /// Ratings CSV: user_id,item_id,rating[,timestamp]
    #[arg(long)]
    ratings: Option<PathBuf>,
    /// Categories CSV: item_id,category
    #[arg(long)]
    categories: Option<PathBuf>,
    /// Objective: lkp_ps, lkp_nps, bpr, or bce
    #[arg(long)]
    objective: Option<String>,
    /// Target sampler: s (sequential) or r (random)
    #[arg(long)]
    sampler: Option<String>,
    /// Diversity kernel mode: pretrained or gaussian
    #[arg(long = "kernel-mode")]
    kernel_mode: Option<String>,
    /// Target set size
    #[arg(long)]
    k: Option<usize>,
    /// Negative sample count per instance
    #[arg(long)]
    n: Option<usize>,
    /// Learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// L2 regularization weight
    #[arg(long)]
    l2: Option<f64>,
    /// Training epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Master random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Positive-feedback rating threshold
    #[arg(long)]
    threshold: Option<f64>,
    /// Latent dimension
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Validation cadence in epochs
    #[arg(long)]
    eval_interval: Option<usize>,
    /// Early-stop patience in evaluation intervals (0 disables)
    #[arg(long)]
    patience: Option<usize>,
    /// Diversity factor rank
    #[arg(long)]
    rank: Option<usize>,
    /// Diverse-window length for kernel pretraining
    #[arg(long)]
    set_size: Option<usize>,
    /// Distinct categories required per diverse window
    #[arg(long)]
    min_categories: Option<usize>,
    /// Kernel pretraining epochs
    #[arg(long)]
    kernel_epochs: Option<usize>,
    /// Kernel pretraining learning rate
    #[arg(long)]
    kernel_lr: Option<f64>,
    /// Synthetic dataset user count
    #[arg(long)]
    synth_users: Option<usize>,
    /// Synthetic dataset item count
    #[arg(long)]
    synth_items: Option<usize>,
    /// Synthetic dataset category count
    #[arg(long)]
    synth_categories: Option<usize>,
    /// Evaluation cutoffs
    #[arg(long, value_delimiter = ',')]
    eval_cutoffs: Option<Vec<usize>>,
    /// Sweep parameter: k or n
    #[arg(long = "param")]
    sweep_param: Option<String>,
    /// Sweep grid values
    #[arg(long = "values", value_delimiter = ',')]
    sweep_values: Option<Vec<usize>>,
    /// Epochs at which to report probability trends
    #[arg(long, value_delimiter = ',')]
    trend_epochs: Option<Vec<usize>>,
    /// Training instances sampled for the trend report
    #[arg(long)]
    trend_instances: Option<usize>,
}

impl CommonArgs {
    fn overrides(&self) -> RunConfig {
        RunConfig {
            data: self.data.clone(),
            out: self.out.clone(),
            kernel: self.kernel.clone(),
            model: self.model.clone(),
            ratings: self.ratings.clone(),
            categories: self.categories.clone(),
            objective: self.objective.clone(),
            sampler: self.sampler.clone(),
            kernel_mode: self.kernel_mode.clone(),
            k: self.k,
            n: self.n,
            lr: self.lr,
            l2: self.l2,
            epochs: self.epochs,
            seed: self.seed,
            threads: self.threads,
            embedding_dim: self.embedding_dim,
            batch_size: self.batch_size,
            eval_interval: self.eval_interval,
            patience: self.patience,
            threshold: self.threshold,
            rank: self.rank,
            set_size: self.set_size,
            min_categories: self.min_categories,
            kernel_epochs: self.kernel_epochs,
            kernel_lr: self.kernel_lr,
            synth_users: self.synth_users,
            synth_items: self.synth_items,
            synth_categories: self.synth_categories,
            eval_cutoffs: self.eval_cutoffs.clone(),
            sweep_param: self.sweep_param.clone(),
            sweep_values: self.sweep_values.clone(),
            trend_epochs: self.trend_epochs.clone(),
            trend_instances: self.trend_instances,
        }
    }
}

#[derive(Debug)]
enum CmdError {
    Usage(String),
    Data(String),
    Verification(String),
}

impl CmdError {
    fn exit_code(&self) -> u8 {
        match self {
            CmdError::Usage(_) => 1,
            CmdError::Data(_) => 2,
            CmdError::Verification(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CmdError::Usage(m) | CmdError::Data(m) | CmdError::Verification(m) => m,
        }
    }
}

impl From<ConfigError> for CmdError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Invalid { .. } => CmdError::Usage(e.to_string()),
            ConfigError::Io { .. } => CmdError::Data(e.to_string()),
        }
    }
}

impl From<data::DataError> for CmdError {
    fn from(e: data::DataError) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<diversity::DiversityError> for CmdError {
    fn from(e: diversity::DiversityError) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<ModelError> for CmdError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::BadConfig(m) => CmdError::Usage(m),
            other => CmdError::Data(other.to_string()),
        }
    }
}

impl From<sampling::SamplingError> for CmdError {
    fn from(e: sampling::SamplingError) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<eval::EvalError> for CmdError {
    fn from(e: eval::EvalError) -> Self {
        CmdError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

type Handler = fn(&RunConfig, &Path) -> Result<(), CmdError>;

fn run(cli: Cli) -> Result<(), CmdError> {
    let (args, handler): (&CommonArgs, Handler) = match &cli.command {
        Command::Ingest(a) => (a, cmd_ingest),
        Command::Synth(a) => (a, cmd_synth),
        Command::TrainKernel(a) => (a, cmd_train_kernel),
        Command::Train(a) => (a, cmd_train),
        Command::Evaluate(a) => (a, cmd_evaluate),
        Command::Trend(a) => (a, cmd_trend),
        Command::Sweep(a) => (a, cmd_sweep),
        Command::Verify(a) => (a, cmd_verify),
    };

    let base = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let config = base.merged_with(args.overrides());

    if let Some(threads) = config.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CmdError::Usage(format!("cannot configure {threads} threads: {e}")))?;
    }

    let out_dir = config.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir)?;
    config.echo_to(&out_dir)?;

    handler(&config, &out_dir)
}

fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn require<T: Clone>(value: &Option<T>, flag: &str) -> Result<T, CmdError> {
    value
        .clone()
        .ok_or_else(|| CmdError::Usage(format!("missing required option --{flag}")))
}

fn load_dataset(config: &RunConfig) -> Result<InteractionDataset, CmdError> {
    let path = require(&config.data, "data")?;
    Ok(InteractionDataset::load(&path)?)
}

fn cmd_ingest(config: &RunConfig, out_dir: &Path) -> Result<(), CmdError> {
    let ratings = require(&config.ratings, "ratings")?;
    let categories = require(&config.categories, "categories")?;
    let threshold = config.threshold.unwrap_or(DEFAULT_THRESHOLD);
    let seed = config.seed.unwrap_or(42);
    let dataset = data::ingest(&ratings, &categories, threshold)?.split(DEFAULT_SPLIT, seed)?;
    let path = out_dir.join(format!("ingest-{}.json", timestamp()));
    dataset.save(&path)?;
    println!(
        "ingested {} users, {} items, {} categories, {} interactions -> {}",
        dataset.num_users,
        dataset.num_items,
        dataset.num_categories,
        dataset.total_interactions(),
        path.display()
    );
    Ok(())
}

fn cmd_synth(config: &RunConfig, out_dir: &Path) -> Result<(), CmdError> {
    let users = config.synth_users.unwrap_or(1000);
    let items = config.synth_items.unwrap_or(2000);
    let categories = config.synth_categories.unwrap_or(20);
    let seed = config.seed.unwrap_or(42);
    let dataset = data::make_synthetic(users, items, categories, seed);
    if dataset.num_users == 0 {
        return Err(CmdError::Data(
            "synthetic dataset is empty after the degree filter; increase the user count".into(),
        ));
    }
    let dataset = dataset.split(DEFAULT_SPLIT, seed)?;
    let path = out_dir.join(format!("synth-{}.json", timestamp()));
    dataset.save(&path)?;
    println!(
        "synthesized {} users, {} items, {} categories, {} interactions -> {}",
        dataset.num_users,
        dataset.num_items,
        dataset.num_categories,
        dataset.total_interactions(),
        path.display()
    );
    Ok(())
}

fn cmd_train_kernel(config: &RunConfig, out_dir: &Path) -> Result<(), CmdError> {
    let dataset = load_dataset(config)?;
    let set_size = config.set_size.unwrap_or(5);
    let min_categories = config
        .min_categories
        .unwrap_or_else(|| diversity::default_min_categories(set_size));
    let rank = config.rank.unwrap_or(diversity::DEFAULT_RANK);
    let epochs = config.kernel_epochs.or(config.epochs).unwrap_or(1);
    let lr = config.kernel_lr.or(config.lr).unwrap_or(1e-2);
    let seed = config.seed.unwrap_or(42);

    let pairs = diversity::build_diverse_training_pairs(&dataset, set_size, min_categories, seed)?;
    if pairs.pairs.is_empty() {
        eprintln!(
            "warning: no diverse windows found (set_size {set_size}, min_categories {min_categories}); the kernel will stay at its random initialization"
        );
    }
    let mut kernel =
        diversity::train_diversity_kernel(&pairs, dataset.num_items, rank, epochs, lr, seed)?;
    kernel.normalize_rows();
    let path = out_dir.join(format!("train-kernel-{}.bin", timestamp()));
    diversity::save_kernel(&path, &kernel)?;
    println!(
        "trained diversity kernel on {} pairs (rank {rank}, {epochs} epochs) -> {}",
        pairs.pairs.len(),
        path.display()
    );
    Ok(())
}

fn train_config_from(config: &RunConfig) -> Result<TrainConfig, CmdError> {
    let mut tc = TrainConfig::default();
    if let Some(objective) = &config.objective {
        tc.objective = objective.parse::<Objective>().map_err(CmdError::Usage)?;
    }
    if let Some(sampler) = &config.sampler {
        tc.sampler = sampler.parse::<SamplerMode>().map_err(CmdError::Usage)?;
    }
    if let Some(mode) = &config.kernel_mode {
        tc.kernel_mode = mode.parse::<KernelMode>().map_err(CmdError::Usage)?;
    }
    if let Some(k) = config.k {
        tc.k = k;
    }
    if let Some(n) = config.n {
        tc.n = n;
    }
    if let Some(lr) = config.lr {
        tc.learning_rate = lr;
    }
    if let Some(l2) = config.l2 {
        tc.l2 = l2;
    }
    if let Some(epochs) = config.epochs {
        tc.epochs = epochs;
    }
    if let Some(seed) = config.seed {
        tc.seed = seed;
    }
    if let Some(dim) = config.embedding_dim {
        tc.embedding_dim = dim;
    }
    if let Some(batch) = config.batch_size {
        tc.batch_size = batch;
    }
    if let Some(interval) = config.eval_interval {
        tc.eval_interval = interval;
    }
    if let Some(patience) = config.patience {
        tc.patience = if patience == 0 { None } else { Some(patience) };
    }
    tc.validate()?;
    Ok(tc)
}

fn resolve_kernel(config: &RunConfig, tc: &TrainConfig) -> Result<DiversityKernel, CmdError> {
    match tc.kernel_mode {
        KernelMode::Pretrained => {
            let path = require(&config.kernel, "kernel")?;
            Ok(DiversityKernel::Pretrained(diversity::load_kernel(&path)?))
        }
        // Bandwidth is re-estimated from the live embeddings each epoch.
        KernelMode::Gaussian => Ok(DiversityKernel::Gaussian { sigma: 1.0 }),
    }
}

fn write_train_outputs(
    out_dir: &Path,
    stem: &str,
    outcome: &model::TrainOutcome,
) -> Result<PathBuf, CmdError> {
    let ckpt = out_dir.join(format!("{stem}.bin"));
    outcome.best.save(&ckpt)?;
    let log_path = out_dir.join(format!("{stem}.json"));
    let mut log = String::new();
    for record in &outcome.log {
        log.push_str(&serde_json::to_string(record).expect("log record serializes"));
        log.push('\n');
    }
    fs::write(&log_path, log)?;
    Ok(ckpt)
}

fn cmd_train(config: &RunConfig, out_dir: &Path) -> Result<(), CmdError> {
    let dataset = load_dataset(config)?;
    let tc = train_config_from(config)?;
    let kernel = resolve_kernel(config, &tc)?;
    let outcome = model::train(&tc, &dataset, &kernel)?;
    let stem = format!("train-{}", timestamp());
    let ckpt = write_train_outputs(out_dir, &stem, &outcome)?;
    println!(
        "trained {} for {} epochs (best epoch {}, val ndcg@5 {:.4}, {} skipped instances) -> {}",
        tc.objective,
        outcome.log.len(),
        outcome.best_epoch,
        outcome.best_val_ndcg5,
        outcome.skipped_instances,
        ckpt.display()
    );
    Ok(())
}

fn cmd_evaluate(config: &RunConfig, out_dir: &Path) -> Result<(), CmdError> {
    let dataset = load_dataset(config)?;
    let model_path = require(&config.model, "model")?;
    let table = model::EmbeddingTable::load(&model_path)?;
    let cutoffs = config
        .eval_cutoffs
        .clone()
        .unwrap_or_else(|| vec![5, 10, 20]);
    let report = eval::evaluate_split(&table, &dataset, TargetSplit::Test, &cutoffs)?;
    let path = out_dir.join(format!("evaluate-{}.json", timestamp()));
    fs::write(
        &path,
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    for row in &report.cutoffs {
        println!(
            "N={:<3} recall {:.4}  ndcg {:.4}  cc {:.4}  f {:.4}",
            row.n, row.recall, row.ndcg, row.cc, row.f
        );
    }
    println!(
        "evaluated {} users -> {}",
        report.num_users_evaluated,
        path.display()
    );
    Ok(())
}

fn cmd_trend(config: &RunConfig, out_dir: &Path) -> Result<(), CmdError> {
    let dataset = load_dataset(config)?;
    let mut tc = train_config_from(config)?;
    let epochs_at = config
        .trend_epochs
        .clone()
        .unwrap_or_else(|| vec![0, 30, 100, 200]);
    let instances_wanted = config.trend_instances.unwrap_or(100);
    tc.snapshot_epochs = epochs_at.clone();
    tc.epochs = epochs_at.iter().copied().max().unwrap_or(0);
    tc.patience = None; // the run must reach the last requested epoch
    let kernel = resolve_kernel(config, &tc)?;
    let outcome = model::train(&tc, &dataset, &kernel)?;

    // One fixed category-matched instance sample shared by every
    // reported epoch.
    let instances = sampling::trend_instances(&dataset, tc.k, tc.n, instances_wanted, tc.seed)?;

    let stamp = timestamp();
    let mut csv = String::from("epoch,target_count,mean_prob\n");
    let mut reports = Vec::new();
    for (epoch, table) in &outcome.snapshots {
        let sigma_kernel;
        let eval_kernel: &DiversityKernel = match tc.kernel_mode {
            KernelMode::Pretrained => &kernel,
            KernelMode::Gaussian => {
                sigma_kernel = DiversityKernel::Gaussian {
                    sigma: diversity::median_pairwise_sigma(table, tc.seed),
                };
                &sigma_kernel
            }
        };
        let report = eval::probability_trend(table, eval_kernel, &instances, tc.k, *epoch)?;
        for (g, p) in report.group_means.iter().enumerate() {
            csv.push_str(&format!("{epoch},{g},{p:.10}\n"));
        }
        reports.push(report);
    }
    let csv_path = out_dir.join(format!("trend-{stamp}.csv"));
    fs::write(&csv_path, csv)?;
    let json_path = out_dir.join(format!("trend-{stamp}.json"));
    fs::write(
        &json_path,
        serde_json::to_string_pretty(&reports).expect("reports serialize"),
    )?;
    println!(
        "trend over {} instances at epochs {:?} -> {}",
        instances.len(),
        epochs_at,
        csv_path.display()
    );
    Ok(())
}

fn cmd_sweep(config: &RunConfig, out_dir: &Path) -> Result<(), CmdError> {
    let dataset = load_dataset(config)?;
    let param = require(&config.sweep_param, "param")?;
    let values = require(&config.sweep_values, "values")?;
    if values.is_empty() {
        return Err(CmdError::Usage("sweep needs at least one value".into()));
    }
    let base = train_config_from(config)?;
    let cutoffs = config
        .eval_cutoffs
        .clone()
        .unwrap_or_else(|| vec![5, 10, 20]);
    let kernel = resolve_kernel(config, &base)?;

    let mut csv = String::from("param,value,best_epoch,metric,cutoff,score\n");
    for &value in &values {
        let mut tc = base.clone();
        match param.as_str() {
            // k varies with n held equal to k.
            "k" => {
                tc.k = value;
                tc.n = value;
            }
            "n" => tc.n = value,
            other => {
                return Err(CmdError::Usage(format!(
                    "unknown sweep parameter `{other}` (expected k or n)"
                )))
            }
        }
        tc.validate()?;
        let outcome = model::train(&tc, &dataset, &kernel)?;
        let report = eval::evaluate_split(&outcome.best, &dataset, TargetSplit::Test, &cutoffs)?;
        for row in &report.cutoffs {
            for (metric, score) in [
                ("recall", row.recall),
                ("ndcg", row.ndcg),
                ("cc", row.cc),
                ("f", row.f),
            ] {
                csv.push_str(&format!(
                    "{param},{value},{},{metric},{},{score:.6}\n",
                    outcome.best_epoch, row.n
                ));
            }
        }
        println!(
            "{param}={value}: best epoch {}, test ndcg@{} {:.4}",
            outcome.best_epoch, report.cutoffs[0].n, report.cutoffs[0].ndcg
        );
    }
    let path = out_dir.join(format!("sweep-{}.csv", timestamp()));
    fs::write(&path, csv)?;
    println!("sweep grid written -> {}", path.display());
    Ok(())
}

fn cmd_verify(config: &RunConfig, _out_dir: &Path) -> Result<(), CmdError> {
    let seed = config.seed.unwrap_or(42);
    let report = verify::run_verification(seed);
    let mut failed = false;
    for check in &report.checks {
        let status = if check.passed { "ok" } else { "FAIL" };
        println!("{status:>4}  {}: {}", check.name, check.detail);
        if !check.passed {
            failed = true;
        }
    }
    if failed {
        return Err(CmdError::Verification(
            "one or more oracle checks failed".into(),
        ));
    }
    println!("all checks passed");
    Ok(())
}
