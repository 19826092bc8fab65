//! `engage` — train a graph encoder with explanation-guided augmentation
//! and probe the learned embeddings.
//!
//! Exit codes: 0 success, 2 invalid configuration, 1 any other failure.
//! Both failure paths leave a structured `error.json` in the output
//! directory. `ENGAGE_THREADS` bounds the worker pool.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use engage_cli::manifest::RunManifest;
use engage_cli::pipeline;
use engage_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "engage",
    version,
    about = "Explanation-guided augmentation workbench for graph contrastive learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train once, probe, and write metrics.json / sparsity.csv /
    /// checkpoint.bin into the output directory.
    Run(RunArgs),
    /// Grid over guidance strengths × seeds; writes sweep.csv and
    /// sweep_summary.json with the accuracy gap across cells.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Data source: tudataset:NAME:DIR, nodeset:DIR, or synthetic:motif.
    #[arg(long, default_value = "synthetic:motif")]
    dataset: String,

    /// Contrastive framework: simclr or simsiam.
    #[arg(long, default_value = "simclr")]
    framework: String,

    /// Augmentation mode: random, heatmap, or engage.
    #[arg(long, default_value = "engage")]
    mode: String,

    /// Threshold statistics scope: per-batch or per-graph
    /// (default: per-batch for graph-level data, per-graph for node-level).
    #[arg(long)]
    stats_scope: Option<String>,

    /// Edge-dropping severity (threshold shift in std units).
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    lambda_e: f64,

    /// Feature-masking severity.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    lambda_f: f64,

    /// Keep probability per edge in random mode.
    #[arg(long, default_value_t = 0.8)]
    p_edge: f64,

    /// Keep probability per node's features in random mode.
    #[arg(long, default_value_t = 0.8)]
    p_feat: f64,

    /// Softmax temperature of the contrastive loss.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,

    /// Neighbors mixed into each channel-importance estimate.
    #[arg(long, default_value_t = 5)]
    m: usize,

    #[arg(long, default_value_t = 50)]
    epochs: usize,

    #[arg(long, default_value_t = 32)]
    batch_size: usize,

    /// Learning rate (default: 0.01 graph-level, 0.005 node-level).
    #[arg(long)]
    lr: Option<f64>,

    /// Epochs trained with random augmentation before guidance starts.
    #[arg(long, default_value_t = 1)]
    warmup: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Use the coarse quantized neighbor index instead of the exact one.
    #[arg(long)]
    quantized_knn: bool,

    /// Remove the stop-gradient in the simsiam branch (collapse study).
    #[arg(long)]
    disable_stop_gradient: bool,

    /// Cross-validation folds for the linear probe
    /// (default: 10 graph-level, 5 node-level).
    #[arg(long)]
    probe_folds: Option<usize>,

    #[arg(long, default_value_t = 200)]
    probe_epochs: usize,

    #[arg(long, default_value_t = 0.1)]
    probe_lr: f64,

    #[arg(long, default_value_t = 1e-3)]
    probe_l2: f64,

    /// Probe repetitions with re-shuffled folds.
    #[arg(long, default_value_t = 1)]
    probe_repetitions: usize,

    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: String,

    /// Also write explanations.tsv (per-node attributions under the
    /// trained encoder).
    #[arg(long)]
    dump_explanations: bool,

    /// Record wall_time_s as 0.0 so repeated runs are byte-identical.
    #[arg(long)]
    stable_timing: bool,

    /// Copy the measured mask keep rates from a previous run's
    /// metrics.json into p_edge/p_feat — a perturbation-matched random
    /// baseline (forces --mode random).
    #[arg(long, value_name = "METRICS_JSON")]
    rd_match: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Edge-severity grid values.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "-2,0,2",
        allow_hyphen_values = true
    )]
    lambda_es: Vec<f64>,

    /// Feature-severity grid values.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "-2,0,2",
        allow_hyphen_values = true
    )]
    lambda_fs: Vec<f64>,

    /// Training seeds averaged within each grid cell.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    seeds: Vec<u64>,
}

fn manifest_from(args: &CommonArgs) -> Result<RunManifest> {
    let mut man = RunManifest::new(args.dataset.clone());
    man.framework = args.framework.clone();
    man.mode = args.mode.clone();
    man.stats_scope = args.stats_scope.clone();
    man.lambda_e = args.lambda_e;
    man.lambda_f = args.lambda_f;
    man.p_edge = args.p_edge;
    man.p_feat = args.p_feat;
    man.tau = args.tau;
    man.m = args.m;
    man.epochs = args.epochs;
    man.batch_size = args.batch_size;
    man.lr = args.lr;
    man.warmup_epochs = args.warmup;
    man.seed = args.seed;
    man.quantized_knn = args.quantized_knn;
    man.disable_stop_gradient = args.disable_stop_gradient;
    man.probe_folds = args.probe_folds;
    man.probe_epochs = args.probe_epochs;
    man.probe_lr = args.probe_lr;
    man.probe_l2 = args.probe_l2;
    man.probe_repetitions = args.probe_repetitions;
    man.out_dir = args.out.clone();
    man.dump_explanations = args.dump_explanations;
    man.stable_timing = args.stable_timing;
    if let Some(path) = &args.rd_match {
        let (p_edge, p_feat) = pipeline::matched_keep_rates(path)?;
        man.mode = "random".into();
        man.p_edge = p_edge;
        man.p_feat = p_feat;
    }
    Ok(man)
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("ENGAGE_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n >= 1 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("warning: could not apply ENGAGE_THREADS={n}: {e}");
                }
            }
            _ => eprintln!("warning: ignoring unparsable ENGAGE_THREADS={v:?}"),
        }
    }
}

fn run(args: &RunArgs) -> Result<()> {
    let man = manifest_from(&args.common)?;
    let metrics = pipeline::run_to_dir(&man)?;
    let sparsity = metrics
        .final_sparsity_mean
        .map(|s| format!("{s:.4}"))
        .unwrap_or_else(|| "n/a".into());
    println!(
        "run {}: probe acc {:.4} ± {:.4}, final sparsity {}, artifacts in {}",
        metrics.run_id, metrics.probe_mean_acc, metrics.probe_std_acc, sparsity, man.out_dir
    );
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let man = manifest_from(&args.common)?;
    let summary = pipeline::sweep(&man, &args.lambda_es, &args.lambda_fs, &args.seeds)?;
    println!(
        "sweep over {} cells × {} seeds: performance gap {:.4}, artifacts in {}",
        summary.cells.len(),
        summary.seeds.len(),
        summary.performance_gap,
        man.out_dir
    );
    Ok(())
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    let (out_dir, result) = match &cli.command {
        Command::Run(args) => (args.common.out.clone(), run(args)),
        Command::Sweep(args) => (args.common.out.clone(), sweep(args)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            pipeline::write_error_record(&out_dir, &err);
            eprintln!("error ({}): {err}", err.kind());
            if matches!(err, Error::Config(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
