//! End-to-end run execution: load a dataset, train, probe, and write the
//! artifact set (`metrics.json`, `sparsity.csv`, `checkpoint.bin`, optional
//! `explanations.tsv`). Also drives the hyperparameter sweep.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use engage_core::explain::{explain_graph_level, explain_node_level, Explanation, SmoothingConfig};
use engage_core::gnn::{encode, save_checkpoint, EncoderConfig};
use engage_core::graph::{
    generate_motif_dataset, parse_node_dataset, parse_tudataset, Dataset, MotifInfo, MotifSpec,
    Task,
};
use engage_core::knn::{build_exact, build_quantized, NnIndex};
use engage_core::tensor::Matrix;
use engage_core::train::{train_graph_level, train_node_level, RunRecord, TrainConfig};
use engage_core::{augment::AugmentMode, eval::linear_probe, Error, Result};
use serde::{Deserialize, Serialize};

use crate::manifest::{parse_dataset_spec, DatasetSpec, RunManifest};

/// Seed for the built-in synthetic benchmark. Deliberately independent of
/// the run seed so that runs with different training seeds see the same
/// graphs and their probe accuracies are comparable.
pub const MOTIF_GENERATION_SEED: u64 = 97;

/// The built-in synthetic benchmark behind `synthetic:motif`, with its
/// ground-truth motif locations.
pub fn motif_dataset() -> Result<(Dataset, Vec<MotifInfo>)> {
    generate_motif_dataset(&MotifSpec::default(), MOTIF_GENERATION_SEED)
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    match spec {
        DatasetSpec::SyntheticMotif => Ok(motif_dataset()?.0),
        DatasetSpec::Tudataset { name, dir } => parse_tudataset(dir, name),
        DatasetSpec::Nodeset { dir } => parse_node_dataset(dir),
    }
}

/// The `metrics.json` schema. Field order here is serialization order.
/// `final_sparsity_mean` is `None` (JSON `null`) when the final epoch had
/// no attributions to measure (random mode, or all-degenerate).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub run_id: String,
    pub dataset: String,
    pub mode: String,
    pub framework: String,
    pub lambda_e: f64,
    pub lambda_f: f64,
    pub seed: u64,
    pub epochs: usize,
    pub probe_mean_acc: f64,
    pub probe_std_acc: f64,
    pub final_sparsity_mean: Option<f64>,
    pub wall_time_s: f64,
    pub mask_keep_rate_edge: Option<f64>,
    pub mask_keep_rate_feat: Option<f64>,
    pub explanation_refreshes: usize,
    pub final_loss: f64,
}

/// Everything a completed run produced, for callers that want more than
/// the serialized artifacts (the sweep, tests).
pub struct RunOutcome {
    pub metrics: Metrics,
    pub record: RunRecord,
    pub dataset: Dataset,
    pub encoder: EncoderConfig,
    pub train_cfg: TrainConfig,
}

fn probe_labels(ds: &Dataset) -> Result<Vec<usize>> {
    match ds.task {
        Task::GraphLevel => ds
            .graphs
            .iter()
            .enumerate()
            .map(|(i, g)| match g.label() {
                Some(l) if l >= 0 => Ok(l as usize),
                Some(l) => Err(Error::Config(format!("graph {i} has negative label {l}"))),
                None => Err(Error::Config(format!("graph {i} has no label to probe"))),
            })
            .collect(),
        Task::NodeLevel => {
            let labels = ds
                .node_labels
                .as_ref()
                .ok_or_else(|| Error::Config("node-level dataset has no node labels".into()))?;
            labels
                .iter()
                .enumerate()
                .map(|(i, &l)| {
                    if l >= 0 {
                        Ok(l as usize)
                    } else {
                        Err(Error::Config(format!("node {i} has negative label {l}")))
                    }
                })
                .collect()
        }
    }
}

/// Train and probe per the manifest. Does not touch the filesystem except
/// for dataset loading; artifact writing is `write_artifacts`.
pub fn execute(man: &RunManifest) -> Result<RunOutcome> {
    man.validate_names()?;
    let spec = parse_dataset_spec(&man.dataset)?;
    let ds = load_dataset(&spec)?;
    let encoder = man.encoder_config(ds.task);
    let train_cfg = man.train_config(ds.task)?;
    let probe_cfg = man.probe_config(ds.task)?;

    let t0 = Instant::now();
    let mut record = match ds.task {
        Task::GraphLevel => train_graph_level(&ds, &encoder, &train_cfg)?,
        Task::NodeLevel => train_node_level(&ds, &encoder, &train_cfg)?,
    };
    let labels = probe_labels(&ds)?;
    let (mean_acc, std_acc) = linear_probe(&record.final_embeddings, &labels, &probe_cfg, man.seed)?;
    record.probe_mean_acc = Some(mean_acc);
    record.probe_std_acc = Some(std_acc);
    let wall_time_s = if man.stable_timing {
        0.0
    } else {
        t0.elapsed().as_secs_f64()
    };

    let finite = |x: f64| if x.is_finite() { Some(x) } else { None };
    let metrics = Metrics {
        run_id: man.run_id(),
        dataset: man.dataset.clone(),
        mode: man.mode.clone(),
        framework: man.framework.clone(),
        lambda_e: man.lambda_e,
        lambda_f: man.lambda_f,
        seed: man.seed,
        epochs: man.epochs,
        probe_mean_acc: mean_acc,
        probe_std_acc: std_acc,
        final_sparsity_mean: record.sparsity.last().copied().and_then(finite),
        wall_time_s,
        mask_keep_rate_edge: finite(record.mask_keep_rate_edge),
        mask_keep_rate_feat: finite(record.mask_keep_rate_feat),
        explanation_refreshes: record.explanation_refreshes,
        final_loss: record.losses.last().copied().unwrap_or(f64::NAN),
    };
    Ok(RunOutcome {
        metrics,
        record,
        dataset: ds,
        encoder,
        train_cfg,
    })
}

/// Serialize one finished run into `out`: `metrics.json`, `sparsity.csv`,
/// `checkpoint.bin`, and (on request) `explanations.tsv`.
pub fn write_artifacts(man: &RunManifest, outcome: &RunOutcome, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut json = serde_json::to_string_pretty(&outcome.metrics)
        .map_err(|e| Error::parse("metrics.json", None, e.to_string()))?;
    json.push('\n');
    fs::write(out.join("metrics.json"), json)?;
    fs::write(out.join("sparsity.csv"), sparsity_csv(&outcome.record))?;
    save_checkpoint(&out.join("checkpoint.bin"), &outcome.record.final_params)?;
    if man.dump_explanations {
        let tsv = explanations_tsv(outcome)?;
        fs::write(out.join("explanations.tsv"), tsv)?;
    }
    Ok(())
}

fn sparsity_csv(record: &RunRecord) -> String {
    let mut csv = String::from("epoch,mean_sparsity\n");
    for (epoch, s) in record.sparsity.iter().enumerate() {
        if s.is_nan() {
            csv.push_str(&format!("{epoch},NaN\n"));
        } else {
            csv.push_str(&format!("{epoch},{s}\n"));
        }
    }
    csv
}

/// Recompute attributions from the final parameters and lay them out as
/// one row per node: `graph_id \t node_id \t psi \t psi01`. Graphs whose
/// explanation is degenerate contribute no rows.
fn explanations_tsv(outcome: &RunOutcome) -> Result<String> {
    let mut tsv = String::from("graph_id\tnode_id\tpsi\tpsi01\n");
    for (graph_id, expl) in final_explanations(outcome)?.iter().enumerate() {
        let Some(expl) = expl else { continue };
        for (node_id, (&psi, &psi01)) in expl.psi.iter().zip(&expl.psi01).enumerate() {
            tsv.push_str(&format!("{graph_id}\t{node_id}\t{psi}\t{psi01}\n"));
        }
    }
    Ok(tsv)
}

/// Explanations of every graph (or of the single node-level graph, as a
/// one-element vector) under the trained encoder, mirroring the smoothing
/// the run itself used.
pub fn final_explanations(outcome: &RunOutcome) -> Result<Vec<Option<Explanation>>> {
    let ds = &outcome.dataset;
    let params = &outcome.record.final_params;
    let cfg = &outcome.train_cfg;
    let encoded: Vec<(Matrix, Matrix)> = ds
        .graphs
        .iter()
        .map(|g| encode(g, &outcome.encoder, params))
        .collect::<Result<_>>()?;

    match ds.task {
        Task::GraphLevel => {
            let k = encoded[0].1.cols();
            let mut pooled = Matrix::zeros(encoded.len(), k);
            for (i, (_, p)) in encoded.iter().enumerate() {
                for j in 0..k {
                    pooled.set(i, j, p.get(0, j));
                }
            }
            let index = build_index(&pooled, cfg)?;
            let smoothing = smoothing_for(cfg, pooled.rows());
            Ok(encoded
                .iter()
                .enumerate()
                .map(|(i, (z_nodes, _))| {
                    explain_graph_level(
                        i,
                        z_nodes,
                        &pooled,
                        index.as_ref(),
                        &smoothing,
                        ds.graphs[i].edges(),
                    )
                    .ok()
                })
                .collect())
        }
        Task::NodeLevel => {
            let (z, _) = &encoded[0];
            let index = build_index(z, cfg)?;
            let smoothing = smoothing_for(cfg, z.rows());
            Ok(vec![explain_node_level(
                z,
                index.as_ref(),
                &smoothing,
                ds.graphs[0].edges(),
            )
            .ok()])
        }
    }
}

fn build_index(points: &Matrix, cfg: &TrainConfig) -> Result<Box<dyn NnIndex>> {
    if cfg.quantized_knn {
        let c = points.rows().clamp(1, 32);
        Ok(Box::new(build_quantized(points, c, 20, cfg.seed)?))
    } else {
        Ok(Box::new(build_exact(points)?))
    }
}

fn smoothing_for(cfg: &TrainConfig, num_points: usize) -> SmoothingConfig {
    let m = if cfg.augment.mode == AugmentMode::Heatmap {
        0
    } else {
        cfg.m
    };
    SmoothingConfig {
        m: m.min(num_points.saturating_sub(1)),
        include_self: true,
    }
}

/// Run and persist in one step; returns the metrics for display.
pub fn run_to_dir(man: &RunManifest) -> Result<Metrics> {
    let outcome = execute(man)?;
    write_artifacts(man, &outcome, Path::new(&man.out_dir))?;
    Ok(outcome.metrics)
}

/// Structured failure record, written as `error.json` so batch drivers can
/// tell a bad configuration from a mid-run numerical failure.
#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

/// Best-effort: serialize the error into `out_dir/error.json`. Failures to
/// write are swallowed — the caller is already on the error path.
pub fn write_error_record(out_dir: &str, err: &Error) {
    let record = ErrorRecord {
        kind: err.kind().to_string(),
        message: err.to_string(),
    };
    if fs::create_dir_all(out_dir).is_ok() {
        if let Ok(mut json) = serde_json::to_string_pretty(&record) {
            json.push('\n');
            let _ = fs::write(Path::new(out_dir).join("error.json"), json);
        }
    }
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub lambda_e: f64,
    pub lambda_f: f64,
    pub seed: u64,
    pub probe_mean_acc: f64,
    pub probe_std_acc: f64,
}

/// Seed-averaged summary of one (lambda_e, lambda_f) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub lambda_e: f64,
    pub lambda_f: f64,
    /// Mean over seeds of the per-run probe accuracy.
    pub mean_acc: f64,
    /// Population standard deviation over seeds.
    pub std_acc: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    pub dataset: String,
    pub framework: String,
    pub mode: String,
    pub seeds: Vec<u64>,
    pub cells: Vec<SweepCell>,
    /// Spread of the seed-averaged cell accuracies: max minus min.
    pub performance_gap: f64,
}

/// Run the full (lambda_e × lambda_f × seed) grid sequentially, writing
/// `sweep.csv` and `sweep_summary.json` into the base manifest's out_dir.
pub fn sweep(
    base: &RunManifest,
    lambda_es: &[f64],
    lambda_fs: &[f64],
    seeds: &[u64],
) -> Result<SweepSummary> {
    if lambda_es.is_empty() || lambda_fs.is_empty() || seeds.is_empty() {
        return Err(Error::Config(
            "sweep needs at least one value on each axis".into(),
        ));
    }
    base.validate_names()?;

    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for &le in lambda_es {
        for &lf in lambda_fs {
            let mut cell_accs = Vec::new();
            for &seed in seeds {
                let mut man = base.clone();
                man.lambda_e = le;
                man.lambda_f = lf;
                man.seed = seed;
                let outcome = execute(&man)?;
                rows.push(SweepRow {
                    lambda_e: le,
                    lambda_f: lf,
                    seed,
                    probe_mean_acc: outcome.metrics.probe_mean_acc,
                    probe_std_acc: outcome.metrics.probe_std_acc,
                });
                cell_accs.push(outcome.metrics.probe_mean_acc);
            }
            let mean = cell_accs.iter().sum::<f64>() / cell_accs.len() as f64;
            let var = cell_accs
                .iter()
                .map(|a| (a - mean) * (a - mean))
                .sum::<f64>()
                / cell_accs.len() as f64;
            cells.push(SweepCell {
                lambda_e: le,
                lambda_f: lf,
                mean_acc: mean,
                std_acc: var.sqrt(),
            });
        }
    }

    let max = cells.iter().map(|c| c.mean_acc).fold(f64::NEG_INFINITY, f64::max);
    let min = cells.iter().map(|c| c.mean_acc).fold(f64::INFINITY, f64::min);
    let summary = SweepSummary {
        dataset: base.dataset.clone(),
        framework: base.framework.clone(),
        mode: base.mode.clone(),
        seeds: seeds.to_vec(),
        cells,
        performance_gap: max - min,
    };

    let out = Path::new(&base.out_dir);
    fs::create_dir_all(out)?;
    let mut csv = Vec::new();
    writeln!(csv, "lambda_e,lambda_f,seed,probe_mean_acc,probe_std_acc").expect("vec write");
    for r in &rows {
        writeln!(
            csv,
            "{},{},{},{},{}",
            r.lambda_e, r.lambda_f, r.seed, r.probe_mean_acc, r.probe_std_acc
        )
        .expect("vec write");
    }
    fs::write(out.join("sweep.csv"), csv)?;
    let mut json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::parse("sweep_summary.json", None, e.to_string()))?;
    json.push('\n');
    fs::write(out.join("sweep_summary.json"), json)?;
    Ok(summary)
}

/// Read a previous run's `metrics.json` and return its measured mask keep
/// rates, for launching a perturbation-matched random baseline.
pub fn matched_keep_rates(metrics_path: &Path) -> Result<(f64, f64)> {
    let text = fs::read_to_string(metrics_path)?;
    let metrics: Metrics = serde_json::from_str(&text)
        .map_err(|e| Error::parse(metrics_path.display().to_string(), None, e.to_string()))?;
    match (metrics.mask_keep_rate_edge, metrics.mask_keep_rate_feat) {
        (Some(e), Some(f)) => Ok((e, f)),
        _ => Err(Error::Config(format!(
            "{} records no mask keep rates to match",
            metrics_path.display()
        ))),
    }
}
