//! Run configuration: a flat, serializable record of everything that
//! identifies an experiment, plus its translation into the typed configs
//! of the core crate.

use std::path::PathBuf;

use engage_core::augment::{AugmentConfig, AugmentMode, StatsScope};
use engage_core::eval::ProbeConfig;
use engage_core::gnn::EncoderConfig;
use engage_core::graph::Task;
use engage_core::train::{Framework, OptimizerKind, TrainConfig};
use engage_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Full description of one run. Fields with `None` resolve to
/// task-dependent defaults once the dataset (and hence the task) is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// `tudataset:NAME:DIR`, `nodeset:DIR`, or `synthetic:motif`.
    pub dataset: String,
    /// `simclr` or `simsiam`.
    pub framework: String,
    /// `random`, `heatmap`, or `engage`.
    pub mode: String,
    /// `per-batch` or `per-graph`; `None` → per-batch for graph-level,
    /// per-graph for node-level.
    pub stats_scope: Option<String>,
    pub lambda_e: f64,
    pub lambda_f: f64,
    pub p_edge: f64,
    pub p_feat: f64,
    pub tau: f64,
    pub m: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// `None` → 0.01 graph-level, 0.005 node-level.
    pub lr: Option<f64>,
    pub warmup_epochs: usize,
    pub seed: u64,
    pub quantized_knn: bool,
    pub disable_stop_gradient: bool,
    /// `None` → 10 folds graph-level, 5 node-level.
    pub probe_folds: Option<usize>,
    pub probe_epochs: usize,
    pub probe_lr: f64,
    pub probe_l2: f64,
    pub probe_repetitions: usize,
    pub out_dir: String,
    pub dump_explanations: bool,
    /// Write `wall_time_s` as 0.0 so artifacts are byte-reproducible.
    pub stable_timing: bool,
}

impl RunManifest {
    pub fn new(dataset: impl Into<String>) -> Self {
        RunManifest {
            dataset: dataset.into(),
            framework: "simclr".into(),
            mode: "engage".into(),
            stats_scope: None,
            lambda_e: 1.0,
            lambda_f: 1.0,
            p_edge: 0.8,
            p_feat: 0.8,
            tau: 0.5,
            m: 5,
            epochs: 50,
            batch_size: 32,
            lr: None,
            warmup_epochs: 1,
            seed: 0,
            quantized_knn: false,
            disable_stop_gradient: false,
            probe_folds: None,
            probe_epochs: 200,
            probe_lr: 0.1,
            probe_l2: 1e-3,
            probe_repetitions: 1,
            out_dir: "out".into(),
            dump_explanations: false,
            stable_timing: false,
        }
    }

    /// Short content hash of the semantic configuration (everything except
    /// artifact plumbing: output directory, dump and timing switches).
    pub fn run_id(&self) -> String {
        let key = format!(
            "{}|{}|{}|{:?}|{}|{}|{}|{}|{}|{}|{}|{}|{:?}|{}|{}|{}|{}|{:?}|{}|{}|{}|{}",
            self.dataset,
            self.framework,
            self.mode,
            self.stats_scope,
            self.lambda_e,
            self.lambda_f,
            self.p_edge,
            self.p_feat,
            self.tau,
            self.m,
            self.epochs,
            self.batch_size,
            self.lr,
            self.warmup_epochs,
            self.seed,
            self.quantized_knn,
            self.disable_stop_gradient,
            self.probe_folds,
            self.probe_epochs,
            self.probe_lr,
            self.probe_l2,
            self.probe_repetitions,
        );
        let digest = Sha256::digest(key.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..12].to_string()
    }

    pub fn parsed_framework(&self) -> Result<Framework> {
        match self.framework.as_str() {
            "simclr" => Ok(Framework::Simclr),
            "simsiam" => Ok(Framework::Simsiam),
            other => Err(Error::Config(format!(
                "unknown framework {other:?}; expected simclr or simsiam"
            ))),
        }
    }

    pub fn parsed_mode(&self) -> Result<AugmentMode> {
        match self.mode.as_str() {
            "random" => Ok(AugmentMode::Random),
            "heatmap" => Ok(AugmentMode::Heatmap),
            "engage" => Ok(AugmentMode::Engage),
            other => Err(Error::Config(format!(
                "unknown mode {other:?}; expected random, heatmap, or engage"
            ))),
        }
    }

    fn parsed_scope(&self, task: Task) -> Result<StatsScope> {
        match self.stats_scope.as_deref() {
            Some("per-batch") => Ok(StatsScope::PerBatch),
            Some("per-graph") => Ok(StatsScope::PerGraph),
            Some(other) => Err(Error::Config(format!(
                "unknown stats scope {other:?}; expected per-batch or per-graph"
            ))),
            None => Ok(match task {
                Task::GraphLevel => StatsScope::PerBatch,
                Task::NodeLevel => StatsScope::PerGraph,
            }),
        }
    }

    /// Validate the string-typed fields without needing a dataset.
    pub fn validate_names(&self) -> Result<()> {
        self.parsed_framework()?;
        self.parsed_mode()?;
        if let Some(s) = self.stats_scope.as_deref() {
            if s != "per-batch" && s != "per-graph" {
                return Err(Error::Config(format!(
                    "unknown stats scope {s:?}; expected per-batch or per-graph"
                )));
            }
        }
        parse_dataset_spec(&self.dataset)?;
        Ok(())
    }

    pub fn encoder_config(&self, task: Task) -> EncoderConfig {
        match task {
            Task::GraphLevel => EncoderConfig::graph_level(),
            Task::NodeLevel => EncoderConfig::node_level(),
        }
    }

    pub fn train_config(&self, task: Task) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            framework: self.parsed_framework()?,
            tau: self.tau,
            m: self.m,
            augment: AugmentConfig {
                mode: self.parsed_mode()?,
                lambda_e: self.lambda_e,
                lambda_f: self.lambda_f,
                stats_scope: self.parsed_scope(task)?,
                p_edge: self.p_edge,
                p_feat: self.p_feat,
            },
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr.unwrap_or(match task {
                Task::GraphLevel => 0.01,
                Task::NodeLevel => 0.005,
            }),
            optimizer: OptimizerKind::Adam,
            warmup_epochs: self.warmup_epochs,
            seed: self.seed,
            quantized_knn: self.quantized_knn,
            disable_stop_gradient: self.disable_stop_gradient,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn probe_config(&self, task: Task) -> Result<ProbeConfig> {
        let cfg = ProbeConfig {
            folds: self.probe_folds.unwrap_or(match task {
                Task::GraphLevel => 10,
                Task::NodeLevel => 5,
            }),
            l2: self.probe_l2,
            probe_epochs: self.probe_epochs,
            probe_lr: self.probe_lr,
            repetitions: self.probe_repetitions,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Where the data comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetSpec {
    Tudataset { name: String, dir: PathBuf },
    Nodeset { dir: PathBuf },
    SyntheticMotif,
}

pub fn parse_dataset_spec(s: &str) -> Result<DatasetSpec> {
    if s == "synthetic:motif" {
        return Ok(DatasetSpec::SyntheticMotif);
    }
    if let Some(rest) = s.strip_prefix("tudataset:") {
        if let Some((name, dir)) = rest.split_once(':') {
            if !name.is_empty() && !dir.is_empty() {
                return Ok(DatasetSpec::Tudataset {
                    name: name.to_string(),
                    dir: PathBuf::from(dir),
                });
            }
        }
        return Err(Error::Config(format!(
            "malformed dataset spec {s:?}; expected tudataset:NAME:DIR"
        )));
    }
    if let Some(dir) = s.strip_prefix("nodeset:") {
        if !dir.is_empty() {
            return Ok(DatasetSpec::Nodeset {
                dir: PathBuf::from(dir),
            });
        }
        return Err(Error::Config(format!(
            "malformed dataset spec {s:?}; expected nodeset:DIR"
        )));
    }
    Err(Error::Config(format!(
        "unknown dataset spec {s:?}; expected tudataset:NAME:DIR, nodeset:DIR, or synthetic:motif"
    )))
}
