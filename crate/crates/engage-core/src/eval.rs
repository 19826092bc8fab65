//! Downstream scoring of frozen representations: a stratified k-fold
//! cross-validated multinomial logistic-regression probe, trained with the
//! same differentiation core as everything else, reporting mean and
//! standard deviation of held-out accuracy.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::gnn::{harvest_grads, lease_params, ParamMap};
use crate::rng::substream;
use crate::tensor::{AdamConfig, AdamState, Matrix, Tape};

/// Probe hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct ProbeConfig {
    pub folds: usize,
    /// L2 penalty on the probe weights.
    pub l2: f64,
    pub probe_epochs: usize,
    pub probe_lr: f64,
    /// Whole cross-validation rounds, each with its own fold split.
    pub repetitions: usize,
}

impl ProbeConfig {
    pub fn graph_level() -> Self {
        ProbeConfig {
            folds: 10,
            l2: 1e-3,
            probe_epochs: 200,
            probe_lr: 0.1,
            repetitions: 1,
        }
    }

    pub fn node_level() -> Self {
        ProbeConfig {
            folds: 5,
            ..ProbeConfig::graph_level()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!(
                "cross-validation needs at least 2 folds, got {}",
                self.folds
            )));
        }
        if self.repetitions < 1 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.probe_epochs < 1 {
            return Err(Error::Config("probe_epochs must be at least 1".into()));
        }
        if self.probe_lr <= 0.0 {
            return Err(Error::Config(format!(
                "probe_lr must be positive, got {}",
                self.probe_lr
            )));
        }
        if self.l2 < 0.0 {
            return Err(Error::Config(format!(
                "l2 penalty must be nonnegative, got {}",
                self.l2
            )));
        }
        Ok(())
    }
}

/// Seeded stratified split: indices are shuffled, then each class's
/// members are dealt round-robin, so every fold holds either ⌊n_c/folds⌋
/// or ⌈n_c/folds⌉ samples of class c. The folds disjointly cover all
/// indices. The dealing offset rotates across classes to keep overall
/// fold sizes level.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Config(format!(
            "cross-validation needs at least 2 folds, got {folds}"
        )));
    }
    if labels.len() < folds {
        return Err(Error::Config(format!(
            "cannot split {} samples into {folds} folds",
            labels.len()
        )));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut substream(seed, "folds", 0, 0));

    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in &order {
        by_class.entry(labels[i]).or_default().push(i);
    }

    let mut out = vec![Vec::new(); folds];
    let mut cursor = 0usize;
    for members in by_class.values() {
        for &i in members {
            out[cursor % folds].push(i);
            cursor += 1;
        }
    }
    Ok(out)
}

/// Fraction of matching entries.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::shape(
            "accuracy",
            (predictions.len(), 1),
            (labels.len(), 1),
        ));
    }
    if predictions.is_empty() {
        return Err(Error::Config("cannot score an empty prediction set".into()));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

fn gather_rows(m: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), m.cols());
    for (r, &i) in idx.iter().enumerate() {
        for c in 0..m.cols() {
            out.set(r, c, m.get(i, c));
        }
    }
    out
}

/// Fit one softmax regression on the training rows and return held-out
/// accuracy.
fn fit_and_score(
    embeddings: &Matrix,
    labels: &[usize],
    train_idx: &[usize],
    test_idx: &[usize],
    num_classes: usize,
    cfg: &ProbeConfig,
) -> Result<f64> {
    let k = embeddings.cols();
    let x_train = gather_rows(embeddings, train_idx);
    let mut y_onehot = Matrix::zeros(train_idx.len(), num_classes);
    for (r, &i) in train_idx.iter().enumerate() {
        y_onehot.set(r, labels[i], 1.0);
    }

    // Zero init: the objective is convex, so no random restart is needed
    // and the probe is deterministic by construction.
    let mut params = ParamMap::new();
    params.insert("probe.w".into(), Matrix::zeros(k, num_classes));
    params.insert("probe.b".into(), Matrix::zeros(1, num_classes));
    let adam_cfg = AdamConfig {
        lr: cfg.probe_lr,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new();

    for _ in 0..cfg.probe_epochs {
        let tape = Tape::new();
        let leased = lease_params(&tape, &params);
        let x = tape.leaf(x_train.clone());
        let logits = tape.add(tape.matmul(x, leased["probe.w"])?, leased["probe.b"])?;
        let lse = tape.log_sum_exp_rows(logits)?;
        let true_logit =
            tape.row_sum(tape.elementwise_mul(logits, tape.leaf(y_onehot.clone()))?);
        let ce = tape.mean(tape.sub(lse, true_logit)?);
        let w = leased["probe.w"];
        let reg = tape.scalar_mul(tape.sum(tape.elementwise_mul(w, w)?), cfg.l2);
        let loss = tape.add(ce, reg)?;
        tape.backward(loss)?;
        let grads = harvest_grads(&tape, &leased);
        adam.step(&adam_cfg, &mut params, &grads)?;
    }

    let w = &params["probe.w"];
    let b = &params["probe.b"];
    let mut predictions = Vec::with_capacity(test_idx.len());
    for &i in test_idx {
        let row = embeddings.row(i);
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for c in 0..num_classes {
            let score: f64 =
                row.iter().enumerate().map(|(j, x)| x * w.get(j, c)).sum::<f64>() + b.get(0, c);
            if score > best_score {
                best_score = score;
                best = c;
            }
        }
        predictions.push(best);
    }
    let truth: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();
    accuracy(&predictions, &truth)
}

/// Cross-validated probe: mean and population standard deviation of
/// held-out accuracy over `folds × repetitions` fits. Labels must be
/// contiguous 0-based class indices.
pub fn linear_probe(
    embeddings: &Matrix,
    labels: &[usize],
    cfg: &ProbeConfig,
    seed: u64,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    let n = embeddings.rows();
    if labels.len() != n {
        return Err(Error::shape("linear_probe", (n, 1), (labels.len(), 1)));
    }
    if n < cfg.folds {
        return Err(Error::Config(format!(
            "{n} samples cannot fill {} folds",
            cfg.folds
        )));
    }
    let classes: BTreeSet<usize> = labels.iter().copied().collect();
    if classes.len() < 2 {
        return Err(Error::Config(
            "probing needs at least 2 classes".into(),
        ));
    }
    let num_classes = labels.iter().max().copied().unwrap_or(0) + 1;

    let mut accs = Vec::with_capacity(cfg.folds * cfg.repetitions);
    for rep in 0..cfg.repetitions {
        let folds = stratified_folds(labels, cfg.folds, seed.wrapping_add(rep as u64))?;
        for held in 0..folds.len() {
            let train_idx: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|(fi, _)| *fi != held)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            accs.push(fit_and_score(
                embeddings,
                labels,
                &train_idx,
                &folds[held],
                num_classes,
                cfg,
            )?);
        }
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / accs.len() as f64;
    Ok((mean, var.sqrt()))
}
