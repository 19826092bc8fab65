//! Contrastive losses and the explanation-refresh training loops.
//!
//! Both pipelines share one epoch skeleton: snapshot-encode everything with
//! the current parameters, rebuild the nearest-neighbor index over the
//! snapshot, recompute attributions once per epoch (per-step refresh would
//! re-encode the dataset quadratically), then step the optimizer over
//! guided two-view batches. The first `warmup_epochs` use random masks —
//! an untrained encoder produces meaningless, frequently degenerate
//! attributions, and the warmup steps also move the head biases off their
//! zero initialization, which is what keeps later zero-feature views (a
//! legal outcome of complementary masks on low-degree nodes) from reaching
//! the loss as exact-zero rows.
//!
//! Losses are computed on projected embeddings. Gradients w.r.t. anything
//! behind a stop-gradient are exactly zero, so finite-difference checks of
//! the Simsiam loss are only meaningful with the stop-gradient disabled
//! (or restricted to predictor parameters).

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::augment::{
    self, edge_probs_from_psi01, edge_threshold, feature_threshold, make_edge_masks,
    make_feature_masks, random_masks, AugmentConfig, AugmentMode, MaskPair, StatsScope,
};
use crate::error::{Error, Result};
use crate::explain::{explain_graph_level, explain_node_level, sparsity, Explanation, SmoothingConfig};
use crate::gnn::{
    encode, encode_view_on_tape, harvest_grads, head_forward, init_encoder_params,
    init_head_params, lease_params, EncoderConfig, HeadConfig, HeadKind, ParamMap,
};
use crate::graph::{Dataset, Task};
use crate::knn::{build_exact, build_quantized, NnIndex};
use crate::rng::substream;
use crate::tensor::{AdamConfig, AdamState, Matrix, sgd_step, Tape, Tensor};

use rand::seq::SliceRandom;

/// Contrastive framework: negatives-based or stop-gradient-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Framework {
    Simclr,
    Simsiam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Training-loop parameters. Explanations refresh once per epoch by
/// construction; there is no per-step schedule.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub framework: Framework,
    /// Softmax temperature (simclr).
    pub tau: f64,
    /// Smoothing neighbors for the attribution channel weights.
    pub m: usize,
    pub augment: AugmentConfig,
    pub epochs: usize,
    /// Graphs per optimizer step (graph-level; the node pipeline contrasts
    /// all nodes of its one graph every step).
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    /// Epochs of random masks before attributions engage. At least 1.
    pub warmup_epochs: usize,
    pub seed: u64,
    /// Build the epoch index with the inverted-file quantizer instead of
    /// the exact scan.
    pub quantized_knn: bool,
    /// Debug switch for the collapse probe: bypass the stop-gradient in
    /// the Simsiam loss.
    pub disable_stop_gradient: bool,
}

impl TrainConfig {
    pub fn graph_level() -> Self {
        TrainConfig {
            framework: Framework::Simclr,
            tau: 0.5,
            m: 5,
            augment: AugmentConfig::default(),
            epochs: 50,
            batch_size: 32,
            lr: 0.01,
            optimizer: OptimizerKind::Adam,
            warmup_epochs: 1,
            seed: 0,
            quantized_knn: false,
            disable_stop_gradient: false,
        }
    }

    pub fn node_level() -> Self {
        TrainConfig {
            lr: 0.005,
            augment: AugmentConfig {
                stats_scope: StatsScope::PerGraph,
                ..AugmentConfig::default()
            },
            ..TrainConfig::graph_level()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.tau
            )));
        }
        if self.warmup_epochs < 1 {
            return Err(Error::Config(
                "warmup_epochs must be at least 1".into(),
            ));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(
                "batch_size must be at least 2 (the loss needs a pair)".into(),
            ));
        }
        self.augment.validate()
    }
}

/// Per-run traces and artifacts. All per-epoch vectors have length
/// `epochs`; sparsity entries are NaN for epochs without attributions
/// (warmup, random mode).
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub losses: Vec<f64>,
    pub sparsity: Vec<f64>,
    /// Mean per-column standard deviation of the snapshot embeddings —
    /// the collapse-probe trace.
    pub embedding_std: Vec<f64>,
    /// Number of epochs whose attributions were (re)computed.
    pub explanation_refreshes: usize,
    /// Snapshot embeddings after the final epoch: one row per graph
    /// (graph-level) or per node (node-level).
    pub final_embeddings: Matrix,
    /// Trained parameters, for checkpointing.
    pub final_params: ParamMap,
    /// Fraction of edge-mask entries set to keep, pooled over both views
    /// and all epochs — the empirical perturbation rate, usable as a
    /// matched `p_edge` for a random-baseline run. NaN when no mask was
    /// ever drawn over an edge.
    pub mask_keep_rate_edge: f64,
    /// Same for the per-node feature masks.
    pub mask_keep_rate_feat: f64,
    /// Filled in by the evaluation stage, if any.
    pub probe_mean_acc: Option<f64>,
    pub probe_std_acc: Option<f64>,
}

/// Running keep-bit tally over generated mask pairs.
#[derive(Default)]
struct KeepTally {
    edge_kept: u64,
    edge_total: u64,
    feat_kept: u64,
    feat_total: u64,
}

impl KeepTally {
    fn absorb(&mut self, masks: &MaskPair) {
        for m in [&masks.edge_mask_1, &masks.edge_mask_2] {
            self.edge_kept += m.iter().filter(|&&k| k).count() as u64;
            self.edge_total += m.len() as u64;
        }
        for m in [&masks.feat_mask_1, &masks.feat_mask_2] {
            self.feat_kept += m.iter().filter(|&&k| k).count() as u64;
            self.feat_total += m.len() as u64;
        }
    }

    fn edge_rate(&self) -> f64 {
        if self.edge_total == 0 {
            f64::NAN
        } else {
            self.edge_kept as f64 / self.edge_total as f64
        }
    }

    fn feat_rate(&self) -> f64 {
        if self.feat_total == 0 {
            f64::NAN
        } else {
            self.feat_kept as f64 / self.feat_total as f64
        }
    }
}

/// Reject exact-zero rows before a cosine-based loss sees them.
fn check_nonzero_rows(tape: &Tape, t: Tensor, what: &str) -> Result<()> {
    let v = tape.value(t);
    for r in 0..v.rows() {
        let sumsq: f64 = v.row(r).iter().map(|x| x * x).sum();
        if sumsq == 0.0 {
            return Err(Error::Numerical(format!(
                "{what} row {r} has zero norm"
            )));
        }
    }
    Ok(())
}

/// Normalized-temperature cross entropy over two aligned views, the
/// standard 2B-anchor form: both views are stacked, each anchor's positive
/// is its counterpart in the other view, and all other 2B−2 rows are
/// negatives (the positive term also appears in the denominator). Returns
/// the mean over all 2B anchors.
pub fn nt_xent(tape: &Tape, z1: Tensor, z2: Tensor, tau: f64) -> Result<Tensor> {
    if tau <= 0.0 {
        return Err(Error::Config(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    let (b, k) = tape.shape(z1);
    if tape.shape(z2) != (b, k) {
        return Err(Error::shape("nt_xent", (b, k), tape.shape(z2)));
    }
    if b < 2 {
        return Err(Error::Config(format!(
            "contrastive batch needs at least 2 instances, got {b}"
        )));
    }
    check_nonzero_rows(tape, z1, "view-1 embedding")?;
    check_nonzero_rows(tape, z2, "view-2 embedding")?;

    let n = 2 * b;
    let stacked = tape.concat_rows(&[z1, z2])?;
    let unit = tape.row_l2_normalize(stacked);
    let sims = tape.matmul(unit, tape.transpose(unit))?;
    let logits = tape.scalar_mul(sims, 1.0 / tau);

    // Self-similarities never count as negatives: push the diagonal far
    // enough down that exp underflows to exactly zero (cosine/τ is bounded,
    // so no real logit competes with −1e9).
    let mut diag = Matrix::zeros(n, n);
    for i in 0..n {
        diag.set(i, i, -1e9);
    }
    let masked = tape.add(logits, tape.leaf(diag))?;
    let denom = tape.log_sum_exp_rows(masked)?; // n×1

    // Positive logit per anchor, gathered with a 0/1 pairing matrix.
    let mut pairing = Matrix::zeros(n, n);
    for i in 0..n {
        pairing.set(i, (i + b) % n, 1.0);
    }
    let pos = tape.row_sum(tape.elementwise_mul(logits, tape.leaf(pairing))?); // n×1

    Ok(tape.mean(tape.sub(denom, pos)?))
}

/// Mean over rows of −cosine(a_r, b_r); the Simsiam distance. Rows are
/// L2-normalized internally.
pub fn negative_cosine_rows(tape: &Tape, a: Tensor, b: Tensor) -> Result<Tensor> {
    if tape.shape(a) != tape.shape(b) {
        return Err(Error::shape("negative_cosine_rows", tape.shape(a), tape.shape(b)));
    }
    let cos = tape.row_sum(tape.elementwise_mul(
        tape.row_l2_normalize(a),
        tape.row_l2_normalize(b),
    )?);
    Ok(tape.scalar_mul(tape.mean(cos), -1.0))
}

/// Symmetrized predictor-vs-stopped-target loss:
/// `½·[D(p(h1), sg(h2)) + D(p(h2), sg(h1))]` with `h = projector(z)`,
/// `p = predictor`, and `D` the row-mean negative cosine. Lies in [−1, 1];
/// gradients flow only through the predictor branches unless
/// `disable_stop_gradient` is set (the collapse-probe configuration).
pub fn simsiam_loss(
    tape: &Tape,
    z1: Tensor,
    z2: Tensor,
    params: &BTreeMap<String, Tensor>,
    projector_layers: usize,
    predictor_layers: usize,
    disable_stop_gradient: bool,
) -> Result<Tensor> {
    let h1 = head_forward(tape, z1, HeadKind::Projector, projector_layers, params)?;
    let h2 = head_forward(tape, z2, HeadKind::Projector, projector_layers, params)?;
    let p1 = head_forward(tape, h1, HeadKind::Predictor, predictor_layers, params)?;
    let p2 = head_forward(tape, h2, HeadKind::Predictor, predictor_layers, params)?;
    check_nonzero_rows(tape, h1, "projected view-1")?;
    check_nonzero_rows(tape, h2, "projected view-2")?;
    check_nonzero_rows(tape, p1, "predicted view-1")?;
    check_nonzero_rows(tape, p2, "predicted view-2")?;
    let stop = |t: Tensor| {
        if disable_stop_gradient {
            t
        } else {
            tape.stop_gradient(t)
        }
    };
    let d1 = negative_cosine_rows(tape, p1, stop(h2))?;
    let d2 = negative_cosine_rows(tape, p2, stop(h1))?;
    Ok(tape.scalar_mul(tape.add(d1, d2)?, 0.5))
}

/// One epoch's frozen-parameter encoding of the whole dataset.
struct Snapshot {
    /// Per-graph node embeddings.
    node_embeddings: Vec<Matrix>,
    /// One pooled row per graph.
    pooled: Matrix,
}

fn snapshot(ds: &Dataset, enc: &EncoderConfig, params: &ParamMap) -> Result<Snapshot> {
    let encoded: Result<Vec<(Matrix, Matrix)>> = ds
        .graphs
        .par_iter()
        .map(|g| encode(g, enc, params))
        .collect();
    let encoded = encoded?;
    let k = encoded[0].1.cols();
    let mut pooled = Matrix::zeros(encoded.len(), k);
    for (i, (_, row)) in encoded.iter().enumerate() {
        for j in 0..k {
            pooled.set(i, j, row.get(0, j));
        }
    }
    Ok(Snapshot {
        node_embeddings: encoded.into_iter().map(|(z, _)| z).collect(),
        pooled,
    })
}

/// Attributions for every graph against the pooled-embedding index; `None`
/// marks a degenerate direction (the graph falls back to random masks).
fn refresh_graph_explanations(
    ds: &Dataset,
    snap: &Snapshot,
    smoothing: &SmoothingConfig,
    quantized: bool,
    seed: u64,
) -> Result<Vec<Option<Explanation>>> {
    let exact;
    let quant;
    let index: &dyn NnIndex = if quantized {
        let c = snap.pooled.rows().min(32);
        quant = build_quantized(&snap.pooled, c, 20, seed)?;
        &quant
    } else {
        exact = build_exact(&snap.pooled)?;
        &exact
    };
    ds.graphs
        .par_iter()
        .enumerate()
        .map(|(gi, g)| {
            match explain_graph_level(
                gi,
                &snap.node_embeddings[gi],
                &snap.pooled,
                index,
                smoothing,
                g.edges(),
            ) {
                Ok(e) => Ok(Some(e)),
                Err(Error::DegenerateExplanation) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Mean per-graph sparsity against the dataset-wide mean score. NaN when
/// no graph has an attribution.
fn mean_sparsity(expls: &[Option<Explanation>]) -> f64 {
    let all: Vec<f64> = expls
        .iter()
        .flatten()
        .flat_map(|e| e.psi.iter().copied())
        .collect();
    if all.is_empty() {
        return f64::NAN;
    }
    let mu = all.iter().sum::<f64>() / all.len() as f64;
    let per_graph: Vec<f64> = expls
        .iter()
        .flatten()
        .map(|e| sparsity(&e.psi, mu))
        .collect();
    per_graph.iter().sum::<f64>() / per_graph.len() as f64
}

fn smoothing_for(cfg: &TrainConfig, num_points: usize) -> SmoothingConfig {
    let m = match cfg.augment.mode {
        AugmentMode::Heatmap => 0,
        _ => cfg.m,
    };
    SmoothingConfig {
        // Tiny datasets cannot supply m neighbors; cap rather than error.
        m: m.min(num_points.saturating_sub(1)),
        include_self: true,
    }
}

fn guided_mask_pair(
    expl: &Explanation,
    edges: &[(u32, u32)],
    theta_e: f64,
    theta_f: f64,
    rng: &mut impl rand::Rng,
) -> MaskPair {
    let probs = edge_probs_from_psi01(&expl.psi01, edges);
    let (e1, e2) = make_edge_masks(&expl.phi, &probs, theta_e, rng);
    let (f1, f2) = make_feature_masks(&expl.psi, &expl.psi01, theta_f, rng);
    MaskPair {
        edge_mask_1: e1,
        edge_mask_2: e2,
        feat_mask_1: f1,
        feat_mask_2: f2,
    }
}

fn optimizer_step(
    cfg: &TrainConfig,
    adam_cfg: &AdamConfig,
    adam: &mut AdamState,
    params: &mut ParamMap,
    grads: &ParamMap,
) -> Result<()> {
    match cfg.optimizer {
        OptimizerKind::Adam => adam.step(adam_cfg, params, grads),
        OptimizerKind::Sgd => sgd_step(cfg.lr, params, grads),
    }
}

/// Graph-level pipeline: contrast pooled embeddings of whole graphs.
pub fn train_graph_level(
    ds: &Dataset,
    enc: &EncoderConfig,
    cfg: &TrainConfig,
) -> Result<RunRecord> {
    cfg.validate()?;
    enc.validate()?;
    if ds.task != Task::GraphLevel {
        return Err(Error::Config(
            "graph-level training needs a graph-level dataset".into(),
        ));
    }
    let n = ds.graphs.len();
    if n < 2 {
        return Err(Error::Config(format!(
            "contrastive training needs at least 2 graphs, got {n}"
        )));
    }

    let in_dim = ds.graphs[0].feature_dim();
    let k = enc.hidden_dim;
    let heads = HeadConfig::default_for(k);
    let mut params = init_encoder_params(enc, in_dim, cfg.seed)?;
    params.extend(init_head_params(&heads.projector, HeadKind::Projector, k, cfg.seed)?);
    if cfg.framework == Framework::Simsiam {
        params.extend(init_head_params(&heads.predictor, HeadKind::Predictor, k, cfg.seed)?);
    }
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new();

    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut sparsity_trace = Vec::with_capacity(cfg.epochs);
    let mut embedding_std = Vec::with_capacity(cfg.epochs);
    let mut refreshes = 0usize;
    let mut tally = KeepTally::default();

    for epoch in 0..cfg.epochs {
        let snap = snapshot(ds, enc, &params)?;
        embedding_std.push(snap.pooled.mean_column_std());

        let guided =
            cfg.augment.mode != AugmentMode::Random && epoch >= cfg.warmup_epochs;
        let expls: Vec<Option<Explanation>> = if guided {
            refreshes += 1;
            let smoothing = smoothing_for(cfg, n);
            refresh_graph_explanations(ds, &snap, &smoothing, cfg.quantized_knn, cfg.seed)?
        } else {
            vec![None; n]
        };
        sparsity_trace.push(if guided { mean_sparsity(&expls) } else { f64::NAN });

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut substream(cfg.seed, "batch", epoch as u64, 0));

        let mut epoch_loss = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue; // a lone tail graph cannot form a pair
            }
            // Thresholds over the configured statistic scope.
            let batch_thetas = if cfg.augment.stats_scope == StatsScope::PerBatch {
                let phi: Vec<f64> = chunk
                    .iter()
                    .filter_map(|&gi| expls[gi].as_ref())
                    .flat_map(|e| e.phi.iter().copied())
                    .collect();
                let psi: Vec<f64> = chunk
                    .iter()
                    .filter_map(|&gi| expls[gi].as_ref())
                    .flat_map(|e| e.psi.iter().copied())
                    .collect();
                Some((
                    edge_threshold(&phi, cfg.augment.lambda_e),
                    feature_threshold(&psi, cfg.augment.lambda_f),
                ))
            } else {
                None
            };

            let tape = Tape::new();
            let leased = lease_params(&tape, &params);
            let mut pooled_1 = Vec::with_capacity(chunk.len());
            let mut pooled_2 = Vec::with_capacity(chunk.len());
            for &gi in chunk {
                let g = &ds.graphs[gi];
                let rng = &mut substream(cfg.seed, "augment", gi as u64, epoch as u64);
                let masks = match expls[gi].as_ref() {
                    Some(e) => {
                        let (theta_e, theta_f) = batch_thetas.unwrap_or_else(|| {
                            (
                                edge_threshold(&e.phi, cfg.augment.lambda_e),
                                feature_threshold(&e.psi, cfg.augment.lambda_f),
                            )
                        });
                        guided_mask_pair(e, g.edges(), theta_e, theta_f, rng)
                    }
                    None => random_masks(
                        g.num_edges(),
                        g.num_nodes(),
                        cfg.augment.p_edge,
                        cfg.augment.p_feat,
                        rng,
                    ),
                };
                tally.absorb(&masks);
                let (v1, v2) = augment::apply(g, &masks)?;
                for (view, bucket) in [(&v1, &mut pooled_1), (&v2, &mut pooled_2)] {
                    let feats = tape.leaf(view.features().clone());
                    let (_, pooled) = encode_view_on_tape(
                        &tape,
                        view.num_nodes(),
                        view.edges(),
                        feats,
                        enc,
                        &leased,
                    )?;
                    bucket.push(pooled);
                }
            }
            let z1 = tape.concat_rows(&pooled_1)?;
            let z2 = tape.concat_rows(&pooled_2)?;
            let loss = match cfg.framework {
                Framework::Simclr => {
                    let h1 =
                        head_forward(&tape, z1, HeadKind::Projector, heads.projector.len(), &leased)?;
                    let h2 =
                        head_forward(&tape, z2, HeadKind::Projector, heads.projector.len(), &leased)?;
                    nt_xent(&tape, h1, h2, cfg.tau)?
                }
                Framework::Simsiam => simsiam_loss(
                    &tape,
                    z1,
                    z2,
                    &leased,
                    heads.projector.len(),
                    heads.predictor.len(),
                    cfg.disable_stop_gradient,
                )?,
            };
            tape.backward(loss)?;
            let grads = harvest_grads(&tape, &leased);
            optimizer_step(cfg, &adam_cfg, &mut adam, &mut params, &grads)?;
            epoch_loss += tape.scalar_value(loss)?;
            steps += 1;
        }
        losses.push(if steps > 0 {
            epoch_loss / steps as f64
        } else {
            f64::NAN
        });
    }

    let final_snap = snapshot(ds, enc, &params)?;
    Ok(RunRecord {
        losses,
        sparsity: sparsity_trace,
        embedding_std,
        explanation_refreshes: refreshes,
        final_embeddings: final_snap.pooled,
        final_params: params,
        mask_keep_rate_edge: tally.edge_rate(),
        mask_keep_rate_feat: tally.feat_rate(),
        probe_mean_acc: None,
        probe_std_acc: None,
    })
}

/// Node-level pipeline: the dataset is a single graph whose nodes are the
/// contrast instances; every epoch takes one optimizer step over all of
/// them, with per-node channel weights smoothed over the node-embedding
/// index.
pub fn train_node_level(
    ds: &Dataset,
    enc: &EncoderConfig,
    cfg: &TrainConfig,
) -> Result<RunRecord> {
    cfg.validate()?;
    enc.validate()?;
    if ds.task != Task::NodeLevel {
        return Err(Error::Config(
            "node-level training needs a node-level dataset".into(),
        ));
    }
    let g = &ds.graphs[0];
    let n = g.num_nodes();
    if n < 2 {
        return Err(Error::Config(format!(
            "contrastive training needs at least 2 nodes, got {n}"
        )));
    }

    let in_dim = g.feature_dim();
    let k = enc.hidden_dim;
    let heads = HeadConfig::default_for(k);
    let mut params = init_encoder_params(enc, in_dim, cfg.seed)?;
    params.extend(init_head_params(&heads.projector, HeadKind::Projector, k, cfg.seed)?);
    if cfg.framework == Framework::Simsiam {
        params.extend(init_head_params(&heads.predictor, HeadKind::Predictor, k, cfg.seed)?);
    }
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new();

    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut sparsity_trace = Vec::with_capacity(cfg.epochs);
    let mut embedding_std = Vec::with_capacity(cfg.epochs);
    let mut refreshes = 0usize;
    let mut tally = KeepTally::default();

    for epoch in 0..cfg.epochs {
        let (z, _) = encode(g, enc, &params)?;
        embedding_std.push(z.mean_column_std());

        let guided =
            cfg.augment.mode != AugmentMode::Random && epoch >= cfg.warmup_epochs;
        let expl: Option<Explanation> = if guided {
            refreshes += 1;
            let smoothing = smoothing_for(cfg, n);
            let index = if cfg.quantized_knn {
                let c = n.min(32);
                Box::new(build_quantized(&z, c, 20, cfg.seed)?) as Box<dyn NnIndex>
            } else {
                Box::new(build_exact(&z)?) as Box<dyn NnIndex>
            };
            match explain_node_level(&z, index.as_ref(), &smoothing, g.edges()) {
                Ok(e) => Some(e),
                Err(Error::DegenerateExplanation) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        sparsity_trace.push(match &expl {
            Some(e) => {
                let mu = e.psi.iter().sum::<f64>() / e.psi.len() as f64;
                sparsity(&e.psi, mu)
            }
            None => f64::NAN,
        });

        let rng = &mut substream(cfg.seed, "augment", 0, epoch as u64);
        let masks = match &expl {
            Some(e) => {
                // Single-graph pipeline: both statistic scopes coincide.
                let theta_e = edge_threshold(&e.phi, cfg.augment.lambda_e);
                let theta_f = feature_threshold(&e.psi, cfg.augment.lambda_f);
                guided_mask_pair(e, g.edges(), theta_e, theta_f, rng)
            }
            None => random_masks(
                g.num_edges(),
                g.num_nodes(),
                cfg.augment.p_edge,
                cfg.augment.p_feat,
                rng,
            ),
        };
        tally.absorb(&masks);
        let (v1, v2) = augment::apply(g, &masks)?;

        let tape = Tape::new();
        let leased = lease_params(&tape, &params);
        let mut node_embeddings = Vec::with_capacity(2);
        for view in [&v1, &v2] {
            let feats = tape.leaf(view.features().clone());
            let (z_nodes, _) =
                encode_view_on_tape(&tape, view.num_nodes(), view.edges(), feats, enc, &leased)?;
            node_embeddings.push(z_nodes);
        }
        let loss = match cfg.framework {
            Framework::Simclr => {
                let h1 = head_forward(
                    &tape,
                    node_embeddings[0],
                    HeadKind::Projector,
                    heads.projector.len(),
                    &leased,
                )?;
                let h2 = head_forward(
                    &tape,
                    node_embeddings[1],
                    HeadKind::Projector,
                    heads.projector.len(),
                    &leased,
                )?;
                nt_xent(&tape, h1, h2, cfg.tau)?
            }
            Framework::Simsiam => simsiam_loss(
                &tape,
                node_embeddings[0],
                node_embeddings[1],
                &leased,
                heads.projector.len(),
                heads.predictor.len(),
                cfg.disable_stop_gradient,
            )?,
        };
        tape.backward(loss)?;
        let grads = harvest_grads(&tape, &leased);
        optimizer_step(cfg, &adam_cfg, &mut adam, &mut params, &grads)?;
        losses.push(tape.scalar_value(loss)?);
    }

    let (final_z, _) = encode(g, enc, &params)?;
    Ok(RunRecord {
        losses,
        sparsity: sparsity_trace,
        embedding_std,
        explanation_refreshes: refreshes,
        final_embeddings: final_z,
        final_params: params,
        mask_keep_rate_edge: tally.edge_rate(),
        mask_keep_rate_feat: tally.feat_rate(),
        probe_mean_acc: None,
        probe_std_acc: None,
    })
}
