//! Construction of the two contrastive views: attribution-guided edge and
//! feature masks with protection above a threshold and complementarity
//! below it, plus the independent random baseline.
//!
//! The guided scheme works per graph with statistics taken over a
//! configurable scope: an element (edge or node) whose raw score strictly
//! exceeds `θ = μ + λ·σ` is PROTECTED — present in both views; every other
//! element is drawn once from a Bernoulli on its [0,1]-rescaled score and
//! the second view takes the complement, so the unprotected parts of the
//! two views never overlap. One draw covers an undirected edge in both
//! directions, and one draw per node covers all of its feature columns.
//!
//! Mask generation is pure given an explicit rng stream; callers hand each
//! graph its own substream so parallel scheduling cannot change the draws.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// How the two views are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentMode {
    /// Independent Bernoulli keeps per element and view; no guidance.
    Random,
    /// Guided masks from unsmoothed attributions (m = 0).
    Heatmap,
    /// Guided masks from neighborhood-smoothed attributions.
    Engage,
}

/// Scope of the mean/std behind the protection thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatsScope {
    PerGraph,
    PerBatch,
}

/// Augmentation parameters.
#[derive(Debug, Clone, Copy)]
pub struct AugmentConfig {
    pub mode: AugmentMode,
    /// Threshold multiplier for edges: θ_e = μ_φ + λ_e·σ_φ.
    pub lambda_e: f64,
    /// Threshold multiplier for node features: θ_f = μ_ψ + λ_f·σ_ψ.
    pub lambda_f: f64,
    pub stats_scope: StatsScope,
    /// Keep probability per edge in random mode.
    pub p_edge: f64,
    /// Keep probability per node's features in random mode.
    pub p_feat: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            mode: AugmentMode::Engage,
            lambda_e: 1.0,
            lambda_f: 1.0,
            stats_scope: StatsScope::PerBatch,
            p_edge: 0.8,
            p_feat: 0.8,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_edge", self.p_edge), ("p_feat", self.p_feat)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Binary masks for both views of one graph. Edge masks align with the
/// graph's canonical edge list; feature masks hold one bit per node,
/// broadcast across all feature columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPair {
    pub edge_mask_1: Vec<bool>,
    pub edge_mask_2: Vec<bool>,
    pub feat_mask_1: Vec<bool>,
    pub feat_mask_2: Vec<bool>,
}

/// Mean and population standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Edge protection threshold `θ_e = μ_φ + λ_e·σ_φ` over the configured
/// scope. An empty scope yields +∞: nothing is protected and both views
/// are fully complementary.
pub fn edge_threshold(phi: &[f64], lambda_e: f64) -> f64 {
    if phi.is_empty() {
        return f64::INFINITY;
    }
    let (mu, sigma) = mean_std(phi);
    mu + lambda_e * sigma
}

/// Feature protection threshold `θ_f = μ_ψ + λ_f·σ_ψ`; same conventions as
/// [`edge_threshold`].
pub fn feature_threshold(psi: &[f64], lambda_f: f64) -> f64 {
    if psi.is_empty() {
        return f64::INFINITY;
    }
    let (mu, sigma) = mean_std(psi);
    mu + lambda_f * sigma
}

/// Bernoulli arguments for edges: endpoint mean of the rescaled scores,
/// `(psi01_u + psi01_v) / 2`, aligned with `edges`.
pub fn edge_probs_from_psi01(psi01: &[f64], edges: &[(u32, u32)]) -> Vec<f64> {
    edges
        .iter()
        .map(|&(u, v)| 0.5 * (psi01[u as usize] + psi01[v as usize]))
        .collect()
}

/// Guided edge masks: protection on raw `φ > θ_e`, otherwise one Bernoulli
/// draw on the rescaled probability with the second view complementary.
/// One draw per undirected edge, in edge-list order.
pub fn make_edge_masks(
    phi: &[f64],
    edge_probs: &[f64],
    theta_e: f64,
    rng: &mut impl Rng,
) -> (Vec<bool>, Vec<bool>) {
    let mut m1 = Vec::with_capacity(phi.len());
    let mut m2 = Vec::with_capacity(phi.len());
    for (score, prob) in phi.iter().zip(edge_probs) {
        if *score > theta_e {
            m1.push(true);
            m2.push(true);
        } else {
            let keep = rng.random::<f64>() < *prob;
            m1.push(keep);
            m2.push(!keep);
        }
    }
    (m1, m2)
}

/// Guided feature masks: protection on raw `ψ > θ_f`, otherwise one
/// Bernoulli draw per node on its rescaled score, second view
/// complementary. Node order, one draw each.
pub fn make_feature_masks(
    psi: &[f64],
    psi01: &[f64],
    theta_f: f64,
    rng: &mut impl Rng,
) -> (Vec<bool>, Vec<bool>) {
    let mut m1 = Vec::with_capacity(psi.len());
    let mut m2 = Vec::with_capacity(psi.len());
    for (score, prob) in psi.iter().zip(psi01) {
        if *score > theta_f {
            m1.push(true);
            m2.push(true);
        } else {
            let keep = rng.random::<f64>() < *prob;
            m1.push(keep);
            m2.push(!keep);
        }
    }
    (m1, m2)
}

/// Baseline masks: an independent Bernoulli keep per edge and per node,
/// drawn separately for each view — no protection, no complementarity.
/// Draw order: per edge (view 1 then view 2), then per node (view 1 then
/// view 2).
pub fn random_masks(
    num_edges: usize,
    num_nodes: usize,
    p_edge: f64,
    p_feat: f64,
    rng: &mut impl Rng,
) -> MaskPair {
    let mut pair = MaskPair {
        edge_mask_1: Vec::with_capacity(num_edges),
        edge_mask_2: Vec::with_capacity(num_edges),
        feat_mask_1: Vec::with_capacity(num_nodes),
        feat_mask_2: Vec::with_capacity(num_nodes),
    };
    for _ in 0..num_edges {
        pair.edge_mask_1.push(rng.random::<f64>() < p_edge);
        pair.edge_mask_2.push(rng.random::<f64>() < p_edge);
    }
    for _ in 0..num_nodes {
        pair.feat_mask_1.push(rng.random::<f64>() < p_feat);
        pair.feat_mask_2.push(rng.random::<f64>() < p_feat);
    }
    pair
}

/// Materialize the two views: edges with mask 0 are removed, nodes with
/// feature mask 0 get their feature row zeroed; labels and node count are
/// shared with the original.
pub fn apply(g: &Graph, masks: &MaskPair) -> Result<(Graph, Graph)> {
    if masks.edge_mask_1.len() != g.num_edges()
        || masks.edge_mask_2.len() != g.num_edges()
        || masks.feat_mask_1.len() != g.num_nodes()
        || masks.feat_mask_2.len() != g.num_nodes()
    {
        return Err(Error::shape(
            "apply masks",
            (masks.edge_mask_1.len(), masks.feat_mask_1.len()),
            (g.num_edges(), g.num_nodes()),
        ));
    }
    let view = |edge_mask: &[bool], feat_mask: &[bool]| -> Result<Graph> {
        let edges: Vec<(u32, u32)> = g
            .edges()
            .iter()
            .zip(edge_mask)
            .filter_map(|(e, keep)| keep.then_some(*e))
            .collect();
        let mut features = g.features().clone();
        for (i, keep) in feat_mask.iter().enumerate() {
            if !keep {
                for j in 0..features.cols() {
                    features.set(i, j, 0.0);
                }
            }
        }
        Graph::new(g.num_nodes(), edges, features, g.label())
    };
    Ok((
        view(&masks.edge_mask_1, &masks.feat_mask_1)?,
        view(&masks.edge_mask_2, &masks.feat_mask_2)?,
    ))
}
