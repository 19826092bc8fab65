//! Gradient-free activation attributions over encoder feature maps.
//!
//! The channel-importance vector w̃ for an item is the L2-normalized sum of
//! its embedding and its m nearest neighbors' embeddings in the current
//! embedding space — smoothing the raw class-activation idea with local
//! context so it works without labels. Node scores are
//! `ψ_i = relu(Σ_k w̃_k Z_{i,k})`, edge scores average the two endpoint
//! scores, and `normalize01` rescales ψ into [0, 1] for use as Bernoulli
//! arguments downstream.
//!
//! Everything here is a pure function over immutable embedding snapshots;
//! scoring many graphs in parallel is safe once the neighbor index is built.

use crate::error::{Error, Result};
use crate::knn::NnIndex;
use crate::tensor::Matrix;

/// Neighborhood-smoothing parameters.
///
/// `m = 0` with `include_self` reproduces the unsmoothed heat-map variant.
/// Whether smoothing runs over pooled graph embeddings or node embeddings
/// is decided by which `channel_importance_*` function the pipeline calls.
#[derive(Debug, Clone, Copy)]
pub struct SmoothingConfig {
    /// Neighbors averaged into each item's channel weights.
    pub m: usize,
    /// Add the item's own embedding to the neighbor sum (default true).
    pub include_self: bool,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            m: 5,
            include_self: true,
        }
    }
}

/// Attribution scores for one graph (or, node-level, one whole graph's
/// nodes with per-node channel weights).
#[derive(Debug, Clone)]
pub struct Explanation {
    /// Unit-norm channel weights: one row for a graph-level explanation,
    /// one row per node for a node-level explanation.
    pub w_tilde: Matrix,
    /// Nonnegative per-node scores ψ.
    pub psi: Vec<f64>,
    /// Min-max rescaled ψ in [0, 1].
    pub psi01: Vec<f64>,
    /// Per-edge scores φ aligned with the graph's canonical edge list.
    pub phi: Vec<f64>,
}

/// Sum `row(anchor)` (optionally) with its `m` nearest neighbor rows and
/// normalize to unit length.
fn smoothed_direction(
    anchor: usize,
    points: &Matrix,
    index: &dyn NnIndex,
    m: usize,
    include_self: bool,
) -> Result<Vec<f64>> {
    let k = points.cols();
    let mut sum = vec![0.0f64; k];
    if include_self {
        sum.copy_from_slice(points.row(anchor));
    }
    if m > 0 {
        for id in index.query(points.row(anchor), m, Some(anchor))? {
            for (s, x) in sum.iter_mut().zip(points.row(id)) {
                *s += x;
            }
        }
    }
    let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateExplanation);
    }
    for s in &mut sum {
        *s /= norm;
    }
    Ok(sum)
}

/// Channel weights for graph `n`: normalized sum of its pooled embedding
/// and those of its `m` nearest neighbor graphs (self excluded from the
/// neighbor query).
pub fn channel_importance_graph(
    n: usize,
    pooled: &Matrix,
    index: &dyn NnIndex,
    m: usize,
    include_self: bool,
) -> Result<Vec<f64>> {
    smoothed_direction(n, pooled, index, m, include_self)
}

/// Channel weights for node `i`: normalized sum over its embedding-space
/// neighborhood within the node embedding matrix.
pub fn channel_importance_node(
    i: usize,
    z: &Matrix,
    index: &dyn NnIndex,
    m: usize,
    include_self: bool,
) -> Result<Vec<f64>> {
    smoothed_direction(i, z, index, m, include_self)
}

/// Per-node heat-map: `ψ_i = relu(Σ_k w̃_k Z_{i,k})`.
pub fn node_scores(z: &Matrix, w_tilde: &[f64]) -> Result<Vec<f64>> {
    if z.cols() != w_tilde.len() {
        return Err(Error::shape("node_scores", z.shape(), (1, w_tilde.len())));
    }
    Ok((0..z.rows())
        .map(|i| {
            z.row(i)
                .iter()
                .zip(w_tilde)
                .map(|(x, w)| x * w)
                .sum::<f64>()
                .max(0.0)
        })
        .collect())
}

/// Labeled-case reference scores: identical arithmetic to [`node_scores`]
/// with a class weight vector in place of w̃. Test-only oracle relating the
/// unsupervised heat-map to its supervised ancestor.
pub fn cam_scores(z: &Matrix, class_weights: &[f64]) -> Result<Vec<f64>> {
    node_scores(z, class_weights)
}

/// Per-edge scores: `φ_{(u,v)} = (ψ_u + ψ_v) / 2`, aligned with `edges`.
pub fn edge_scores(psi: &[f64], edges: &[(u32, u32)]) -> Vec<f64> {
    edges
        .iter()
        .map(|&(u, v)| 0.5 * (psi[u as usize] + psi[v as usize]))
        .collect()
}

/// Min-max rescale into [0, 1]; a constant input maps to all 0.5 by
/// convention (no ordering information to preserve).
pub fn normalize01(values: &[f64]) -> Vec<f64> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if values.is_empty() || lo == hi {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Explanation sparsity of one graph: `S = 1 − |{i : ψ_i > μ}| / n`, where
/// `μ` is the mean of ψ over every node of the evaluation set.
pub fn sparsity(psi: &[f64], dataset_mean: f64) -> f64 {
    if psi.is_empty() {
        return 1.0;
    }
    let above = psi.iter().filter(|&&p| p > dataset_mean).count();
    1.0 - above as f64 / psi.len() as f64
}

/// Full graph-level explanation for graph `n`: channel weights from the
/// pooled-embedding neighborhood, scores over the graph's own node
/// embeddings, per-graph [0,1] rescale, and edge scores.
pub fn explain_graph_level(
    n: usize,
    z_nodes: &Matrix,
    pooled: &Matrix,
    index: &dyn NnIndex,
    cfg: &SmoothingConfig,
    edges: &[(u32, u32)],
) -> Result<Explanation> {
    let w = channel_importance_graph(n, pooled, index, cfg.m, cfg.include_self)?;
    let psi = node_scores(z_nodes, &w)?;
    let psi01 = normalize01(&psi);
    let phi = edge_scores(&psi, edges);
    Ok(Explanation {
        w_tilde: Matrix::row_vector(&w),
        psi,
        psi01,
        phi,
    })
}

/// Full node-level explanation: every node gets its own channel weights
/// from its embedding-space neighborhood, then scores its own embedding.
/// Rescaling runs over the whole graph.
pub fn explain_node_level(
    z: &Matrix,
    index: &dyn NnIndex,
    cfg: &SmoothingConfig,
    edges: &[(u32, u32)],
) -> Result<Explanation> {
    let n = z.rows();
    let mut w_tilde = Matrix::zeros(n, z.cols());
    let mut psi = Vec::with_capacity(n);
    for i in 0..n {
        let w = channel_importance_node(i, z, index, cfg.m, cfg.include_self)?;
        let score = z
            .row(i)
            .iter()
            .zip(&w)
            .map(|(x, wk)| x * wk)
            .sum::<f64>()
            .max(0.0);
        for (j, wk) in w.iter().enumerate() {
            w_tilde.set(i, j, *wk);
        }
        psi.push(score);
    }
    let psi01 = normalize01(&psi);
    let phi = edge_scores(&psi, edges);
    Ok(Explanation {
        w_tilde,
        psi,
        psi01,
        phi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knn::build_exact;
    use crate::rng::substream;
    use rand::Rng;

    fn mat(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn zero_neighbors_with_self_is_normalized_own_embedding() {
        let pooled = mat(&[vec![3.0, 4.0], vec![1.0, 0.0]]);
        let index = build_exact(&pooled).unwrap();
        let w = channel_importance_graph(0, &pooled, &index, 0, true).unwrap();
        assert_eq!(w, vec![0.6, 0.8]);
    }

    #[test]
    fn identical_embeddings_share_direction_for_any_m() {
        let pooled = mat(&vec![vec![2.0, 2.0]; 6]);
        let index = build_exact(&pooled).unwrap();
        let expected = vec![1.0 / 2.0f64.sqrt(); 2];
        for m in [0usize, 1, 3, 5] {
            let w = channel_importance_graph(2, &pooled, &index, m, true).unwrap();
            for (a, b) in w.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12, "m = {m}");
            }
        }
    }

    #[test]
    fn three_graph_hand_oracle() {
        // Anchor 0 with m=1: nearest other graph is 1; sum = (1,0) + (0.9, 0.1).
        let pooled = mat(&[vec![1.0, 0.0], vec![0.9, 0.1], vec![-5.0, 0.0]]);
        let index = build_exact(&pooled).unwrap();
        let w = channel_importance_graph(0, &pooled, &index, 1, true).unwrap();
        let raw = [1.9f64, 0.1];
        let n = (raw[0] * raw[0] + raw[1] * raw[1]).sqrt();
        assert!((w[0] - raw[0] / n).abs() < 1e-12);
        assert!((w[1] - raw[1] / n).abs() < 1e-12);
    }

    #[test]
    fn duplicate_nodes_align_along_shared_direction() {
        let z = mat(&[vec![0.0, 2.0], vec![0.0, 2.0], vec![9.0, 0.0]]);
        let index = build_exact(&z).unwrap();
        let w = channel_importance_node(0, &z, &index, 1, true).unwrap();
        assert!((w[0] - 0.0).abs() < 1e-12);
        assert!((w[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn five_node_fixture_matches_sum_oracle() {
        let mut rng = substream(4, "test-explain-oracle", 0, 0);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let z = mat(&rows);
        let index = build_exact(&z).unwrap();
        let m = 2;
        for i in 0..5 {
            let got = channel_importance_node(i, &z, &index, m, true).unwrap();
            // Independent oracle: brute-force nearest-two selection + sum.
            let mut dists: Vec<(f64, usize)> = (0..5)
                .filter(|&j| j != i)
                .map(|j| {
                    let d: f64 = rows[i]
                        .iter()
                        .zip(&rows[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (d, j)
                })
                .collect();
            dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let mut sum = rows[i].clone();
            for &(_, j) in dists.iter().take(m) {
                for (s, x) in sum.iter_mut().zip(&rows[j]) {
                    *s += x;
                }
            }
            let n: f64 = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
            for (a, b) in got.iter().zip(&sum) {
                assert!((a - b / n).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn channel_weights_are_unit_norm() {
        let mut rng = substream(8, "test-unitnorm", 0, 0);
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let z = mat(&rows);
        let index = build_exact(&z).unwrap();
        for i in 0..10 {
            let w = channel_importance_node(i, &z, &index, 3, true).unwrap();
            let n: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn all_zero_embeddings_degenerate() {
        let z = Matrix::zeros(4, 3);
        let index = build_exact(&z).unwrap();
        let err = channel_importance_graph(0, &z, &index, 2, true).unwrap_err();
        assert!(matches!(err, Error::DegenerateExplanation));
    }

    #[test]
    fn score_of_opposed_row_is_zero_and_aligned_row_is_one() {
        let w = vec![0.6, 0.8];
        let z = mat(&[vec![-0.6, -0.8], vec![0.6, 0.8]]);
        let psi = node_scores(&z, &w).unwrap();
        assert_eq!(psi[0], 0.0);
        assert!((psi[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn node_scores_match_dot_oracle() {
        let mut rng = substream(6, "test-dot", 0, 0);
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let psi = node_scores(&mat(&rows), &w).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let dot: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
            assert!((psi[i] - dot.max(0.0)).abs() < 1e-12);
            assert!(psi[i] >= 0.0);
        }
    }

    #[test]
    fn cam_with_channel_weights_equals_node_scores() {
        let z = mat(&[vec![1.0, -0.5], vec![0.25, 2.0]]);
        let w = vec![0.3, -0.7];
        assert_eq!(cam_scores(&z, &w).unwrap(), node_scores(&z, &w).unwrap());
        assert_eq!(cam_scores(&z, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn edge_scores_average_endpoints() {
        let psi = vec![0.4, 0.8, 0.0];
        let phi = edge_scores(&psi, &[(0, 1), (1, 2)]);
        assert_eq!(phi, vec![0.6000000000000001, 0.4]);
        assert_eq!(edge_scores(&[0.0; 3], &[(0, 1)]), vec![0.0]);
    }

    #[test]
    fn star_graph_edge_oracle() {
        let psi = vec![1.0, 0.2, 0.4, 0.6];
        let edges = [(0, 1), (0, 2), (0, 3)];
        let phi = edge_scores(&psi, &edges);
        for (k, &(u, v)) in edges.iter().enumerate() {
            assert!((phi[k] - 0.5 * (psi[u as usize] + psi[v as usize])).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize01_examples() {
        assert_eq!(normalize01(&[0.0, 2.0, 4.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize01(&[3.0, 3.0, 3.0]), vec![0.5, 0.5, 0.5]);
        assert!(normalize01(&[]).is_empty());
    }

    #[test]
    fn batch_scope_and_per_graph_scope_differ() {
        // Two graphs' scores: per-graph rescaling saturates both to [0,1];
        // joint rescaling keeps the second graph's scores compressed.
        let g1 = [0.0, 1.0];
        let g2 = [0.0, 10.0];
        let per_graph: Vec<f64> = [normalize01(&g1), normalize01(&g2)].concat();
        let joint = normalize01(&[g1, g2].concat());
        assert_eq!(per_graph, vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(joint, vec![0.0, 0.1, 0.0, 1.0]);
    }

    #[test]
    fn sparsity_examples() {
        // All scores equal the mean: strict inequality counts nobody.
        assert_eq!(sparsity(&[0.3, 0.3, 0.3], 0.3), 1.0);
        // Half the nodes above the mean in a 4-node graph.
        assert_eq!(sparsity(&[1.0, 1.0, 0.0, 0.0], 0.5), 0.5);
    }

    #[test]
    fn sparsity_counting_oracle() {
        let mut rng = substream(10, "test-sparsity", 0, 0);
        let psi: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
        let mu = 0.4;
        let oracle = 1.0 - psi.iter().filter(|&&p| p > mu).count() as f64 / 25.0;
        assert_eq!(sparsity(&psi, mu), oracle);
        assert!((0.0..=1.0).contains(&sparsity(&psi, mu)));
    }

    #[test]
    fn positive_scaling_preserves_rankings() {
        let mut rng = substream(12, "test-scale", 0, 0);
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let edges: Vec<(u32, u32)> = vec![(0, 1), (2, 3), (4, 5), (6, 7), (1, 2)];
        let c = 3.7;
        let scaled: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|x| c * x).collect())
            .collect();

        let rank = |vals: &[f64]| -> Vec<usize> {
            let mut idx: Vec<usize> = (0..vals.len()).collect();
            idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap().then(a.cmp(&b)));
            idx
        };

        let z1 = mat(&rows);
        let z2 = mat(&scaled);
        let i1 = build_exact(&z1).unwrap();
        let i2 = build_exact(&z2).unwrap();
        let cfg = SmoothingConfig { m: 2, include_self: true };
        let e1 = explain_node_level(&z1, &i1, &cfg, &edges).unwrap();
        let e2 = explain_node_level(&z2, &i2, &cfg, &edges).unwrap();
        assert_eq!(rank(&e1.psi), rank(&e2.psi));
        assert_eq!(rank(&e1.phi), rank(&e2.phi));
    }

    #[test]
    fn zero_neighbor_smoothing_is_plain_heat_map() {
        // m = 0 with include_self reduces to scoring against the item's own
        // normalized embedding.
        let mut rng = substream(14, "test-hg", 0, 0);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let pooled = mat(&rows);
        let index = build_exact(&pooled).unwrap();
        for n in 0..5 {
            let w = channel_importance_graph(n, &pooled, &index, 0, true).unwrap();
            let norm: f64 = rows[n].iter().map(|x| x * x).sum::<f64>().sqrt();
            for (a, b) in w.iter().zip(&rows[n]) {
                assert!((a - b / norm).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn graph_level_explanation_assembles_all_fields() {
        let z_nodes = mat(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let pooled = mat(&[vec![1.0, 0.5], vec![0.9, 0.6], vec![-1.0, 0.2]]);
        let index = build_exact(&pooled).unwrap();
        let cfg = SmoothingConfig { m: 1, include_self: true };
        let edges = [(0, 1), (1, 2)];
        let e = explain_graph_level(0, &z_nodes, &pooled, &index, &cfg, &edges).unwrap();
        assert_eq!(e.w_tilde.shape(), (1, 2));
        assert_eq!(e.psi.len(), 3);
        assert_eq!(e.phi.len(), 2);
        assert!(e.psi01.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(e.psi.iter().all(|p| *p >= 0.0));
        let norm: f64 = e.w_tilde.row(0).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-10);
    }
}
