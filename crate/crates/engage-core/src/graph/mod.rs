//! Graph data model, dataset containers, on-disk loaders, and a synthetic
//! planted-motif benchmark.
//!
//! Graphs are undirected and unweighted. The stored edge list holds each
//! unordered pair exactly once in canonical `(min, max)` order; self-loops
//! never appear in the list — self-connections exist only inside the
//! normalized adjacency, which is formed after any edge masking.

mod motif;
mod nodeset;
mod tudataset;

pub use motif::{generate_motif_dataset, MotifInfo, MotifKind, MotifSpec};
pub use nodeset::parse_node_dataset;
pub use tudataset::{parse_tudataset, write_tudataset};

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Degrees at or above this share the final one-hot bucket.
pub const DEGREE_CAP: usize = 50;

/// Undirected graph with dense node features and an optional class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(u32, u32)>,
    features: Matrix,
    label: Option<i64>,
}

impl Graph {
    /// Build a graph, canonicalizing the edge list: endpoints are ordered,
    /// duplicates merged, self-loops dropped. Endpoints must be < num_nodes
    /// and the feature matrix must have one row per node.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (u32, u32)>,
        features: Matrix,
        label: Option<i64>,
    ) -> Result<Graph> {
        if features.rows() != num_nodes {
            return Err(Error::shape(
                "graph features",
                (features.rows(), features.cols()),
                (num_nodes, features.cols()),
            ));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u as usize >= num_nodes || v as usize >= num_nodes {
                return Err(Error::Config(format!(
                    "edge ({u}, {v}) endpoint out of range for {num_nodes} nodes"
                )));
            }
            if u == v {
                continue;
            }
            set.insert((u.min(v), u.max(v)));
        }
        Ok(Graph {
            num_nodes,
            edges: set.into_iter().collect(),
            features,
            label,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Canonical undirected edge list: each pair once, `(min, max)`, sorted.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// num_nodes x D node feature matrix.
    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn label(&self) -> Option<i64> {
        self.label
    }

    /// Per-node neighbor lists (each undirected edge appears on both ends).
    pub fn adjacency_list(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        deg
    }

    /// Symmetrically normalized adjacency with self-connections,
    /// `D̃^{-1/2} (A + I) D̃^{-1/2}`. Isolated nodes get degree 1 from the
    /// self-connection, so no division by zero is possible.
    pub fn normalized_adjacency(&self) -> Matrix {
        normalized_adjacency_of(self.num_nodes, &self.edges)
    }
}

/// Normalized adjacency for an arbitrary edge list (used on masked views
/// without building an intermediate `Graph`).
pub fn normalized_adjacency_of(num_nodes: usize, edges: &[(u32, u32)]) -> Matrix {
    let mut deg = vec![1.0f64; num_nodes]; // self-connection
    for &(u, v) in edges {
        deg[u as usize] += 1.0;
        deg[v as usize] += 1.0;
    }
    // Each entry is 1/sqrt(d_u * d_v): exact for binary-representable
    // rationals (e.g. the 0.5 and 1/d cases) and symmetric by construction.
    let mut a = Matrix::zeros(num_nodes, num_nodes);
    for i in 0..num_nodes {
        a.set(i, i, 1.0 / deg[i]);
    }
    for &(u, v) in edges {
        let (u, v) = (u as usize, v as usize);
        let w = 1.0 / (deg[u] * deg[v]).sqrt();
        a.set(u, v, w);
        a.set(v, u, w);
    }
    a
}

/// One-hot degree features with the shared top bucket at [`DEGREE_CAP`];
/// output is num_nodes x (cap + 1).
pub fn degree_one_hot(num_nodes: usize, edges: &[(u32, u32)], cap: usize) -> Matrix {
    let mut deg = vec![0usize; num_nodes];
    for &(u, v) in edges {
        deg[u as usize] += 1;
        deg[v as usize] += 1;
    }
    let mut f = Matrix::zeros(num_nodes, cap + 1);
    for (n, &d) in deg.iter().enumerate() {
        f.set(n, d.min(cap), 1.0);
    }
    f
}

/// Whether a dataset carries one label per graph or one per node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    GraphLevel,
    NodeLevel,
}

/// Ordered collection of graphs sharing a feature dimension.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub task: Task,
    /// Distinct class count; labels are stored as 0-based class indices.
    pub num_classes: usize,
    /// Per-node classes for node-level tasks (aligned with the single
    /// graph's node ids); `None` for graph-level datasets.
    pub node_labels: Option<Vec<i64>>,
}

impl Dataset {
    /// Validate the container invariants: at least one graph, a uniform
    /// feature dimension, and exactly one graph for node-level tasks.
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>, task: Task, num_classes: usize) -> Result<Dataset> {
        if graphs.is_empty() {
            return Err(Error::Config("dataset has no graphs".into()));
        }
        if task == Task::NodeLevel && graphs.len() != 1 {
            return Err(Error::Config(format!(
                "node-level dataset must contain exactly one graph, got {}",
                graphs.len()
            )));
        }
        let d = graphs[0].feature_dim();
        if let Some(g) = graphs.iter().find(|g| g.feature_dim() != d) {
            return Err(Error::shape(
                "dataset feature dim",
                (g.num_nodes(), g.feature_dim()),
                (g.num_nodes(), d),
            ));
        }
        Ok(Dataset {
            name: name.into(),
            graphs,
            task,
            num_classes,
            node_labels: None,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.graphs[0].feature_dim()
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

/// Map raw integer labels to contiguous 0-based class indices (sorted by
/// raw value); returns the remapped labels and the class count.
pub(crate) fn remap_labels(raw: &[i64]) -> (Vec<i64>, usize) {
    let distinct: BTreeSet<i64> = raw.iter().copied().collect();
    let lookup: std::collections::BTreeMap<i64, i64> = distinct
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, i as i64))
        .collect();
    (raw.iter().map(|l| lookup[l]).collect(), distinct.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features(n: usize) -> Matrix {
        Matrix::filled(n, 3, 1.0)
    }

    #[test]
    fn edge_canonicalization() {
        let g = Graph::new(
            3,
            vec![(1, 0), (0, 1), (2, 2), (1, 2)],
            features(3),
            None,
        )
        .unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn out_of_range_endpoint_rejected() {
        let res = Graph::new(2, vec![(0, 2)], features(2), None);
        assert!(res.is_err());
    }

    #[test]
    fn single_edge_normalized_adjacency_is_half_everywhere() {
        let g = Graph::new(2, vec![(0, 1)], features(2), None).unwrap();
        let a = g.normalized_adjacency();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(a.get(i, j), 0.5);
            }
        }
    }

    #[test]
    fn edgeless_singleton_normalized_adjacency_is_one() {
        let g = Graph::new(1, vec![], Matrix::filled(1, 1, 0.0), None).unwrap();
        assert_eq!(g.normalized_adjacency(), Matrix::filled(1, 1, 1.0));
    }

    #[test]
    fn path_graph_off_diagonal_entry() {
        // 0-1-2: node 0 has degree 2 after self-loop, node 1 has 3.
        let g = Graph::new(3, vec![(0, 1), (1, 2)], features(3), None).unwrap();
        let a = g.normalized_adjacency();
        let expected = 1.0 / (2.0f64 * 3.0).sqrt();
        assert!((a.get(0, 1) - expected).abs() < 1e-15);
        assert!((a.get(1, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn normalized_adjacency_symmetric() {
        let g = Graph::new(
            5,
            vec![(0, 1), (0, 4), (1, 2), (2, 3), (3, 4), (1, 4)],
            features(5),
            None,
        )
        .unwrap();
        let a = g.normalized_adjacency();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(a.get(i, j), a.get(j, i));
            }
        }
    }

    #[test]
    fn degree_one_hot_caps_top_bucket() {
        // Star center with degree 3, cap 2 → bucket index 2.
        let edges = [(0, 1), (0, 2), (0, 3)];
        let f = degree_one_hot(4, &edges, 2);
        assert_eq!(f.get(0, 2), 1.0);
        assert_eq!(f.get(1, 1), 1.0);
        assert_eq!(f.row(0).iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn node_level_dataset_wants_one_graph() {
        let g = Graph::new(2, vec![(0, 1)], features(2), None).unwrap();
        let two = vec![g.clone(), g.clone()];
        assert!(Dataset::new("x", two, Task::NodeLevel, 2).is_err());
        assert!(Dataset::new("x", vec![g], Task::NodeLevel, 2).is_ok());
    }

    #[test]
    fn label_remap_is_sorted_contiguous() {
        let (mapped, k) = remap_labels(&[5, -1, 5, 9, -1]);
        assert_eq!(k, 3);
        assert_eq!(mapped, vec![1, 0, 1, 2, 0]);
    }
}
