//! Nearest-neighbor retrieval over embedding rows: an exact brute-force
//! index and a coarsely quantized inverted-list index built with Lloyd
//! k-means.
//!
//! Ids are row indices of the matrix the index was built from. Distances
//! are Euclidean; ties break toward the smaller id so queries are fully
//! deterministic. Indexes are immutable after build and safe to query from
//! many threads; they are rebuilt from scratch at every refresh rather than
//! updated.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::tensor::Matrix;

/// Common query interface over both index kinds.
pub trait NnIndex: Sync {
    /// Ids of up to `m` nearest points to `q`, ascending by distance, ties
    /// toward the smaller id. `exclude` removes one id from consideration
    /// (self-queries); exclusion is by id, not by zero distance, so
    /// duplicate embeddings survive.
    fn query(&self, q: &[f64], m: usize, exclude: Option<usize>) -> Result<Vec<usize>>;

    /// Number of indexed points.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Check the `m <= candidates` precondition shared by both indexes.
fn check_m(m: usize, available: usize) -> Result<()> {
    if m > available {
        return Err(Error::Config(format!(
            "requested {m} neighbors but only {available} points are eligible"
        )));
    }
    Ok(())
}

/// Rank `candidates` by distance to `q` and return the first `m` ids.
fn take_nearest(
    points: &Matrix,
    q: &[f64],
    candidates: impl Iterator<Item = usize>,
    m: usize,
    exclude: Option<usize>,
) -> Vec<usize> {
    let mut scored: Vec<(f64, usize)> = candidates
        .filter(|id| Some(*id) != exclude)
        .map(|id| (sq_dist(points.row(id), q), id))
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    scored.into_iter().take(m).map(|(_, id)| id).collect()
}

/// Brute-force index: every query scans all points.
pub struct ExactIndex {
    points: Matrix,
}

/// Index the rows of `points`; row index is the id.
pub fn build_exact(points: &Matrix) -> Result<ExactIndex> {
    if points.rows() == 0 {
        return Err(Error::Config("cannot index zero points".into()));
    }
    Ok(ExactIndex {
        points: points.clone(),
    })
}

impl NnIndex for ExactIndex {
    fn query(&self, q: &[f64], m: usize, exclude: Option<usize>) -> Result<Vec<usize>> {
        let hits = exclude.map_or(0, |e| usize::from(e < self.points.rows()));
        check_m(m, self.points.rows() - hits)?;
        Ok(take_nearest(&self.points, q, 0..self.points.rows(), m, exclude))
    }

    fn len(&self) -> usize {
        self.points.rows()
    }
}

/// Inverted-list index over a coarse k-means quantizer. Queries scan only
/// the `probe` lists whose centroids are nearest the query vector, so they
/// may return fewer than `m` ids when the probed lists run short.
pub struct QuantizedIndex {
    points: Matrix,
    centroids: Matrix,
    lists: Vec<Vec<usize>>,
    probe: usize,
}

/// Cluster the rows of `points` into `c` lists with `kmeans_iters` Lloyd
/// iterations. Initialization samples `c` distinct rows; an empty cluster
/// is re-seeded from the point farthest from its assigned centroid. The
/// probe count defaults to `min(4, c)`.
pub fn build_quantized(
    points: &Matrix,
    c: usize,
    kmeans_iters: usize,
    seed: u64,
) -> Result<QuantizedIndex> {
    let n = points.rows();
    if n == 0 {
        return Err(Error::Config("cannot index zero points".into()));
    }
    if c == 0 || c > n {
        return Err(Error::Config(format!(
            "centroid count must lie in 1..={n}, got {c}"
        )));
    }
    let k = points.cols();

    let mut rng = substream(seed, "kmeans", 0, 0);
    let init = sample(&mut rng, n, c);
    let mut centroids = Matrix::zeros(c, k);
    for (ci, pi) in init.into_iter().enumerate() {
        for j in 0..k {
            centroids.set(ci, j, points.get(pi, j));
        }
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..kmeans_iters.max(1) {
        // Assign: nearest centroid, ties toward the smaller centroid index.
        let mut dist_to_own = vec![0.0f64; n];
        for p in 0..n {
            let mut best = (f64::INFINITY, 0usize);
            for ci in 0..c {
                let d = sq_dist(points.row(p), centroids.row(ci));
                if d < best.0 {
                    best = (d, ci);
                }
            }
            assignment[p] = best.1;
            dist_to_own[p] = best.0;
        }

        // Re-seed empty clusters from the farthest assigned point.
        let mut counts = vec![0usize; c];
        for &a in &assignment {
            counts[a] += 1;
        }
        for ci in 0..c {
            if counts[ci] > 0 {
                continue;
            }
            let far = (0..n)
                .max_by(|&a, &b| {
                    dist_to_own[a]
                        .partial_cmp(&dist_to_own[b])
                        .unwrap()
                        .then(b.cmp(&a)) // ties toward the smaller id
                })
                .unwrap();
            counts[assignment[far]] -= 1;
            assignment[far] = ci;
            counts[ci] = 1;
            dist_to_own[far] = 0.0;
            for j in 0..k {
                centroids.set(ci, j, points.get(far, j));
            }
        }

        // Update: centroid = mean of its members.
        let mut sums = Matrix::zeros(c, k);
        for p in 0..n {
            let ci = assignment[p];
            for j in 0..k {
                sums.set(ci, j, sums.get(ci, j) + points.get(p, j));
            }
        }
        for ci in 0..c {
            for j in 0..k {
                centroids.set(ci, j, sums.get(ci, j) / counts[ci] as f64);
            }
        }
    }

    // Final assignment defines the inverted lists.
    let mut lists = vec![Vec::new(); c];
    for p in 0..n {
        let mut best = (f64::INFINITY, 0usize);
        for ci in 0..c {
            let d = sq_dist(points.row(p), centroids.row(ci));
            if d < best.0 {
                best = (d, ci);
            }
        }
        lists[best.1].push(p);
    }

    Ok(QuantizedIndex {
        points: points.clone(),
        centroids,
        lists,
        probe: c.min(4),
    })
}

impl QuantizedIndex {
    /// Override the number of lists scanned per query; must lie in `1..=C`.
    pub fn with_probe(mut self, probe: usize) -> Result<Self> {
        if probe == 0 || probe > self.lists.len() {
            return Err(Error::Config(format!(
                "probe count must lie in 1..={}, got {probe}",
                self.lists.len()
            )));
        }
        self.probe = probe;
        Ok(self)
    }

    pub fn num_centroids(&self) -> usize {
        self.lists.len()
    }

    /// Member ids of each inverted list.
    pub fn lists(&self) -> &[Vec<usize>] {
        &self.lists
    }

    pub fn centroids(&self) -> &Matrix {
        &self.centroids
    }
}

impl NnIndex for QuantizedIndex {
    fn query(&self, q: &[f64], m: usize, exclude: Option<usize>) -> Result<Vec<usize>> {
        let hits = exclude.map_or(0, |e| usize::from(e < self.points.rows()));
        check_m(m, self.points.rows() - hits)?;
        let mut ranked: Vec<(f64, usize)> = (0..self.centroids.rows())
            .map(|ci| (sq_dist(self.centroids.row(ci), q), ci))
            .collect();
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let candidates = ranked
            .iter()
            .take(self.probe)
            .flat_map(|(_, ci)| self.lists[*ci].iter().copied());
        Ok(take_nearest(&self.points, q, candidates, m, exclude))
    }

    fn len(&self) -> usize {
        self.points.rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn matrix_from(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn one_dim_nearest() {
        let idx = build_exact(&matrix_from(&[vec![0.0], vec![1.0], vec![10.0]])).unwrap();
        assert_eq!(idx.query(&[0.4], 1, None).unwrap(), vec![0]);
    }

    #[test]
    fn self_exclusion_returns_true_neighbor() {
        let pts = matrix_from(&[vec![0.0], vec![1.0], vec![10.0]]);
        let idx = build_exact(&pts).unwrap();
        assert_eq!(idx.query(pts.row(0), 1, Some(0)).unwrap(), vec![1]);
    }

    #[test]
    fn duplicate_embeddings_survive_exclusion() {
        let pts = matrix_from(&[vec![2.0], vec![2.0], vec![5.0]]);
        let idx = build_exact(&pts).unwrap();
        // Excluding id 0 must still return its exact duplicate id 1.
        assert_eq!(idx.query(pts.row(0), 1, Some(0)).unwrap(), vec![1]);
    }

    #[test]
    fn tie_breaks_toward_smaller_id() {
        let pts = matrix_from(&[vec![1.0], vec![-1.0], vec![1.0]]);
        let idx = build_exact(&pts).unwrap();
        assert_eq!(idx.query(&[0.0], 3, None).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn oversized_m_is_config_error() {
        let idx = build_exact(&matrix_from(&[vec![0.0], vec![1.0]])).unwrap();
        assert!(matches!(idx.query(&[0.0], 2, Some(0)), Err(Error::Config(_))));
        assert!(idx.query(&[0.0], 2, None).is_ok());
    }

    #[test]
    fn single_point_single_centroid() {
        let pts = matrix_from(&[vec![3.0, -1.0]]);
        let idx = build_quantized(&pts, 1, 5, 0).unwrap();
        assert_eq!(idx.centroids().row(0), &[3.0, -1.0]);
        assert_eq!(idx.lists()[0], vec![0]);
    }

    #[test]
    fn separated_clusters_split_evenly() {
        let mut rows = Vec::new();
        let mut rng = substream(11, "test-clusters", 0, 0);
        for i in 0..100 {
            let center = if i < 50 { 0.0 } else { 100.0 };
            rows.push(vec![
                center + rng.random::<f64>(),
                center + rng.random::<f64>(),
            ]);
        }
        let idx = build_quantized(&matrix_from(&rows), 2, 10, 3).unwrap();
        let mut sizes: Vec<usize> = idx.lists().iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![50, 50]);
    }

    #[test]
    fn rebuild_same_seed_identical_lists() {
        let mut rng = substream(5, "test-rebuild", 0, 0);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
            .collect();
        let pts = matrix_from(&rows);
        let a = build_quantized(&pts, 8, 6, 42).unwrap();
        let b = build_quantized(&pts, 8, 6, 42).unwrap();
        assert_eq!(a.lists(), b.lists());
    }

    #[test]
    fn full_probe_matches_exact() {
        let mut rng = substream(9, "test-fullprobe", 0, 0);
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..6).map(|_| rng.random::<f64>()).collect())
            .collect();
        let pts = matrix_from(&rows);
        let exact = build_exact(&pts).unwrap();
        let quant = build_quantized(&pts, 10, 8, 1).unwrap().with_probe(10).unwrap();
        for qi in 0..pts.rows() {
            let q = pts.row(qi);
            assert_eq!(
                quant.query(q, 5, Some(qi)).unwrap(),
                exact.query(q, 5, Some(qi)).unwrap()
            );
        }
    }

    #[test]
    fn exact_matches_brute_force_over_many_configs() {
        // Independent oracle: a from-scratch all-pairs scan with the same
        // (distance, id) ordering rule.
        for trial in 0..200u64 {
            let mut rng = substream(1000 + trial, "test-brute", trial, 0);
            let n = rng.random_range(2..40usize);
            let k = rng.random_range(1..8usize);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..k).map(|_| rng.random_range(-4.0..4.0)).collect())
                .collect();
            let pts = matrix_from(&rows);
            let exclude = if rng.random::<bool>() {
                Some(rng.random_range(0..n))
            } else {
                None
            };
            let available = n - usize::from(exclude.is_some());
            let m = rng.random_range(1..=available);
            let q: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..4.0)).collect();

            let mut brute: Vec<(f64, usize)> = (0..n)
                .filter(|id| Some(*id) != exclude)
                .map(|id| (sq_dist(&rows[id], &q), id))
                .collect();
            brute.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let want: Vec<usize> = brute.into_iter().take(m).map(|(_, id)| id).collect();

            let idx = build_exact(&pts).unwrap();
            assert_eq!(idx.query(&q, m, exclude).unwrap(), want, "trial {trial}");
        }
    }

    #[test]
    fn returned_distances_non_decreasing() {
        let mut rng = substream(77, "test-monotone", 0, 0);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..5).map(|_| rng.random::<f64>()).collect())
            .collect();
        let pts = matrix_from(&rows);
        let q: Vec<f64> = (0..5).map(|_| rng.random::<f64>()).collect();
        for index in [
            &build_exact(&pts).unwrap() as &dyn NnIndex,
            &build_quantized(&pts, 7, 5, 2).unwrap() as &dyn NnIndex,
        ] {
            let ids = index.query(&q, 10, None).unwrap();
            let dists: Vec<f64> = ids.iter().map(|&id| sq_dist(&rows[id], &q)).collect();
            assert!(dists.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn clustered_recall_at_8() {
        // Embedding-like data is clustered, so the recall oracle uses a
        // Gaussian mixture: 16 centers, unit within-cluster spread.
        let mut rng = substream(123, "test-recall", 0, 0);
        let dim = 32;
        let centers: Vec<Vec<f64>> = (0..16)
            .map(|_| (0..dim).map(|_| 2.0 * gauss(&mut rng)).collect())
            .collect();
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|i| {
                let c = &centers[i % 16];
                c.iter().map(|&x| x + gauss(&mut rng)).collect()
            })
            .collect();
        let pts = matrix_from(&rows);
        let exact = build_exact(&pts).unwrap();
        let quant = build_quantized(&pts, 32, 10, 99).unwrap(); // probe defaults to 4

        let mut recall_sum = 0.0;
        let queries = 100;
        for qi in 0..queries {
            let q = pts.row(qi * 7 % 1000);
            let truth = exact.query(q, 8, None).unwrap();
            let got = quant.query(q, 8, None).unwrap();
            let hit = truth.iter().filter(|id| got.contains(id)).count();
            recall_sum += hit as f64 / 8.0;
        }
        let recall = recall_sum / queries as f64;
        assert!(recall >= 0.9, "recall@8 = {recall}");
    }

    /// Box-Muller standard normal; plenty for test fixtures.
    fn gauss(rng: &mut impl Rng) -> f64 {
        let u1: f64 = rng.random::<f64>().max(1e-12);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
