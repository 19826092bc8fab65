//! Loader for a minimal single-graph node-classification layout: three
//! aligned text files in one directory.
//!
//! `edges.txt` holds one 0-based "u v" pair per line (may be empty for an
//! edgeless graph), `features.txt` one whitespace-separated float row per
//! node, and `labels.txt` one integer class per node. Node count is defined
//! by the feature file; labels are remapped to contiguous 0-based indices.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{remap_labels, Dataset, Graph, Task};
use crate::tensor::Matrix;

/// Parse the three-file node-task layout under `root` into a one-graph,
/// node-level [`Dataset`] carrying per-node labels.
pub fn parse_node_dataset(root: &Path) -> Result<Dataset> {
    let features_path = root.join("features.txt");
    let file_name = features_path.display().to_string();
    let text = fs::read_to_string(&features_path)
        .map_err(|e| Error::parse(&file_name, None, format!("cannot read: {e}")))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut arity = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    Error::parse(&file_name, Some(i + 1), format!("expected float, got {t:?}"))
                })
            })
            .collect::<Result<_>>()?;
        match arity {
            None => arity = Some(row.len()),
            Some(a) if a != row.len() => {
                return Err(Error::parse(
                    &file_name,
                    Some(i + 1),
                    format!("feature arity {} differs from first row's {a}", row.len()),
                ));
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(&file_name, None, "no feature rows"));
    }
    let num_nodes = rows.len();
    let features = Matrix::from_rows(&rows)?;

    let edges_path = root.join("edges.txt");
    let edges_name = edges_path.display().to_string();
    let text = fs::read_to_string(&edges_path)
        .map_err(|e| Error::parse(&edges_name, None, format!("cannot read: {e}")))?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(u), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(
                &edges_name,
                Some(i + 1),
                format!("expected \"u v\", got {line:?}"),
            ));
        };
        let parse = |t: &str| {
            t.parse::<u32>().map_err(|_| {
                Error::parse(&edges_name, Some(i + 1), format!("expected node id, got {t:?}"))
            })
        };
        let (u, v) = (parse(u)?, parse(v)?);
        if u as usize >= num_nodes || v as usize >= num_nodes {
            return Err(Error::parse(
                &edges_name,
                Some(i + 1),
                format!("edge ({u}, {v}) endpoint out of range for {num_nodes} nodes"),
            ));
        }
        edges.push((u, v));
    }

    let labels_path = root.join("labels.txt");
    let labels_name = labels_path.display().to_string();
    let text = fs::read_to_string(&labels_path)
        .map_err(|e| Error::parse(&labels_name, None, format!("cannot read: {e}")))?;
    let raw: Vec<i64> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<i64>().map_err(|_| {
                Error::parse(&labels_name, Some(i + 1), format!("expected integer, got {l:?}"))
            })
        })
        .collect::<Result<_>>()?;
    if raw.len() != num_nodes {
        return Err(Error::parse(
            &labels_name,
            None,
            format!("expected {num_nodes} labels, got {}", raw.len()),
        ));
    }
    let (node_labels, num_classes) = remap_labels(&raw);

    let graph = Graph::new(num_nodes, edges, features, None)?;
    let name = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "nodeset".to_string());
    let mut ds = Dataset::new(name, vec![graph], Task::NodeLevel, num_classes)?;
    ds.node_labels = Some(node_labels);
    Ok(ds)
}
