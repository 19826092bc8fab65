//! Reader and writer for the TUDataset plain-text layout.
//!
//! The layout stores one dataset as a handful of aligned text files:
//! `{name}_A.txt` lists directed edge lines "i, j" with 1-based global node
//! ids (an undirected edge usually appears in both directions);
//! `{name}_graph_indicator.txt` maps each global node to its 1-based graph
//! id; `{name}_graph_labels.txt`, `{name}_node_labels.txt`, and
//! `{name}_node_attributes.txt` are optional.
//!
//! Node features are chosen by a fallback chain: real-valued attributes if
//! present, else one-hot node labels, else one-hot node degree capped at
//! [`DEGREE_CAP`](super::DEGREE_CAP).

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{degree_one_hot, remap_labels, Dataset, Graph, Task, DEGREE_CAP};
use crate::tensor::Matrix;

/// Non-empty trimmed lines of a file, with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file_name = path.display().to_string();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::parse(&file_name, None, format!("cannot read: {e}")))?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect())
}

fn parse_int(file: &Path, line_no: usize, token: &str) -> Result<i64> {
    token.trim().parse::<i64>().map_err(|_| {
        Error::parse(
            file.display().to_string(),
            Some(line_no),
            format!("expected integer, got {token:?}"),
        )
    })
}

fn parse_float(file: &Path, line_no: usize, token: &str) -> Result<f64> {
    token.trim().parse::<f64>().map_err(|_| {
        Error::parse(
            file.display().to_string(),
            Some(line_no),
            format!("expected float, got {token:?}"),
        )
    })
}

/// Parse the dataset stored under `root` with file prefix `name`.
///
/// Mandatory files are `{name}_A.txt` and `{name}_graph_indicator.txt`; the
/// labels/attributes files are picked up when present. Duplicate directed
/// edge lines merge into single undirected edges, and 1-based ids become
/// 0-based. Graph labels are remapped to contiguous 0-based class indices.
pub fn parse_tudataset(root: &Path, name: &str) -> Result<Dataset> {
    let file = |suffix: &str| root.join(format!("{name}_{suffix}.txt"));

    // Graph membership of every node, defining node counts and the mapping
    // from global 1-based ids to (graph, local) pairs.
    let indicator_path = file("graph_indicator");
    let indicator = read_lines(&indicator_path)?;
    if indicator.is_empty() {
        return Err(Error::parse(
            indicator_path.display().to_string(),
            None,
            "no nodes listed",
        ));
    }
    let mut graph_of_node = Vec::with_capacity(indicator.len());
    let mut num_graphs = 0usize;
    for (line_no, line) in &indicator {
        let gid = parse_int(&indicator_path, *line_no, line)?;
        if gid < 1 {
            return Err(Error::parse(
                indicator_path.display().to_string(),
                Some(*line_no),
                format!("graph id must be >= 1, got {gid}"),
            ));
        }
        let gid = (gid - 1) as usize;
        num_graphs = num_graphs.max(gid + 1);
        graph_of_node.push(gid);
    }
    let num_nodes = graph_of_node.len();

    // Local index of each global node within its graph.
    let mut local_of_node = vec![0usize; num_nodes];
    let mut nodes_per_graph = vec![0usize; num_graphs];
    for (n, &g) in graph_of_node.iter().enumerate() {
        local_of_node[n] = nodes_per_graph[g];
        nodes_per_graph[g] += 1;
    }

    // Edges, merged to undirected per graph.
    let a_path = file("A");
    let mut edges: Vec<BTreeSet<(u32, u32)>> = vec![BTreeSet::new(); num_graphs];
    for (line_no, line) in read_lines(&a_path)? {
        let mut parts = line.split(',');
        let (Some(i), Some(j), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(
                a_path.display().to_string(),
                Some(line_no),
                format!("expected \"i, j\", got {line:?}"),
            ));
        };
        let i = parse_int(&a_path, line_no, i)?;
        let j = parse_int(&a_path, line_no, j)?;
        let in_range = |x: i64| x >= 1 && x as usize <= num_nodes;
        if !in_range(i) || !in_range(j) {
            return Err(Error::parse(
                a_path.display().to_string(),
                Some(line_no),
                format!("node id out of range 1..={num_nodes}: ({i}, {j})"),
            ));
        }
        let (u, v) = ((i - 1) as usize, (j - 1) as usize);
        if graph_of_node[u] != graph_of_node[v] {
            return Err(Error::parse(
                a_path.display().to_string(),
                Some(line_no),
                format!("edge ({i}, {j}) spans two graphs"),
            ));
        }
        if u == v {
            continue; // self-loops are never stored
        }
        let (lu, lv) = (local_of_node[u] as u32, local_of_node[v] as u32);
        edges[graph_of_node[u]].insert((lu.min(lv), lu.max(lv)));
    }

    // Optional per-graph labels.
    let labels_path = file("graph_labels");
    let (labels, num_classes): (Vec<Option<i64>>, usize) = if labels_path.exists() {
        let lines = read_lines(&labels_path)?;
        if lines.len() != num_graphs {
            return Err(Error::parse(
                labels_path.display().to_string(),
                None,
                format!("expected {num_graphs} labels, got {}", lines.len()),
            ));
        }
        let raw: Vec<i64> = lines
            .iter()
            .map(|(n, l)| parse_int(&labels_path, *n, l))
            .collect::<Result<_>>()?;
        let (mapped, k) = remap_labels(&raw);
        (mapped.into_iter().map(Some).collect(), k)
    } else {
        (vec![None; num_graphs], 0)
    };

    // Feature fallback chain: attributes, then node-label one-hots, then
    // degree one-hots.
    let attr_path = file("node_attributes");
    let node_labels_path = file("node_labels");
    let features_per_node: Option<Vec<Vec<f64>>> = if attr_path.exists() {
        let lines = read_lines(&attr_path)?;
        if lines.len() != num_nodes {
            return Err(Error::parse(
                attr_path.display().to_string(),
                None,
                format!("expected {num_nodes} attribute rows, got {}", lines.len()),
            ));
        }
        let mut rows = Vec::with_capacity(num_nodes);
        let mut arity = None;
        for (line_no, line) in &lines {
            let row: Vec<f64> = line
                .split(',')
                .map(|t| parse_float(&attr_path, *line_no, t))
                .collect::<Result<_>>()?;
            match arity {
                None => arity = Some(row.len()),
                Some(a) if a != row.len() => {
                    return Err(Error::parse(
                        attr_path.display().to_string(),
                        Some(*line_no),
                        format!("attribute arity {} differs from first row's {a}", row.len()),
                    ));
                }
                _ => {}
            }
            rows.push(row);
        }
        Some(rows)
    } else if node_labels_path.exists() {
        let lines = read_lines(&node_labels_path)?;
        if lines.len() != num_nodes {
            return Err(Error::parse(
                node_labels_path.display().to_string(),
                None,
                format!("expected {num_nodes} node labels, got {}", lines.len()),
            ));
        }
        let raw: Vec<i64> = lines
            .iter()
            .map(|(n, l)| parse_int(&node_labels_path, *n, l))
            .collect::<Result<_>>()?;
        let (mapped, k) = remap_labels(&raw);
        Some(
            mapped
                .into_iter()
                .map(|m| {
                    let mut row = vec![0.0; k];
                    row[m as usize] = 1.0;
                    row
                })
                .collect(),
        )
    } else {
        None
    };

    // Assemble per-graph node feature matrices and graphs.
    let mut graphs = Vec::with_capacity(num_graphs);
    let mut node_cursor = vec![Vec::new(); num_graphs]; // global ids per graph, in order
    for (n, &g) in graph_of_node.iter().enumerate() {
        node_cursor[g].push(n);
    }
    for g in 0..num_graphs {
        let n = nodes_per_graph[g];
        let edge_list: Vec<(u32, u32)> = edges[g].iter().copied().collect();
        let feats = match &features_per_node {
            Some(rows) => {
                let mut local_rows = Vec::with_capacity(n);
                for &global in &node_cursor[g] {
                    local_rows.push(rows[global].clone());
                }
                Matrix::from_rows(&local_rows)?
            }
            None => degree_one_hot(n, &edge_list, DEGREE_CAP),
        };
        graphs.push(Graph::new(n, edge_list, feats, labels[g])?);
    }

    Dataset::new(name, graphs, Task::GraphLevel, num_classes)
}

/// Write a graph-level dataset in the same text layout `parse_tudataset`
/// reads. Each undirected edge is emitted in both directions; features go
/// to `{name}_node_attributes.txt` with full round-trip precision; graph
/// labels are written only when every graph has one.
pub fn write_tudataset(ds: &Dataset, root: &Path, name: &str) -> Result<()> {
    fs::create_dir_all(root)?;
    let mut a = String::new();
    let mut indicator = String::new();
    let mut attributes = String::new();
    let mut offset = 0usize;
    for (gi, g) in ds.graphs.iter().enumerate() {
        for &(u, v) in g.edges() {
            let (gu, gv) = (offset + u as usize + 1, offset + v as usize + 1);
            a.push_str(&format!("{gu}, {gv}\n{gv}, {gu}\n"));
        }
        for n in 0..g.num_nodes() {
            indicator.push_str(&format!("{}\n", gi + 1));
            let row: Vec<String> = g.features().row(n).iter().map(|x| format!("{x}")).collect();
            attributes.push_str(&row.join(", "));
            attributes.push('\n');
        }
        offset += g.num_nodes();
    }
    let file = |suffix: &str| root.join(format!("{name}_{suffix}.txt"));
    fs::write(file("A"), a)?;
    fs::write(file("graph_indicator"), indicator)?;
    fs::write(file("node_attributes"), attributes)?;
    if ds.graphs.iter().all(|g| g.label().is_some()) {
        let labels: String = ds
            .graphs
            .iter()
            .map(|g| format!("{}\n", g.label().unwrap()))
            .collect();
        fs::write(file("graph_labels"), labels)?;
    }
    Ok(())
}
