//! Message-passing encoders, pooling, MLP heads, parameter initialization,
//! and checkpoint I/O.
//!
//! Two encoder kinds are provided. The normalized-adjacency convolution
//! computes `F^l = σ(Â F^{l-1} W^l)` with `Â` from
//! [`normalized_adjacency_of`](crate::graph::normalized_adjacency_of) and no
//! bias. The isomorphism-style encoder computes
//! `F^l = MLP((1 + ε)·F^{l-1}_i + Σ_{j∈N(i)} F^{l-1}_j)` with a depth-2 MLP.
//! In both, every layer but the last ends in relu; the final layer is linear
//! so embeddings can carry sign (an all-nonnegative final map would make
//! downstream activation attributions degenerate).
//!
//! Parameters live in a flat name → matrix map so they can be leased onto a
//! tape, stepped by the optimizers, and checkpointed as a named array list.

use std::collections::BTreeMap;
use std::io::{Read as _, Write as _};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency_of, Graph};
use crate::rng::substream;
use crate::tensor::{Matrix, Tape, Tensor};

/// Aggregation scheme of the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    /// Symmetric-normalized adjacency convolution, no biases.
    Gcn,
    /// Sum aggregation combined through a depth-2 MLP with biases.
    Gin,
}

/// Encoder architecture.
#[derive(Debug, Clone, Copy)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Layer count L.
    pub layers: usize,
    /// Width K of every hidden and output layer.
    pub hidden_dim: usize,
    /// ε in the (1 + ε) self-weight of the sum-aggregation combine.
    pub gin_epsilon: f64,
    /// When set, ε is a trained 1x1 parameter initialized at `gin_epsilon`.
    pub gin_epsilon_learnable: bool,
}

impl EncoderConfig {
    /// Default graph-level encoder: sum-aggregation, L=3, K=64.
    pub fn graph_level() -> Self {
        EncoderConfig {
            kind: EncoderKind::Gin,
            layers: 3,
            hidden_dim: 64,
            gin_epsilon: 0.0,
            gin_epsilon_learnable: false,
        }
    }

    /// Default node-level encoder: normalized-adjacency convolution, L=2, K=128.
    pub fn node_level() -> Self {
        EncoderConfig {
            kind: EncoderKind::Gcn,
            layers: 2,
            hidden_dim: 128,
            gin_epsilon: 0.0,
            gin_epsilon_learnable: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 || self.hidden_dim < 1 {
            return Err(Error::Config(format!(
                "encoder needs layers >= 1 and hidden_dim >= 1, got L={} K={}",
                self.layers, self.hidden_dim
            )));
        }
        Ok(())
    }
}

/// Output sizes of the two MLP heads. The projector feeds both frameworks;
/// the predictor exists for the stop-gradient framework only.
#[derive(Debug, Clone)]
pub struct HeadConfig {
    pub projector: Vec<usize>,
    pub predictor: Vec<usize>,
}

impl HeadConfig {
    /// Two-layer heads of uniform width `k`.
    pub fn default_for(k: usize) -> Self {
        HeadConfig {
            projector: vec![k, k],
            predictor: vec![k, k],
        }
    }
}

/// Name prefixes of the two heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Projector,
    Predictor,
}

impl HeadKind {
    fn prefix(self) -> &'static str {
        match self {
            HeadKind::Projector => "head.o",
            HeadKind::Predictor => "head.e",
        }
    }
}

/// Flat named parameter map.
pub type ParamMap = BTreeMap<String, Matrix>;

/// Uniform Glorot initialization: entries in ±sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows * cols {
        m.data_mut()[i] = rng.random_range(-bound..=bound);
    }
    m
}

/// Initialize encoder parameters for inputs of width `in_dim`. Weights are
/// Glorot-uniform from per-parameter substreams of `seed`; biases are zero.
pub fn init_encoder_params(cfg: &EncoderConfig, in_dim: usize, seed: u64) -> Result<ParamMap> {
    cfg.validate()?;
    let mut params = ParamMap::new();
    let mut counter = 0u64;
    let mut next = |rows: usize, cols: usize| {
        let mut rng = substream(seed, "init", counter, 0);
        counter += 1;
        glorot_uniform(rows, cols, &mut rng)
    };
    let k = cfg.hidden_dim;
    for l in 0..cfg.layers {
        let d_in = if l == 0 { in_dim } else { k };
        match cfg.kind {
            EncoderKind::Gcn => {
                params.insert(format!("enc.l{l}.w"), next(d_in, k));
            }
            EncoderKind::Gin => {
                params.insert(format!("enc.l{l}.mlp0.w"), next(d_in, k));
                params.insert(format!("enc.l{l}.mlp0.b"), Matrix::zeros(1, k));
                params.insert(format!("enc.l{l}.mlp1.w"), next(k, k));
                params.insert(format!("enc.l{l}.mlp1.b"), Matrix::zeros(1, k));
                if cfg.gin_epsilon_learnable {
                    params.insert(format!("enc.l{l}.eps"), Matrix::filled(1, 1, cfg.gin_epsilon));
                }
            }
        }
    }
    Ok(params)
}

/// Initialize one head's parameters on top of `in_dim`-wide embeddings.
pub fn init_head_params(
    sizes: &[usize],
    which: HeadKind,
    in_dim: usize,
    seed: u64,
) -> Result<ParamMap> {
    if sizes.is_empty() {
        return Err(Error::Config("head needs at least one layer".into()));
    }
    let mut params = ParamMap::new();
    let mut d = in_dim;
    for (i, &out) in sizes.iter().enumerate() {
        if out < 1 {
            return Err(Error::Config("head layer sizes must be >= 1".into()));
        }
        // Offset the substream coordinate so heads never share draws with
        // the encoder or each other.
        let coord = match which {
            HeadKind::Projector => 1000 + i as u64,
            HeadKind::Predictor => 2000 + i as u64,
        };
        let mut rng = substream(seed, "init", coord, 0);
        params.insert(format!("{}.l{i}.w", which.prefix()), glorot_uniform(d, out, &mut rng));
        params.insert(format!("{}.l{i}.b", which.prefix()), Matrix::zeros(1, out));
        d = out;
    }
    Ok(params)
}

/// Lease every parameter onto `tape` as a differentiable leaf.
pub fn lease_params(tape: &Tape, params: &ParamMap) -> BTreeMap<String, Tensor> {
    params
        .iter()
        .map(|(name, value)| (name.clone(), tape.leaf_grad(value.clone())))
        .collect()
}

/// Lease every parameter onto `tape` as a frozen constant.
pub fn lease_params_frozen(tape: &Tape, params: &ParamMap) -> BTreeMap<String, Tensor> {
    params
        .iter()
        .map(|(name, value)| (name.clone(), tape.leaf(value.clone())))
        .collect()
}

/// Collect gradients back out of a tape after `backward`, keyed like the
/// parameter map. Parameters the loss never touched are absent.
pub fn harvest_grads(tape: &Tape, leased: &BTreeMap<String, Tensor>) -> ParamMap {
    leased
        .iter()
        .filter_map(|(name, t)| tape.grad(*t).map(|g| (name.clone(), g)))
        .collect()
}

/// One normalized-adjacency convolution layer: `σ(Â · F · W)`, with the
/// relu controlled by `apply_relu` (final encoder layers stay linear).
pub fn gcn_forward(
    tape: &Tape,
    f_prev: Tensor,
    a_hat: Tensor,
    w: Tensor,
    apply_relu: bool,
) -> Result<Tensor> {
    let agg = tape.matmul(a_hat, f_prev)?;
    let pre = tape.matmul(agg, w)?;
    Ok(if apply_relu { tape.relu(pre) } else { pre })
}

/// The ε term of the sum-aggregation combine: either a fixed constant or a
/// trained 1x1 tensor.
#[derive(Clone, Copy)]
pub enum GinEps {
    Const(f64),
    Learned(Tensor),
}

/// One sum-aggregation layer: `MLP((1 + ε)·F_i + Σ_{j∈N(i)} F_j)` where
/// `adj` is the binary (self-loop-free) adjacency and `mlp` is the layer's
/// (weight, bias) pairs applied with relu between and linear at the end of
/// the MLP. `apply_relu` adds the between-layer activation of the encoder.
pub fn gin_forward(
    tape: &Tape,
    f_prev: Tensor,
    adj: Tensor,
    eps: GinEps,
    mlp: &[(Tensor, Tensor)],
    apply_relu: bool,
) -> Result<Tensor> {
    let neighbor_sum = tape.matmul(adj, f_prev)?;
    let combined = match eps {
        GinEps::Const(e) => {
            let scaled = tape.scalar_mul(f_prev, 1.0 + e);
            tape.add(scaled, neighbor_sum)?
        }
        GinEps::Learned(eps) => {
            // Broadcast the 1x1 ε to the feature shape via two rank-1
            // matmuls, then form F + ε·F + Σ neighbors.
            let (n, d) = tape.shape(f_prev);
            let ones_col = tape.leaf(Matrix::filled(n, 1, 1.0));
            let ones_row = tape.leaf(Matrix::filled(1, d, 1.0));
            let eps_col = tape.matmul(ones_col, eps)?;
            let eps_full = tape.matmul(eps_col, ones_row)?;
            let eps_f = tape.elementwise_mul(eps_full, f_prev)?;
            let self_term = tape.add(f_prev, eps_f)?;
            tape.add(self_term, neighbor_sum)?
        }
    };
    let mut h = combined;
    for (i, (w, b)) in mlp.iter().enumerate() {
        h = tape.add(tape.matmul(h, *w)?, *b)?;
        if i + 1 < mlp.len() {
            h = tape.relu(h);
        }
    }
    Ok(if apply_relu { tape.relu(h) } else { h })
}

/// Binary adjacency (no self-loops) as a dense constant.
pub fn binary_adjacency(num_nodes: usize, edges: &[(u32, u32)]) -> Matrix {
    let mut a = Matrix::zeros(num_nodes, num_nodes);
    for &(u, v) in edges {
        a.set(u as usize, v as usize, 1.0);
        a.set(v as usize, u as usize, 1.0);
    }
    a
}

/// Run the full encoder over an arbitrary graph view (node count, edge
/// list, node-feature tensor already on the tape). Returns the node
/// embedding matrix `Z` (n x K) and the mean-pooled graph embedding
/// `z` (1 x K).
pub fn encode_view_on_tape(
    tape: &Tape,
    num_nodes: usize,
    edges: &[(u32, u32)],
    features: Tensor,
    cfg: &EncoderConfig,
    params: &BTreeMap<String, Tensor>,
) -> Result<(Tensor, Tensor)> {
    cfg.validate()?;
    let need = |name: &str| -> Result<Tensor> {
        params
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    };
    let mut f = features;
    match cfg.kind {
        EncoderKind::Gcn => {
            let a_hat = tape.leaf(normalized_adjacency_of(num_nodes, edges));
            for l in 0..cfg.layers {
                let w = need(&format!("enc.l{l}.w"))?;
                let last = l + 1 == cfg.layers;
                f = gcn_forward(tape, f, a_hat, w, !last)?;
            }
        }
        EncoderKind::Gin => {
            let adj = tape.leaf(binary_adjacency(num_nodes, edges));
            for l in 0..cfg.layers {
                let mlp = [
                    (need(&format!("enc.l{l}.mlp0.w"))?, need(&format!("enc.l{l}.mlp0.b"))?),
                    (need(&format!("enc.l{l}.mlp1.w"))?, need(&format!("enc.l{l}.mlp1.b"))?),
                ];
                let eps = if cfg.gin_epsilon_learnable {
                    GinEps::Learned(need(&format!("enc.l{l}.eps"))?)
                } else {
                    GinEps::Const(cfg.gin_epsilon)
                };
                let last = l + 1 == cfg.layers;
                f = gin_forward(tape, f, adj, eps, &mlp, !last)?;
            }
        }
    }
    let pooled = tape.mean_rows(f);
    Ok((f, pooled))
}

/// Encode a stored graph with frozen parameters on a private tape,
/// returning plain matrices. Read-only over `params`, so snapshots may be
/// encoded from many threads at once.
pub fn encode(g: &Graph, cfg: &EncoderConfig, params: &ParamMap) -> Result<(Matrix, Matrix)> {
    let tape = Tape::new();
    let leased = lease_params_frozen(&tape, params);
    let features = tape.leaf(g.features().clone());
    let (z_nodes, z_pooled) =
        encode_view_on_tape(&tape, g.num_nodes(), g.edges(), features, cfg, &leased)?;
    Ok((tape.value(z_nodes), tape.value(z_pooled)))
}

/// Apply one MLP head: relu between layers, linear output.
pub fn head_forward(
    tape: &Tape,
    z: Tensor,
    which: HeadKind,
    num_layers: usize,
    params: &BTreeMap<String, Tensor>,
) -> Result<Tensor> {
    if num_layers == 0 {
        return Err(Error::Config("head needs at least one layer".into()));
    }
    let mut h = z;
    for i in 0..num_layers {
        let w = params
            .get(&format!("{}.l{i}.w", which.prefix()))
            .copied()
            .ok_or_else(|| Error::Config(format!("missing head parameter layer {i}")))?;
        let b = params
            .get(&format!("{}.l{i}.b", which.prefix()))
            .copied()
            .ok_or_else(|| Error::Config(format!("missing head bias layer {i}")))?;
        h = tape.add(tape.matmul(h, w)?, b)?;
        if i + 1 < num_layers {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

// ---- checkpointing ----

const CHECKPOINT_MAGIC: &str = "engage-checkpoint v1";

/// Write a parameter map as an ASCII header (magic, count, one
/// `name rows cols` line per array) followed by the contiguous
/// little-endian f64 payload in header order.
pub fn save_checkpoint(path: &Path, params: &ParamMap) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let mut header = format!("{CHECKPOINT_MAGIC}\n{}\n", params.len());
    for (name, m) in params {
        header.push_str(&format!("{name} {} {}\n", m.rows(), m.cols()));
    }
    file.write_all(header.as_bytes())?;
    for m in params.values() {
        for &x in m.data() {
            file.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<ParamMap> {
    let file_name = path.display().to_string();
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;

    // The header is ASCII lines; find its end by consuming count + 2 lines.
    let mut cursor = 0usize;
    let mut next_line = |bytes: &[u8]| -> Result<String> {
        let start = cursor;
        while cursor < bytes.len() && bytes[cursor] != b'\n' {
            cursor += 1;
        }
        if cursor >= bytes.len() {
            return Err(Error::parse(&file_name, None, "truncated header"));
        }
        let line = String::from_utf8(bytes[start..cursor].to_vec())
            .map_err(|_| Error::parse(&file_name, None, "non-UTF-8 header"))?;
        cursor += 1; // consume the newline
        Ok(line)
    };

    if next_line(&bytes)? != CHECKPOINT_MAGIC {
        return Err(Error::parse(&file_name, Some(1), "bad magic line"));
    }
    let count: usize = next_line(&bytes)?
        .trim()
        .parse()
        .map_err(|_| Error::parse(&file_name, Some(2), "bad array count"))?;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let line = next_line(&bytes)?;
        let mut parts = line.split_whitespace();
        let (Some(name), Some(r), Some(c), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::parse(&file_name, Some(3 + i), "bad array header line"));
        };
        let rows: usize = r
            .parse()
            .map_err(|_| Error::parse(&file_name, Some(3 + i), "bad row count"))?;
        let cols: usize = c
            .parse()
            .map_err(|_| Error::parse(&file_name, Some(3 + i), "bad col count"))?;
        entries.push((name.to_string(), rows, cols));
    }

    let mut params = ParamMap::new();
    for (name, rows, cols) in entries {
        let len = rows * cols * 8;
        if cursor + len > bytes.len() {
            return Err(Error::parse(&file_name, None, "truncated payload"));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for chunk in bytes[cursor..cursor + len].chunks_exact(8) {
            data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
        }
        cursor += len;
        params.insert(name, Matrix::from_vec(rows, cols, data)?);
    }
    if cursor != bytes.len() {
        return Err(Error::parse(&file_name, None, "trailing bytes after payload"));
    }
    Ok(params)
}
