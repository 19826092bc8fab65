//! Self-supervised graph representation learning with explanation-guided
//! augmentation.
//!
//! The pipeline: [`graph`] loads or generates datasets; [`gnn`] encodes
//! them with message-passing encoders built on the [`tensor`] reverse-mode
//! tape. Once per epoch, [`explain`] scores every node from a frozen
//! encoder snapshot — channel weights come from a [`knn`]
//! neighborhood in embedding space, node scores from a relu-gated
//! projection onto those weights — and [`augment`] turns the scores into
//! paired views: high-scoring structure is protected in both views, the
//! rest is split complementarily between them. [`train`] optimizes a
//! contrastive objective (NT-Xent, or a predictor/stop-gradient pair) over
//! the views, and [`eval`] reports embedding quality through a
//! cross-validated linear probe. Everything is deterministic given a seed:
//! random draws go through named [`rng`] substreams, so any component can
//! be replayed in isolation.

// Indexed loops over matrices and lockstep arrays are the house style for
// the numeric kernels; iterator chains obscure the arithmetic there.
#![allow(clippy::needless_range_loop)]

pub mod augment;
pub mod error;
pub mod eval;
pub mod explain;
pub mod gnn;
pub mod graph;
pub mod knn;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
