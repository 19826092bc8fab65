//! Command-line workbench for explanation-guided graph contrastive
//! learning: single runs with reproducible artifacts, and hyperparameter
//! sweeps over the guidance strengths.

pub mod manifest;
pub mod pipeline;
