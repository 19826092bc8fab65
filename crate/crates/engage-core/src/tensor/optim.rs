//! In-place first-order optimizers over named parameter sets.
//!
//! Parameters are plain matrices owned by the caller; each step consumes the
//! gradients harvested from a tape. Adam keeps per-parameter moment state in
//! [`AdamState`].

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the shared step counter.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    step: u64,
    first: BTreeMap<String, Matrix>,
    second: BTreeMap<String, Matrix>,
}

impl AdamState {
    pub fn new() -> Self {
        AdamState::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one Adam update to every `(name, param, grad)` triple.
    ///
    /// The bias-corrected update is
    /// `p -= lr * m_hat / (sqrt(v_hat) + eps)` with `m_hat = m / (1 - b1^t)`
    /// and `v_hat = v / (1 - b2^t)`. Every listed parameter shares one step
    /// counter, so the set must be stable across calls.
    pub fn step(
        &mut self,
        cfg: &AdamConfig,
        params: &mut BTreeMap<String, Matrix>,
        grads: &BTreeMap<String, Matrix>,
    ) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);

        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else {
                continue; // parameter unused this step; moments stay put
            };
            if g.shape() != p.shape() {
                return Err(Error::shape("adam_step", p.shape(), g.shape()));
            }
            let m = self
                .first
                .entry(name.clone())
                .or_insert_with(|| Matrix::zeros(p.rows(), p.cols()));
            let v = self
                .second
                .entry(name.clone())
                .or_insert_with(|| Matrix::zeros(p.rows(), p.cols()));
            for i in 0..p.data().len() {
                let gi = g.data()[i];
                let mi = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
                let vi = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                p.data_mut()[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

/// Plain gradient descent: `p -= lr * g`.
pub fn sgd_step(
    lr: f64,
    params: &mut BTreeMap<String, Matrix>,
    grads: &BTreeMap<String, Matrix>,
) -> Result<()> {
    for (name, p) in params.iter_mut() {
        let Some(g) = grads.get(name) else { continue };
        if g.shape() != p.shape() {
            return Err(Error::shape("sgd_step", p.shape(), g.shape()));
        }
        for i in 0..p.data().len() {
            p.data_mut()[i] -= lr * g.data()[i];
        }
    }
    Ok(())
}
