//! Central-difference verification of tape gradients.
//!
//! `fd_check` runs a closure twice per perturbed element and compares the
//! analytic gradients from [`Tape::backward`] against second-order central
//! differences. All arithmetic is 64-bit. The closure is evaluated exactly
//! as written, so a graph containing `stop_gradient` will (correctly) show a
//! mismatch: the analytic side sees zero through the blocked branch while
//! the numeric side differentiates the full composite.

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tape, Tensor};

/// Outcome of one gradient check.
#[derive(Debug, Clone)]
pub struct FdReport {
    /// Largest relative error over every parameter element.
    pub max_rel_err: f64,
    /// Location of the worst element: (parameter index, row, col).
    pub worst: (usize, usize, usize),
    /// Threshold the check was run with.
    pub tolerance: f64,
    pub passed: bool,
}

/// Compare analytic and central-difference gradients of a scalar-valued
/// function of `params`.
///
/// Relative error per element is `|analytic - numeric| / max(1, |analytic|)`.
pub fn fd_check<F>(f: F, params: &[Matrix], h: f64, tolerance: f64) -> Result<FdReport>
where
    F: Fn(&Tape, &[Tensor]) -> Result<Tensor>,
{
    let positive = |v: f64| v.is_finite() && v > 0.0;
    if !positive(h) || !positive(tolerance) {
        return Err(Error::Config(
            "fd_check needs positive step size and tolerance".into(),
        ));
    }

    // Analytic pass.
    let tape = Tape::new();
    let leaves: Vec<Tensor> = params.iter().map(|p| tape.leaf_grad(p.clone())).collect();
    let loss = f(&tape, &leaves)?;
    if tape.shape(loss) != (1, 1) {
        return Err(Error::shape("fd_check", tape.shape(loss), (1, 1)));
    }
    tape.backward(loss)?;
    let analytic: Vec<Matrix> = leaves
        .iter()
        .zip(params)
        .map(|(t, p)| {
            tape.grad(*t)
                .unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols()))
        })
        .collect();

    let eval = |perturbed: &[Matrix]| -> Result<f64> {
        let tape = Tape::new();
        let leaves: Vec<Tensor> = perturbed.iter().map(|p| tape.leaf(p.clone())).collect();
        let loss = f(&tape, &leaves)?;
        tape.scalar_value(loss)
    };

    let mut max_rel_err = 0.0_f64;
    let mut worst = (0, 0, 0);
    let mut work: Vec<Matrix> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for r in 0..p.rows() {
            for c in 0..p.cols() {
                let orig = p.get(r, c);
                work[pi].set(r, c, orig + h);
                let up = eval(&work)?;
                work[pi].set(r, c, orig - h);
                let down = eval(&work)?;
                work[pi].set(r, c, orig);

                let numeric = (up - down) / (2.0 * h);
                let a = analytic[pi].get(r, c);
                let rel = (a - numeric).abs() / a.abs().max(1.0);
                if rel > max_rel_err {
                    max_rel_err = rel;
                    worst = (pi, r, c);
                }
            }
        }
    }

    Ok(FdReport {
        max_rel_err,
        worst,
        tolerance,
        passed: max_rel_err <= tolerance,
    })
}
