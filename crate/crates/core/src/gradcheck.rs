//! Central finite differences and analytic-vs-numeric gradient comparison.
//! Always evaluated in `f64`.

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub op_name: String,
    pub max_rel_err: f64,
    /// Coordinate where `max_rel_err` was reached.
    pub worst_index: usize,
    pub tolerance: f64,
    pub passed: bool,
    pub step: f64,
}

/// `(f(θ + h e_i) - f(θ - h e_i)) / 2h` for every coordinate `i`.
pub fn finite_diff_grad(
    mut f: impl FnMut(&[f64]) -> f64,
    theta: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::Input(format!("finite-difference step must be > 0, got {step}")));
    }
    let mut probe = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        probe[i] = theta[i] + step;
        let up = f(&probe);
        probe[i] = theta[i] - step;
        let down = f(&probe);
        probe[i] = theta[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite {
                what: "objective during finite differences".into(),
                index: i,
            });
        }
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

/// Relative error `|a - b| / max(1e-12, |a| + |b|)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-12)
}

/// Compares two gradient vectors that are already computed.
pub fn compare_grads(op_name: &str, numeric: &[f64], analytic: &[f64], tol: f64, step: f64) -> Result<GradCheckReport> {
    if !(tol > 0.0) {
        return Err(Error::Input(format!("tolerance must be > 0, got {tol}")));
    }
    if numeric.len() != analytic.len() {
        return Err(Error::shape("grad_check", "len", numeric.len(), analytic.len()));
    }
    let (mut worst, mut worst_index) = (0.0f64, 0usize);
    for (i, (&fd, &an)) in numeric.iter().zip(analytic).enumerate() {
        if !fd.is_finite() {
            return Err(Error::NonFinite { what: format!("{op_name} numeric gradient"), index: i });
        }
        if !an.is_finite() {
            return Err(Error::NonFinite { what: format!("{op_name} analytic gradient"), index: i });
        }
        let e = rel_err(fd, an);
        if e > worst {
            worst = e;
            worst_index = i;
        }
    }
    Ok(GradCheckReport {
        op_name: op_name.to_string(),
        max_rel_err: worst,
        worst_index,
        tolerance: tol,
        passed: worst <= tol,
        step,
    })
}

/// Checks `analytic(θ)` against central differences of `forward` at θ with
/// step [`DEFAULT_STEP`].
pub fn grad_check(
    op_name: &str,
    forward: impl FnMut(&[f64]) -> f64,
    analytic: impl FnOnce(&[f64]) -> Vec<f64>,
    theta: &[f64],
    tol: f64,
) -> Result<GradCheckReport> {
    grad_check_with_step(op_name, forward, analytic, theta, tol, DEFAULT_STEP)
}

pub fn grad_check_with_step(
    op_name: &str,
    forward: impl FnMut(&[f64]) -> f64,
    analytic: impl FnOnce(&[f64]) -> Vec<f64>,
    theta: &[f64],
    tol: f64,
    step: f64,
) -> Result<GradCheckReport> {
    if !(tol > 0.0) {
        return Err(Error::Input(format!("tolerance must be > 0, got {tol}")));
    }
    let numeric = finite_diff_grad(forward, theta, step)?;
    let an = analytic(theta);
    compare_grads(op_name, &numeric, &an, tol, step)
}
