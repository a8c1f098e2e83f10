//! Objective evaluation hooks.
//!
//! These expose the exact value/gradient computations the fit drivers
//! minimize, over flat parameter vectors, so callers can run gradient
//! diagnostics (finite-difference checks) against the real optimization
//! path. Linear backbones use the split parameterization `B = P - M` with
//! layout `[P row-major, M row-major]`; the MLP layout is per-network
//! layer weights then biases.

use crate::error::Result;
use crate::sem::DataMatrix;

use super::{linear, mlp, LearnerConfig};

/// Length of the split parameter vector for a d-variable linear backbone.
pub fn linear_param_count(d: usize) -> usize {
    linear::split_param_count(d)
}

/// Length of the MLP parameter vector.
pub fn mlp_param_count(d: usize, hidden: &[usize]) -> usize {
    mlp::total_param_count(d, hidden)
}

/// Weighted least-squares objective with the augmented-Lagrangian penalty at
/// multipliers `(alpha, rho)`.
pub fn notears_value_grad(
    x: &DataMatrix,
    weights: &[f64],
    cfg: &LearnerConfig,
    alpha: f64,
    rho: f64,
    params: &[f64],
) -> Result<(f64, Vec<f64>)> {
    linear::notears_value_grad(x, weights, cfg, alpha, rho, params)
}

/// Weighted Gaussian negative log-likelihood objective with the soft DAG
/// penalty (errors when `det(I - B) <= 0` at the requested point).
pub fn nll_value_grad(
    x: &DataMatrix,
    weights: &[f64],
    cfg: &LearnerConfig,
    params: &[f64],
) -> Result<(f64, Vec<f64>)> {
    linear::nll_value_grad(x, weights, cfg, params)
}

/// Weighted MLP objective with the augmented-Lagrangian penalty.
pub fn mlp_value_grad(
    x: &DataMatrix,
    weights: &[f64],
    cfg: &LearnerConfig,
    alpha: f64,
    rho: f64,
    params: &[f64],
) -> Result<(f64, Vec<f64>)> {
    mlp::mlp_value_grad(x, weights, cfg, alpha, rho, params)
}
