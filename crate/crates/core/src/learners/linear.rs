//! Linear backbones: weighted least squares under the augmented-Lagrangian
//! DAG constraint, and the weighted Gaussian log-likelihood with a fixed soft
//! DAG penalty.
//!
//! Both optimize over the split `B = P - M` with `P, M >= 0`, which turns the
//! L1 sparsity term into a linear function and leaves a smooth objective for
//! the projected quasi-Newton solver. Diagonal entries are frozen at zero.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::linalg::lu_factor;
use crate::rescore::SampleWeights;
use crate::scoring::{acyclicity, per_sample_losses, AcyclicityKind, LossKind, ScoreConfig};
use crate::sem::{DataMatrix, WeightedAdjacency};

use super::optimize::{BoxObjective, ProjectedLbfgs};
use super::{threshold_to_dag, FitResult, LearnerConfig, WeightSchedule};

pub(crate) fn split_param_count(d: usize) -> usize {
    2 * d * d
}

/// Coefficient matrix from the split parameter vector.
pub(crate) fn params_to_matrix(params: &[f64], d: usize) -> Array2<f64> {
    let mut b = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            let idx = i * d + j;
            b[[i, j]] = params[idx] - params[d * d + idx];
        }
    }
    b
}

fn frozen_mask(d: usize) -> Vec<bool> {
    let mut frozen = vec![false; 2 * d * d];
    for i in 0..d {
        frozen[i * d + i] = true;
        frozen[d * d + i * d + i] = true;
    }
    frozen
}

/// `X^T diag(w) X`, the only data statistic the linear objectives need.
fn weighted_gram(x: &DataMatrix, weights: &[f64]) -> Array2<f64> {
    let values = x.values();
    let mut scaled = values.clone();
    for (mut row, &w) in scaled.rows_mut().into_iter().zip(weights) {
        row.mapv_inplace(|v| v * w);
    }
    values.t().dot(&scaled)
}

fn split_l1(params: &[f64]) -> f64 {
    params.iter().sum()
}

pub(crate) struct NotearsObjective {
    pub gram: Array2<f64>,
    pub d: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub rho: f64,
    pub kind: AcyclicityKind,
}

impl NotearsObjective {
    fn assemble(&self, params: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let d = self.d;
        let b = params_to_matrix(params, d);
        let e = Array2::eye(d) - &b;
        let ge = self.gram.dot(&e);
        let loss = 0.5 * e.iter().zip(ge.iter()).map(|(a, c)| a * c).sum::<f64>();
        let h = acyclicity(&b, self.kind).expect("finite parameters");
        let value =
            loss + self.lambda * split_l1(params) + self.alpha * h.value + 0.5 * self.rho * h.value * h.value;
        if let Some(grad) = &mut grad {
            let coeff = self.alpha + self.rho * h.value;
            for i in 0..d {
                for j in 0..d {
                    let g_b = -ge[[i, j]] + coeff * h.gradient[[i, j]];
                    let idx = i * d + j;
                    grad[idx] = g_b + self.lambda;
                    grad[d * d + idx] = -g_b + self.lambda;
                }
            }
        }
        value
    }
}

impl BoxObjective for NotearsObjective {
    fn value(&self, x: &[f64]) -> f64 {
        self.assemble(x, None)
    }
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.assemble(x, Some(grad))
    }
}

pub(crate) struct NllObjective {
    pub gram: Array2<f64>,
    pub d: usize,
    pub lambda: f64,
    /// Fixed soft DAG penalty coefficient.
    pub kappa: f64,
    pub kind: AcyclicityKind,
    /// Per-variable noise scales.
    pub sigma: Vec<f64>,
    /// sum_j log(sigma_j sqrt(2 pi)), constant in B.
    pub log_norm: f64,
}

impl NllObjective {
    pub(crate) fn new(
        gram: Array2<f64>,
        sigma: Vec<f64>,
        lambda: f64,
        kappa: f64,
        kind: AcyclicityKind,
    ) -> Self {
        let d = gram.nrows();
        let log_norm = sigma
            .iter()
            .map(|s| (s * (2.0 * std::f64::consts::PI).sqrt()).ln())
            .sum();
        NllObjective {
            gram,
            d,
            lambda,
            kappa,
            kind,
            sigma,
            log_norm,
        }
    }

    fn assemble(&self, params: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let d = self.d;
        let b = params_to_matrix(params, d);
        let e = Array2::eye(d) - &b;
        let lu = match lu_factor(&e) {
            Ok(lu) => lu,
            Err(_) => return f64::INFINITY,
        };
        let (sign, log_det) = lu.sign_log_det();
        if sign <= 0.0 {
            return f64::INFINITY;
        }
        let ge = self.gram.dot(&e);
        let mut quad = 0.0;
        for j in 0..d {
            let col_e: ArrayView1<f64> = e.column(j);
            let col_ge: ArrayView1<f64> = ge.column(j);
            let q: f64 = col_e.iter().zip(col_ge.iter()).map(|(a, c)| a * c).sum();
            quad += 0.5 * q / (self.sigma[j] * self.sigma[j]);
        }
        let h = acyclicity(&b, self.kind).expect("finite parameters");
        let value = self.log_norm + quad - log_det
            + self.lambda * split_l1(params)
            + self.kappa * h.value;
        if let Some(grad) = &mut grad {
            let inv = lu.inverse();
            for i in 0..d {
                for j in 0..d {
                    // d(quad)/dB = -G E D, d(-log det)/dB = (I-B)^{-T}
                    let g_b = -ge[[i, j]] / (self.sigma[j] * self.sigma[j]) + inv[[j, i]]
                        + self.kappa * h.gradient[[i, j]];
                    let idx = i * d + j;
                    grad[idx] = g_b + self.lambda;
                    grad[d * d + idx] = -g_b + self.lambda;
                }
            }
        }
        value
    }
}

impl BoxObjective for NllObjective {
    fn value(&self, x: &[f64]) -> f64 {
        self.assemble(x, None)
    }
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.assemble(x, Some(grad))
    }
}

fn base_warnings(x: &DataMatrix) -> Vec<String> {
    if x.n() < x.d() {
        vec![format!(
            "n = {} is below d = {}; estimates may be unreliable",
            x.n(),
            x.d()
        )]
    } else {
        Vec::new()
    }
}

pub(crate) fn fit_notears(
    x: &DataMatrix,
    w0: &SampleWeights,
    cfg: &LearnerConfig,
    schedule: &mut dyn WeightSchedule,
    epoch_limit: Option<usize>,
) -> Result<FitResult> {
    let d = x.d();
    let mut warnings = base_warnings(x);
    let solver = ProjectedLbfgs {
        max_iters: cfg.max_inner,
        ..ProjectedLbfgs::default()
    };
    let frozen = frozen_mask(d);
    let mut params = vec![0.0; split_param_count(d)];
    let mut weights = w0.clone();
    let mut alpha = cfg.alpha_init;
    let mut rho = cfg.rho_init;
    let mut h_prev = f64::INFINITY;
    let mut trace = Vec::new();
    let outer_budget = epoch_limit.unwrap_or(cfg.max_outer);
    let mut epoch = 0usize;
    let mut stall_epochs: Vec<(usize, usize)> = Vec::new();

    let (h_current, losses) = loop {
        let gram = weighted_gram(x, weights.weights());
        // Inner solve, escalating rho until h drops to a quarter of its
        // previous value (or the cap is reached).
        let (out, h_new) = loop {
            let obj = NotearsObjective {
                gram: gram.clone(),
                d,
                lambda: cfg.lambda,
                alpha,
                rho,
                kind: cfg.acyclicity,
            };
            let out = solver.minimize(&obj, &params, &frozen)?;
            let h_new = acyclicity(&params_to_matrix(&out.x, d), cfg.acyclicity)?.value;
            if h_new > 0.25 * h_prev && rho < cfg.rho_max {
                rho *= cfg.rho_mult;
            } else {
                break (out, h_new);
            }
        };
        if out.stalled {
            stall_epochs.push((epoch, out.iterations));
        }
        params = out.x;
        trace.push(out.value);
        h_prev = h_new;
        alpha += rho * h_new;

        let b = WeightedAdjacency::new(params_to_matrix(&params, d))?;
        let losses = per_sample_losses(&b, x, &ScoreConfig::least_squares())?;
        if let Some(next) = schedule.update(epoch, x, &losses)? {
            weights = next;
        }
        epoch += 1;
        if h_new <= cfg.h_tol || rho >= cfg.rho_max || epoch >= outer_budget {
            break (h_new, losses);
        }
    };

    if h_current > cfg.h_tol {
        return Err(Error::numeric(format!(
            "acyclicity constraint not met: h = {h_current:.3e} after {epoch} epochs (rho = {rho:.1e})"
        )));
    }
    for (e, iters) in stall_epochs {
        warnings.push(format!("inner solve stalled at epoch {e} after {iters} iterations"));
    }

    let continuous = params_to_matrix(&params, d);
    let graph = threshold_to_dag(&continuous, cfg.omega)?;
    Ok(FitResult {
        continuous,
        graph,
        losses,
        h_final: h_current,
        outer_iterations: epoch,
        rho_final: rho,
        objective_trace: trace,
        final_weights: None,
        warnings,
    })
}

pub(crate) fn fit_nll(
    x: &DataMatrix,
    w0: &SampleWeights,
    cfg: &LearnerConfig,
    schedule: &mut dyn WeightSchedule,
    epoch_limit: Option<usize>,
) -> Result<FitResult> {
    let d = x.d();
    let sigma = match &cfg.sigma {
        Some(s) => {
            if s.len() != d {
                return Err(Error::dims(format!(
                    "sigma has length {}, data has {d} columns",
                    s.len()
                )));
            }
            s.clone()
        }
        None => vec![1.0; d],
    };
    let mut warnings = base_warnings(x);
    let solver = ProjectedLbfgs {
        max_iters: cfg.max_inner,
        ..ProjectedLbfgs::default()
    };
    let frozen = frozen_mask(d);
    let mut params = vec![0.0; split_param_count(d)];
    let mut weights = w0.clone();
    let mut trace = Vec::new();
    let epochs = epoch_limit.unwrap_or(cfg.nll_epochs);
    let loss_cfg = ScoreConfig {
        loss: LossKind::GaussianNll,
        lambda: cfg.lambda,
        sigma: Some(sigma.clone()),
    };
    let mut losses = Vec::new();

    for epoch in 0..epochs {
        let gram = weighted_gram(x, weights.weights());
        let obj = NllObjective::new(gram, sigma.clone(), cfg.lambda, cfg.nll_h_coeff, cfg.acyclicity);
        let out = solver.minimize(&obj, &params, &frozen)?;
        if out.stalled {
            warnings.push(format!(
                "inner solve stalled at epoch {epoch} after {} iterations",
                out.iterations
            ));
        }
        params = out.x;
        trace.push(out.value);

        let b = WeightedAdjacency::new(params_to_matrix(&params, d))?;
        losses = per_sample_losses(&b, x, &loss_cfg)?;
        if let Some(next) = schedule.update(epoch, x, &losses)? {
            weights = next;
        }
    }

    let continuous = params_to_matrix(&params, d);
    let h_final = acyclicity(&continuous, cfg.acyclicity)?.value;
    let graph = threshold_to_dag(&continuous, cfg.omega)?;
    Ok(FitResult {
        continuous,
        graph,
        losses,
        h_final,
        outer_iterations: epochs,
        rho_final: 0.0,
        objective_trace: trace,
        final_weights: None,
        warnings,
    })
}

/// Objective evaluation hooks used by gradient diagnostics.
pub(crate) fn notears_value_grad(
    x: &DataMatrix,
    weights: &[f64],
    cfg: &LearnerConfig,
    alpha: f64,
    rho: f64,
    params: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if weights.len() != x.n() {
        return Err(Error::dims("weight length differs from row count"));
    }
    if params.len() != split_param_count(x.d()) {
        return Err(Error::dims("parameter vector has the wrong length"));
    }
    let obj = NotearsObjective {
        gram: weighted_gram(x, weights),
        d: x.d(),
        lambda: cfg.lambda,
        alpha,
        rho,
        kind: cfg.acyclicity,
    };
    let mut grad = vec![0.0; params.len()];
    let value = obj.value_grad(params, &mut grad);
    Ok((value, grad))
}

pub(crate) fn nll_value_grad(
    x: &DataMatrix,
    weights: &[f64],
    cfg: &LearnerConfig,
    params: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if weights.len() != x.n() {
        return Err(Error::dims("weight length differs from row count"));
    }
    if params.len() != split_param_count(x.d()) {
        return Err(Error::dims("parameter vector has the wrong length"));
    }
    let sigma = cfg.sigma.clone().unwrap_or_else(|| vec![1.0; x.d()]);
    let obj = NllObjective::new(
        weighted_gram(x, weights),
        sigma,
        cfg.lambda,
        cfg.nll_h_coeff,
        cfg.acyclicity,
    );
    let mut grad = vec![0.0; params.len()];
    let value = obj.value_grad(params, &mut grad);
    if !value.is_finite() {
        return Err(Error::numeric("objective infinite at the requested point"));
    }
    Ok((value, grad))
}
