//! Per-variable MLP backbone. Each variable gets its own rectifier network
//! whose first-layer column for that variable is structurally zero; the
//! acyclicity constraint acts on the matrix of first-layer column norms.

use ndarray::{Array1, Array2};


use crate::error::{Error, Result};
use crate::parallel;
use crate::rescore::SampleWeights;
use crate::rng::rng_from_seed;
use crate::scoring::{acyclicity, per_sample_losses, Regressor, ScoreConfig};
use crate::sem::DataMatrix;

use super::optimize::AdamState;
use super::{threshold_to_dag, FitResult, LearnerConfig, WeightSchedule};

fn layer_dims(d: usize, hidden: &[usize]) -> Vec<usize> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(d);
    dims.extend_from_slice(hidden);
    dims.push(1);
    dims
}

pub(crate) fn net_param_count(d: usize, hidden: &[usize]) -> usize {
    let dims = layer_dims(d, hidden);
    (0..dims.len() - 1).map(|l| dims[l + 1] * (dims[l] + 1)).sum()
}

pub(crate) fn total_param_count(d: usize, hidden: &[usize]) -> usize {
    d * net_param_count(d, hidden)
}

/// Per-layer (weight, bias) pairs unpacked from a net's flat slice.
fn unpack_net(net: &[f64], d: usize, hidden: &[usize]) -> Vec<(Array2<f64>, Array1<f64>)> {
    let dims = layer_dims(d, hidden);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    let mut off = 0;
    for l in 0..dims.len() - 1 {
        let (rows, cols) = (dims[l + 1], dims[l]);
        let w = Array2::from_shape_vec((rows, cols), net[off..off + rows * cols].to_vec())
            .expect("layout fits");
        off += rows * cols;
        let b = Array1::from_vec(net[off..off + rows].to_vec());
        off += rows;
        layers.push((w, b));
    }
    layers
}

/// The d per-variable rectifier networks, stored as one flat parameter
/// vector (layer weights row-major, then biases, per layer, per net).
#[derive(Debug, Clone)]
pub struct MlpModel {
    d: usize,
    hidden: Vec<usize>,
    params: Vec<f64>,
}

impl MlpModel {
    /// Random initialization with the structural zeros in place. Layer
    /// weights and biases start uniform in `±1/sqrt(fan_in)`.
    pub fn init(d: usize, hidden: &[usize], seed: u64) -> Self {
        use rand::Rng;
        let mut rng = rng_from_seed(seed);
        let count = total_param_count(d, hidden);
        let mut params = vec![0.0; count];
        let dims = layer_dims(d, hidden);
        let per_net = net_param_count(d, hidden);
        for j in 0..d {
            let mut off = j * per_net;
            for l in 0..dims.len() - 1 {
                let (rows, cols) = (dims[l + 1], dims[l]);
                let bound = 1.0 / (cols as f64).sqrt();
                for r in 0..rows {
                    for c in 0..cols {
                        let v = rng.random_range(-bound..bound);
                        // no self-loop: first-layer column j stays zero
                        params[off + r * cols + c] = if l == 0 && c == j { 0.0 } else { v };
                    }
                }
                off += rows * cols;
                for b in 0..rows {
                    params[off + b] = rng.random_range(-bound..bound);
                }
                off += rows;
            }
        }
        MlpModel {
            d,
            hidden: hidden.to_vec(),
            params,
        }
    }

    /// Wraps an explicit parameter vector, enforcing the structural zeros.
    pub fn with_params(d: usize, hidden: &[usize], params: Vec<f64>) -> Result<Self> {
        if params.len() != total_param_count(d, hidden) {
            return Err(Error::dims(format!(
                "expected {} parameters, got {}",
                total_param_count(d, hidden),
                params.len()
            )));
        }
        let per_net = net_param_count(d, hidden);
        for j in 0..d {
            for r in 0..layer_dims(d, hidden)[1] {
                let idx = j * per_net + r * d + j;
                if params[idx] != 0.0 {
                    return Err(Error::invalid(format!(
                        "first-layer column {j} of network {j} must be zero"
                    )));
                }
            }
        }
        Ok(MlpModel {
            d,
            hidden: hidden.to_vec(),
            params,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn net(&self, j: usize) -> &[f64] {
        let per_net = net_param_count(self.d, &self.hidden);
        &self.params[j * per_net..(j + 1) * per_net]
    }

    /// Induced adjacency matrix `A[k, j] = ||first-layer weights of net j
    /// for input k||_2`; nonnegative with a zero diagonal.
    pub fn first_layer_norms(&self) -> Array2<f64> {
        let d = self.d;
        let h1 = self.hidden[0];
        let mut a = Array2::zeros((d, d));
        for j in 0..d {
            let net = self.net(j);
            for k in 0..d {
                let mut sq = 0.0;
                for r in 0..h1 {
                    let w = net[r * d + k];
                    sq += w * w;
                }
                a[[k, j]] = sq.sqrt();
            }
        }
        a
    }

    fn forward_net(&self, j: usize, x: &Array2<f64>) -> Array1<f64> {
        let layers = unpack_net(self.net(j), self.d, &self.hidden);
        let mut cur = x.clone();
        for (l, (w, b)) in layers.iter().enumerate() {
            let mut next = cur.dot(&w.t());
            for mut row in next.rows_mut() {
                row += b;
            }
            if l + 1 < layers.len() {
                next.mapv_inplace(|v| v.max(0.0));
            }
            cur = next;
        }
        cur.column(0).to_owned()
    }
}

impl Regressor for MlpModel {
    fn predict(&self, x: &DataMatrix) -> Array2<f64> {
        let n = x.n();
        let mut out = Array2::zeros((n, self.d));
        let cols = parallel::map_indexed(self.d, |j| self.forward_net(j, x.values()));
        for (j, col) in cols.into_iter().enumerate() {
            out.column_mut(j).assign(&col);
        }
        out
    }
}

/// Data loss and gradient for one variable's network.
/// Returns (sum_i w_i * 1/2 (x_ij - out_i)^2, grad over the net slice).
fn net_loss_grad(
    net: &[f64],
    j: usize,
    d: usize,
    hidden: &[usize],
    x: &Array2<f64>,
    weights: &[f64],
) -> (f64, Vec<f64>) {
    let layers = unpack_net(net, d, hidden);
    let n = x.nrows();

    // forward, keeping activations
    let mut acts: Vec<Array2<f64>> = vec![x.clone()];
    for (l, (w, b)) in layers.iter().enumerate() {
        let mut next = acts[l].dot(&w.t());
        for mut row in next.rows_mut() {
            row += b;
        }
        if l + 1 < layers.len() {
            next.mapv_inplace(|v| v.max(0.0));
        }
        acts.push(next);
    }
    let out = acts.last().unwrap().column(0);

    let mut loss = 0.0;
    let mut delta = Array2::zeros((n, 1));
    for i in 0..n {
        let r = out[i] - x[[i, j]];
        loss += weights[i] * 0.5 * r * r;
        delta[[i, 0]] = weights[i] * r;
    }

    // backward
    let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(layers.len());
    for l in (0..layers.len()).rev() {
        let gw = delta.t().dot(&acts[l]);
        let gb = delta.sum_axis(ndarray::Axis(0));
        grads.push((gw, gb));
        if l > 0 {
            let mut back = delta.dot(&layers[l].0);
            for (b, a) in back.iter_mut().zip(acts[l].iter()) {
                if *a <= 0.0 {
                    *b = 0.0; // rectifier subgradient at 0 taken as 0
                }
            }
            delta = back;
        }
    }
    grads.reverse();

    let mut flat = Vec::with_capacity(net.len());
    for (gw, gb) in grads {
        flat.extend(gw.iter().copied());
        flat.extend(gb.iter().copied());
    }
    (loss, flat)
}

/// Full objective: weighted data loss + lambda * sum(A) + alpha h + rho/2 h^2.
fn objective_grad(
    model: &MlpModel,
    x: &Array2<f64>,
    weights: &[f64],
    cfg: &LearnerConfig,
    alpha: f64,
    rho: f64,
) -> Result<(f64, Vec<f64>)> {
    let d = model.d;
    let hidden = &model.hidden;
    let per_net = net_param_count(d, hidden);
    let h1 = hidden[0];

    let per_var = parallel::map_indexed(d, |j| {
        net_loss_grad(model.net(j), j, d, hidden, x, weights)
    });
    let mut value = 0.0;
    let mut grad = vec![0.0; model.params.len()];
    for (j, (loss, g)) in per_var.into_iter().enumerate() {
        value += loss;
        grad[j * per_net..(j + 1) * per_net].copy_from_slice(&g);
    }

    let a = model.first_layer_norms();
    let h = acyclicity(&a, cfg.acyclicity)?;
    value += cfg.lambda * a.sum() + alpha * h.value + 0.5 * rho * h.value * h.value;
    let coeff = alpha + rho * h.value;
    for j in 0..d {
        let base = j * per_net;
        for k in 0..d {
            let norm = a[[k, j]];
            if norm <= 0.0 {
                continue; // subgradient 0 at a zeroed column
            }
            let scale = (cfg.lambda + coeff * h.gradient[[k, j]]) / norm;
            for r in 0..h1 {
                let idx = base + r * d + k;
                grad[idx] += scale * model.params[idx];
            }
        }
    }

    // L2 on the layer weights (not biases); pins the layer scales so the
    // first-layer norms stay meaningful under rectifier rescaling.
    if cfg.mlp_weight_decay > 0.0 {
        let dims = layer_dims(d, hidden);
        for j in 0..d {
            let mut off = j * per_net;
            for l in 0..dims.len() - 1 {
                let (rows, cols) = (dims[l + 1], dims[l]);
                for idx in off..off + rows * cols {
                    let w = model.params[idx];
                    value += 0.5 * cfg.mlp_weight_decay * w * w;
                    grad[idx] += cfg.mlp_weight_decay * w;
                }
                off += rows * cols + rows;
            }
        }
    }
    Ok((value, grad))
}

fn frozen_mask(d: usize, hidden: &[usize]) -> Vec<bool> {
    let per_net = net_param_count(d, hidden);
    let h1 = hidden[0];
    let mut frozen = vec![false; d * per_net];
    for j in 0..d {
        for r in 0..h1 {
            frozen[j * per_net + r * d + j] = true;
        }
    }
    frozen
}

/// Adam descent on the full objective for a fixed (alpha, rho).
fn inner_solve(
    model: &MlpModel,
    x: &Array2<f64>,
    weights: &[f64],
    cfg: &LearnerConfig,
    alpha: f64,
    rho: f64,
    frozen: &[bool],
) -> Result<(MlpModel, f64)> {
    let mut params = model.params.clone();
    let mut adam = AdamState::new(params.len(), cfg.mlp_lr);
    let mut value = f64::INFINITY;
    for _ in 0..cfg.max_inner {
        let current = MlpModel {
            d: model.d,
            hidden: model.hidden.clone(),
            params: params.clone(),
        };
        let (v, grad) = objective_grad(&current, x, weights, cfg, alpha, rho)?;
        if !v.is_finite() {
            return Err(Error::numeric("MLP objective became non-finite"));
        }
        value = v;
        let gnorm = grad.iter().fold(0.0f64, |m, &g| m.max(g.abs()));
        if gnorm <= 1e-7 {
            break;
        }
        adam.step(&mut params, &grad, frozen);
    }
    Ok((
        MlpModel {
            d: model.d,
            hidden: model.hidden.clone(),
            params,
        },
        value,
    ))
}

pub(crate) fn fit(
    x: &DataMatrix,
    w0: &SampleWeights,
    cfg: &LearnerConfig,
    schedule: &mut dyn WeightSchedule,
    epoch_limit: Option<usize>,
) -> Result<FitResult> {
    let d = x.d();
    if d > cfg.mlp_d_cap {
        return Err(Error::ResourceLimit(format!(
            "MLP backbone capped at d = {}, got {d}",
            cfg.mlp_d_cap
        )));
    }
    let warnings = if x.n() < d {
        vec![format!("n = {} is below d = {d}; estimates may be unreliable", x.n())]
    } else {
        Vec::new()
    };
    let frozen = frozen_mask(d, &cfg.hidden_sizes);
    let mut model = MlpModel::init(d, &cfg.hidden_sizes, cfg.seed);
    let mut weights = w0.clone();
    let mut alpha = cfg.alpha_init;
    let mut rho = cfg.rho_init;
    let mut h_prev = f64::INFINITY;
    let mut trace = Vec::new();
    let outer_budget = epoch_limit.unwrap_or(cfg.max_outer);
    let mut epoch = 0usize;

    let (h_current, losses) = loop {
        let (candidate, obj_value, h_new) = loop {
            let (candidate, v) =
                inner_solve(&model, x.values(), weights.weights(), cfg, alpha, rho, &frozen)?;
            let h_new = acyclicity(&candidate.first_layer_norms(), cfg.acyclicity)?.value;
            if h_new > 0.25 * h_prev && rho < cfg.rho_max {
                rho *= cfg.rho_mult;
            } else {
                break (candidate, v, h_new);
            }
        };
        model = candidate;
        trace.push(obj_value);
        h_prev = h_new;
        alpha += rho * h_new;

        let losses = per_sample_losses(&model, x, &ScoreConfig::least_squares())?;
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

    let continuous = model.first_layer_norms();
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

/// Objective hook used by gradient diagnostics.
pub(crate) fn mlp_value_grad(
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
    let model = MlpModel::with_params(x.d(), &cfg.hidden_sizes, params.to_vec())?;
    objective_grad(&model, x.values(), weights, cfg, alpha, rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sem::{simulate_linear_sem, NoiseSpec, WeightedAdjacency};

    #[test]
    fn zeroed_first_layers_collapse_to_bias_only_predictor() {
        let d = 3;
        let hidden = [4, 4];
        let mut model = MlpModel::init(d, &hidden, 5);
        let per_net = net_param_count(d, &hidden);
        let h1 = hidden[0];
        for j in 0..d {
            for r in 0..h1 {
                for c in 0..d {
                    model.params[j * per_net + r * d + c] = 0.0;
                }
            }
        }
        let a = model.first_layer_norms();
        assert!(a.iter().all(|&v| v == 0.0));
        let h = acyclicity(&a, crate::scoring::AcyclicityKind::Expm).unwrap();
        assert!(h.value.abs() < 1e-12);

        let mut values = Array2::zeros((7, d));
        for (i, v) in values.iter_mut().enumerate() {
            *v = (i % 5) as f64 - 2.0;
        }
        let x = DataMatrix::new(values).unwrap();
        let pred = model.predict(&x);
        // constant output per variable
        for j in 0..d {
            let col = pred.column(j);
            for i in 1..x.n() {
                assert_eq!(col[i], col[0]);
            }
        }
        let weights = vec![1.0 / x.n() as f64; x.n()];
        let cfg = LearnerConfig {
            mlp_weight_decay: 0.0,
            ..LearnerConfig::mlp()
        };
        let (value, _) = objective_grad(&model, x.values(), &weights, &cfg, 0.0, 0.0).unwrap();
        let mut direct = 0.0;
        for i in 0..x.n() {
            for j in 0..d {
                let r = x.values()[[i, j]] - pred[[i, j]];
                direct += weights[i] * 0.5 * r * r;
            }
        }
        assert!((value - direct).abs() < 1e-12);
    }

    #[test]
    fn mlp_gradient_matches_central_differences() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(3);
        let d = 3;
        let hidden = [5, 4];
        let mut values = Array2::zeros((16, d));
        for v in values.iter_mut() {
            *v = rng.random_range(-1.5..1.5);
        }
        let x = DataMatrix::new(values).unwrap();
        let weights = vec![1.0 / 16.0; 16];
        let cfg = LearnerConfig {
            hidden_sizes: hidden.to_vec(),
            lambda: 0.05,
            ..LearnerConfig::mlp()
        };
        let mut params = vec![0.0; total_param_count(d, &hidden)];
        let per_net = net_param_count(d, &hidden);
        for (i, v) in params.iter_mut().enumerate() {
            let j = i / per_net;
            let within = i % per_net;
            let is_structural = within < hidden[0] * d && within % d == j;
            *v = if is_structural { 0.0 } else { rng.random_range(-0.5..0.5) };
        }
        let (alpha, rho) = (0.3, 1.5);
        let (_, grad) = mlp_value_grad(&x, &weights, &cfg, alpha, rho, &params).unwrap();
        let step = 1e-6;
        let mut max_rel = 0.0f64;
        for i in 0..params.len() {
            let j = i / per_net;
            let within = i % per_net;
            if within < hidden[0] * d && within % d == j {
                continue; // structural zero stays pinned
            }
            let mut hi = params.clone();
            let mut lo = params.clone();
            hi[i] += step;
            lo[i] -= step;
            let (fh, _) = mlp_value_grad(&x, &weights, &cfg, alpha, rho, &hi).unwrap();
            let (fl, _) = mlp_value_grad(&x, &weights, &cfg, alpha, rho, &lo).unwrap();
            let fd = (fh - fl) / (2.0 * step);
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1.0);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    }

    #[test]
    fn mlp_recovers_linear_chain_edge() {
        let mut m = Array2::zeros((2, 2));
        m[[0, 1]] = 2.0;
        let truth = WeightedAdjacency::new(m).unwrap();
        let noise = NoiseSpec::homogeneous(vec![1.0, 1.0]).unwrap();
        let x = simulate_linear_sem(&truth, 1000, &noise, 17).unwrap();
        let w = crate::rescore::SampleWeights::uniform(1000, 1.0).unwrap();
        let cfg = LearnerConfig::mlp();
        let fit = fit(&x, &w, &cfg, &mut super::super::NoopSchedule, None).unwrap();
        assert!(fit.graph.has_edge(0, 1), "A = {:?}", fit.continuous);
        assert!(!fit.graph.has_edge(1, 0), "A = {:?}", fit.continuous);
        // Training-loss oracle: the fitted residual variance per variable is
        // close to the noise variance 1 (variable 0 has no parents, so its
        // residual is its own spread around the bias).
        let mean_loss = fit.losses.iter().sum::<f64>() / fit.losses.len() as f64;
        let per_var_residual_var = 2.0 * mean_loss / 2.0;
        assert!(
            (0.8..=1.2).contains(&per_var_residual_var),
            "residual variance {per_var_residual_var}"
        );
    }
}
