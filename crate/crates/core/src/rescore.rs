//! Bilevel sample reweighting around any score-based backbone.
//!
//! The inner problem maximizes the reweighted score over the capped simplex
//! `C(tau) = { w : tau/n <= w_i <= 1/(tau n), sum w_i = 1 }`. Because the
//! objective is linear in `w` for a fixed model, the exact maximizer is the
//! sorted-greedy vertex solution; a parametric scorer network is available as
//! an alternative with smoother weight trajectories.

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{self, Backbone, FitResult, LearnerConfig, WeightSchedule};
use crate::rng::rng_from_seed;
use crate::sem::DataMatrix;

const WEIGHT_BOUND_TOL: f64 = 1e-12;
const WEIGHT_SUM_TOL: f64 = 1e-9;

/// A feasible point of `C(tau)`: per-sample weights on the capped simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeights {
    w: Vec<f64>,
    tau: f64,
}

impl SampleWeights {
    pub fn new(w: Vec<f64>, tau: f64) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::invalid("weight vector must be nonempty"));
        }
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::invalid(format!("tau must lie in (0, 1], got {tau}")));
        }
        let n = w.len() as f64;
        let floor = tau / n;
        let cap = 1.0 / (tau * n);
        for (i, &wi) in w.iter().enumerate() {
            if !(wi >= floor - WEIGHT_BOUND_TOL && wi <= cap + WEIGHT_BOUND_TOL) {
                return Err(Error::invalid(format!(
                    "weight {wi} at index {i} violates [{floor}, {cap}]"
                )));
            }
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid(format!("weights sum to {sum}, not 1")));
        }
        Ok(SampleWeights { w, tau })
    }

    pub fn uniform(n: usize, tau: f64) -> Result<Self> {
        SampleWeights::new(vec![1.0 / n as f64; n], tau)
    }

    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn floor(&self) -> f64 {
        self.tau / self.w.len() as f64
    }

    pub fn cap(&self) -> f64 {
        1.0 / (self.tau * self.w.len() as f64)
    }
}

/// Exact maximizer of `sum_i w_i l_i` over `C(tau)`.
///
/// Sorted greedy: caps from the highest loss down, floors from the lowest
/// up, at most one fractional weight balancing the budget. Tied losses share
/// the average of what the greedy would give their block, which keeps the
/// solver deterministic and permutation-equivariant.
pub fn inner_weights_exact(losses: &[f64], tau: f64) -> Result<SampleWeights> {
    let n = losses.len();
    if n == 0 {
        return Err(Error::invalid("inner_weights_exact requires n >= 1"));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid(format!("tau must lie in (0, 1], got {tau}")));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::invalid("losses must be finite"));
    }
    let nf = n as f64;
    let floor = tau / nf;
    let cap = 1.0 / (tau * nf);
    if floor == cap {
        return SampleWeights::new(vec![1.0 / nf; n], tau);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| losses[b].partial_cmp(&losses[a]).unwrap().then(a.cmp(&b)));

    // Mass above the all-floor baseline, spent greedily from the top.
    let extra = 1.0 - nf * floor;
    let room = cap - floor;
    let full = ((extra / room).floor() as usize).min(n);
    let frac = (extra - full as f64 * room).max(0.0);

    let mut by_rank = vec![floor; n];
    for slot in by_rank.iter_mut().take(full) {
        *slot = cap;
    }
    if full < n {
        by_rank[full] = (floor + frac).min(cap);
    }

    // Average ranks that share a loss value so ties get equal weights.
    let mut w = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && losses[order[end]] == losses[order[start]] {
            end += 1;
        }
        let mass: f64 = by_rank[start..end].iter().sum();
        let share = mass / (end - start) as f64;
        for &idx in &order[start..end] {
            w[idx] = share;
        }
        start = end;
    }
    SampleWeights::new(w, tau)
}

/// Projects a nonnegative proposal onto `C(tau)` by clamping and rescaling
/// the unclamped mass.
///
/// The fixed point of clamp-then-rescale is `w_i = clamp(s * p_i)` for the
/// scale `s` that restores the budget; `sum_i clamp(s * p_i)` is monotone in
/// `s`, so the scale is found by a short active-set iteration (at most 50
/// rounds) with a bisection fallback (water-filling on the multiplicative
/// scale). Ratios between interior entries are preserved.
pub fn clip_renormalize(raw: &[f64], tau: f64) -> Result<SampleWeights> {
    let n = raw.len();
    if n == 0 {
        return Err(Error::invalid("clip_renormalize requires n >= 1"));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid(format!("tau must lie in (0, 1], got {tau}")));
    }
    if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::numeric("weight proposal has negative or non-finite mass"));
    }
    let nf = n as f64;
    let floor = tau / nf;
    let cap = 1.0 / (tau * nf);
    if floor == cap {
        return SampleWeights::new(vec![1.0 / nf; n], tau);
    }
    let total: f64 = raw.iter().sum();
    let p: Vec<f64> = if total > 0.0 {
        raw.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / nf; n]
    };

    let weights_at = |s: f64| -> Vec<f64> { p.iter().map(|&pi| (s * pi).clamp(floor, cap)).collect() };
    let sum_at = |s: f64| -> f64 { p.iter().map(|&pi| (s * pi).clamp(floor, cap)).sum() };

    // Active-set rounds: pin violators, rescale the free mass.
    let mut pinned: Vec<Option<f64>> = vec![None; n];
    for _ in 0..50 {
        let pinned_mass: f64 = pinned.iter().flatten().sum();
        let free: Vec<usize> = (0..n).filter(|&i| pinned[i].is_none()).collect();
        let free_mass: f64 = free.iter().map(|&i| p[i]).sum();
        let budget = 1.0 - pinned_mass;
        if free.is_empty() || free_mass <= 0.0 || budget <= 0.0 {
            break;
        }
        let s = budget / free_mass;
        let mut changed = false;
        for &i in &free {
            let w = s * p[i];
            if w > cap {
                pinned[i] = Some(cap);
                changed = true;
            } else if w < floor {
                pinned[i] = Some(floor);
                changed = true;
            }
        }
        if !changed {
            let mut w = vec![0.0; n];
            for i in 0..n {
                w[i] = pinned[i].unwrap_or(s * p[i]);
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() <= WEIGHT_SUM_TOL {
                return SampleWeights::new(w, tau);
            }
            break;
        }
    }

    // Bisection on the scale: sum_at is monotone with range [tau, 1/tau].
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while sum_at(hi) < 1.0 {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum_at(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    SampleWeights::new(weights_at(0.5 * (lo + hi)), tau)
}

/// Inner solver selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerSolver {
    Exact,
    Parametric,
}

/// Configuration of the bilevel reweighting loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescoreConfig {
    /// Cutoff threshold of the weight box; 1 collapses to uniform weights.
    pub tau: f64,
    pub solver: InnerSolver,
    /// Outer epoch budget. `None` follows the backbone: the augmented
    /// Lagrangian's own outer count for constrained backbones, a fixed
    /// alternation count for the soft-penalty likelihood backbone.
    pub k_outer: Option<usize>,
    /// Ascent steps per epoch for the parametric solver.
    pub k_inner: usize,
    /// First epoch at which weights start updating.
    pub k_reweight: usize,
    /// Hidden layer sizes of the scorer network; `None` picks one hidden
    /// layer for linear backbones and two for the MLP backbone.
    pub hidden: Option<Vec<usize>>,
    /// Softmax temperature of the scorer.
    pub temperature: f64,
    /// Ascent learning rate of the scorer.
    pub learning_rate: f64,
    /// Feed `(x_i, l_i)` to the scorer instead of the raw row `x_i`.
    pub feed_loss: bool,
    pub seed: u64,
}

impl Default for RescoreConfig {
    fn default() -> Self {
        RescoreConfig {
            tau: 0.9,
            solver: InnerSolver::Exact,
            k_outer: None,
            k_inner: 100,
            k_reweight: 1,
            hidden: None,
            temperature: 5.0,
            learning_rate: 0.01,
            feed_loss: false,
            seed: 0,
        }
    }
}

impl RescoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::invalid(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::invalid("softmax temperature must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if let Some(k) = self.k_outer {
            if self.k_reweight > k {
                return Err(Error::invalid(format!(
                    "k_reweight ({}) exceeds k_outer ({k})",
                    self.k_reweight
                )));
            }
        }
        Ok(())
    }
}

/// Feed-forward scorer over sample rows: ReLU hidden layers, scalar logit
/// head. The head starts at zero so the first emitted weights are uniform.
#[derive(Debug, Clone)]
pub struct ReweightModel {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    adam_m: Vec<(Array2<f64>, Array1<f64>)>,
    adam_v: Vec<(Array2<f64>, Array1<f64>)>,
    steps: usize,
}

impl ReweightModel {
    pub fn new(input_dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            let (rows, cols) = (dims[l + 1], dims[l]);
            let last = l == dims.len() - 2;
            let scale = if last { 0.0 } else { (2.0 / cols as f64).sqrt() };
            let mut w = Array2::zeros((rows, cols));
            for v in w.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = scale * z;
            }
            weights.push(w);
            biases.push(Array1::zeros(rows));
        }
        let adam_m = weights
            .iter()
            .zip(&biases)
            .map(|(w, b)| (Array2::zeros(w.raw_dim()), Array1::zeros(b.raw_dim())))
            .collect();
        let adam_v = weights
            .iter()
            .zip(&biases)
            .map(|(w, b)| (Array2::zeros(w.raw_dim()), Array1::zeros(b.raw_dim())))
            .collect();
        ReweightModel {
            weights,
            biases,
            adam_m,
            adam_v,
            steps: 0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    /// One scalar logit per input row, plus the hidden activations needed
    /// for backpropagation.
    fn forward(&self, inputs: &Array2<f64>) -> (Array1<f64>, Vec<Array2<f64>>) {
        let mut acts = vec![inputs.clone()];
        let mut cur = inputs.clone();
        for l in 0..self.weights.len() - 1 {
            let mut next = cur.dot(&self.weights[l].t());
            for mut row in next.rows_mut() {
                row += &self.biases[l];
            }
            next.mapv_inplace(|v| v.max(0.0));
            acts.push(next.clone());
            cur = next;
        }
        let last = self.weights.len() - 1;
        let mut logits = cur.dot(&self.weights[last].t());
        for mut row in logits.rows_mut() {
            row += &self.biases[last];
        }
        (logits.column(0).to_owned(), acts)
    }

    pub fn logits(&self, inputs: &Array2<f64>) -> Array1<f64> {
        self.forward(inputs).0
    }

    /// One Adam ascent step on `sum_i w_i l_i` with
    /// `w = clip_renormalize(softmax(logits/T))`. Samples pinned at the box
    /// bounds get zero gradient; the interior behaves like a softmax over
    /// the unpinned mass, which drives the weights toward the greedy vertex
    /// instead of over-concentrating on the single largest loss.
    fn ascend(&mut self, inputs: &Array2<f64>, losses: &[f64], tau: f64, temperature: f64, lr: f64) {
        let n = inputs.nrows();
        let (logits, acts) = self.forward(inputs);
        let p = softmax(&logits, temperature);
        let w = match clip_renormalize(p.as_slice().unwrap(), tau) {
            Ok(w) => w,
            Err(_) => return,
        };
        let floor = w.floor();
        let cap = w.cap();
        let bound_eps = 1e-12;
        let interior: Vec<usize> = (0..n)
            .filter(|&i| {
                w.weights()[i] > floor + bound_eps && w.weights()[i] < cap - bound_eps
            })
            .collect();
        let mut dlogit = Array2::zeros((n, 1));
        if !interior.is_empty() {
            let mass: f64 = interior.iter().map(|&i| w.weights()[i]).sum();
            let expected: f64 =
                interior.iter().map(|&i| w.weights()[i] * losses[i]).sum::<f64>() / mass;
            for &i in &interior {
                dlogit[[i, 0]] = w.weights()[i] * (losses[i] - expected) / temperature;
            }
        }

        let layers = self.weights.len();
        let mut grads_w: Vec<Array2<f64>> = Vec::with_capacity(layers);
        let mut grads_b: Vec<Array1<f64>> = Vec::with_capacity(layers);
        let mut delta = dlogit;
        for l in (0..layers).rev() {
            let upstream = &acts[l];
            grads_w.push(delta.t().dot(upstream));
            grads_b.push(delta.sum_axis(ndarray::Axis(0)));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l]);
                for (b, a) in back.iter_mut().zip(acts[l].iter()) {
                    if *a <= 0.0 {
                        *b = 0.0;
                    }
                }
                delta = back;
            }
        }
        grads_w.reverse();
        grads_b.reverse();

        self.steps += 1;
        let t = self.steps as f64;
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        for l in 0..layers {
            let (mw, mb) = &mut self.adam_m[l];
            let (vw, vb) = &mut self.adam_v[l];
            // ascent: step along +gradient
            for (((w, g), m), v) in self.weights[l]
                .iter_mut()
                .zip(grads_w[l].iter())
                .zip(mw.iter_mut())
                .zip(vw.iter_mut())
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mhat = *m / (1.0 - b1.powf(t));
                let vhat = *v / (1.0 - b2.powf(t));
                *w += lr * mhat / (vhat.sqrt() + eps);
            }
            for (((b, g), m), v) in self.biases[l]
                .iter_mut()
                .zip(grads_b[l].iter())
                .zip(mb.iter_mut())
                .zip(vb.iter_mut())
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mhat = *m / (1.0 - b1.powf(t));
                let vhat = *v / (1.0 - b2.powf(t));
                *b += lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

fn softmax(logits: &Array1<f64>, temperature: f64) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.mapv(|v| ((v - max) / temperature).exp());
    let sum = out.sum();
    out.mapv_inplace(|v| v / sum);
    out
}

fn scorer_inputs(x: &DataMatrix, losses: &[f64], feed_loss: bool) -> Array2<f64> {
    if !feed_loss {
        return x.values().clone();
    }
    let n = x.n();
    let d = x.d();
    let mut inputs = Array2::zeros((n, d + 1));
    inputs.slice_mut(ndarray::s![.., ..d]).assign(x.values());
    for i in 0..n {
        inputs[[i, d]] = losses[i];
    }
    inputs
}

/// Runs `k_inner` ascent steps of the scorer on fixed losses and emits the
/// projected weights; the updated model state carries over to the next epoch.
pub fn inner_weights_parametric(
    x: &DataMatrix,
    losses: &[f64],
    cfg: &RescoreConfig,
    state: &mut ReweightModel,
) -> Result<SampleWeights> {
    cfg.validate()?;
    if losses.len() != x.n() {
        return Err(Error::dims(format!(
            "{} losses vs {} rows",
            losses.len(),
            x.n()
        )));
    }
    let inputs = scorer_inputs(x, losses, cfg.feed_loss);
    if inputs.ncols() != state.input_dim() {
        return Err(Error::dims(format!(
            "scorer expects {} inputs, got {}",
            state.input_dim(),
            inputs.ncols()
        )));
    }
    for _ in 0..cfg.k_inner {
        state.ascend(&inputs, losses, cfg.tau, cfg.temperature, cfg.learning_rate);
    }
    let logits = state.logits(&inputs);
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("scorer produced non-finite logits"));
    }
    let probs = softmax(&logits, cfg.temperature);
    clip_renormalize(probs.as_slice().unwrap(), cfg.tau)
}

/// Weight schedule wired into the learner drivers by `fit_rescore`.
struct RescoreSchedule<'c> {
    cfg: &'c RescoreConfig,
    model: Option<ReweightModel>,
    latest: Option<SampleWeights>,
}

impl WeightSchedule for RescoreSchedule<'_> {
    fn update(
        &mut self,
        epoch: usize,
        x: &DataMatrix,
        losses: &[f64],
    ) -> Result<Option<SampleWeights>> {
        if epoch < self.cfg.k_reweight {
            return Ok(None);
        }
        if let Some(limit) = self.cfg.k_outer {
            if epoch >= limit {
                return Ok(None);
            }
        }
        let w = match self.cfg.solver {
            InnerSolver::Exact => inner_weights_exact(losses, self.cfg.tau)?,
            InnerSolver::Parametric => {
                let model = self.model.as_mut().expect("parametric schedule holds a model");
                inner_weights_parametric(x, losses, self.cfg, model)?
            }
        };
        self.latest = Some(w.clone());
        Ok(Some(w))
    }
}

/// Trains `backbone` under the bilevel reweighting loop: uniform weights to
/// start, the backbone's own outer minimization per epoch, and an inner
/// weight update from the current per-sample losses once the reweighting
/// epoch is reached. The final weights land in the fit diagnostics.
pub fn fit_rescore(
    backbone: Backbone,
    x: &DataMatrix,
    lcfg: &LearnerConfig,
    rcfg: &RescoreConfig,
) -> Result<FitResult> {
    rcfg.validate()?;
    let hidden: Vec<usize> = match (&rcfg.hidden, backbone) {
        (Some(h), _) => h.clone(),
        (None, Backbone::NotearsMlp) => vec![10, 10],
        (None, _) => vec![10],
    };
    let model = match rcfg.solver {
        InnerSolver::Parametric => {
            let input_dim = x.d() + usize::from(rcfg.feed_loss);
            Some(ReweightModel::new(input_dim, &hidden, rcfg.seed))
        }
        InnerSolver::Exact => None,
    };
    let mut schedule = RescoreSchedule {
        cfg: rcfg,
        model,
        latest: None,
    };
    let uniform = SampleWeights::uniform(x.n(), rcfg.tau)?;
    let mut fit = learners::fit_with_schedule(backbone, x, &uniform, lcfg, &mut schedule, rcfg.k_outer)?;
    fit.final_weights = schedule.latest.or(Some(uniform));
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute-force LP oracle: enumerate box/simplex vertices (every weight at
    /// a bound except at most one) and return the best objective.
    pub(super) fn lp_vertex_max(losses: &[f64], tau: f64) -> f64 {
        let n = losses.len();
        let nf = n as f64;
        let floor = tau / nf;
        let cap = 1.0 / (tau * nf);
        let mut best = f64::NEG_INFINITY;
        for mask in 0..(1u32 << n) {
            for free in 0..n {
                if mask & (1 << free) != 0 {
                    continue;
                }
                let mut w = vec![0.0; n];
                let mut used = 0.0;
                for i in 0..n {
                    if i == free {
                        continue;
                    }
                    w[i] = if mask & (1 << i) != 0 { cap } else { floor };
                    used += w[i];
                }
                let rest = 1.0 - used;
                if rest < floor - 1e-12 || rest > cap + 1e-12 {
                    continue;
                }
                w[free] = rest;
                let obj: f64 = w.iter().zip(losses).map(|(wi, li)| wi * li).sum();
                best = best.max(obj);
            }
        }
        best
    }

    #[test]
    fn exact_solver_two_sample_example() {
        let w = inner_weights_exact(&[2.0, 1.0], 0.5).unwrap();
        assert!((w.weights()[0] - 0.75).abs() < 1e-15);
        assert!((w.weights()[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn exact_solver_tau_one_is_uniform() {
        let w = inner_weights_exact(&[5.0, 1.0, 3.0, 2.0], 1.0).unwrap();
        for &wi in w.weights() {
            assert_eq!(wi.to_bits(), (0.25f64).to_bits());
        }
    }

    #[test]
    fn exact_solver_three_sample_example() {
        let w = inner_weights_exact(&[3.0, 2.0, 1.0], 0.6).unwrap();
        assert!((w.weights()[0] - 1.0 / 1.8).abs() < 1e-12);
        assert!((w.weights()[1] - (1.0 - 1.0 / 1.8 - 0.2)).abs() < 1e-12);
        assert!((w.weights()[2] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn exact_solver_matches_lp_oracle() {
        let mut rng = rng_from_seed(41);
        use rand::Rng;
        for tau in [0.1, 0.5, 0.9] {
            for n in 1..=6 {
                for _ in 0..60 {
                    let losses: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..5.0)).collect();
                    let w = inner_weights_exact(&losses, tau).unwrap();
                    let got: f64 = w.weights().iter().zip(&losses).map(|(wi, li)| wi * li).sum();
                    let best = lp_vertex_max(&losses, tau);
                    assert!(
                        (got - best).abs() <= 1e-12,
                        "n={n} tau={tau}: got {got}, oracle {best}"
                    );
                }
            }
        }
    }

    #[test]
    fn exact_solver_monotone_with_shared_bound_equality() {
        let mut rng = rng_from_seed(43);
        use rand::Rng;
        for _ in 0..500 {
            let n = 50;
            let tau = 0.9;
            let losses: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
            let w = inner_weights_exact(&losses, tau).unwrap();
            let floor = w.floor();
            let cap = w.cap();
            for i in 0..n {
                for j in 0..n {
                    if losses[i] > losses[j] {
                        let (wi, wj) = (w.weights()[i], w.weights()[j]);
                        assert!(wi >= wj - 1e-15);
                        if (wi - wj).abs() <= 1e-15 {
                            let both_floor = (wi - floor).abs() <= 1e-12 && (wj - floor).abs() <= 1e-12;
                            let both_cap = (wi - cap).abs() <= 1e-12 && (wj - cap).abs() <= 1e-12;
                            assert!(both_floor || both_cap, "equality off the bounds");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn exact_solver_ties_share_weight() {
        let w = inner_weights_exact(&[2.0, 2.0, 1.0, 1.0], 0.5).unwrap();
        assert_eq!(w.weights()[0], w.weights()[1]);
        assert_eq!(w.weights()[2], w.weights()[3]);
        assert!(w.weights()[0] > w.weights()[2]);
        let sum: f64 = w.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_solver_permutation_equivariant() {
        let losses = [4.0, 1.0, 3.0, 3.0, 0.5, 2.0];
        let base = inner_weights_exact(&losses, 0.4).unwrap();
        let perm = [5usize, 2, 0, 4, 1, 3];
        let permuted: Vec<f64> = perm.iter().map(|&i| losses[i]).collect();
        let w2 = inner_weights_exact(&permuted, 0.4).unwrap();
        for (slot, &src) in perm.iter().enumerate() {
            assert_eq!(w2.weights()[slot].to_bits(), base.weights()[src].to_bits());
        }
    }

    #[test]
    fn exact_solver_rejects_bad_tau() {
        assert!(inner_weights_exact(&[1.0], 0.0).is_err());
        assert!(inner_weights_exact(&[1.0], 1.5).is_err());
        assert!(inner_weights_exact(&[f64::NAN], 0.9).is_err());
    }

    #[test]
    fn clip_renormalize_outputs_feasible_weights() {
        let mut rng = rng_from_seed(47);
        use rand::Rng;
        for tau in [0.1, 0.5, 0.9, 1.0] {
            for n in [1usize, 2, 7, 40] {
                for _ in 0..20 {
                    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0f64)).collect();
                    let w = clip_renormalize(&raw, tau).unwrap();
                    assert_eq!(w.n(), n);
                }
            }
        }
    }

    #[test]
    fn parametric_starts_uniform() {
        let x = DataMatrix::new(Array2::from_shape_fn((6, 3), |(i, j)| {
            (i as f64) * 0.3 - (j as f64)
        }))
        .unwrap();
        let model = ReweightModel::new(3, &[10], 7);
        let logits = model.logits(x.values());
        assert!(logits.iter().all(|&v| v == 0.0));
        let probs = softmax(&logits, 1.0);
        for &p in probs.iter() {
            assert!((p - 1.0 / 6.0).abs() < 1e-15);
        }
        // zero ascent steps: the first emitted weights are uniform
        let mut untouched = ReweightModel::new(3, &[10], 7);
        let cfg = RescoreConfig {
            k_inner: 0,
            tau: 0.5,
            ..RescoreConfig::default()
        };
        let losses = vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0];
        let w = inner_weights_parametric(&x, &losses, &cfg, &mut untouched).unwrap();
        for &wi in w.weights() {
            assert!((wi - 1.0 / 6.0).abs() <= 1e-12, "weight {wi}");
        }
    }

    #[test]
    fn parametric_ascent_does_not_decrease_objective() {
        let x = DataMatrix::new(Array2::from_shape_fn((8, 2), |(i, j)| {
            ((i * 7 + j * 3) % 5) as f64 - 2.0
        }))
        .unwrap();
        let losses: Vec<f64> = (0..8).map(|i| (i as f64) * 0.7).collect();
        let cfg = RescoreConfig {
            k_inner: 50,
            tau: 0.5,
            ..RescoreConfig::default()
        };
        let mut model = ReweightModel::new(2, &[10], 3);
        let w = inner_weights_parametric(&x, &losses, &cfg, &mut model).unwrap();
        let objective: f64 = w.weights().iter().zip(&losses).map(|(wi, li)| wi * li).sum();
        let uniform: f64 = losses.iter().sum::<f64>() / losses.len() as f64;
        assert!(objective >= uniform - 1e-12, "{objective} < {uniform}");
    }

    #[test]
    fn parametric_approaches_exact_optimum() {
        let x = DataMatrix::new(Array2::from_shape_fn((6, 2), |(i, j)| {
            (i as f64 + 1.0) * if j == 0 { 0.5 } else { -0.25 }
        }))
        .unwrap();
        let losses = [6.0, 5.0, 4.0, 3.0, 2.0, 1.0];
        let cfg = RescoreConfig {
            tau: 0.5,
            temperature: 0.05,
            learning_rate: 0.05,
            k_inner: 3000,
            feed_loss: true,
            ..RescoreConfig::default()
        };
        let mut model = ReweightModel::new(3, &[16], 11);
        let w = inner_weights_parametric(&x, &losses, &cfg, &mut model).unwrap();
        let got: f64 = w.weights().iter().zip(&losses).map(|(wi, li)| wi * li).sum();
        let best = lp_vertex_max(&losses, 0.5);
        assert!(
            got >= best * 0.98,
            "parametric {got} below 98% of optimum {best}"
        );
    }

    #[test]
    fn sample_weights_validation() {
        assert!(SampleWeights::new(vec![0.5, 0.5], 0.5).is_ok());
        // above the cap 1/(0.5*2) = 1.0 is fine, but floor violation rejected
        assert!(SampleWeights::new(vec![0.9, 0.1], 0.5).is_err());
        assert!(SampleWeights::new(vec![0.6, 0.6], 0.5).is_err());
        assert!(SampleWeights::new(vec![], 0.5).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Every solver output satisfies the C(tau) invariants (the
            /// SampleWeights constructor enforces them).
            #[test]
            fn exact_solver_always_feasible(
                losses in prop::collection::vec(-10.0..10.0f64, 1..40),
                tau in 0.05..=1.0f64,
            ) {
                let w = inner_weights_exact(&losses, tau).unwrap();
                prop_assert_eq!(w.n(), losses.len());
            }

            #[test]
            fn clip_renormalize_always_feasible(
                raw in prop::collection::vec(0.0..5.0f64, 1..40),
                tau in 0.05..=1.0f64,
            ) {
                let w = clip_renormalize(&raw, tau).unwrap();
                prop_assert_eq!(w.n(), raw.len());
            }

            /// Objective value of the greedy solution never falls below the
            /// uniform baseline (it maximizes a linear functional).
            #[test]
            fn exact_solver_beats_uniform(
                losses in prop::collection::vec(0.0..10.0f64, 2..30),
                tau in 0.05..=1.0f64,
            ) {
                let w = inner_weights_exact(&losses, tau).unwrap();
                let obj: f64 = w.weights().iter().zip(&losses).map(|(wi, li)| wi * li).sum();
                let uniform: f64 = losses.iter().sum::<f64>() / losses.len() as f64;
                prop_assert!(obj >= uniform - 1e-9);
            }
        }
    }
}
