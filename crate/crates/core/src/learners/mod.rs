//! Differentiable score-based DAG learners.
//!
//! Three backbones share one driver shape: an outer loop of epochs, a
//! weighted inner minimization per epoch, and an optional weight-update hook
//! between epochs (the seam the reweighting framework plugs into). The two
//! constrained backbones run an augmented Lagrangian on the acyclicity
//! function; the likelihood backbone uses a fixed soft penalty.

mod linear;
mod mlp;
pub(crate) mod optimize;

pub mod objective;

pub use mlp::MlpModel;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{is_acyclic, Dag};
use crate::rescore::SampleWeights;
use crate::scoring::AcyclicityKind;
use crate::sem::DataMatrix;

/// Learner backbone selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    /// Linear least squares under the augmented-Lagrangian DAG constraint.
    Notears,
    /// Linear Gaussian log-likelihood with a soft DAG penalty.
    Golem,
    /// Per-variable MLPs with the constraint on the first-layer norm matrix.
    NotearsMlp,
}

impl Backbone {
    pub fn name(&self) -> &'static str {
        match self {
            Backbone::Notears => "notears",
            Backbone::Golem => "golem",
            Backbone::NotearsMlp => "notears-mlp",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "notears" => Ok(Backbone::Notears),
            "golem" => Ok(Backbone::Golem),
            "notears-mlp" => Ok(Backbone::NotearsMlp),
            other => Err(Error::invalid(format!("unknown backbone '{other}'"))),
        }
    }
}

/// Shared learner configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Sparsity coefficient.
    pub lambda: f64,
    pub acyclicity: AcyclicityKind,
    pub rho_init: f64,
    pub rho_mult: f64,
    pub rho_max: f64,
    pub alpha_init: f64,
    /// Augmented-Lagrangian convergence tolerance on h.
    pub h_tol: f64,
    /// Inner-optimizer iteration budget per epoch.
    pub max_inner: usize,
    /// Cap on augmented-Lagrangian outer iterations.
    pub max_outer: usize,
    /// Edge threshold applied to the continuous matrix.
    pub omega: f64,
    /// Hidden layer widths of the MLP backbone.
    pub hidden_sizes: Vec<usize>,
    /// Fixed coefficient of the soft DAG penalty in the likelihood backbone.
    pub nll_h_coeff: f64,
    /// Outer alternation epochs of the likelihood backbone.
    pub nll_epochs: usize,
    /// Per-variable noise scales for the likelihood backbone (default 1).
    pub sigma: Option<Vec<f64>>,
    /// MLP parameter initialization seed.
    pub seed: u64,
    /// Adam learning rate for the MLP backbone.
    pub mlp_lr: f64,
    /// L2 penalty on the MLP layer weights. Rectifier networks are
    /// positively homogeneous, so without this the first-layer norms (the
    /// penalized quantity) can shrink freely while later layers compensate.
    pub mlp_weight_decay: f64,
    /// Dimension cap for the MLP backbone.
    pub mlp_d_cap: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            lambda: 0.1,
            acyclicity: AcyclicityKind::Expm,
            rho_init: 1.0,
            rho_mult: 10.0,
            rho_max: 1e16,
            alpha_init: 0.0,
            h_tol: 1e-8,
            max_inner: 1000,
            max_outer: 100,
            omega: 0.3,
            hidden_sizes: vec![10, 10],
            nll_h_coeff: 20.0,
            nll_epochs: 10,
            sigma: None,
            seed: 0,
            mlp_lr: 0.01,
            mlp_weight_decay: 0.01,
            mlp_d_cap: 50,
        }
    }
}

impl LearnerConfig {
    pub fn linear_notears() -> Self {
        LearnerConfig::default()
    }

    pub fn linear_nll() -> Self {
        LearnerConfig {
            lambda: 0.1,
            ..LearnerConfig::default()
        }
    }

    pub fn mlp() -> Self {
        LearnerConfig {
            lambda: 0.01,
            // Adam needs a bigger per-epoch budget than the quasi-Newton
            // solver to grow the first-layer norms past the edge threshold.
            max_inner: 3000,
            ..LearnerConfig::default()
        }
    }

    pub fn for_backbone(backbone: Backbone) -> Self {
        match backbone {
            Backbone::Notears => LearnerConfig::linear_notears(),
            Backbone::Golem => LearnerConfig::linear_nll(),
            Backbone::NotearsMlp => LearnerConfig::mlp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("lambda must be >= 0"));
        }
        if !(self.rho_init > 0.0) {
            return Err(Error::invalid("rho_init must be > 0"));
        }
        if !(self.rho_mult > 1.0) {
            return Err(Error::invalid("rho multiplier must be > 1"));
        }
        if !(self.h_tol > 0.0) {
            return Err(Error::invalid("h tolerance must be > 0"));
        }
        if !(self.omega >= 0.0) {
            return Err(Error::invalid("edge threshold must be >= 0"));
        }
        if self.hidden_sizes.is_empty() {
            return Err(Error::invalid("MLP needs at least one hidden layer"));
        }
        if self.nll_epochs == 0 || self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::invalid("iteration budgets must be >= 1"));
        }
        Ok(())
    }
}

/// Learner output: continuous parameters, thresholded graph, per-sample
/// losses at the returned parameters, and optimizer diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Continuous coefficient matrix (linear) or first-layer norm matrix
    /// (MLP).
    pub continuous: Array2<f64>,
    pub graph: Dag,
    pub losses: Vec<f64>,
    pub h_final: f64,
    pub outer_iterations: usize,
    pub rho_final: f64,
    pub objective_trace: Vec<f64>,
    /// Final reweighting vector, present when fitted through `fit_rescore`.
    pub final_weights: Option<SampleWeights>,
    pub warnings: Vec<String>,
}

/// Hook the bilevel framework uses to refresh weights between epochs.
/// `losses` are the per-sample losses at the learner's current parameters.
pub trait WeightSchedule {
    fn update(
        &mut self,
        epoch: usize,
        x: &DataMatrix,
        losses: &[f64],
    ) -> Result<Option<SampleWeights>>;
}

/// Schedule that never changes the weights (plain backbone fits).
pub(crate) struct NoopSchedule;

impl WeightSchedule for NoopSchedule {
    fn update(&mut self, _: usize, _: &DataMatrix, _: &[f64]) -> Result<Option<SampleWeights>> {
        Ok(None)
    }
}

/// Thresholds a continuous matrix into a DAG: keep entries with
/// `|m| > omega`, then delete the smallest-magnitude surviving edge until
/// the graph is acyclic.
pub fn threshold_to_dag(m: &Array2<f64>, omega: f64) -> Result<Dag> {
    if m.nrows() != m.ncols() {
        return Err(Error::dims(format!(
            "threshold_to_dag requires a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !(omega >= 0.0) {
        return Err(Error::invalid("omega must be >= 0"));
    }
    let d = m.nrows();
    let mut adj: Array2<u8> = Array2::zeros((d, d));
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if i != j && m[[i, j]].abs() > omega {
                adj[[i, j]] = 1;
                edges.push((m[[i, j]].abs(), i, j));
            }
        }
    }
    edges.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut next = 0;
    while !is_acyclic(&adj)? {
        let (_, i, j) = edges[next];
        next += 1;
        adj[[i, j]] = 0;
    }
    Dag::from_adjacency(adj)
}

/// Dispatches a backbone fit with a weight-update schedule between epochs.
/// `epoch_limit` overrides the backbone's own outer budget when set.
pub(crate) fn fit_with_schedule(
    backbone: Backbone,
    x: &DataMatrix,
    w0: &SampleWeights,
    cfg: &LearnerConfig,
    schedule: &mut dyn WeightSchedule,
    epoch_limit: Option<usize>,
) -> Result<FitResult> {
    cfg.validate()?;
    if w0.n() != x.n() {
        return Err(Error::dims(format!(
            "{} weights vs {} rows",
            w0.n(),
            x.n()
        )));
    }
    match backbone {
        Backbone::Notears => linear::fit_notears(x, w0, cfg, schedule, epoch_limit),
        Backbone::Golem => linear::fit_nll(x, w0, cfg, schedule, epoch_limit),
        Backbone::NotearsMlp => mlp::fit(x, w0, cfg, schedule, epoch_limit),
    }
}

/// Weighted linear least-squares backbone under the hard DAG constraint.
pub fn fit_linear_notears(
    x: &DataMatrix,
    w: &SampleWeights,
    cfg: &LearnerConfig,
) -> Result<FitResult> {
    fit_with_schedule(Backbone::Notears, x, w, cfg, &mut NoopSchedule, None)
}

/// Weighted Gaussian likelihood backbone with a soft DAG penalty.
pub fn fit_linear_nll(x: &DataMatrix, w: &SampleWeights, cfg: &LearnerConfig) -> Result<FitResult> {
    fit_with_schedule(Backbone::Golem, x, w, cfg, &mut NoopSchedule, None)
}

/// Per-variable MLP backbone under the hard DAG constraint.
pub fn fit_mlp_notears(x: &DataMatrix, w: &SampleWeights, cfg: &LearnerConfig) -> Result<FitResult> {
    fit_with_schedule(Backbone::NotearsMlp, x, w, cfg, &mut NoopSchedule, None)
}
