//! Differentiable score-based causal structure learning with adaptive
//! sample reweighting.
//!
//! The crate bundles everything needed to run desk-scale structure-recovery
//! experiments end to end:
//!
//! - [`graph`]: random DAG generation (Erdős–Rényi, scale-free) and acyclicity
//!   checks, plus a JSON graph file format.
//! - [`sem`]: linear and Gaussian-process structural equation simulators with
//!   homogeneous, two-group heterogeneous, and corrupted noise.
//! - [`scoring`]: per-sample losses, weighted scores, and differentiable
//!   acyclicity functions with exact gradients.
//! - [`learners`]: three DAG-learning backbones (linear least-squares with an
//!   augmented Lagrangian, linear Gaussian likelihood with a soft penalty, and
//!   a per-variable MLP) that all accept per-sample weights.
//! - [`rescore`]: the bilevel reweighting driver and its inner weight solvers
//!   (exact sorted-greedy and parametric scorer).
//! - [`metrics`]: TPR/FDR/SHD and structural intervention distance.
//! - [`harness`]: config-driven benchmark runner with deterministic seeding,
//!   CSV output, and resume support.

pub mod error;
pub mod graph;
pub mod harness;
pub mod learners;
pub mod metrics;
pub mod rescore;
pub mod scoring;
pub mod sem;

pub mod parallel;

pub(crate) mod linalg;
pub(crate) mod rng;

pub use error::{Error, Result};
pub use graph::{is_acyclic, sample_dag, Dag, GraphKind, GraphModel};
pub use learners::{threshold_to_dag, Backbone, FitResult, LearnerConfig};
pub use metrics::{evaluate_graph, sid, MetricsReport};
pub use rescore::{fit_rescore, inner_weights_exact, RescoreConfig, SampleWeights};
pub use scoring::{h_expm, h_poly, matrix_exp, per_sample_losses, weighted_score, ScoreConfig};
pub use sem::{
    assign_linear_weights, make_noise_spec, simulate_gp_sem, simulate_linear_sem, DataMatrix,
    NoiseKind, NoiseSpec, WeightedAdjacency,
};
