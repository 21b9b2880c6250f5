//! Linear structural equation models on bow-free mixed graphs: forward
//! simulation, parameter recovery, and numerical-conditioning analysis.
//!
//! The model is `X = L^T X + eta` over a mixed graph whose directed edges
//! carry the weight matrix `L` and whose bidirected edges mark correlated
//! noise with covariance `W`, giving the observable covariance
//! `S = (I - L)^-T W (I - L)^-1`. This crate provides:
//!
//! - graph families and their zero-patterns ([`graph`]),
//! - a small dense `f64` kernel ([`linalg`]),
//! - the forward map and Gaussian sampling ([`scm`]),
//! - recovery of `L` and `W` from `S` on bow-free graphs ([`recovery`]),
//! - perturbation families, randomized condition numbers, a
//!   local-dominance model check with its closed-form condition bound, and
//!   a perturb-recover-average conditioning heuristic ([`stability`]),
//! - random instance generators and a hand-built arbitrarily
//!   ill-conditioned four-node instance ([`instances`]).
//!
//! Vertices are 0-based everywhere in this crate.

pub mod graph;
pub mod instances;
pub mod linalg;
pub mod recovery;
pub mod scm;
pub mod stability;

pub use graph::{GraphError, MixedGraph};
pub use instances::{GeneratorConfig, InstanceError};
pub use linalg::{LinalgError, Matrix};
pub use recovery::{RecoveryError, RecoveryResult};
pub use scm::{Covariance, ObservationBatch, Parameters, ScmError};
pub use stability::{
    ConditionReport, HeuristicOutcome, KappaBound, ModelCheckReport, PerturbMode,
    PerturbTarget, PerturbationSpec, StabilityError, Verdict,
};
