//! Perturbed utility models of discrete choice, estimated through
//! Fenchel-Young losses, with Wasserstein-robust variants.
//!
//! A PUM chooses p = argmax_{p ∈ Δ} pᵀV − Λ(p) for systematic utilities
//! V = xβ. The surplus Ω = Λ* has ∇Ω(V) = p, and the Fenchel-Young loss
//! ℓ(β; x, y) = Ω(xβ) + Λ(y) − yᵀxβ is convex in β with gradient xᵀ(p − y).
//!
//! ```
//! use pum_core::Perturbation;
//!
//! let logit = Perturbation::shannon(1.0).unwrap();
//! let p = logit.choice_probabilities(&[0.0, 1.0, 2.0]).unwrap();
//! assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
//! ```

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod data;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod loss;
pub mod perturbation;
pub mod rng;
pub mod simplex;

pub use dataset::{ChoiceDataset, Observation, ObservationRef};
pub use error::{PumError, Result};
pub use estimators::{CsMode, DroConfig, EstimateResult, Metric, KAPPA_INFINITE};
pub use loss::{bregman_divergence, empirical_risk, fy_gradient, fy_loss, LossForm, RiskEvaluator};
pub use perturbation::{Family, Perturbation, PerturbationConfig, QuadraticForm, SimplexVector};
pub use simplex::{RootMethod, RootSolveReport, SolverConfig};
