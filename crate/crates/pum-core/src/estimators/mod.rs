//! Estimators for β.
//!
//! * [`estimate_fy_nag`]: accelerated gradient on the empirical FY risk.
//! * [`estimate_fy_extragradient`]: projected extragradient on the
//!   saddle-point form, which never solves for probabilities implicitly.
//! * [`estimate_dro_bilinear`]: the Wasserstein-robust bilinear saddle point.
//! * [`estimate_l2_limit`] and [`estimate_hinge_limit`]: the κ → ∞ and
//!   κ, ε → 0 limits of the robust problem.

mod dro;
mod extragradient;
mod limits;
mod nag;
mod oracle;
mod sandwich;
mod scaling;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PumError, Result};
use crate::perturbation::power_iteration;

pub use dro::{dro_objective, estimate_dro_bilinear, lipschitz_constant, project_cone, robustified_loss};
pub use extragradient::estimate_fy_extragradient;
pub use limits::{estimate_hinge_bilevel, estimate_hinge_limit, estimate_l2_limit, hinge_objective, HingeBilevel};
pub use nag::estimate_fy_nag;
pub use oracle::{exact_dro_oracle, FeatureGrid};
pub use sandwich::{sandwich_covariance, surplus_hessian, Sandwich};
pub use scaling::{scaling_law_flip, scaling_law_reg};

/// Output of every estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub beta: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub kkt_trace: Vec<f64>,
    /// Iterates aligned with `kkt_trace`, kept only when the solver config
    /// asks for them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beta_trace: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// Dual variable γ of the robust problem.
    pub gamma: Option<f64>,
    pub covariance: Option<DMatrix<f64>>,
    /// Mean |Δobjective| over the last 100 iterations (robust solver only).
    pub oscillation: Option<f64>,
}

impl EstimateResult {
    pub(crate) fn new(beta: Vec<f64>) -> Self {
        Self {
            beta,
            objective_trace: Vec::new(),
            kkt_trace: Vec::new(),
            beta_trace: Vec::new(),
            iterations: 0,
            converged: false,
            gamma: None,
            covariance: None,
            oscillation: None,
        }
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objective_trace.last().copied()
    }

    pub fn final_kkt(&self) -> Option<f64> {
        self.kkt_trace.last().copied()
    }

    pub(crate) fn record_beta(&mut self, cfg: &crate::simplex::SolverConfig, beta: &[f64]) {
        if cfg.record_betas {
            self.beta_trace.push(beta.to_vec());
        }
    }

    /// Flat key-value summary without the traces.
    pub fn record(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (i, b) in self.beta.iter().enumerate() {
            out.push((format!("beta_{i}"), b.to_string()));
        }
        out.push(("iterations".into(), self.iterations.to_string()));
        out.push(("converged".into(), self.converged.to_string()));
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        out.push(("objective".into(), opt(self.final_objective())));
        out.push(("kkt".into(), opt(self.final_kkt())));
        out.push(("gamma".into(), opt(self.gamma)));
        out.push(("oscillation".into(), opt(self.oscillation)));
        out
    }
}

/// Lipschitz constant used for the robust cone γ ≥ c_S‖β‖₂.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsMode {
    /// c_S = √2.
    Euclid,
    /// c_S = √(2 λ_max(S)).
    Mahalanobis,
}

/// Metric on the stacked K·d feature vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    Identity,
    Matrix(DMatrix<f64>),
}

/// Sentinel for κ = ∞: adversarial label branches are skipped.
pub const KAPPA_INFINITE: f64 = f64::INFINITY;

/// Wasserstein ambiguity set and solver knobs for the robust estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct DroConfig {
    pub epsilon: f64,
    pub kappa: f64,
    pub metric: Metric,
    pub cs_mode: CsMode,
    pub inner_steps: usize,
    pub inner_step_scale: f64,
}

impl DroConfig {
    pub fn new(epsilon: f64, kappa: f64) -> Self {
        Self {
            epsilon,
            kappa,
            metric: Metric::Identity,
            cs_mode: CsMode::Euclid,
            inner_steps: 5,
            inner_step_scale: 10.0,
        }
    }

    pub fn with_metric(mut self, s: DMatrix<f64>) -> Self {
        self.metric = Metric::Matrix(s);
        self.cs_mode = CsMode::Mahalanobis;
        self
    }

    pub fn with_inner(mut self, steps: usize, scale: f64) -> Self {
        self.inner_steps = steps;
        self.inner_step_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !(self.kappa >= 0.0) {
            return Err(PumError::InvalidParameter("epsilon and kappa must be >= 0".into()));
        }
        if self.inner_steps == 0 || !(self.inner_step_scale > 1.0) {
            return Err(PumError::InvalidParameter("inner_steps must be >= 1 and inner_step_scale > 1".into()));
        }
        if let Metric::Matrix(s) = &self.metric {
            if !s.is_square() || s.clone().cholesky().is_none() {
                return Err(PumError::InvalidParameter("metric S must be positive definite".into()));
            }
        }
        Ok(())
    }

    /// c_S for the configured mode.
    pub fn c_s(&self) -> f64 {
        match (self.cs_mode, &self.metric) {
            (CsMode::Euclid, _) | (CsMode::Mahalanobis, Metric::Identity) => std::f64::consts::SQRT_2,
            (CsMode::Mahalanobis, Metric::Matrix(s)) => (2.0 * power_iteration(s, 1e-8)).sqrt(),
        }
    }

    pub fn kappa_is_infinite(&self) -> bool {
        self.kappa.is_infinite()
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// λ_max of (1/N) Σ x_nᵀ x_n.
pub(crate) fn gram_lambda_max(data: &crate::dataset::ChoiceDataset) -> f64 {
    let d = data.d();
    let g = DMatrix::from_row_slice(d, d, &data.feature_gram());
    power_iteration(&g, 1e-8)
}
