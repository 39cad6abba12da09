//! Dispatch from an [`EstimatorSpec`] to the core estimators.

use pum_core::estimators::{
    estimate_dro_bilinear, estimate_fy_extragradient, estimate_fy_nag, estimate_hinge_limit, estimate_l2_limit,
    scaling_law_flip, scaling_law_reg,
};
use pum_core::{ChoiceDataset, DroConfig, EstimateResult, Perturbation, SolverConfig};

use crate::config::{EstimatorKind, EstimatorSpec, FamilySpec};
use crate::error::CliResult;

/// Estimator ready to run: fitted family resolved up front so config errors
/// surface before any replication starts.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: EstimatorSpec,
    pub family: Perturbation,
}

impl Prepared {
    pub fn new(spec: EstimatorSpec, dgp: &Perturbation, k: usize) -> CliResult<Self> {
        let family = match (&spec.fit_family, spec.kind) {
            (Some(f), _) => f.build(k)?,
            (None, EstimatorKind::MisspecifiedMle) => FamilySpec::shannon().build(k)?,
            (None, _) => dgp.clone(),
        };
        Ok(Self { spec, family })
    }

    pub fn label(&self) -> String {
        self.spec.label()
    }

    /// Regularization weight or margin for a sample of size `n`, using the
    /// scaling laws at coefficient norm `beta_norm` unless the estimator entry fixes them.
    pub fn hyper(&self, d: usize, n: usize, beta_norm: f64) -> Option<f64> {
        match self.spec.kind {
            EstimatorKind::L2 => Some(self.spec.lambda.unwrap_or_else(|| scaling_law_reg(d, n, beta_norm))),
            EstimatorKind::Hinge => Some(self.spec.tau.unwrap_or_else(|| scaling_law_flip(d, n, beta_norm))),
            EstimatorKind::Dro => self.spec.epsilon,
            _ => None,
        }
    }

    pub fn fit(
        &self,
        data: &ChoiceDataset,
        hyper: Option<f64>,
        solver: &SolverConfig,
    ) -> pum_core::Result<EstimateResult> {
        let solver = self.spec.solver.as_ref().unwrap_or(solver);
        let pert = &self.family;
        match self.spec.kind {
            EstimatorKind::Baseline | EstimatorKind::MisspecifiedMle => estimate_fy_nag(pert, data, solver),
            EstimatorKind::Extragradient => estimate_fy_extragradient(pert, data, solver),
            EstimatorKind::L2 => estimate_l2_limit(pert, data, hyper.unwrap_or(0.0), solver),
            EstimatorKind::Hinge => estimate_hinge_limit(pert, data, hyper.unwrap_or(f64::INFINITY), solver),
            EstimatorKind::Dro => {
                let eps = hyper.or(self.spec.epsilon).unwrap_or(0.0);
                let kappa = self.spec.kappa.unwrap_or(pum_core::KAPPA_INFINITE);
                estimate_dro_bilinear(pert, data, &DroConfig::new(eps, kappa), solver)
            }
        }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
