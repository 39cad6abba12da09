//! Fenchel-Young loss ℓ(β; x, y) = Ω(xβ) − yᵀxβ, its gradient, the Bregman
//! form and the empirical risk J(β) = (1/N) Σ ℓ(β; x_n, y_n).
//!
//! The operational loss omits the constant Λ(y); [`LossForm::Gap`] adds it
//! back, turning the loss into the nonnegative Fenchel-Young gap.

use rayon::prelude::*;

use crate::dataset::{ChoiceDataset, ObservationRef};
use crate::error::{PumError, Result};
use crate::perturbation::{dot, Family, Perturbation, ProbWorkspace, SimplexVector};
use crate::simplex::SolverConfig;

/// Observations per parallel work item. Fixed so sums are reduced in the
/// same order on any thread count.
pub(crate) const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossForm {
    /// Ω(V) − yᵀV, as minimized by every estimator.
    Operational,
    /// Ω(V) + Λ(y) − yᵀV ≥ 0. Unavailable for Cauchy, where Λ(e_y) = +∞.
    Gap,
}

pub fn fy_loss(pert: &Perturbation, beta: &[f64], obs: ObservationRef<'_>) -> Result<f64> {
    fy_loss_with(pert, beta, obs, LossForm::Operational)
}

pub fn fy_loss_with(pert: &Perturbation, beta: &[f64], obs: ObservationRef<'_>, form: LossForm) -> Result<f64> {
    check_beta(beta, obs.d)?;
    let v = obs.utilities(beta);
    let target = SimplexVector::vertex(obs.k, obs.y);
    fy_loss_soft(pert, &v, &target, form)
}

/// Ω(v) − targetᵀv (plus Λ(target) for the gap form) for any soft target.
pub fn fy_loss_soft(pert: &Perturbation, v: &[f64], target: &[f64], form: LossForm) -> Result<f64> {
    if v.len() != target.len() {
        return Err(PumError::DimensionMismatch { expected: v.len(), got: target.len() });
    }
    let base = pert.surplus(v)? - dot(target, v);
    match form {
        LossForm::Operational => Ok(base),
        LossForm::Gap if pert.family() == Family::Cauchy => Err(PumError::Unsupported("gap-form loss")),
        LossForm::Gap => Ok(base + pert.lambda_value(target)?),
    }
}

/// D(y, p) = Λ(y) − Λ(p) − (y − p)ᵀ∇Λ(p).
pub fn bregman_divergence(pert: &Perturbation, y: &[f64], p: &[f64]) -> Result<f64> {
    if y.len() != p.len() {
        return Err(PumError::DimensionMismatch { expected: p.len(), got: y.len() });
    }
    let g = pert.grad_lambda(p)?;
    let diff: Vec<f64> = y.iter().zip(p).map(|(a, b)| a - b).collect();
    Ok(pert.lambda_value(y)? - pert.lambda_value(p)? - dot(&diff, &g))
}

pub fn empirical_risk(pert: &Perturbation, beta: &[f64], data: &ChoiceDataset) -> Result<f64> {
    Ok(RiskEvaluator::new(pert, data, SolverConfig::default()).value_and_gradient(beta)?.0)
}

/// ∇J(β) = (1/N) Σ_n x_nᵀ(p_n − e_{y_n}).
pub fn fy_gradient(pert: &Perturbation, beta: &[f64], data: &ChoiceDataset) -> Result<Vec<f64>> {
    Ok(RiskEvaluator::new(pert, data, SolverConfig::default()).value_and_gradient(beta)?.1)
}

fn check_beta(beta: &[f64], d: usize) -> Result<()> {
    if beta.len() != d {
        return Err(PumError::DimensionMismatch { expected: d, got: beta.len() });
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(PumError::NonFinite("beta"));
    }
    Ok(())
}

/// Evaluates J and ∇J repeatedly over one dataset, caching the choice
/// probabilities of the last call (warm starts for the non-separable family).
#[derive(Debug, Clone)]
pub struct RiskEvaluator<'a> {
    pert: &'a Perturbation,
    data: &'a ChoiceDataset,
    cfg: SolverConfig,
    probs: Vec<f64>,
}

impl<'a> RiskEvaluator<'a> {
    pub fn new(pert: &'a Perturbation, data: &'a ChoiceDataset, cfg: SolverConfig) -> Self {
        let k = data.k();
        Self { pert, data, cfg, probs: vec![1.0 / k as f64; data.len() * k] }
    }

    /// Probabilities from the most recent evaluation, observation-major.
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn value_and_gradient(&mut self, beta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (data, pert, cfg) = (self.data, self.pert, &self.cfg);
        check_beta(beta, data.d())?;
        let (k, d) = (data.k(), data.d());
        let partials: Vec<Result<(f64, Vec<f64>)>> = self
            .probs
            .par_chunks_mut(CHUNK * k)
            .enumerate()
            .map(|(c, probs)| {
                let mut ws = ProbWorkspace::new(k);
                let mut v = vec![0.0; k];
                let mut loss = 0.0;
                let mut grad = vec![0.0; d];
                for (j, p) in probs.chunks_mut(k).enumerate() {
                    let obs = data.observation(c * CHUNK + j);
                    obs.utilities_into(beta, &mut v);
                    pert.probabilities_into(&v, cfg, p, &mut ws)?;
                    loss += pert.surplus_at(&v, p)? - v[obs.y];
                    obs.add_transpose_times(p, 1.0, &mut grad);
                    for (g, a) in grad.iter_mut().zip(obs.row(obs.y)) {
                        *g -= a;
                    }
                }
                Ok((loss, grad))
            })
            .collect();
        let n = data.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; d];
        for part in partials {
            let (l, g) = part?;
            loss += l;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grad))
    }
}
