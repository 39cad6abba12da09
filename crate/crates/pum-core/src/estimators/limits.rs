//! The two limits of the robust problem.
//!
//! κ → ∞ leaves J(β) + ε c_S ‖β‖₂. Letting ε, κ → 0 with ε/κ = ν fixed and
//! τ = γκ finite leaves the margin loss
//!
//! ```text
//! H_τ(β) = (1/N) Σ_n max{ℓ(β; x_n, y_n), max_{i≠y_n} ℓ(β; x_n, e_i) − τ}
//! ```
//!
//! with an outer minimization of τν + H_τ(β̂_τ) over τ.

use crate::dataset::ChoiceDataset;
use crate::error::{PumError, Result};
use crate::perturbation::{Perturbation, ProbWorkspace};
use crate::simplex::SolverConfig;

use super::nag::accelerated_prox;
use super::{gram_lambda_max, norm, EstimateResult};

/// Minimizes J(β) + λ_reg ‖β‖₂ by accelerated proximal gradient.
pub fn estimate_l2_limit(
    pert: &Perturbation,
    data: &ChoiceDataset,
    lambda_reg: f64,
    cfg: &SolverConfig,
) -> Result<EstimateResult> {
    accelerated_prox(pert, data, lambda_reg, cfg)
}

/// H_τ(β) (NaN unless `with_value`) and one subgradient.
#[allow(clippy::too_many_arguments)]
fn hinge_value_and_subgradient(
    pert: &Perturbation,
    data: &ChoiceDataset,
    beta: &[f64],
    tau: f64,
    cfg: &SolverConfig,
    ws: &mut ProbWorkspace,
    probs: &mut [f64],
    with_value: bool,
) -> Result<(f64, Vec<f64>)> {
    let (k, d) = (data.k(), data.d());
    let mut v = vec![0.0; k];
    let mut grad = vec![0.0; d];
    let mut total = 0.0;
    for (n, obs) in data.iter().enumerate() {
        obs.utilities_into(beta, &mut v);
        let p = &mut probs[n * k..(n + 1) * k];
        pert.probabilities_into(&v, cfg, p, ws)?;
        // max_i {−V_i − τ·1(i ≠ y)}, ties resolved toward the observed label.
        let mut best = obs.y;
        let mut best_val = -v[obs.y];
        if tau.is_finite() {
            for (i, &vi) in v.iter().enumerate() {
                if i != obs.y && -vi - tau > best_val {
                    best = i;
                    best_val = -vi - tau;
                }
            }
        }
        if with_value {
            total += pert.surplus_at(&v, p)? + best_val;
        }
        obs.add_transpose_times(p, 1.0, &mut grad);
        for (g, a) in grad.iter_mut().zip(obs.row(best)) {
            *g -= a;
        }
    }
    let nf = data.len() as f64;
    grad.iter_mut().for_each(|g| *g /= nf);
    Ok((if with_value { total / nf } else { f64::NAN }, grad))
}

/// H_τ(β).
pub fn hinge_objective(pert: &Perturbation, data: &ChoiceDataset, beta: &[f64], tau: f64) -> Result<f64> {
    let mut probs = vec![1.0 / data.k() as f64; data.len() * data.k()];
    let mut ws = ProbWorkspace::new(data.k());
    let cfg = SolverConfig::default();
    Ok(hinge_value_and_subgradient(pert, data, beta, tau, &cfg, &mut ws, &mut probs, true)?.0)
}

/// Iterations between convergence checks of the averaged iterate.
const CHECK_EVERY: usize = 50;

/// Minimizes H_τ by subgradient descent with steps α₀/√k, α₀ = 1/L for the
/// smooth part's curvature bound L, returning the average of the second half
/// of the iterates. Every 50 iterations the average is recorded; the KKT
/// trace holds its displacement since the previous check, and the run stops
/// once that falls to `tol_kkt`.
///
/// The descent starts from the minimizer of J when accelerated gradient
/// finds one, else from 0. H_τ = J wherever no flip branch is active, so a
/// start with every margin V_y − V_i below τ is already optimal and the first
/// check ends the run.
pub fn estimate_hinge_limit(
    pert: &Perturbation,
    data: &ChoiceDataset,
    tau: f64,
    cfg: &SolverConfig,
) -> Result<EstimateResult> {
    cfg.validate()?;
    if !(tau >= 0.0) {
        return Err(PumError::InvalidParameter("tau must be >= 0".into()));
    }
    let (k, d) = (data.k(), data.d());
    let lip = pert.surplus_curvature_bound() * gram_lambda_max(data);
    let alpha0 = if lip > 0.0 { 1.0 / lip } else { 1.0 };
    let mut ws = ProbWorkspace::new(k);
    let mut probs = vec![1.0 / k as f64; data.len() * k];

    let warm = accelerated_prox(pert, data, 0.0, cfg)?;
    let mut beta = if warm.converged { warm.beta } else { vec![0.0; d] };
    let mut res = EstimateResult::new(beta.clone());
    let (f0, _) = hinge_value_and_subgradient(pert, data, &beta, tau, cfg, &mut ws, &mut probs, true)?;
    res.objective_trace.push(f0);

    let mut history: Vec<f64> = Vec::with_capacity(cfg.max_iter.min(100_000) * d);
    let mut last_avg: Option<Vec<f64>> = None;
    let mut avg = beta.clone();
    for it in 1..=cfg.max_iter {
        let (_, g) = hinge_value_and_subgradient(pert, data, &beta, tau, cfg, &mut ws, &mut probs, false)?;
        let step = alpha0 / (it as f64).sqrt();
        for (b, gi) in beta.iter_mut().zip(&g) {
            *b -= step * gi;
        }
        history.extend_from_slice(&beta);
        res.iterations = it;

        if it % CHECK_EVERY == 0 || it == cfg.max_iter {
            let from = it / 2;
            avg = vec![0.0; d];
            for row in history[from * d..].chunks(d) {
                avg.iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
            avg.iter_mut().for_each(|a| *a /= (it - from) as f64);
            let (f, _) = hinge_value_and_subgradient(pert, data, &avg, tau, cfg, &mut ws, &mut probs, true)?;
            let moved = match &last_avg {
                Some(prev) => norm(&avg.iter().zip(prev).map(|(a, b)| a - b).collect::<Vec<_>>()),
                None => f64::INFINITY,
            };
            res.objective_trace.push(f);
            res.kkt_trace.push(moved);
            res.record_beta(cfg, &avg);
            last_avg = Some(avg.clone());
            if moved <= cfg.tol_kkt {
                res.converged = true;
                break;
            }
        }
    }
    res.beta = avg;
    Ok(res)
}

/// Result of the outer search over τ.
#[derive(Debug, Clone)]
pub struct HingeBilevel {
    pub tau: f64,
    /// τν + H_τ(β̂_τ) at the selected τ.
    pub value: f64,
    pub estimate: EstimateResult,
}

/// Golden-section search for the τ ∈ [0, tau_max] minimizing τν + H_τ(β̂_τ),
/// where ν = ε/κ.
pub fn estimate_hinge_bilevel(
    pert: &Perturbation,
    data: &ChoiceDataset,
    nu: f64,
    tau_max: f64,
    cfg: &SolverConfig,
    outer_iters: usize,
) -> Result<HingeBilevel> {
    if !(nu >= 0.0) || !(tau_max > 0.0) {
        return Err(PumError::InvalidParameter("need nu >= 0 and tau_max > 0".into()));
    }
    let outer = |tau: f64| -> Result<(f64, EstimateResult)> {
        let est = estimate_hinge_limit(pert, data, tau, cfg)?;
        let h = hinge_objective(pert, data, &est.beta, tau)?;
        Ok((tau * nu + h, est))
    };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, tau_max);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = outer(c)?;
    let mut fd = outer(d)?;
    for _ in 0..outer_iters {
        if fc.0 < fd.0 {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = outer(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = outer(d)?;
        }
    }
    let (tau, (value, estimate)) = if fc.0 < fd.0 { (c, fc) } else { (d, fd) };
    Ok(HingeBilevel { tau, value, estimate })
}
