use crate::dataset::ChoiceDataset;
use crate::error::{PumError, Result};
use crate::loss::RiskEvaluator;
use crate::perturbation::Perturbation;
use crate::simplex::SolverConfig;

use super::{gram_lambda_max, norm, EstimateResult};

/// Minimizes the empirical FY risk with Nesterov's accelerated gradient,
/// step 1/L for L = ‖∇²Ω‖ · λ_max((1/N) Σ x_nᵀx_n), restarting momentum
/// whenever the objective increases. Starts from β = 0 and stops once
/// ‖∇J(β)‖₂ ≤ `tol_kkt`.
pub fn estimate_fy_nag(pert: &Perturbation, data: &ChoiceDataset, cfg: &SolverConfig) -> Result<EstimateResult> {
    accelerated_prox(pert, data, 0.0, cfg)
}

/// Accelerated proximal gradient for J(β) + λ‖β‖₂ (block soft-thresholding).
/// The KKT residual is L‖β − prox(β − ∇J/L)‖₂, which is ‖∇J‖₂ when λ = 0.
pub(crate) fn accelerated_prox(
    pert: &Perturbation,
    data: &ChoiceDataset,
    lambda_reg: f64,
    cfg: &SolverConfig,
) -> Result<EstimateResult> {
    cfg.validate()?;
    if !(lambda_reg >= 0.0) || !lambda_reg.is_finite() {
        return Err(PumError::InvalidParameter("lambda_reg must be a finite value >= 0".into()));
    }
    let d = data.d();
    let lip = pert.surplus_curvature_bound() * gram_lambda_max(data);
    if !(lip > 0.0) {
        // All features zero: J is constant and β = 0 is optimal.
        let mut res = EstimateResult::new(vec![0.0; d]);
        res.converged = true;
        res.objective_trace.push(RiskEvaluator::new(pert, data, *cfg).value_and_gradient(&res.beta)?.0);
        res.kkt_trace.push(0.0);
        let b = res.beta.clone();
        res.record_beta(cfg, &b);
        return Ok(res);
    }
    let step = 1.0 / lip;
    let mut eval = RiskEvaluator::new(pert, data, *cfg);
    let objective = |f: f64, b: &[f64]| f + lambda_reg * norm(b);
    let residual = |b: &[f64], g: &[f64]| {
        let mut z: Vec<f64> = b.iter().zip(g).map(|(bi, gi)| bi - step * gi).collect();
        block_soft_threshold(&mut z, step * lambda_reg);
        lip * b.iter().zip(&z).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt()
    };

    let mut beta = vec![0.0; d];
    let (f0, g0) = eval.value_and_gradient(&beta)?;
    let mut res = EstimateResult::new(beta.clone());
    let mut obj = objective(f0, &beta);
    let r0 = residual(&beta, &g0);
    res.objective_trace.push(obj);
    res.kkt_trace.push(r0);
    res.record_beta(cfg, &beta);
    if r0 <= cfg.tol_kkt {
        res.converged = true;
        return Ok(res);
    }

    let mut y = beta.clone();
    let mut gy = g0;
    let mut t = 1.0f64;
    for it in 1..=cfg.max_iter {
        let mut next: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a - step * g).collect();
        block_soft_threshold(&mut next, step * lambda_reg);
        let (f_next, g_next) = eval.value_and_gradient(&next)?;
        let obj_next = objective(f_next, &next);
        let r = residual(&next, &g_next);
        res.objective_trace.push(obj_next);
        res.kkt_trace.push(r);
        res.record_beta(cfg, &next);
        res.iterations = it;

        let increased = obj_next > obj;
        let prev = std::mem::replace(&mut beta, next);
        obj = obj_next;
        if r <= cfg.tol_kkt {
            res.converged = true;
            break;
        }
        if increased {
            t = 1.0;
            y.copy_from_slice(&beta);
            gy = g_next;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        t = t_next;
        if momentum == 0.0 {
            y.copy_from_slice(&beta);
            gy = g_next;
        } else {
            for i in 0..d {
                y[i] = beta[i] + momentum * (beta[i] - prev[i]);
            }
            gy = eval.value_and_gradient(&y)?.1;
        }
    }
    res.beta = beta;
    Ok(res)
}

/// prox of t‖·‖₂: shrinks the whole vector toward 0 by t.
pub(crate) fn block_soft_threshold(z: &mut [f64], t: f64) {
    if t <= 0.0 {
        return;
    }
    let n = norm(z);
    let scale = if n <= t { 0.0 } else { 1.0 - t / n };
    z.iter_mut().for_each(|x| *x *= scale);
}
