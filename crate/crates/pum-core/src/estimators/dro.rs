//! Wasserstein-robust estimation through the bilinear saddle point
//!
//! ```text
//! min_{γ ≥ c_S‖β‖₂} max_{p°, q° ∈ Δᴺ}
//!     (1/N) Σ_n [(p_n − q_n)ᵀ V_n − Λ(p_n)] + γ (ε − (κ/N) Σ_n Σ_{i≠y_n} q_ni)
//! ```
//!
//! whose value at fixed (β, γ) is γε + (1/N) Σ_n ℓ̃(β, γ; x_n, y_n).

use crate::dataset::{ChoiceDataset, ObservationRef};
use crate::error::{PumError, Result};
use crate::loss::fy_loss;
use crate::perturbation::{dot, Perturbation};
use crate::simplex::{project_simplex_into, SolverConfig};

use super::extragradient::{ascent_step, dual_step, sq_dist, DualGeometry, DualScratch};
use super::{gram_lambda_max, norm, DroConfig, EstimateResult};

/// c_S ‖β‖₂.
pub fn lipschitz_constant(dro: &DroConfig, beta: &[f64]) -> f64 {
    dro.c_s() * norm(beta)
}

/// ℓ̃ = max{ℓ(β; x, y), max_{i≠y} ℓ(β; x, e_i) − γκ}.
///
/// Uses ℓ(e_i) − ℓ(y) = V_y − V_i, so only one surplus evaluation is needed.
pub fn robustified_loss(
    pert: &Perturbation,
    beta: &[f64],
    gamma: f64,
    kappa: f64,
    obs: ObservationRef<'_>,
) -> Result<f64> {
    if !(gamma >= 0.0) || !(kappa >= 0.0) {
        return Err(PumError::InvalidParameter("gamma and kappa must be >= 0".into()));
    }
    let nominal = fy_loss(pert, beta, obs)?;
    if kappa.is_infinite() {
        return Ok(nominal);
    }
    let v = obs.utilities(beta);
    let penalty = gamma * kappa;
    let worst = (0..obs.k)
        .filter(|&i| i != obs.y)
        .map(|i| nominal + v[obs.y] - v[i] - penalty)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(nominal.max(worst))
}

/// Tractable robust objective γε + (1/N) Σ ℓ̃ at a given (β, γ).
pub fn dro_objective(
    pert: &Perturbation,
    data: &ChoiceDataset,
    beta: &[f64],
    gamma: f64,
    dro: &DroConfig,
) -> Result<f64> {
    let mut acc = 0.0;
    for obs in data.iter() {
        acc += robustified_loss(pert, beta, gamma, dro.kappa, obs)?;
    }
    Ok(gamma * dro.epsilon + acc / data.len() as f64)
}

/// Euclidean projection of (b, g) onto {(β, γ) : c‖β‖₂ ≤ γ}.
pub fn project_cone(b: &[f64], g: f64, c: f64) -> (Vec<f64>, f64) {
    let nb = norm(b);
    if c * nb <= g {
        return (b.to_vec(), g);
    }
    let r = (nb + c * g) / (1.0 + c * c);
    if r <= 0.0 || nb == 0.0 {
        return (vec![0.0; b.len()], 0.0);
    }
    (b.iter().map(|x| r * x / nb).collect(), c * r)
}

struct State {
    beta: Vec<f64>,
    /// s·γ, with s = min(κ, 1) so the threshold γκ stays O(1) as κ → 0.
    g: f64,
    p: Vec<f64>,
    q: Vec<f64>,
}

/// Extragradient with two time scales. Before every outer step the dual
/// blocks take `inner_steps` ascent steps at `inner_step_scale` times their
/// base step (the p step is capped at 1/L_Λ).
///
/// γ is iterated as g = sγ with s = min(κ, 1). Step sizes: σ_p = 0.45/L_Λ,
/// τ = 0.2/(σ_p λ_max(M)) for both β and g, and
/// σ_q = 0.2/(τ (λ_max(M) + (κ/s)²(K − 1))). q° starts at the observed
/// labels, where the label-flip branch is inactive unless the data pay for it.
pub fn estimate_dro_bilinear(
    pert: &Perturbation,
    data: &ChoiceDataset,
    dro: &DroConfig,
    cfg: &SolverConfig,
) -> Result<EstimateResult> {
    cfg.validate()?;
    dro.validate()?;
    if !(dro.epsilon > 0.0) || !(dro.kappa > 0.0) {
        return Err(PumError::InvalidParameter("robust estimation needs epsilon, kappa > 0".into()));
    }
    let (geometry, curvature) = DualGeometry::for_family(pert)?;
    let (n, k, d) = (data.len(), data.k(), data.d());
    let nf = n as f64;
    let c = dro.c_s();
    let kappa = dro.kappa;
    let flips = !kappa.is_infinite();
    let s = if flips { kappa.min(1.0) } else { 1.0 };
    let cs = c * s;

    let lam_m = gram_lambda_max(data).max(1e-12);
    let sigma_p = cfg.sigma.unwrap_or(0.45 / curvature);
    let tau = cfg.tau.unwrap_or(0.2 / (sigma_p * lam_m));
    let kappa_s = kappa / s;
    let sigma_q = if flips { 0.2 / (tau * (lam_m + kappa_s * kappa_s * (k - 1) as f64)) } else { 0.0 };
    let inner_p = (sigma_p * dro.inner_step_scale).min(1.0 / curvature);
    let inner_q = sigma_q * dro.inner_step_scale;

    let mut st = State { beta: vec![0.0; d], g: 0.0, p: vec![1.0 / k as f64; n * k], q: vec![0.0; n * k] };
    for (i, &y) in data.choices().iter().enumerate() {
        st.q[i * k + y] = 1.0;
    }
    let mut p_t = vec![0.0; n * k];
    let mut q_t = vec![0.0; n * k];
    let mut v = vec![0.0; k];
    let mut gq = vec![0.0; k];
    let mut next = vec![0.0; k];
    let mut point = vec![0.0; k];
    let mut sort = Vec::with_capacity(k);
    let mut scratch = DualScratch::new(k);
    let mut res = EstimateResult::new(st.beta.clone());

    // Ascent direction for q_n: −V_n − γκ(1 − e_y), with γκ = g·κ/s.
    let q_direction = |v: &[f64], y: usize, g: f64, out: &mut [f64]| {
        for i in 0..v.len() {
            out[i] = -v[i] - if i == y { 0.0 } else { g * kappa_s };
        }
    };
    // ∂𝓛/∂g.
    let g_grad = |flip_mass: f64| (dro.epsilon - if flips { kappa * flip_mass / nf } else { 0.0 }) / s;

    for it in 0..=cfg.max_iter {
        for _ in 0..dro.inner_steps {
            for (i, obs) in data.iter().enumerate() {
                obs.utilities_into(&st.beta, &mut v);
                let pn = &st.p[i * k..(i + 1) * k];
                dual_step(pert, geometry, &v, pn, pn, inner_p, &mut next, &mut scratch)?;
                st.p[i * k..(i + 1) * k].copy_from_slice(&next);
                if flips {
                    q_direction(&v, obs.y, st.g, &mut gq);
                    let qn = &st.q[i * k..(i + 1) * k];
                    for j in 0..k {
                        point[j] = qn[j] + inner_q * gq[j];
                    }
                    project_simplex_into(&point, &mut next, &mut sort);
                    st.q[i * k..(i + 1) * k].copy_from_slice(&next);
                }
            }
        }

        // Look-ahead.
        let mut g_beta = vec![0.0; d];
        let mut flip_mass = 0.0;
        let mut objective = 0.0;
        let mut dual_res = 0.0;
        for (i, obs) in data.iter().enumerate() {
            let (pn, qn) = (&st.p[i * k..(i + 1) * k], &st.q[i * k..(i + 1) * k]);
            obs.utilities_into(&st.beta, &mut v);
            objective += dot(pn, &v) - dot(qn, &v) - pert.lambda_value(pn)?;
            obs.add_transpose_times(pn, 1.0, &mut g_beta);
            obs.add_transpose_times(qn, -1.0, &mut g_beta);
            flip_mass += 1.0 - qn[obs.y];
            let pt = &mut p_t[i * k..(i + 1) * k];
            dual_step(pert, geometry, &v, pn, pn, sigma_p, pt, &mut scratch)?;
            dual_res += sq_dist(pn, pt) / (sigma_p * sigma_p);
            let qt = &mut q_t[i * k..(i + 1) * k];
            if flips {
                q_direction(&v, obs.y, st.g, &mut gq);
                ascent_step(DualGeometry::Euclidean, &gq, qn, sigma_q, qt, &mut point, &mut sort);
                dual_res += sq_dist(qn, qt) / (sigma_q * sigma_q);
            } else {
                qt.copy_from_slice(qn);
            }
        }
        g_beta.iter_mut().for_each(|g| *g /= nf);
        let g_g = g_grad(flip_mass);
        objective = objective / nf + st.g * g_g;
        let stepped: Vec<f64> = st.beta.iter().zip(&g_beta).map(|(b, g)| b - tau * g).collect();
        let (beta_t, g_t) = project_cone(&stepped, st.g - tau * g_g, cs);
        let primal_res = (sq_dist(&st.beta, &beta_t) + (st.g - g_t).powi(2)) / (tau * tau);
        let kkt = (primal_res + dual_res / nf).sqrt();
        res.objective_trace.push(objective);
        res.kkt_trace.push(kkt);
        res.record_beta(cfg, &st.beta);
        res.iterations = it;
        if kkt <= cfg.tol_kkt {
            res.converged = true;
            break;
        }
        if it == cfg.max_iter {
            break;
        }

        // Correction with gradients at the look-ahead point.
        let mut g_beta = vec![0.0; d];
        let mut flip_mass = 0.0;
        for (i, obs) in data.iter().enumerate() {
            let (pt, qt) = (&p_t[i * k..(i + 1) * k], &q_t[i * k..(i + 1) * k]);
            obs.utilities_into(&beta_t, &mut v);
            obs.add_transpose_times(pt, 1.0, &mut g_beta);
            obs.add_transpose_times(qt, -1.0, &mut g_beta);
            flip_mass += 1.0 - qt[obs.y];
            dual_step(pert, geometry, &v, pt, &st.p[i * k..(i + 1) * k], sigma_p, &mut next, &mut scratch)?;
            st.p[i * k..(i + 1) * k].copy_from_slice(&next);
            if flips {
                q_direction(&v, obs.y, g_t, &mut gq);
                let qn = &st.q[i * k..(i + 1) * k];
                ascent_step(DualGeometry::Euclidean, &gq, qn, sigma_q, &mut next, &mut point, &mut sort);
                st.q[i * k..(i + 1) * k].copy_from_slice(&next);
            }
        }
        g_beta.iter_mut().for_each(|g| *g /= nf);
        let g_g = g_grad(flip_mass);
        let stepped: Vec<f64> = st.beta.iter().zip(&g_beta).map(|(b, g)| b - tau * g).collect();
        let (b, g) = project_cone(&stepped, st.g - tau * g_g, cs);
        st.beta = b;
        st.g = g;
    }

    let tail = &res.objective_trace[res.objective_trace.len().saturating_sub(101)..];
    if tail.len() >= 2 {
        let osc = tail.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (tail.len() - 1) as f64;
        res.oscillation = Some(osc);
    }
    res.beta = st.beta;
    res.gamma = Some(st.g / s);
    Ok(res)
}
