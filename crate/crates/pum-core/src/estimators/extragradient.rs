//! Projected extragradient on
//!
//! ```text
//! min_β max_{p° ∈ Δᴺ}  𝓛(β, p°) = (1/N) Σ_n [(p_n − y_n)ᵀ x_n β − Λ(p_n)]
//! ```
//!
//! Each observation's dual block takes the ascent step p_n + σ(V_n − ∇Λ(p_n));
//! dropping the 1/N factor is a fixed block preconditioner and leaves the
//! saddle point unchanged. Quadratic families project onto the simplex. The
//! Shannon family uses the multiplicative (entropic) step instead, which keeps
//! p_n interior where ∇Λ is finite.

use crate::dataset::{ChoiceDataset, ObservationRef};
use crate::error::{PumError, Result};
use crate::perturbation::{dot, Family, Perturbation};
use crate::simplex::{project_simplex_into, SolverConfig};

use super::{gram_lambda_max, norm, EstimateResult};

#[derive(Debug, Clone, Copy)]
pub(super) enum DualGeometry {
    Euclidean,
    Entropic,
}

impl DualGeometry {
    /// Geometry and curvature of the dual block for `pert`.
    pub(super) fn for_family(pert: &Perturbation) -> Result<(Self, f64)> {
        match pert.family() {
            Family::Quadratic | Family::NonSeparableQuadratic => {
                Ok((DualGeometry::Euclidean, pert.grad_lambda_lipschitz().expect("quadratic families are smooth")))
            }
            Family::Shannon => Ok((DualGeometry::Entropic, pert.mu())),
            Family::Cauchy => Err(PumError::Unsupported("saddle-point estimation")),
        }
    }
}

/// Buffers for [`dual_step`].
pub(super) struct DualScratch {
    pub(super) grad: Vec<f64>,
    pub(super) point: Vec<f64>,
    pub(super) sort: Vec<f64>,
}

impl DualScratch {
    pub(super) fn new(k: usize) -> Self {
        Self { grad: vec![0.0; k], point: vec![0.0; k], sort: Vec::with_capacity(k) }
    }
}

/// out = step from `base` along the ascent direction v − ∇Λ(at).
pub(super) fn dual_step(
    pert: &Perturbation,
    geometry: DualGeometry,
    v: &[f64],
    at: &[f64],
    base: &[f64],
    sigma: f64,
    out: &mut [f64],
    s: &mut DualScratch,
) -> Result<()> {
    let DualScratch { grad, point, sort } = s;
    pert.grad_lambda_into(at, grad)?;
    for i in 0..v.len() {
        grad[i] = v[i] - grad[i];
    }
    ascent_step(geometry, grad, base, sigma, out, point, sort);
    Ok(())
}

/// out = step from `base` along a given ascent direction `g`.
pub(super) fn ascent_step(
    geometry: DualGeometry,
    g: &[f64],
    base: &[f64],
    sigma: f64,
    out: &mut [f64],
    point: &mut [f64],
    sort: &mut Vec<f64>,
) {
    match geometry {
        DualGeometry::Euclidean => {
            for i in 0..g.len() {
                point[i] = base[i] + sigma * g[i];
            }
            project_simplex_into(point, out, sort);
        }
        DualGeometry::Entropic => {
            let m = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for i in 0..g.len() {
                out[i] = base[i] * (sigma * (g[i] - m)).exp();
                z += out[i];
            }
            out.iter_mut().for_each(|o| *o = (*o / z).max(f64::MIN_POSITIVE));
            let z: f64 = out.iter().sum();
            out.iter_mut().for_each(|o| *o /= z);
        }
    }
}

pub(super) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// out += xᵀ(p − e_y).
pub(super) fn add_score(obs: ObservationRef<'_>, p: &[f64], out: &mut [f64]) {
    obs.add_transpose_times(p, 1.0, out);
    for (o, a) in out.iter_mut().zip(obs.row(obs.y)) {
        *o -= a;
    }
}

/// Saddle-point estimator. Defaults: σ = 0.45/L_Λ (L_Λ = Lipschitz constant
/// of ∇Λ, or μ in the entropic geometry) and τ = 0.2/(σ λ_max(M)) with
/// M = (1/N) Σ x_nᵀx_n, which keeps σL_Λ + √(τσλ_max(M)) below 0.9. The KKT
/// residual is √(‖∇_β𝓛‖² + (1/N) Σ ‖p_n − p̃_n‖²/σ²).
pub fn estimate_fy_extragradient(
    pert: &Perturbation,
    data: &ChoiceDataset,
    cfg: &SolverConfig,
) -> Result<EstimateResult> {
    cfg.validate()?;
    let (geometry, curvature) = DualGeometry::for_family(pert)?;
    let (n, k, d) = (data.len(), data.k(), data.d());
    if let Some(kq) = pert.fixed_dim() {
        if kq != k {
            return Err(PumError::DimensionMismatch { expected: kq, got: k });
        }
    }
    let sigma = cfg.sigma.unwrap_or(0.45 / curvature);
    let tau = cfg.tau.unwrap_or_else(|| 0.2 / (sigma * gram_lambda_max(data).max(1e-12)));
    let nf = n as f64;

    let mut beta = vec![0.0; d];
    let mut p = vec![1.0 / k as f64; n * k];
    let mut p_tilde = vec![0.0; n * k];
    let mut v = vec![0.0; k];
    let mut scratch = DualScratch::new(k);
    let mut next = vec![0.0; k];
    let mut res = EstimateResult::new(beta.clone());

    for it in 0..=cfg.max_iter {
        // Look-ahead from (β, p°), recording the gradient mapping.
        let mut g_beta = vec![0.0; d];
        let mut objective = 0.0;
        let mut p_res = 0.0;
        for (i, obs) in data.iter().enumerate() {
            let pn = &p[i * k..(i + 1) * k];
            obs.utilities_into(&beta, &mut v);
            objective += dot(pn, &v) - v[obs.y] - pert.lambda_value(pn)?;
            add_score(obs, pn, &mut g_beta);
            let pt = &mut p_tilde[i * k..(i + 1) * k];
            dual_step(pert, geometry, &v, pn, pn, sigma, pt, &mut scratch)?;
            p_res += sq_dist(pn, pt);
        }
        g_beta.iter_mut().for_each(|g| *g /= nf);
        let kkt = (norm(&g_beta).powi(2) + p_res / (nf * sigma * sigma)).sqrt();
        res.objective_trace.push(objective / nf);
        res.kkt_trace.push(kkt);
        res.record_beta(cfg, &beta);
        res.iterations = it;
        if kkt <= cfg.tol_kkt {
            res.converged = true;
            break;
        }
        if it == cfg.max_iter {
            break;
        }
        let beta_tilde: Vec<f64> = beta.iter().zip(&g_beta).map(|(b, g)| b - tau * g).collect();

        // Correction from (β, p°) with gradients taken at the look-ahead point.
        let mut g_tilde = vec![0.0; d];
        for (i, obs) in data.iter().enumerate() {
            let pt = &p_tilde[i * k..(i + 1) * k];
            obs.utilities_into(&beta_tilde, &mut v);
            add_score(obs, pt, &mut g_tilde);
            dual_step(pert, geometry, &v, pt, &p[i * k..(i + 1) * k], sigma, &mut next, &mut scratch)?;
            p[i * k..(i + 1) * k].copy_from_slice(&next);
        }
        for (b, g) in beta.iter_mut().zip(&g_tilde) {
            *b -= tau * g / nf;
        }
    }
    res.beta = beta;
    Ok(res)
}
