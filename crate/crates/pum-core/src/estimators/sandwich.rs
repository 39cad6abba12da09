use nalgebra::{DMatrix, DVector};

use crate::dataset::ChoiceDataset;
use crate::error::{PumError, Result};
use crate::perturbation::{Family, Perturbation};

/// Central-difference step for ∇²Ω in families without a closed form.
const FD_STEP: f64 = 1e-5;
const MAX_CONDITION: f64 = 1e12;

/// Sandwich variance Ĥ⁻¹ĴĤ⁻¹/N and its ingredients.
#[derive(Debug, Clone)]
pub struct Sandwich {
    pub covariance: DMatrix<f64>,
    /// Ĥ = (1/N) Σ x_nᵀ ∇²Ω(V_n) x_n.
    pub hessian: DMatrix<f64>,
    /// Ĵ = (1/N) Σ g_n g_nᵀ with g_n = x_nᵀ(p_n − e_{y_n}).
    pub score_covariance: DMatrix<f64>,
    /// Set for piecewise-smooth families, where ∇²Ω vanishes on flat regions.
    pub hessian_may_be_singular: bool,
}

/// ∇²Ω(v): (diag(p) − ppᵀ)/μ for Shannon, central differences of the
/// choice probabilities otherwise.
pub fn surplus_hessian(pert: &Perturbation, v: &[f64]) -> Result<DMatrix<f64>> {
    let k = v.len();
    if pert.family() == Family::Shannon {
        let p = pert.choice_probabilities(v)?;
        let p = DVector::from_column_slice(&p);
        return Ok((DMatrix::from_diagonal(&p) - &p * p.transpose()) / pert.mu());
    }
    let mut h = DMatrix::zeros(k, k);
    let mut shifted = v.to_vec();
    for j in 0..k {
        shifted[j] = v[j] + FD_STEP;
        let up = pert.choice_probabilities(&shifted)?;
        shifted[j] = v[j] - FD_STEP;
        let down = pert.choice_probabilities(&shifted)?;
        shifted[j] = v[j];
        for i in 0..k {
            h[(i, j)] = (up[i] - down[i]) / (2.0 * FD_STEP);
        }
    }
    Ok((&h + h.transpose()) * 0.5)
}

pub fn sandwich_covariance(pert: &Perturbation, data: &ChoiceDataset, beta: &[f64]) -> Result<Sandwich> {
    let (k, d) = (data.k(), data.d());
    if beta.len() != d {
        return Err(PumError::DimensionMismatch { expected: d, got: beta.len() });
    }
    let mut hess = DMatrix::zeros(d, d);
    let mut score = DMatrix::zeros(d, d);
    for obs in data.iter() {
        let x = DMatrix::from_row_slice(k, d, obs.x);
        let v = obs.utilities(beta);
        hess += x.transpose() * surplus_hessian(pert, &v)? * &x;
        let p = pert.choice_probabilities(&v)?;
        let mut resid = DVector::from_column_slice(&p);
        resid[obs.y] -= 1.0;
        let g = x.transpose() * resid;
        score += &g * g.transpose();
    }
    let nf = data.len() as f64;
    hess /= nf;
    score /= nf;
    hess = (&hess + hess.transpose()) * 0.5;

    let eig = hess.clone().symmetric_eigen();
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(PumError::SingularHessian { condition });
    }
    let inv = hess.clone().cholesky().ok_or(PumError::SingularHessian { condition })?.inverse();
    let covariance = &inv * &score * &inv / nf;
    Ok(Sandwich {
        covariance,
        hessian: hess,
        score_covariance: score,
        hessian_may_be_singular: matches!(pert.family(), Family::Quadratic | Family::NonSeparableQuadratic),
    })
}
