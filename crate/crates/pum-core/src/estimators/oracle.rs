//! Brute-force evaluation of the exact robust objective on tiny instances.

use nalgebra::{DMatrix, DVector};

use crate::dataset::ChoiceDataset;
use crate::error::{PumError, Result};
use crate::perturbation::Perturbation;

use super::{DroConfig, Metric};

/// Uniform grid over the bounding box of the observed stacked feature
/// vectors, widened by `expand` Mahalanobis units along each axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureGrid {
    pub points_per_dim: usize,
    pub expand: f64,
    pub max_points: usize,
}

impl FeatureGrid {
    pub fn new(points_per_dim: usize) -> Self {
        Self { points_per_dim, expand: 3.0, max_points: 1_000_000 }
    }
}

impl Default for FeatureGrid {
    fn default() -> Self {
        Self::new(101)
    }
}

/// γε + (1/N) Σ_n s_n with
/// s_n = max over grid points x (plus x_n itself) and labels i of
/// ℓ(β; x, e_i) − γ‖x − x_n‖_S − γκ·1(i ≠ y_n).
///
/// The grid only under-approximates the supremum, so this is a lower bound
/// on the exact robust objective at (β, γ).
pub fn exact_dro_oracle(
    pert: &Perturbation,
    data: &ChoiceDataset,
    beta: &[f64],
    gamma: f64,
    dro: &DroConfig,
    grid: &FeatureGrid,
) -> Result<f64> {
    let (k, d) = (data.k(), data.d());
    let m = k * d;
    if beta.len() != d {
        return Err(PumError::DimensionMismatch { expected: d, got: beta.len() });
    }
    if grid.points_per_dim < 2 {
        return Err(PumError::InvalidParameter("grid needs at least 2 points per axis".into()));
    }
    let total = (grid.points_per_dim as f64).powi(m as i32);
    if total > grid.max_points as f64 {
        return Err(PumError::OracleTooLarge { points: total, limit: grid.max_points });
    }
    let s_inv = match &dro.metric {
        Metric::Identity => DMatrix::identity(m, m),
        Metric::Matrix(s) => {
            if s.nrows() != m {
                return Err(PumError::DimensionMismatch { expected: m, got: s.nrows() });
            }
            s.clone()
                .cholesky()
                .ok_or_else(|| PumError::InvalidParameter("metric S must be positive definite".into()))?
                .inverse()
        }
    };
    let dist = |u: &[f64]| {
        let u = DVector::from_column_slice(u);
        (u.transpose() * &s_inv * &u)[(0, 0)].max(0.0).sqrt()
    };

    // Axis j: one Mahalanobis unit is 1/√((S⁻¹)_jj).
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for obs in data.iter() {
        for j in 0..m {
            lo[j] = lo[j].min(obs.x[j]);
            hi[j] = hi[j].max(obs.x[j]);
        }
    }
    for j in 0..m {
        let unit = 1.0 / s_inv[(j, j)].sqrt();
        lo[j] -= grid.expand * unit;
        hi[j] += grid.expand * unit;
    }

    let flip_cost = if dro.kappa_is_infinite() { None } else { Some(gamma * dro.kappa) };
    // Best value of ℓ(e_i) − γκ·1(i ≠ y_n) − γ‖x − x_n‖_S at candidate x.
    let candidate = |x: &[f64], best: &mut [f64]| -> Result<()> {
        let v: Vec<f64> = (0..k).map(|i| x[i * d..(i + 1) * d].iter().zip(beta).map(|(a, b)| a * b).sum()).collect();
        let omega = pert.surplus(&v)?;
        for (n, obs) in data.iter().enumerate() {
            let diff: Vec<f64> = x.iter().zip(obs.x).map(|(a, b)| a - b).collect();
            let transport = gamma * dist(&diff);
            let mut val = omega - v[obs.y];
            if let Some(cost) = flip_cost {
                for (i, &vi) in v.iter().enumerate() {
                    if i != obs.y {
                        val = val.max(omega - vi - cost);
                    }
                }
            }
            best[n] = best[n].max(val - transport);
        }
        Ok(())
    };

    let mut best = vec![f64::NEG_INFINITY; data.len()];
    for obs in data.iter() {
        candidate(obs.x, &mut best)?;
    }
    let g = grid.points_per_dim;
    let mut idx = vec![0usize; m];
    let mut x = vec![0.0; m];
    loop {
        for j in 0..m {
            x[j] = lo[j] + (hi[j] - lo[j]) * idx[j] as f64 / (g - 1) as f64;
        }
        candidate(&x, &mut best)?;
        let mut j = 0;
        while j < m {
            idx[j] += 1;
            if idx[j] < g {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == m {
            break;
        }
    }
    Ok(gamma * dro.epsilon + best.iter().sum::<f64>() / data.len() as f64)
}
