//! Perturbation families Λ over the probability simplex and the quantities
//! derived from them: ∇Λ, the surplus Ω = Λ*, and choice probabilities ∇Ω.
//!
//! | family                  | Λ(p)                         | p = ∇Ω(v)                      |
//! |-------------------------|------------------------------|--------------------------------|
//! | `Shannon`               | μ Σ p ln p                   | softmax(v/μ)                   |
//! | `Quadratic`             | (μ/2)‖p‖²                    | projection of v/μ onto Δ       |
//! | `Cauchy`                | −(μ/π) Σ ln cos(π(p − 1/2))  | 1/2 + arctan((v − λ)/μ)/π      |
//! | `NonSeparableQuadratic` | (μ/2) pᵀQp                   | accelerated projected gradient |
//!
//! Additive constants in Λ are fixed to zero.

use std::f64::consts::PI;
use std::ops::Deref;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{PumError, Result};
use crate::simplex::{
    project_simplex_into, solve_normalization, solve_quadratic_simplex, CauchyKernel, ChoiceKernel, QpWorkspace,
    SolverConfig,
};

const SHANNON_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Shannon,
    Quadratic,
    Cauchy,
    NonSeparableQuadratic,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Shannon => "shannon",
            Family::Quadratic => "quadratic",
            Family::Cauchy => "cauchy",
            Family::NonSeparableQuadratic => "non_separable_quadratic",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "shannon" | "logit" | "mnl" => Ok(Family::Shannon),
            "quadratic" | "sparsemax" => Ok(Family::Quadratic),
            "cauchy" => Ok(Family::Cauchy),
            "non_separable_quadratic" | "nonseparable_quadratic" => Ok(Family::NonSeparableQuadratic),
            other => Err(PumError::InvalidParameter(format!("unknown family `{other}`"))),
        }
    }
}

/// Record form of a [`Perturbation`], as read from config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub family: String,
    pub mu: f64,
    /// Row-major K×K matrix, required for `non_separable_quadratic`.
    #[serde(default)]
    pub q_matrix: Option<Vec<f64>>,
}

/// Q together with its cached extreme eigenvalues.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    q: DMatrix<f64>,
    lambda_max: f64,
    lambda_min: f64,
}

impl QuadraticForm {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || q.nrows() == 0 {
            return Err(PumError::InvalidParameter("Q must be square and nonempty".into()));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(PumError::NonFinite("Q"));
        }
        let scale = q.amax().max(1.0);
        if (&q - q.transpose()).amax() > 1e-12 * scale {
            return Err(PumError::InvalidParameter("Q must be symmetric".into()));
        }
        let eig = q.clone().symmetric_eigen();
        let lambda_min = eig.eigenvalues.min();
        if lambda_min <= 0.0 {
            return Err(PumError::InvalidParameter(format!(
                "Q must be positive definite (smallest eigenvalue {lambda_min:e})"
            )));
        }
        let lambda_max = power_iteration(&q, 1e-8);
        Ok(Self { q, lambda_max, lambda_min })
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// out = Q x (Q symmetric, so column j doubles as row j).
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        let k = self.dim();
        let data = self.q.as_slice();
        for (i, o) in out.iter_mut().enumerate() {
            let col = &data[i * k..(i + 1) * k];
            *o = col.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix, to `rel_tol`.
pub fn power_iteration(a: &DMatrix<f64>, rel_tol: f64) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    // Non-constant start so an eigenvector orthogonal to 1 is still reached.
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
    x.normalize_mut();
    let mut est = 0.0;
    for _ in 0..100_000 {
        let y = a * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = x.dot(&y);
        x = y / norm;
        if (next - est).abs() <= rel_tol * next.abs() {
            return next;
        }
        est = next;
    }
    est
}

/// A probability vector on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    /// Validates nonnegativity (to 1e-12) and unit sum (to 1e-10).
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(PumError::DimensionMismatch { expected: 1, got: 0 });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(PumError::NonFinite("simplex vector"));
        }
        if let Some(x) = p.iter().find(|&&x| x < -1e-12) {
            return Err(PumError::InvalidParameter(format!("negative probability {x}")));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(PumError::InvalidParameter(format!("probabilities sum to {s}")));
        }
        Ok(Self(p.into_iter().map(|x| x.max(0.0)).collect()))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn vertex(k: usize, i: usize) -> Self {
        let mut p = vec![0.0; k];
        p[i] = 1.0;
        Self(p)
    }

    /// Wraps solver output, which already satisfies the invariants.
    pub(crate) fn from_raw(p: Vec<f64>) -> Self {
        Self(p)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for SimplexVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for SimplexVector {
    type Error = PumError;
    fn try_from(p: Vec<f64>) -> Result<Self> {
        Self::new(p)
    }
}

impl From<SimplexVector> for Vec<f64> {
    fn from(p: SimplexVector) -> Self {
        p.0
    }
}

/// A perturbation function Λ with dispersion μ. Immutable and cheap to clone.
#[derive(Debug, Clone)]
pub struct Perturbation {
    family: Family,
    mu: f64,
    q: Option<Arc<QuadraticForm>>,
}

/// Reusable buffers for [`Perturbation::probabilities_into`].
#[derive(Debug, Clone)]
pub struct ProbWorkspace {
    scratch: Vec<f64>,
    scaled: Vec<f64>,
    qp: Option<QpWorkspace>,
}

impl ProbWorkspace {
    pub fn new(k: usize) -> Self {
        Self { scratch: Vec::with_capacity(k), scaled: Vec::with_capacity(k), qp: None }
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if mu.is_finite() && mu > 0.0 {
        Ok(())
    } else {
        Err(PumError::InvalidParameter(format!("mu must be > 0, got {mu}")))
    }
}

impl Perturbation {
    pub fn shannon(mu: f64) -> Result<Self> {
        Self::separable(Family::Shannon, mu)
    }

    pub fn quadratic(mu: f64) -> Result<Self> {
        Self::separable(Family::Quadratic, mu)
    }

    pub fn cauchy(mu: f64) -> Result<Self> {
        Self::separable(Family::Cauchy, mu)
    }

    pub fn separable(family: Family, mu: f64) -> Result<Self> {
        check_mu(mu)?;
        if family == Family::NonSeparableQuadratic {
            return Err(PumError::InvalidParameter("non-separable family needs a Q matrix".into()));
        }
        Ok(Self { family, mu, q: None })
    }

    pub fn non_separable_quadratic(mu: f64, q: DMatrix<f64>) -> Result<Self> {
        check_mu(mu)?;
        let form = QuadraticForm::new(q)?;
        Ok(Self { family: Family::NonSeparableQuadratic, mu, q: Some(Arc::new(form)) })
    }

    pub fn from_config(cfg: &PerturbationConfig) -> Result<Self> {
        let family = Family::parse(&cfg.family)?;
        match (family, &cfg.q_matrix) {
            (Family::NonSeparableQuadratic, Some(q)) => {
                let k = (q.len() as f64).sqrt().round() as usize;
                if k * k != q.len() {
                    return Err(PumError::InvalidParameter(format!(
                        "q_matrix has {} entries, not a square count",
                        q.len()
                    )));
                }
                Self::non_separable_quadratic(cfg.mu, DMatrix::from_row_slice(k, k, q))
            }
            (Family::NonSeparableQuadratic, None) => {
                Err(PumError::InvalidParameter("non_separable_quadratic requires q_matrix".into()))
            }
            (f, None) => Self::separable(f, cfg.mu),
            (f, Some(_)) => Err(PumError::InvalidParameter(format!(
                "q_matrix only applies to non_separable_quadratic, not {}",
                f.name()
            ))),
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn quadratic_form(&self) -> Option<&QuadraticForm> {
        self.q.as_deref()
    }

    /// Number of alternatives fixed by Q, if any.
    pub fn fixed_dim(&self) -> Option<usize> {
        self.q.as_ref().map(|q| q.dim())
    }

    fn check_dim(&self, k: usize) -> Result<()> {
        match self.fixed_dim() {
            Some(expected) if expected != k => Err(PumError::DimensionMismatch { expected, got: k }),
            _ if k == 0 => Err(PumError::DimensionMismatch { expected: 1, got: 0 }),
            _ => Ok(()),
        }
    }

    /// Λ(p). Cauchy returns +∞ on the simplex boundary.
    pub fn lambda_value(&self, p: &[f64]) -> Result<f64> {
        self.check_dim(p.len())?;
        let mu = self.mu;
        Ok(match self.family {
            Family::Shannon => mu * p.iter().map(|&x| x * x.clamp(SHANNON_FLOOR, 1.0).ln()).sum::<f64>(),
            Family::Quadratic => 0.5 * mu * p.iter().map(|x| x * x).sum::<f64>(),
            Family::Cauchy => {
                let mut acc = 0.0;
                for &x in p {
                    if x <= 0.0 || x >= 1.0 {
                        return Ok(f64::INFINITY);
                    }
                    // cos(π(x − 1/2)) = sin(πx), evaluated on the short side.
                    acc += (PI * x.min(1.0 - x)).sin().ln();
                }
                -mu / PI * acc
            }
            Family::NonSeparableQuadratic => {
                let form = self.q.as_ref().expect("Q present");
                let mut qp = vec![0.0; p.len()];
                form.matvec(p, &mut qp);
                0.5 * mu * dot(p, &qp)
            }
        })
    }

    /// ∇Λ(p).
    pub fn grad_lambda(&self, p: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; p.len()];
        self.grad_lambda_into(p, &mut out)?;
        Ok(out)
    }

    pub fn grad_lambda_into(&self, p: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(p.len())?;
        let mu = self.mu;
        match self.family {
            Family::Shannon => {
                for (i, (&x, o)) in p.iter().zip(out.iter_mut()).enumerate() {
                    if x <= 0.0 {
                        return Err(PumError::BoundaryGradient { index: i, value: x });
                    }
                    *o = mu * (x.ln() + 1.0);
                }
            }
            Family::Quadratic => {
                for (&x, o) in p.iter().zip(out.iter_mut()) {
                    *o = mu * x;
                }
            }
            Family::Cauchy => {
                for (i, (&x, o)) in p.iter().zip(out.iter_mut()).enumerate() {
                    if x <= 0.0 || x >= 1.0 {
                        return Err(PumError::BoundaryGradient { index: i, value: x });
                    }
                    *o = -mu / (PI * x).tan();
                }
            }
            Family::NonSeparableQuadratic => {
                self.q.as_ref().expect("Q present").matvec(p, out);
                out.iter_mut().for_each(|o| *o *= mu);
            }
        }
        Ok(())
    }

    /// Lipschitz constant of ∇Λ on the simplex; `None` where ∇Λ is unbounded.
    pub fn grad_lambda_lipschitz(&self) -> Option<f64> {
        match self.family {
            Family::Quadratic => Some(self.mu),
            Family::NonSeparableQuadratic => Some(self.mu * self.q.as_ref()?.lambda_max()),
            Family::Shannon | Family::Cauchy => None,
        }
    }

    /// Upper bound on the spectral norm of ∇²Ω.
    pub fn surplus_curvature_bound(&self) -> f64 {
        match self.family {
            Family::Shannon => 0.5 / self.mu,
            Family::Quadratic => 1.0 / self.mu,
            Family::Cauchy => 1.0 / (PI * self.mu),
            Family::NonSeparableQuadratic => 1.0 / (self.mu * self.q.as_ref().expect("Q present").lambda_min()),
        }
    }

    /// Ω(v) = sup_{p∈Δ} pᵀv − Λ(p).
    pub fn surplus(&self, v: &[f64]) -> Result<f64> {
        if self.family == Family::Shannon {
            check_finite(v)?;
            return Ok(self.mu * log_sum_exp(v, self.mu));
        }
        let p = self.choice_probabilities(v)?;
        self.surplus_at(v, &p)
    }

    /// pᵀv − Λ(p) for p already equal to ∇Ω(v).
    pub(crate) fn surplus_at(&self, v: &[f64], p: &[f64]) -> Result<f64> {
        if self.family == Family::Shannon {
            return Ok(self.mu * log_sum_exp(v, self.mu));
        }
        Ok(dot(p, v) - self.lambda_value(p)?)
    }

    /// p = ∇Ω(v) under the default solver configuration.
    pub fn choice_probabilities(&self, v: &[f64]) -> Result<SimplexVector> {
        self.choice_probabilities_with(v, &SolverConfig::default())
    }

    pub fn choice_probabilities_with(&self, v: &[f64], cfg: &SolverConfig) -> Result<SimplexVector> {
        let mut out = vec![1.0 / v.len().max(1) as f64; v.len()];
        let mut ws = ProbWorkspace::new(v.len());
        self.probabilities_into(v, cfg, &mut out, &mut ws)?;
        Ok(SimplexVector::from_raw(out))
    }

    /// Writes ∇Ω(v) into `out`. For the non-separable family `out` must hold
    /// a point of the simplex on entry; it is used as the warm start.
    pub fn probabilities_into(
        &self,
        v: &[f64],
        cfg: &SolverConfig,
        out: &mut [f64],
        ws: &mut ProbWorkspace,
    ) -> Result<()> {
        self.check_dim(v.len())?;
        check_finite(v)?;
        if out.len() != v.len() {
            return Err(PumError::DimensionMismatch { expected: v.len(), got: out.len() });
        }
        let mu = self.mu;
        match self.family {
            Family::Shannon => {
                let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for (o, &x) in out.iter_mut().zip(v) {
                    *o = ((x - m) / mu).exp();
                    s += *o;
                }
                out.iter_mut().for_each(|o| *o /= s);
            }
            Family::Quadratic => {
                ws.scaled.clear();
                ws.scaled.extend(v.iter().map(|x| x / mu));
                project_simplex_into(&ws.scaled, out, &mut ws.scratch);
            }
            Family::Cauchy => {
                let kernel = CauchyKernel { mu };
                let root = solve_normalization(&kernel, v, cfg)?;
                let mut s = 0.0;
                for (o, &x) in out.iter_mut().zip(v) {
                    *o = kernel.psi(x - root.lambda);
                    s += *o;
                }
                out.iter_mut().for_each(|o| *o /= s);
            }
            Family::NonSeparableQuadratic => {
                let form = self.q.as_ref().expect("Q present");
                let qp = ws.qp.get_or_insert_with(|| QpWorkspace::new(v.len()));
                if !is_on_simplex(out) {
                    out.iter_mut().for_each(|o| *o = 1.0 / v.len() as f64);
                }
                solve_quadratic_simplex(form, mu, v, cfg, out, qp)?;
            }
        }
        Ok(())
    }
}

fn is_on_simplex(p: &[f64]) -> bool {
    p.iter().all(|&x| x >= 0.0 && x.is_finite()) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-9
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(PumError::NonFinite("utility vector"))
    }
}

/// ln Σ exp(v_i/μ), shifted by the maximum.
pub(crate) fn log_sum_exp(v: &[f64], mu: f64) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = v.iter().map(|&x| ((x - m) / mu).exp()).sum();
    m / mu + s.ln()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
