//! Simplex projection, scalar normalization root-finding and the
//! accelerated solver for non-separable quadratic perturbations.

use serde::{Deserialize, Serialize};

use crate::error::{PumError, Result};
use crate::perturbation::{Perturbation, QuadraticForm, SimplexVector};

/// Tolerances, iteration caps and step sizes shared by every solver.
///
/// `tau` and `sigma` are the primal and dual step sizes of the saddle-point
/// solvers. Left as `None`, each solver derives them from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub tol_root: f64,
    pub tol_kkt: f64,
    pub max_iter: usize,
    pub tau: Option<f64>,
    pub sigma: Option<f64>,
    pub root_method: RootMethod,
    /// Keep every iterate in [`EstimateResult::beta_trace`](crate::EstimateResult::beta_trace).
    pub record_betas: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_root: 1e-12,
            tol_kkt: 1e-9,
            max_iter: 10_000,
            tau: None,
            sigma: None,
            root_method: RootMethod::Bisection,
            record_betas: false,
        }
    }
}

impl SolverConfig {
    pub fn with_tol_kkt(mut self, tol: f64) -> Self {
        self.tol_kkt = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_steps(mut self, tau: f64, sigma: f64) -> Self {
        self.tau = Some(tau);
        self.sigma = Some(sigma);
        self
    }

    pub fn with_root_method(mut self, method: RootMethod) -> Self {
        self.root_method = method;
        self
    }

    pub fn with_beta_trace(mut self) -> Self {
        self.record_betas = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.tol_root) || !positive(self.tol_kkt) {
            return Err(PumError::InvalidParameter("tolerances must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(PumError::InvalidParameter("max_iter must be >= 1".into()));
        }
        if self.tau.is_some_and(|t| !positive(t)) || self.sigma.is_some_and(|s| !positive(s)) {
            return Err(PumError::InvalidParameter("step sizes must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootMethod {
    Bisection,
    /// Newton steps guarded by the bisection bracket.
    Newton,
    /// Golden-section minimization of |G|; kept for parity checks.
    GoldenSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootSolveReport {
    pub lambda: f64,
    pub iterations: usize,
    pub residual: f64,
    pub method: RootMethod,
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> SimplexVector {
    let mut out = vec![0.0; v.len()];
    let mut scratch = Vec::with_capacity(v.len());
    project_simplex_into(v, &mut out, &mut scratch);
    SimplexVector::from_raw(out)
}

/// Sort-and-threshold projection writing into `out`; `scratch` is reused
/// across calls to avoid allocation in hot loops.
pub fn project_simplex_into(v: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
    debug_assert_eq!(v.len(), out.len());
    scratch.clear();
    scratch.extend_from_slice(v);
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in scratch.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - theta).max(0.0);
    }
}

/// A strictly increasing scalar map ψ whose shifted sum is normalized to one.
pub trait ChoiceKernel {
    fn psi(&self, z: f64) -> f64;

    /// ψ'(z); `None` disables Newton steps.
    fn dpsi(&self, _z: f64) -> Option<f64> {
        None
    }

    /// Half-width added around [min v, max v] for the starting bracket.
    fn bracket_width(&self, k: usize) -> f64;
}

/// ψ(z) = exp(z/μ − 1), the inverse of μ(ln p + 1).
#[derive(Debug, Clone, Copy)]
pub struct ShannonKernel {
    pub mu: f64,
}

/// ψ(z) = max{0, z/μ}.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticKernel {
    pub mu: f64,
}

/// ψ(z) = 1/2 + arctan(z/μ)/π.
#[derive(Debug, Clone, Copy)]
pub struct CauchyKernel {
    pub mu: f64,
}

impl ChoiceKernel for ShannonKernel {
    fn psi(&self, z: f64) -> f64 {
        (z / self.mu - 1.0).exp()
    }
    fn dpsi(&self, z: f64) -> Option<f64> {
        Some(self.psi(z) / self.mu)
    }
    fn bracket_width(&self, k: usize) -> f64 {
        self.mu * (1.0 + (k as f64).ln())
    }
}

impl ChoiceKernel for QuadraticKernel {
    fn psi(&self, z: f64) -> f64 {
        (z / self.mu).max(0.0)
    }
    fn dpsi(&self, z: f64) -> Option<f64> {
        Some(if z > 0.0 { 1.0 / self.mu } else { 0.0 })
    }
    fn bracket_width(&self, _k: usize) -> f64 {
        self.mu
    }
}

impl ChoiceKernel for CauchyKernel {
    fn psi(&self, z: f64) -> f64 {
        // Far in the left tail 1/2 + atan(z)/π cancels; atan(μ/|z|)/π does not.
        if z < -self.mu {
            (self.mu / -z).atan() / std::f64::consts::PI
        } else {
            0.5 + (z / self.mu).atan() / std::f64::consts::PI
        }
    }
    fn dpsi(&self, z: f64) -> Option<f64> {
        Some(self.mu / (std::f64::consts::PI * (self.mu * self.mu + z * z)))
    }
    fn bracket_width(&self, k: usize) -> f64 {
        let k = k.max(2) as f64;
        10.0 * self.mu * (std::f64::consts::PI * (0.5 - 0.5 / k)).tan()
    }
}

const MAX_DOUBLINGS: usize = 200;

fn g_value<K: ChoiceKernel + ?Sized>(kernel: &K, v: &[f64], lambda: f64) -> f64 {
    v.iter().map(|&x| kernel.psi(x - lambda)).sum::<f64>() - 1.0
}

fn bracket<K: ChoiceKernel + ?Sized>(kernel: &K, v: &[f64]) -> Result<(f64, f64, f64, f64)> {
    let (vmin, vmax) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let mut width = kernel.bracket_width(v.len());
    for _ in 0..=MAX_DOUBLINGS {
        let (lo, hi) = (vmin - width, vmax + width);
        let (glo, ghi) = (g_value(kernel, v, lo), g_value(kernel, v, hi));
        if glo > 0.0 && ghi < 0.0 {
            return Ok((lo, hi, glo, ghi));
        }
        if glo == 0.0 {
            return Ok((lo, lo, 0.0, 0.0));
        }
        if ghi == 0.0 {
            return Ok((hi, hi, 0.0, 0.0));
        }
        width *= 2.0;
    }
    Err(PumError::BracketExpansion { doublings: MAX_DOUBLINGS, lo: vmin - width, hi: vmax + width })
}

/// Solves Σ_j ψ(v_j − λ) = 1 for λ.
pub fn solve_normalization<K: ChoiceKernel + ?Sized>(
    kernel: &K,
    v: &[f64],
    cfg: &SolverConfig,
) -> Result<RootSolveReport> {
    solve_normalization_traced(kernel, v, cfg, None)
}

/// As [`solve_normalization`], optionally recording the bracket residual
/// max{G(lo), −G(hi)} after every iteration.
pub fn solve_normalization_traced<K: ChoiceKernel + ?Sized>(
    kernel: &K,
    v: &[f64],
    cfg: &SolverConfig,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<RootSolveReport> {
    if v.is_empty() {
        return Err(PumError::DimensionMismatch { expected: 1, got: 0 });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(PumError::NonFinite("utility vector"));
    }
    let (mut lo, mut hi, mut glo, mut ghi) = bracket(kernel, v)?;
    let method = cfg.root_method;
    if lo == hi {
        return Ok(RootSolveReport { lambda: lo, iterations: 0, residual: 0.0, method });
    }
    if method == RootMethod::GoldenSection {
        return golden_section(kernel, v, cfg, lo, hi, trace);
    }

    let mut lambda = if glo < -ghi { lo } else { hi };
    let mut best = (glo.min(-ghi), lambda);
    for it in 1..=cfg.max_iter {
        let mid = 0.5 * (lo + hi);
        let mut cand = mid;
        if method == RootMethod::Newton {
            let g = g_value(kernel, v, lambda);
            let dg: Option<f64> = v.iter().map(|&x| kernel.dpsi(x - lambda)).sum();
            if let Some(dg) = dg.filter(|d| *d > 0.0) {
                let step = lambda + g / dg;
                if step > lo && step < hi {
                    cand = step;
                }
            }
        }
        let g = g_value(kernel, v, cand);
        lambda = cand;
        if g.abs() < best.0 {
            best = (g.abs(), cand);
        }
        if g.abs() <= cfg.tol_root {
            return Ok(RootSolveReport { lambda, iterations: it, residual: g, method });
        }
        if g > 0.0 {
            lo = cand;
            glo = g;
        } else {
            hi = cand;
            ghi = g;
        }
        if let Some(t) = trace.as_deref_mut() {
            t.push(glo.max(-ghi));
        }
        // Bracket at float resolution: no representable λ does better.
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(RootSolveReport {
                lambda: best.1,
                iterations: it,
                residual: g_value(kernel, v, best.1),
                method,
            });
        }
    }
    Err(PumError::RootNotConverged { iterations: cfg.max_iter, lo, hi, residual: best.0 })
}

fn golden_section<K: ChoiceKernel + ?Sized>(
    kernel: &K,
    v: &[f64],
    cfg: &SolverConfig,
    mut a: f64,
    mut b: f64,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<RootSolveReport> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let f = |l: f64| g_value(kernel, v, l).abs();
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for it in 1..=cfg.max_iter {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        let (lambda, r) = if fc < fd { (c, fc) } else { (d, fd) };
        if let Some(t) = trace.as_deref_mut() {
            t.push(r);
        }
        if r <= cfg.tol_root || b - a <= f64::EPSILON * a.abs().max(b.abs()).max(1.0) {
            return Ok(RootSolveReport {
                lambda,
                iterations: it,
                residual: g_value(kernel, v, lambda),
                method: RootMethod::GoldenSection,
            });
        }
    }
    Err(PumError::RootNotConverged { iterations: cfg.max_iter, lo: a, hi: b, residual: fc.min(fd) })
}

/// Maximizes pᵀv − (μ/2)pᵀQp over the simplex.
pub fn solve_primal_nonseparable(pert: &Perturbation, v: &[f64], cfg: &SolverConfig) -> Result<SimplexVector> {
    let form = pert.quadratic_form().ok_or(PumError::Unsupported("solve_primal_nonseparable"))?;
    if v.len() != form.dim() {
        return Err(PumError::DimensionMismatch { expected: form.dim(), got: v.len() });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(PumError::NonFinite("utility vector"));
    }
    let mut p = vec![1.0 / v.len() as f64; v.len()];
    let mut ws = QpWorkspace::new(v.len());
    solve_quadratic_simplex(form, pert.mu(), v, cfg, &mut p, &mut ws)?;
    Ok(SimplexVector::from_raw(p))
}

/// Scratch buffers for [`solve_quadratic_simplex`].
#[derive(Debug, Clone)]
pub(crate) struct QpWorkspace {
    y: Vec<f64>,
    p_prev: Vec<f64>,
    grad: Vec<f64>,
    point: Vec<f64>,
    sort: Vec<f64>,
}

impl QpWorkspace {
    pub(crate) fn new(k: usize) -> Self {
        Self {
            y: vec![0.0; k],
            p_prev: vec![0.0; k],
            grad: vec![0.0; k],
            point: vec![0.0; k],
            sort: Vec::with_capacity(k),
        }
    }
}

/// FISTA with gradient-based restart, warm-started from `p`.
pub(crate) fn solve_quadratic_simplex(
    form: &QuadraticForm,
    mu: f64,
    v: &[f64],
    cfg: &SolverConfig,
    p: &mut [f64],
    ws: &mut QpWorkspace,
) -> Result<usize> {
    let eta = 1.0 / (mu * form.lambda_max());
    ws.y.copy_from_slice(p);
    let mut t = 1.0f64;
    let mut residual = f64::INFINITY;
    for it in 1..=cfg.max_iter {
        form.matvec(&ws.y, &mut ws.grad);
        for (((x, y), vi), g) in ws.point.iter_mut().zip(&ws.y).zip(v).zip(&ws.grad) {
            *x = y + eta * (vi - mu * g);
        }
        ws.p_prev.copy_from_slice(p);
        project_simplex_into(&ws.point, p, &mut ws.sort);

        let mut sq = 0.0;
        let mut restart = 0.0;
        for ((y, pi), prev) in ws.y.iter().zip(p.iter()).zip(&ws.p_prev) {
            let g = y - pi;
            sq += g * g;
            restart += g * (pi - prev);
        }
        residual = sq.sqrt() / eta;
        if residual <= cfg.tol_kkt {
            return Ok(it);
        }
        if restart > 0.0 {
            t = 1.0;
            ws.y.copy_from_slice(p);
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for ((y, pi), prev) in ws.y.iter_mut().zip(p.iter()).zip(&ws.p_prev) {
            *y = pi + beta * (pi - prev);
        }
        t = t_next;
    }
    Err(PumError::MaxIterations { iterations: cfg.max_iter, residual })
}
