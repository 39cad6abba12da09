//! Empirical scaling laws for the robust hyperparameters.

/// λ_reg = 0.13 √(d/N) / ‖β*‖₂.
pub fn scaling_law_reg(d: usize, n: usize, beta_norm: f64) -> f64 {
    0.13 * (d as f64 / n as f64).sqrt() / beta_norm
}

/// λ_flip = 2.9 (√(d/N) / ‖β*‖₂)⁻¹, used directly as the hinge threshold τ.
pub fn scaling_law_flip(d: usize, n: usize, beta_norm: f64) -> f64 {
    2.9 * beta_norm / (d as f64 / n as f64).sqrt()
}
