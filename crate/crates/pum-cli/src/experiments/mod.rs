pub mod convergence;
pub mod monte_carlo;
pub mod scaling;
pub mod subsample;
