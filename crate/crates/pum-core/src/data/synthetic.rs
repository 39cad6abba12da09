use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::dataset::ChoiceDataset;
use crate::error::{PumError, Result};
use crate::perturbation::{Perturbation, ProbWorkspace};
use crate::rng::rng_from_seed;
use crate::simplex::SolverConfig;

/// Ground-truth data-generating process.
///
/// Baseline features b_{ij} ~ Uniform(−s, s) are drawn once per dataset;
/// observation n sees x_{nij} = b_{ij} + Normal(0, noise_sd²) and chooses
/// y_n ~ ∇Ω(x_n β*) under `family`.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub beta_true: Vec<f64>,
    pub family: Perturbation,
    pub feature_base_scale: f64,
    pub noise_sd: f64,
    pub seed: u64,
    /// Consecutive observations sharing one decision-maker id, if any.
    pub obs_per_id: Option<usize>,
}

impl SyntheticSpec {
    pub fn new(n: usize, k: usize, beta_true: Vec<f64>, family: Perturbation, seed: u64) -> Self {
        let d = beta_true.len();
        Self { n, k, d, beta_true, family, feature_base_scale: 1.0, noise_sd: 0.5, seed, obs_per_id: None }
    }

    pub fn with_noise(mut self, feature_base_scale: f64, noise_sd: f64) -> Self {
        self.feature_base_scale = feature_base_scale;
        self.noise_sd = noise_sd;
        self
    }

    pub fn with_ids(mut self, obs_per_id: usize) -> Self {
        self.obs_per_id = Some(obs_per_id);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.d == 0 {
            return Err(PumError::InvalidParameter("N, K and d must be >= 1".into()));
        }
        if self.beta_true.len() != self.d {
            return Err(PumError::DimensionMismatch { expected: self.d, got: self.beta_true.len() });
        }
        if !(self.noise_sd >= 0.0) || !(self.feature_base_scale >= 0.0) {
            return Err(PumError::InvalidParameter("scales must be >= 0".into()));
        }
        if self.obs_per_id == Some(0) {
            return Err(PumError::InvalidParameter("obs_per_id must be >= 1".into()));
        }
        Ok(())
    }
}

/// Inverse-CDF draw from `p` given u ∈ [0, 1).
pub fn sample_choice(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding slack above Σp: take the last positive entry.
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

/// Draw order: K·d baseline uniforms, then per observation K·d normals
/// followed by one uniform for the choice.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<ChoiceDataset> {
    spec.validate()?;
    let (n, k, d) = (spec.n, spec.k, spec.d);
    let mut rng = rng_from_seed(spec.seed);
    let s = spec.feature_base_scale;
    let base: Vec<f64> = if s > 0.0 {
        let unif = Uniform::new(-s, s).map_err(|e| PumError::InvalidParameter(e.to_string()))?;
        (0..k * d).map(|_| unif.sample(&mut rng)).collect()
    } else {
        (0..k * d).map(|_| 0.0 * rng.random::<f64>()).collect()
    };
    let cfg = SolverConfig::default();
    let mut ws = ProbWorkspace::new(k);
    let mut features = Vec::with_capacity(n * k * d);
    let mut choices = Vec::with_capacity(n);
    let mut v = vec![0.0; k];
    let mut p = vec![1.0 / k as f64; k];
    for _ in 0..n {
        let start = features.len();
        for b in &base {
            let z: f64 = StandardNormal.sample(&mut rng);
            features.push(b + spec.noise_sd * z);
        }
        let x = &features[start..];
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = x[i * d..(i + 1) * d].iter().zip(&spec.beta_true).map(|(a, b)| a * b).sum();
        }
        spec.family.probabilities_into(&v, &cfg, &mut p, &mut ws)?;
        choices.push(sample_choice(&p, rng.random::<f64>()));
    }
    let ids = spec.obs_per_id.map(|m| (0..n).map(|i| (i / m) as u64).collect());
    ChoiceDataset::new(k, d, features, choices, ids)
}
