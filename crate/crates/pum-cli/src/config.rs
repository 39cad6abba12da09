//! Config records for every experiment. Files ending in `.json` are read as
//! JSON, anything else as TOML. Every field has a default reproducing the
//! reference setup, so an empty file is a valid config.

use std::path::Path;

use nalgebra::DMatrix;
use pum_core::rng::rng_from_seed;
use pum_core::{Perturbation, PerturbationConfig, SolverConfig};
use rand_distr::{Distribution, StandardNormal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, CliError, CliResult};

pub fn load_config<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Perturbation as written in a config. Non-separable families take either
/// an explicit row-major `q_matrix` or a `q_seed`, which draws
/// Q = AᵀA + I with A a K×K standard normal matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub family: String,
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_matrix: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_seed: Option<u64>,
}

fn one() -> f64 {
    1.0
}

impl FamilySpec {
    pub fn shannon() -> Self {
        Self { family: "shannon".into(), mu: 1.0, q_matrix: None, q_seed: None }
    }

    pub fn build(&self, k: usize) -> CliResult<Perturbation> {
        let q_matrix = match (&self.q_matrix, self.q_seed) {
            (Some(_), Some(_)) => return Err(CliError::Config("give q_matrix or q_seed, not both".into())),
            (Some(q), None) => Some(q.clone()),
            (None, Some(seed)) => Some(random_q(k, seed).as_slice().to_vec()),
            (None, None) => None,
        };
        let pert =
            Perturbation::from_config(&PerturbationConfig { family: self.family.clone(), mu: self.mu, q_matrix })
                .map_err(config_err)?;
        if pert.fixed_dim().is_some_and(|kq| kq != k) {
            return Err(CliError::Config(format!("Q must be {k}x{k}")));
        }
        Ok(pert)
    }
}

/// AᵀA + I with A drawn row by row from a standard normal stream.
pub fn random_q(k: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    let a = DMatrix::from_row_iterator(k, k, (0..k * k).map(|_| StandardNormal.sample(&mut rng)));
    a.transpose() * &a + DMatrix::identity(k, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Accelerated gradient on the FY risk of the fitted family.
    Baseline,
    /// Baseline fitted with Shannon (μ = 1) whatever the data-generating family.
    MisspecifiedMle,
    /// Saddle-point extragradient on the FY risk.
    Extragradient,
    /// κ → ∞ limit: FY risk + λ‖β‖₂.
    L2,
    /// Margin limit with threshold τ.
    Hinge,
    /// Bilinear Wasserstein-robust saddle point.
    Dro,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Baseline => "baseline",
            EstimatorKind::MisspecifiedMle => "misspecified_mle",
            EstimatorKind::Extragradient => "extragradient",
            EstimatorKind::L2 => "l2",
            EstimatorKind::Hinge => "hinge",
            EstimatorKind::Dro => "dro",
        }
    }
}

/// One estimator in an experiment. `lambda` and `tau` default to the scaling
/// laws evaluated at the true (or oracle) coefficient norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Family to fit; defaults to the data-generating one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_family: Option<FamilySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Replaces the experiment-wide solver settings for this estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
}

impl EstimatorSpec {
    /// Defaults behind the bare-name shorthand. The hinge solver stops on a
    /// 1e-6 displacement of its averaged iterate within 100k iterations.
    pub fn of(kind: EstimatorKind) -> Self {
        let solver =
            (kind == EstimatorKind::Hinge).then(|| SolverConfig::default().with_tol_kkt(1e-6).with_max_iter(100_000));
        Self { kind, name: None, fit_family: None, lambda: None, tau: None, epsilon: None, kappa: None, solver }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |what: &str| Err(CliError::Config(format!("estimator `{}`: {what}", self.label())));
        match self.kind {
            EstimatorKind::Dro if self.epsilon.is_none() || self.kappa.is_none() => {
                return bad("dro needs epsilon and kappa")
            }
            EstimatorKind::L2 if self.lambda.is_some_and(|l| !(l >= 0.0)) => return bad("lambda must be >= 0"),
            EstimatorKind::Hinge if self.tau.is_some_and(|t| !(t >= 0.0)) => return bad("tau must be >= 0"),
            _ => {}
        }
        if let Some(s) = &self.solver {
            s.validate().map_err(config_err)?;
        }
        Ok(())
    }
}

/// Either a bare estimator name or a full table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EstimatorEntry {
    Kind(EstimatorKind),
    Spec(Box<EstimatorSpec>),
}

impl EstimatorEntry {
    pub fn spec(&self) -> EstimatorSpec {
        match self {
            EstimatorEntry::Kind(k) => EstimatorSpec::of(*k),
            EstimatorEntry::Spec(s) => (**s).clone(),
        }
    }
}

/// Validated estimator list with unique labels.
pub fn resolve_estimators(entries: &[EstimatorEntry]) -> CliResult<Vec<EstimatorSpec>> {
    if entries.is_empty() {
        return Err(CliError::Config("estimator list is empty".into()));
    }
    let specs: Vec<EstimatorSpec> = entries.iter().map(EstimatorEntry::spec).collect();
    for (i, s) in specs.iter().enumerate() {
        s.validate()?;
        if specs[..i].iter().any(|t| t.label() == s.label()) {
            return Err(CliError::Config(format!("duplicate estimator label `{}`", s.label())));
        }
    }
    Ok(specs)
}

/// Fields the command line may override.
pub trait Overrides {
    fn set_seed(&mut self, seed: u64);
    fn set_reps(&mut self, reps: usize);
}

macro_rules! overrides {
    ($($t:ty),*) => {$(
        impl Overrides for $t {
            fn set_seed(&mut self, seed: u64) { self.seed = seed; }
            fn set_reps(&mut self, reps: usize) { self.reps = reps; }
        }
    )*};
}

overrides!(
    crate::experiments::convergence::ConvergenceConfig,
    crate::experiments::monte_carlo::MonteCarloConfig,
    crate::experiments::scaling::ScalingConfig,
    crate::experiments::subsample::SubsampleConfig
);
