//! Experiment harness for perturbed utility model estimators.
//!
//! Each experiment takes a config record, runs its replications on the rayon
//! pool, sorts the results into a fixed order and returns an
//! [`ExperimentReport`]. Seeds are derived from the config's root seed with
//! [`pum_core::rng::split_seed`], so identical configs give byte-identical
//! `report.csv` files.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod plot;
pub mod report;

pub use config::{load_config, EstimatorEntry, EstimatorKind, EstimatorSpec, FamilySpec};
pub use error::{CliError, CliResult};
pub use experiments::convergence::{run_convergence, ConvergenceConfig};
pub use experiments::monte_carlo::{run_monte_carlo, MonteCarloConfig};
pub use experiments::scaling::{run_scaling_validation, ScalingConfig};
pub use experiments::subsample::{run_subsample_benchmark, SubsampleConfig};
pub use report::{read_rows, ExperimentReport, Row};
