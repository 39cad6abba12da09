//! Solver traces on one synthetic instance: KKT residual and parameter error
//! after every iteration.

use std::time::Instant;

use pum_core::data::{generate_synthetic, SyntheticSpec};
use pum_core::rng::{rng_from_seed, split_seed, RNG_ALGORITHM};
use pum_core::SolverConfig;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::{EstimatorEntry, EstimatorKind, FamilySpec};
use crate::error::{config_err, CliError, CliResult};
use crate::fit::{l2_norm, sq_dist, Prepared};
use crate::plot::Plot;
use crate::report::{fmt_f64, ExperimentReport, Row, Table, Timing};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub seed: u64,
    /// Independent datasets, each traced separately.
    pub reps: usize,
    pub k: usize,
    pub d: usize,
    pub n: usize,
    pub family: FamilySpec,
    /// Drawn from N(0, I) when absent.
    pub beta_true: Option<Vec<f64>>,
    pub feature_base_scale: f64,
    pub noise_sd: f64,
    pub estimator: EstimatorEntry,
    pub solver: SolverConfig,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            reps: 1,
            k: 10,
            d: 10,
            n: 5000,
            family: FamilySpec { family: "non_separable_quadratic".into(), mu: 1.0, q_matrix: None, q_seed: Some(7) },
            beta_true: None,
            feature_base_scale: 1.0,
            noise_sd: 0.5,
            estimator: EstimatorEntry::Kind(EstimatorKind::Extragradient),
            solver: SolverConfig::default().with_max_iter(500).with_tol_kkt(1e-12),
        }
    }
}

impl ConvergenceConfig {
    pub fn beta_true(&self) -> Vec<f64> {
        self.beta_true.clone().unwrap_or_else(|| {
            let mut rng = rng_from_seed(split_seed(self.seed, "convergence-beta", 0));
            (0..self.d).map(|_| StandardNormal.sample(&mut rng)).collect()
        })
    }
}

/// Per-run trace statistics.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunSummary {
    pub rep: usize,
    pub iterations: usize,
    pub converged: bool,
    pub initial_kkt: f64,
    pub final_kkt: Option<f64>,
    pub final_param_error: Option<f64>,
    /// Largest kkt[t+1]/kkt[t] over t ≥ 10.
    pub max_ratio_after_10: Option<f64>,
    pub nonincreasing_within_5pct: bool,
}

pub fn run_convergence(cfg: &ConvergenceConfig) -> CliResult<ExperimentReport> {
    if cfg.reps == 0 || cfg.k < 2 || cfg.d == 0 || cfg.n == 0 {
        return Err(CliError::Config("reps, d, n >= 1 and k >= 2 required".into()));
    }
    if cfg.beta_true.as_ref().is_some_and(|b| b.len() != cfg.d) {
        return Err(CliError::Config(format!("beta_true must have d = {} entries", cfg.d)));
    }
    cfg.solver.validate().map_err(config_err)?;
    let spec = cfg.estimator.spec();
    spec.validate()?;
    let dgp = cfg.family.build(cfg.k)?;
    let est = Prepared::new(spec, &dgp, cfg.k)?;
    let beta = cfg.beta_true();
    let norm = l2_norm(&beta);
    let solver = cfg.estimator.spec().solver.unwrap_or(cfg.solver).with_beta_trace();

    let runs: Vec<CliResult<_>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let seed = split_seed(cfg.seed, "convergence-data", rep as u64);
            let data = generate_synthetic(&SyntheticSpec {
                n: cfg.n,
                k: cfg.k,
                d: cfg.d,
                beta_true: beta.clone(),
                family: dgp.clone(),
                feature_base_scale: cfg.feature_base_scale,
                noise_sd: cfg.noise_sd,
                seed,
                obs_per_id: None,
            })
            .map_err(|e| CliError::Run(e.to_string()))?;
            let hyper = est.hyper(cfg.d, cfg.n, norm);
            let start = Instant::now();
            let fitted = est.fit(&data, hyper, &solver);
            Ok((rep, seed, hyper, fitted, start.elapsed().as_secs_f64()))
        })
        .collect();

    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut trace_rows = Vec::new();
    let mut kkt_plot = Plot::new("kkt_trace", "KKT residual by iteration", "iteration", "KKT residual").log_y();
    let mut err_plot =
        Plot::new("param_error_trace", "Parameter error by iteration", "iteration", "||beta_t - beta*||").log_y();
    let mut summaries = Vec::new();
    for run in runs {
        let (rep, seed, hyper, fitted, seconds) = run?;
        let mut row = Row {
            estimator: est.label(),
            set: 0,
            grid: cfg.n,
            rep,
            seed,
            hyper,
            mse: None,
            win: None,
            objective_gap: None,
            loglik: None,
            kkt: None,
            iterations: 0,
            converged: false,
            status: "ok".into(),
        };
        timings.push(Timing { estimator: est.label(), set: 0, grid: cfg.n, rep, seconds });
        let r = match fitted {
            Ok(r) => r,
            Err(e) => {
                row.status = format!("failed: {e}");
                rows.push(row);
                continue;
            }
        };
        row.mse = Some(sq_dist(&r.beta, &beta));
        row.kkt = r.final_kkt();
        row.iterations = r.iterations;
        row.converged = r.converged;
        rows.push(row);

        // Entry t is the state after t iterations; entry 0 is the start.
        let mut kkt_pts = Vec::new();
        let mut err_pts = Vec::new();
        for t in 1..r.kkt_trace.len() {
            let err = sq_dist(&r.beta_trace[t], &beta).sqrt();
            let obj = r.objective_trace.get(t).copied();
            trace_rows.push(vec![
                rep.to_string(),
                t.to_string(),
                fmt_f64(r.kkt_trace[t]),
                obj.map(fmt_f64).unwrap_or_default(),
                fmt_f64(err),
            ]);
            kkt_pts.push((t as f64, r.kkt_trace[t]));
            err_pts.push((t as f64, err));
        }
        let tail = r.kkt_trace.get(10..).unwrap_or(&[]);
        let max_ratio = tail
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
        summaries.push(RunSummary {
            rep,
            iterations: r.iterations,
            converged: r.converged,
            initial_kkt: r.kkt_trace[0],
            final_kkt: r.final_kkt(),
            final_param_error: r.beta_trace.last().map(|b| sq_dist(b, &beta).sqrt()),
            max_ratio_after_10: max_ratio,
            nonincreasing_within_5pct: max_ratio.is_none_or(|m| m <= 1.05),
        });
        kkt_plot = kkt_plot.with_series(&format!("rep {rep}"), kkt_pts);
        err_plot = err_plot.with_series(&format!("rep {rep}"), err_pts);
    }

    let mut metadata = Map::new();
    metadata.insert("rng".into(), json!(RNG_ALGORITHM));
    metadata.insert("beta_true".into(), json!(beta));
    metadata.insert("trace_indexing".into(), json!("row t holds the state after t iterations"));
    metadata.insert("reference".into(), json!({ "kkt_after_500_iterations_max": 1e-3, "monotone_tolerance": 0.05 }));
    Ok(ExperimentReport {
        experiment_id: "convergence".into(),
        config_echo: serde_json::to_value(cfg)?,
        metadata,
        rows,
        summary: json!({ "runs": summaries }) as Value,
        timings,
        tables: vec![Table {
            name: "traces".into(),
            header: ["rep", "iteration", "kkt", "objective", "param_error"].map(String::from).to_vec(),
            rows: trace_rows,
        }],
        plots: vec![kkt_plot, err_plot],
    })
}
