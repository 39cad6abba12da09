//! Population-proxy benchmark: the full-data fit stands in for the truth and
//! estimators fitted on subsamples are scored on the full data.

use std::path::{Path, PathBuf};
use std::time::Instant;

use pum_core::data::{generate_synthetic, load_csv, subsample, CsvSchema, LoadOptions, SubsampleMode, SyntheticSpec};
use pum_core::estimators::estimate_fy_nag;
use pum_core::rng::{split_seed, RNG_ALGORITHM};
use pum_core::{empirical_risk, ChoiceDataset, Family, SolverConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::{resolve_estimators, EstimatorEntry, EstimatorKind, FamilySpec};
use crate::error::{config_err, CliError, CliResult};
use crate::fit::{l2_norm, sq_dist, Prepared};
use crate::plot::Plot;
use crate::report::{mean, ExperimentReport, Row, Timing};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaPreset {
    Swissmetro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemaSpec {
    Preset(SchemaPreset),
    Custom(CsvSchema),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    /// Relative paths resolve against the config file's directory.
    pub path: PathBuf,
    pub schema: SchemaSpec,
    #[serde(default)]
    pub options: LoadOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    pub n: usize,
    pub k: usize,
    pub beta_true: Vec<f64>,
    #[serde(default = "FamilySpec::shannon")]
    pub dgp: FamilySpec,
    pub seed: u64,
    #[serde(default)]
    pub obs_per_id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSpec {
    Csv(CsvSource),
    Synthetic(SyntheticSource),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Rows,
    DecisionMakers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubsampleConfig {
    pub seed: u64,
    pub reps: usize,
    pub dataset: DatasetSpec,
    pub mode: Mode,
    /// Subsample sizes: rows, or decision-makers.
    pub grid: Vec<usize>,
    pub fit_family: FamilySpec,
    pub estimators: Vec<EstimatorEntry>,
    pub solver: SolverConfig,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            reps: 50,
            dataset: DatasetSpec::Synthetic(SyntheticSource {
                n: 2000,
                k: 3,
                beta_true: vec![1.0, 2.0, 0.5],
                dgp: FamilySpec::shannon(),
                seed: 1,
                obs_per_id: Some(9),
            }),
            mode: Mode::Rows,
            grid: vec![20, 40, 60, 100, 200, 400],
            fit_family: FamilySpec::shannon(),
            estimators: vec![
                EstimatorEntry::Kind(EstimatorKind::Baseline),
                EstimatorEntry::Kind(EstimatorKind::L2),
                EstimatorEntry::Kind(EstimatorKind::Hinge),
            ],
            solver: SolverConfig::default(),
        }
    }
}

impl SubsampleConfig {
    /// Makes a relative CSV path relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DatasetSpec::Csv(src) = &mut self.dataset {
            if src.path.is_relative() {
                src.path = base.join(&src.path);
            }
        }
    }
}

/// Full dataset and drop counts.
pub fn load_dataset(spec: &DatasetSpec) -> CliResult<(ChoiceDataset, usize)> {
    match spec {
        DatasetSpec::Csv(src) => {
            let schema = match &src.schema {
                SchemaSpec::Preset(SchemaPreset::Swissmetro) => CsvSchema::swissmetro(),
                SchemaSpec::Custom(s) => s.clone(),
            };
            let loaded = load_csv(&src.path, &schema, src.options)
                .map_err(|e| CliError::Dataset(format!("{}: {e}", src.path.display())))?;
            let dropped = loaded.dropped();
            Ok((loaded.data, dropped))
        }
        DatasetSpec::Synthetic(s) => {
            let family = s.dgp.build(s.k)?;
            let mut spec = SyntheticSpec::new(s.n, s.k, s.beta_true.clone(), family, s.seed);
            if let Some(m) = s.obs_per_id {
                spec = spec.with_ids(m);
            }
            let data = generate_synthetic(&spec).map_err(|e| CliError::Dataset(e.to_string()))?;
            Ok((data, 0))
        }
    }
}

pub fn run_subsample_benchmark(cfg: &SubsampleConfig) -> CliResult<ExperimentReport> {
    if cfg.reps == 0 || cfg.grid.is_empty() || cfg.grid.contains(&0) {
        return Err(CliError::Config("reps >= 1 and a nonempty positive grid are required".into()));
    }
    cfg.solver.validate().map_err(config_err)?;
    let specs = resolve_estimators(&cfg.estimators)?;
    let (data, dropped) = load_dataset(&cfg.dataset)?;
    let k = data.k();
    let family = cfg.fit_family.build(k)?;
    let prepared: Vec<Prepared> = specs.into_iter().map(|s| Prepared::new(s, &family, k)).collect::<CliResult<_>>()?;
    let available = match cfg.mode {
        Mode::Rows => data.len(),
        Mode::DecisionMakers => {
            let ids = data.ids().ok_or_else(|| CliError::Dataset("decision-maker sampling needs ids".into()))?;
            let mut v = ids.to_vec();
            v.sort_unstable();
            v.dedup();
            v.len()
        }
    };
    if let Some(&too_big) = cfg.grid.iter().find(|&&g| g > available) {
        return Err(CliError::Config(format!("grid size {too_big} exceeds the {available} available")));
    }

    let oracle_cfg =
        cfg.solver.with_tol_kkt(cfg.solver.tol_kkt.min(1e-10)).with_max_iter(cfg.solver.max_iter.max(100_000));
    let oracle = estimate_fy_nag(&family, &data, &oracle_cfg).map_err(|e| CliError::Run(format!("oracle fit: {e}")))?;
    let j_oracle = empirical_risk(&family, &oracle.beta, &data).map_err(|e| CliError::Run(e.to_string()))?;
    let shannon = family.family() == Family::Shannon;
    let n_full = data.len() as f64;
    let loglik = |j: f64| shannon.then(|| -n_full * j / family.mu());
    let norm = l2_norm(&oracle.beta);

    let jobs: Vec<(usize, usize)> = cfg.grid.iter().flat_map(|&g| (0..cfg.reps).map(move |r| (g, r))).collect();
    let results: Vec<Vec<(Row, Timing)>> = jobs
        .par_iter()
        .map(|&(g, rep)| {
            let seed = split_seed(split_seed(cfg.seed, "subsample", g as u64), "rep", rep as u64);
            let mode = match cfg.mode {
                Mode::Rows => SubsampleMode::Rows(g),
                Mode::DecisionMakers => SubsampleMode::DecisionMakers(g),
            };
            let sub = subsample(&data, mode, seed);
            prepared
                .iter()
                .map(|p| {
                    let mut row = Row {
                        estimator: p.label(),
                        set: 0,
                        grid: g,
                        rep,
                        seed,
                        hyper: None,
                        mse: None,
                        win: None,
                        objective_gap: None,
                        loglik: None,
                        kkt: None,
                        iterations: 0,
                        converged: false,
                        status: "ok".into(),
                    };
                    let start = Instant::now();
                    let outcome = sub.as_ref().map_err(|e| e.to_string()).and_then(|s| {
                        row.hyper = p.hyper(s.d(), s.len(), norm);
                        let r = p.fit(s, row.hyper, &cfg.solver).map_err(|e| e.to_string())?;
                        let j = empirical_risk(&family, &r.beta, &data).map_err(|e| e.to_string())?;
                        Ok((r, j))
                    });
                    match outcome {
                        Ok((r, j)) => {
                            row.mse = Some(sq_dist(&r.beta, &oracle.beta));
                            row.objective_gap = Some((j - j_oracle).abs());
                            row.loglik = loglik(j);
                            row.kkt = r.final_kkt();
                            row.iterations = r.iterations;
                            row.converged = r.converged;
                        }
                        Err(e) => row.status = format!("failed: {e}"),
                    }
                    let t =
                        Timing { estimator: p.label(), set: 0, grid: g, rep, seconds: start.elapsed().as_secs_f64() };
                    (row, t)
                })
                .collect()
        })
        .collect();
    let order: Vec<String> = prepared.iter().map(|p| p.label()).collect();
    let rank = |e: &str| order.iter().position(|o| o == e).unwrap_or(usize::MAX);
    let (mut rows, mut timings): (Vec<Row>, Vec<Timing>) = results.into_iter().flatten().unzip();
    rows.sort_by_key(|a| (a.grid, a.rep, rank(&a.estimator)));
    timings.sort_by_key(|a| (a.grid, a.rep, rank(&a.estimator)));

    let summary = summarize(&rows, &order);
    let entries: Vec<GridSummary> = serde_json::from_value(summary["by_grid"].clone())?;
    let x_label = match cfg.mode {
        Mode::Rows => "subsample size (rows)",
        Mode::DecisionMakers => "decision-makers sampled",
    };
    let mut plot = Plot::new(
        "gap_vs_size",
        "Full-data objective gap to the population proxy",
        x_label,
        "mean |J(beta_hat) - J(beta_oracle)|",
    )
    .log_y();
    for e in &order {
        plot = plot.with_series(
            e,
            entries
                .iter()
                .filter(|s| &s.estimator == e)
                .filter_map(|s| s.mean_gap.map(|m| (s.grid as f64, m)))
                .collect(),
        );
    }

    let mut metadata = Map::new();
    metadata.insert("rng".into(), json!(RNG_ALGORITHM));
    metadata.insert(
        "oracle".into(),
        json!({
            "beta": oracle.beta,
            "objective": j_oracle,
            "loglik": loglik(j_oracle),
            "converged": oracle.converged,
            "n": data.len(),
            "k": data.k(),
            "d": data.d(),
            "dropped_rows": dropped,
        }),
    );
    metadata.insert("scaling_law_norm".into(), json!("hyperparameters use the oracle coefficient norm"));
    Ok(ExperimentReport {
        experiment_id: "subsample".into(),
        config_echo: serde_json::to_value(cfg)?,
        metadata,
        rows,
        summary,
        timings,
        tables: Vec::new(),
        plots: vec![plot],
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridSummary {
    pub grid: usize,
    pub estimator: String,
    pub runs: usize,
    pub failed: usize,
    pub mean_gap: Option<f64>,
    pub mean_loglik: Option<f64>,
    pub mean_param_distance: Option<f64>,
}

pub fn summarize(rows: &[Row], estimators: &[String]) -> Value {
    let mut grid: Vec<usize> = rows.iter().map(|r| r.grid).collect();
    grid.sort_unstable();
    grid.dedup();
    let mut out = Vec::new();
    for &g in &grid {
        for e in estimators {
            let of: Vec<&Row> = rows.iter().filter(|r| r.grid == g && &r.estimator == e).collect();
            let ok: Vec<&&Row> = of.iter().filter(|r| r.ok()).collect();
            let col = |f: fn(&Row) -> Option<f64>| mean(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            out.push(GridSummary {
                grid: g,
                estimator: e.clone(),
                runs: ok.len(),
                failed: of.len() - ok.len(),
                mean_gap: col(|r| r.objective_gap),
                mean_loglik: col(|r| r.loglik),
                mean_param_distance: col(|r| r.mse),
            });
        }
    }
    json!({
        "excluded_runs": rows.iter().filter(|r| !r.ok()).count(),
        "by_grid": out,
    })
}
