use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::{Budget, ExperimentConfig};
use super::experiment::{run_experiment, BudgetRun, RunResult};
use crate::analysis::Rmse;
use crate::csvio::{format_float, indexed, write_rows};
use crate::dynamics::TrajectoryLog;
use crate::error::{Error, Result};

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Write through `f` into `path`, creating parent directories.
pub(crate) fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w)?;
    w.flush().map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    })
}

/// `t,x1..xn,xhat1..xhatn` for one estimate trajectory.
pub fn write_estimate_csv<W: Write>(writer: W, truth: &TrajectoryLog, estimates: &[nalgebra::DVector<f64>]) -> Result<()> {
    let n = truth.states.first().map_or(0, |x| x.len());
    let mut header = vec!["t".to_string()];
    header.extend(indexed("x", n));
    header.extend(indexed("xhat", n));
    let rows: Vec<Vec<String>> = truth
        .states
        .iter()
        .zip(estimates)
        .enumerate()
        .map(|(t, (x, xh))| {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().chain(xh.iter()).map(|v| format_float(*v)));
            row
        })
        .collect();
    write_rows(writer, &header, &rows)
}

/// `t,iteration,cost` for every accepted iterate of every window.
pub fn write_trace_csv<W: Write>(writer: W, run: &BudgetRun) -> Result<()> {
    let header: Vec<String> = ["t", "iteration", "cost"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = run
        .reports
        .iter()
        .enumerate()
        .flat_map(|(k, report)| {
            report
                .cost_trace
                .iter()
                .enumerate()
                .map(move |(i, c)| vec![(k + 1).to_string(), i.to_string(), format_float(*c)])
        })
        .collect();
    write_rows(writer, &header, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTraces {
    /// `J_hat(t)` for `t = 1..=T`.
    pub suboptimal: Vec<f64>,
    /// `J_tilde(t)` for `t = 1..=T`.
    pub candidate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub steps: usize,
    pub horizon: usize,
    pub budgets: Vec<String>,
    pub rmse: BTreeMap<String, Rmse>,
    pub observer_rmse: Rmse,
    pub costs: BTreeMap<String, CostTraces>,
    /// `J_hat(t) <= J_tilde(t)` at every `t` for every budget.
    pub cost_decrease_holds: bool,
    /// Window costs nonincreasing in the budget at every `t`.
    pub monotone_costs: bool,
    /// `max_t |xhat(t) - xhat_converged(t)|` per budget, when the converged
    /// baseline was run.
    pub max_deviation_from_converged: BTreeMap<String, f64>,
    pub max_iterations_used: BTreeMap<String, usize>,
}

impl RunSummary {
    pub fn from_result(cfg: &ExperimentConfig, result: &RunResult) -> Self {
        let converged = result.run(Budget::Converged);
        let mut rmse = BTreeMap::new();
        let mut costs = BTreeMap::new();
        let mut deviation = BTreeMap::new();
        let mut iterations = BTreeMap::new();
        for run in &result.runs {
            let label = run.budget.label();
            rmse.insert(label.clone(), run.rmse.clone());
            costs.insert(
                label.clone(),
                CostTraces {
                    suboptimal: run.suboptimal_costs.clone(),
                    candidate: run.candidate_costs.clone(),
                },
            );
            if let Some(conv) = converged {
                let dev = run
                    .estimates
                    .iter()
                    .zip(&conv.estimates)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                deviation.insert(label.clone(), dev);
            }
            iterations.insert(label, run.reports.iter().map(|r| r.iterations_used).max().unwrap_or(0));
        }
        let cost_decrease_holds = result
            .runs
            .iter()
            .all(|r| r.suboptimal_costs.iter().zip(&r.candidate_costs).all(|(s, c)| s <= c));
        Self {
            seed: cfg.noise.seed,
            steps: cfg.steps,
            horizon: cfg.horizon,
            budgets: result.runs.iter().map(|r| r.budget.label()).collect(),
            rmse,
            observer_rmse: result.observer_rmse.clone(),
            costs,
            cost_decrease_holds,
            monotone_costs: result.costs_monotone_in_budget(),
            max_deviation_from_converged: deviation,
            max_iterations_used: iterations,
        }
    }
}

/// Write `<label>.csv` per budget and, with `trace`, `<label>_trace.csv`.
pub fn write_budget_files(dir: &Path, result: &RunResult, trace: bool) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for run in &result.runs {
        let path = dir.join(format!("{}.csv", run.budget.label()));
        write_file(&path, |w| write_estimate_csv(w, &result.truth, &run.estimates))?;
        written.push(path);
        if trace {
            let path = dir.join(format!("{}_trace.csv", run.budget.label()));
            write_file(&path, |w| write_trace_csv(w, run))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Run the configured experiment and write the figure bundle: one CSV per
/// budget, `truth.csv`, `observer.csv` and `summary.json`.
pub fn reproduce_figure(cfg: &ExperimentConfig, out: &Path, parallel: bool, trace: bool) -> Result<RunSummary> {
    let result = run_experiment(cfg, parallel)?;
    let summary = RunSummary::from_result(cfg, &result);
    if !summary.monotone_costs {
        warn!("window costs are not monotone in the iteration budget");
    }
    write_budget_files(out, &result, trace)?;
    write_file(&out.join("truth.csv"), |w| result.truth.write_csv(w))?;
    write_file(&out.join("observer.csv"), |w| result.observer.write_csv(w))?;
    write_json(&out.join("summary.json"), &summary)?;
    info!("figure bundle written to {}", out.display());
    Ok(summary)
}
