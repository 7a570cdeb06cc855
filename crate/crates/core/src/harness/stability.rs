use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::config::{Budget, ExperimentConfig};
use super::experiment::{run_experiment, RunResult};
use super::output::{write_file, write_json};
use crate::analysis::{
    check_envelope, check_rges_envelope, fit_detectability_envelope, fit_observer_envelope, lemma1_bound, rho_bar_1,
    rho_bar_2, theorem1_constants, CostBoundConstants, DetectabilityConstants, EnvelopeSample, MarginReport,
    MarginRow, RgesConstants, TheoremConstants,
};
use crate::csvio::{format_float, write_rows};
use crate::dynamics::SystemModel;
use crate::error::{Error, Result};

/// Smallest margin of one `(seed, budget)` check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub seed: u64,
    pub budget: String,
    pub min_margin: f64,
    pub worst_t: usize,
    pub holds: bool,
}

impl CheckSummary {
    fn new(seed: u64, budget: Budget, rows: &[MarginRow]) -> Self {
        let worst = rows
            .iter()
            .min_by(|a, b| a.margin.total_cmp(&b.margin))
            .copied()
            .unwrap_or(MarginRow { t: 0, error: 0.0, bound: 0.0, margin: f64::INFINITY });
        Self {
            seed,
            budget: budget.label(),
            min_margin: worst.margin,
            worst_t: worst.t,
            holds: worst.margin >= 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub seeds: Vec<u64>,
    /// Observer stability constants; fitted to the runs, not certified.
    pub observer_constants: RgesConstants,
    pub observer_fitted: bool,
    pub observer_fit_holds: bool,
    /// Detectability constants; fitted to the runs, not certified.
    pub detectability: DetectabilityConstants,
    pub detectability_fitted: bool,
    pub detectability_fit_holds: bool,
    pub cost_bounds: CostBoundConstants,
    pub c_bar: f64,
    pub rho_bar_1: f64,
    pub rho_bar_2: f64,
    pub theorem: TheoremConstants,
    /// `J_hat(t) <= bound(t)` per seed and budget.
    pub lemma: Vec<CheckSummary>,
    /// `|x(t) - xhat(t)| <= envelope(t)` per seed and budget.
    pub envelope: Vec<CheckSummary>,
    pub lemma_holds: bool,
    pub theorem_holds: bool,
}

pub struct StabilityStudy {
    pub report: StabilityReport,
    pub runs: Vec<(u64, RunResult)>,
    pub lemma_margins: Vec<(u64, Budget, Vec<MarginRow>)>,
    pub envelope_margins: Vec<(u64, Budget, MarginReport)>,
}

fn norms(v: &[nalgebra::DVector<f64>]) -> Vec<f64> {
    v.iter().map(|x| x.norm()).collect()
}

/// Observer error sample `|x(t) - z(t)|` of one run.
pub fn observer_sample(result: &RunResult) -> EnvelopeSample {
    let truth = &result.truth;
    EnvelopeSample {
        errors: truth.states.iter().zip(&result.observer.states).map(|(x, z)| (x - z).norm()).collect(),
        initial_gap: (&truth.states[0] - &result.observer.states[0]).norm(),
        w_norms: norms(&truth.disturbances),
        v_norms: norms(&truth.noises),
    }
}

/// Pairs of the true trajectory and each window's optimized trajectory, one
/// sample per window and budget.
pub fn detectability_samples(model: &SystemModel, result: &RunResult) -> Result<Vec<EnvelopeSample>> {
    let truth = &result.truth;
    let mut samples = Vec::new();
    for run in &result.runs {
        for (sol, &start) in run.solutions.iter().zip(&result.window_starts) {
            let m = sol.omegas.len();
            let mut chi = sol.chi0.clone();
            let mut errors = Vec::with_capacity(m + 1);
            let mut w_norms = Vec::with_capacity(m);
            let mut v_norms = Vec::with_capacity(m);
            for i in 0..m {
                let x = &truth.states[start + i];
                errors.push((x - &chi).norm());
                w_norms.push((&truth.disturbances[start + i] - &sol.omegas[i]).norm());
                v_norms.push((model.h(x) - model.h(&chi)).norm());
                chi = model.f(&chi)? + &sol.omegas[i];
            }
            errors.push((&truth.states[start + m] - &chi).norm());
            samples.push(EnvelopeSample {
                errors,
                initial_gap: (&truth.states[start] - &sol.chi0).norm(),
                w_norms,
                v_norms,
            });
        }
    }
    Ok(samples)
}

fn run_seeds(cfg: &ExperimentConfig, seeds: &[u64], parallel: bool) -> Result<Vec<(u64, RunResult)>> {
    let run = |seed: u64| run_experiment(&cfg.with_seed(seed), false).map(|r| (seed, r));
    if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = seeds.iter().map(|&s| scope.spawn(move || run(s))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("seed worker panicked"))
                .collect()
        })
    } else {
        seeds.iter().map(|&s| run(s)).collect()
    }
}

/// Fit observer and detectability constants over `seeds`, derive the
/// cost bound and estimator envelope from them and check both along every
/// run and budget.
pub fn run_stability_study(cfg: &ExperimentConfig, seeds: &[u64], parallel: bool) -> Result<StabilityStudy> {
    if seeds.is_empty() {
        return Err(Error::Config("stability study needs at least one seed".into()));
    }
    let model = cfg.system_model()?;
    let observer = cfg.observer()?;
    let cost = cfg.cost_spec()?;
    let runs = run_seeds(cfg, seeds, parallel)?;

    let obs_samples: Vec<EnvelopeSample> = runs.iter().map(|(_, r)| observer_sample(r)).collect();
    let rc = fit_observer_envelope(&obs_samples)?;
    let mut det_samples = Vec::new();
    for (_, r) in &runs {
        det_samples.extend(detectability_samples(&model, r)?);
    }
    let dc = fit_detectability_envelope(&det_samples)?;
    let refit_holds = |env: &crate::analysis::Envelope, samples: &[EnvelopeSample]| -> Result<bool> {
        for s in samples {
            if !check_envelope(env, s, true)?.holds() {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let observer_fit_holds = refit_holds(&(&rc).into(), &obs_samples)?;
    let detectability_fit_holds = refit_holds(&(&dc).into(), &det_samples)?;

    let cbc = CostBoundConstants::from_bounds(&cost.bounds(), model.lipschitz_h(), observer.kappa)?;
    let tc = theorem1_constants(&dc, &rc, &cbc, cfg.horizon)?;
    info!("observer fit {rc:?}, detectability fit {dc:?}, envelope {tc:?}");

    let mut lemma = Vec::new();
    let mut envelope = Vec::new();
    let mut lemma_margins = Vec::new();
    let mut envelope_margins = Vec::new();
    for ((seed, r), obs) in runs.iter().zip(&obs_samples) {
        for run in &r.runs {
            let mut rows = Vec::with_capacity(run.suboptimal_costs.len());
            for (k, &cost) in run.suboptimal_costs.iter().enumerate() {
                let t = k + 1;
                let bound = lemma1_bound(&cbc, &rc, cfg.horizon, t, obs.initial_gap, &obs.w_norms, &obs.v_norms)?;
                rows.push(MarginRow { t, error: cost, bound, margin: bound - cost });
            }
            lemma.push(CheckSummary::new(*seed, run.budget, &rows));
            lemma_margins.push((*seed, run.budget, rows));

            let report = check_rges_envelope(&run.errors(&r.truth), &obs.w_norms, &obs.v_norms, &tc, obs.initial_gap)?;
            envelope.push(CheckSummary::new(*seed, run.budget, &report.rows));
            envelope_margins.push((*seed, run.budget, report));
        }
    }

    let report = StabilityReport {
        seeds: seeds.to_vec(),
        observer_constants: rc,
        observer_fitted: true,
        observer_fit_holds,
        detectability: dc,
        detectability_fitted: true,
        detectability_fit_holds,
        cost_bounds: cbc,
        c_bar: cbc.c_bar(&rc),
        rho_bar_1: rho_bar_1(rc.rho, cbc.a, cfg.horizon)?,
        rho_bar_2: rho_bar_2(rc.rho, cbc.a, cfg.horizon)?,
        theorem: tc,
        lemma_holds: lemma.iter().all(|c| c.holds),
        theorem_holds: envelope.iter().all(|c| c.holds),
        lemma,
        envelope,
    };
    Ok(StabilityStudy {
        report,
        runs,
        lemma_margins,
        envelope_margins,
    })
}

fn margin_csv<W: std::io::Write>(writer: W, rows: &[MarginRow]) -> Result<()> {
    let header: Vec<String> = ["t", "error", "bound", "margin"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.t.to_string(), format_float(r.error), format_float(r.bound), format_float(r.margin)])
        .collect();
    write_rows(writer, &header, &rows)
}

/// Write `analysis.json` and the per-run margin tables under `out`.
pub fn write_stability_study(study: &StabilityStudy, out: &Path) -> Result<()> {
    write_json(&out.join("analysis.json"), &study.report)?;
    for (seed, budget, rows) in &study.lemma_margins {
        let path = out.join("margins").join(format!("lemma_seed{seed}_{}.csv", budget.label()));
        write_file(&path, |w| margin_csv(w, rows))?;
    }
    for (seed, budget, report) in &study.envelope_margins {
        let path = out.join("margins").join(format!("envelope_seed{seed}_{}.csv", budget.label()));
        write_file(&path, |w| report.write_csv(w))?;
    }
    Ok(())
}
