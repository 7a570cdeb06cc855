use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use super::config::{Budget, ExperimentConfig};
use super::experiment::{prepare, run_experiment};
use super::output::{reproduce_figure, write_budget_files, write_file, write_json, RunSummary};
use super::stability::{run_stability_study, write_stability_study};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "mhe", version, about = "Suboptimal moving horizon estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the plant and write truth.csv.
    Simulate(Common),
    /// Run the observer on simulated outputs; writes truth.csv and observer.csv.
    Observe(Common),
    /// Run the estimator for each budget; writes one CSV per budget and summary.json.
    Estimate(Common),
    /// Fit stability constants over several seeds and check the bounds.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Number of consecutive seeds, starting at the configured seed.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
    /// Write the full figure bundle.
    ReproduceFigure(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON); the built-in reactor setup when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Noise seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated iteration budgets, `converged` for the baseline.
    #[arg(long, value_delimiter = ',')]
    budget: Option<Vec<String>>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-iteration cost traces.
    #[arg(long)]
    trace: bool,
    /// Run budgets (or seeds) on separate threads.
    #[arg(long)]
    parallel: bool,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.noise.seed = seed;
        }
        if let Some(list) = &self.budget {
            let budgets = list.iter().map(|s| s.parse()).collect::<Result<Vec<Budget>>>()?;
            cfg.set_budgets(&budgets);
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate(c) => {
            let cfg = c.config()?;
            let prepared = prepare(&cfg)?;
            let path = cfg.output_dir.join("truth.csv");
            write_file(&path, |w| prepared.truth.write_csv(w))?;
            println!("wrote {}", path.display());
        }
        Command::Observe(c) => {
            let cfg = c.config()?;
            let prepared = prepare(&cfg)?;
            write_file(&cfg.output_dir.join("truth.csv"), |w| prepared.truth.write_csv(w))?;
            let path = cfg.output_dir.join("observer.csv");
            write_file(&path, |w| prepared.observer.write_csv(w))?;
            println!("wrote {}", path.display());
        }
        Command::Estimate(c) => {
            let cfg = c.config()?;
            let result = run_experiment(&cfg, c.parallel)?;
            for path in write_budget_files(&cfg.output_dir, &result, c.trace)? {
                println!("wrote {}", path.display());
            }
            write_json(&cfg.output_dir.join("summary.json"), &RunSummary::from_result(&cfg, &result))?;
        }
        Command::Analyze { common, seeds } => {
            let cfg = common.config()?;
            let list: Vec<u64> = (0..seeds).map(|k| cfg.noise.seed.wrapping_add(k)).collect();
            let study = run_stability_study(&cfg, &list, common.parallel)?;
            write_stability_study(&study, &cfg.output_dir)?;
            let r = &study.report;
            println!(
                "observer constants (fitted, not certified): C = {:.4e}, rho = {}",
                r.observer_constants.c_p, r.observer_constants.rho
            );
            println!(
                "detectability constants (fitted, not certified): c = {:.4e}, eta = {}",
                r.detectability.c_p, r.detectability.eta
            );
            println!(
                "envelope: C1 = {:.4e}, C2 = {:.4e}, C3 = {:.4e}, lambda = {}",
                r.theorem.c1, r.theorem.c2, r.theorem.c3, r.theorem.lambda
            );
            println!("cost bound {}", if r.lemma_holds { "holds" } else { "VIOLATED" });
            println!("error envelope {}", if r.theorem_holds { "holds" } else { "VIOLATED" });
            println!("wrote {}", cfg.output_dir.join("analysis.json").display());
        }
        Command::ReproduceFigure(c) => {
            let cfg = c.config()?;
            let summary = reproduce_figure(&cfg, &cfg.output_dir, c.parallel, c.trace)?;
            for (label, rmse) in &summary.rmse {
                println!("{label}: rmse {:.6}", rmse.aggregate);
            }
            println!("wrote {}", cfg.output_dir.display());
        }
    }
    Ok(())
}

fn report(err: &Error) {
    eprintln!("error: {err}");
    let mut source = std::error::Error::source(err);
    while let Some(s) = source {
        eprintln!("  caused by: {s}");
        source = s.source();
    }
}

/// Parse `args` (program name first) and run; returns the exit code:
/// 0 on success, 1 on usage or config errors, 2 on numeric failures.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            report(&e);
            if e.is_config() {
                1
            } else {
                2
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_cli(["mhe", "estimate", "--bogus"]), 1);
        assert_eq!(run_cli(["mhe"]), 1);
        assert_eq!(run_cli(["mhe", "--help"]), 0);
    }

    #[test]
    fn missing_config_exits_one() {
        assert_eq!(run_cli(["mhe", "simulate", "--config", "/nonexistent/cfg.json"]), 1);
    }

    #[test]
    fn bad_budget_exits_one() {
        assert_eq!(run_cli(["mhe", "estimate", "--budget", "two"]), 1);
    }
}
