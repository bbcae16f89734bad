use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use fxmpc_core::baselines::ControllerId;
use fxmpc_core::harness::{
    monte_carlo, run_closed_loop, summarize_run, ExperimentConfig, MonteCarloSpec, RunSummary, Scenario, MAX_CONSECUTIVE_FAILURES,
};
use fxmpc_core::observer::check_gain_conditions;
use fxmpc_core::Error;

/// Quadrotor trajectory tracking experiments with disturbance-observer MPC.
#[derive(Debug, Parser)]
#[command(name = "fxmpc", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set mpc.horizon=20`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Reference scenario.
    #[arg(long, global = true)]
    scenario: Option<Scenario>,
    /// Seconds of simulated time.
    #[arg(long, global = true)]
    duration: Option<f64>,
    /// Seed for sensor noise and Monte Carlo scale draws.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Start of the RMSE window, s.
    #[arg(long, global = true)]
    rmse_start: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one controller and write `run.csv` and `summary.json`.
    Run {
        #[arg(long)]
        controller: Option<ControllerId>,
    },
    /// Run all five controllers on one scenario and print the RMSE table.
    Compare,
    /// Batch of runs with disturbances scaled by `k ~ U[0, 1]`.
    Montecarlo {
        #[arg(long, default_value_t = 100)]
        runs: usize,
        /// Comma-separated controllers; all when omitted.
        #[arg(long, value_delimiter = ',')]
        controller: Vec<ControllerId>,
        /// Fixed scale for every run instead of random draws.
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Report the observer gain condition for the configured disturbance.
    CheckGains,
    /// Print the resolved configuration.
    Defaults,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => 2,
            Error::SolverAbort { .. } => 3,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 1, message: format!("i/o error: {e}") }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure { code: 1, message: format!("serialization error: {e}") }
    }
}

type CliResult = Result<(), Failure>;

fn load_config(common: &Common, controller: Option<ControllerId>) -> Result<ExperimentConfig, Failure> {
    let mut overrides = common.overrides.clone();
    if let Some(s) = common.scenario {
        overrides.push(format!("experiment.scenario=\"{}\"", scenario_name(s)));
    }
    if let Some(d) = common.duration {
        overrides.push(format!("experiment.duration={d:?}"));
    }
    if let Some(s) = common.seed {
        overrides.push(format!("experiment.seed={s}"));
    }
    if let Some(t) = common.rmse_start {
        overrides.push(format!("experiment.rmse_start={t:?}"));
    }
    if let Some(c) = controller {
        overrides.push(format!("experiment.controller=\"{}\"", c.as_str()));
    }
    let cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file_with_overrides(path, &overrides)?,
        None => ExperimentConfig::with_overrides("", &overrides)?,
    };
    Ok(cfg)
}

fn scenario_name(s: Scenario) -> &'static str {
    match s {
        Scenario::Eight => "eight",
        Scenario::Hover => "hover",
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.3}"))
}

fn cmd_run(common: &Common, controller: Option<ControllerId>) -> CliResult {
    let cfg = load_config(common, controller)?;
    let log = run_closed_loop(&cfg)?;
    fs::create_dir_all(&common.out)?;
    log.write_csv(BufWriter::new(File::create(common.out.join("run.csv"))?))?;
    if let Some(t) = log.aborted_at {
        return Err(Error::SolverAbort { time: t, failures: MAX_CONSECUTIVE_FAILURES + 1 }.into());
    }
    let summary = summarize_run(&cfg, &log)?;
    write_json(&common.out.join("summary.json"), &summary)?;
    let m = &summary.metrics;
    println!(
        "{} on {}: rmse {:.4} m, max {:.4} m, steady {:.4} m, convergence {} s, real-time factor {:.1}",
        summary.controller.as_str(),
        scenario_name(summary.scenario),
        m.rmse,
        m.max_error,
        m.steady_state_error,
        fmt_opt(summary.convergence_time),
        m.real_time_factor
    );
    Ok(())
}

fn cmd_compare(common: &Common) -> CliResult {
    let base = load_config(common, None)?;
    let results: Vec<Result<RunSummary, Error>> = ControllerId::ALL
        .par_iter()
        .map(|c| {
            let mut cfg = base.clone();
            cfg.experiment.controller = *c;
            let log = run_closed_loop(&cfg)?;
            if let Some(t) = log.aborted_at {
                return Err(Error::SolverAbort { time: t, failures: MAX_CONSECUTIVE_FAILURES + 1 });
            }
            summarize_run(&cfg, &log)
        })
        .collect();
    let summaries = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    println!("{:<10} {:>9} {:>9} {:>10} {:>8}", "controller", "rmse [m]", "max [m]", "steady [m]", "conv [s]");
    for s in &summaries {
        let m = &s.metrics;
        println!(
            "{:<10} {:>9.4} {:>9.4} {:>10.4} {:>8}",
            s.controller.as_str(),
            m.rmse,
            m.max_error,
            m.steady_state_error,
            fmt_opt(s.convergence_time)
        );
    }
    fs::create_dir_all(&common.out)?;
    write_json(&common.out.join("compare.json"), &summaries)?;
    Ok(())
}

fn cmd_montecarlo(common: &Common, runs: usize, controllers: &[ControllerId], scale: Option<f64>) -> CliResult {
    let cfg = load_config(common, None)?;
    let spec = MonteCarloSpec {
        runs,
        seed: cfg.experiment.seed,
        controllers: if controllers.is_empty() { ControllerId::ALL.to_vec() } else { controllers.to_vec() },
        fixed_scale: scale,
    };
    let result = monte_carlo(&cfg, &spec)?;
    fs::create_dir_all(&common.out)?;
    result.write_csv(BufWriter::new(File::create(common.out.join("montecarlo.csv"))?))?;
    write_json(&common.out.join("montecarlo.json"), &result.summary)?;
    println!("{:<10} {:>5} {:>9} {:>9} {:>9} {:>9} {:>6}", "controller", "runs", "median", "iqr", "p05", "p95", "failed");
    for c in &spec.controllers {
        let d = &result.summary[c.as_str()];
        println!(
            "{:<10} {:>5} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>6}",
            c.as_str(),
            d.count,
            d.median,
            d.iqr,
            d.p05,
            d.p95,
            d.failures
        );
    }
    Ok(())
}

fn cmd_check_gains(common: &Common) -> CliResult {
    let cfg = load_config(common, None)?;
    let bound = cfg.disturbance_profile().derivative_bound();
    let report = check_gain_conditions(&cfg.fxtdo, bound)?;
    let verdict = if report.l2_pass { "PASS" } else { "FAIL" };
    println!("L2 condition: {verdict} margin {:.4}", report.margin);
    println!("  L2*k2 = {:.4}, disturbance derivative bound = {:.4}", report.l2_k2, report.derivative_bound);
    println!("  {}", report.l1_note);
    if report.l2_pass {
        Ok(())
    } else {
        Err(Failure { code: 1, message: "observer gain condition violated".into() })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { controller } => cmd_run(&cli.common, *controller),
        Command::Compare => cmd_compare(&cli.common),
        Command::Montecarlo { runs, controller, scale } => cmd_montecarlo(&cli.common, *runs, controller, *scale),
        Command::CheckGains => cmd_check_gains(&cli.common),
        Command::Defaults => load_config(&cli.common, None).map(|cfg| print!("{}", cfg.to_toml_string())),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
