//! Tracking and estimation metrics computed from a run log.

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Scenario};
use super::log::RunLog;
use crate::baselines::ControllerId;
use crate::disturbance::DisturbanceProfile;
use crate::error::{Error, Result};
use crate::mpc::SolveStatus;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Per-axis position RMSE, m.
    pub rmse_axes: [f64; 3],
    /// RMSE of `‖p − p_r‖`, m.
    pub rmse: f64,
    pub max_error: f64,
    /// Mean of `‖p − p_r‖` over the final window, m.
    pub steady_state_error: f64,
    /// Mean KKT residual over optimizer solves; `None` without an optimizer.
    pub mean_kkt: Option<f64>,
    /// Simulated seconds per wall-clock second.
    pub real_time_factor: f64,
}

/// Window over which the steady-state error is averaged, s.
pub const STEADY_STATE_WINDOW: f64 = 5.0;

/// Metrics over rows with `t ≥ t_start`.
pub fn compute_rmse(log: &RunLog, t_start: f64) -> Result<Metrics> {
    let window: Vec<_> = log.rows.iter().filter(|r| r.t >= t_start - 1e-9).collect();
    if window.is_empty() {
        return Err(Error::EmptyWindow(format!("no samples at or after t = {t_start}")));
    }
    let n = window.len() as f64;
    let mut sq = [0.0; 3];
    let mut max_error: f64 = 0.0;
    for r in &window {
        let e = r.position_error();
        for i in 0..3 {
            sq[i] += e[i] * e[i];
        }
        max_error = max_error.max(e.norm());
    }
    let rmse_axes = sq.map(|s| (s / n).sqrt());
    let rmse = ((sq[0] + sq[1] + sq[2]) / n).sqrt();

    let t_end = log.duration();
    let tail: Vec<f64> =
        log.rows.iter().filter(|r| r.t >= t_end - STEADY_STATE_WINDOW - 1e-9).map(|r| r.position_error().norm()).collect();
    let steady_state_error = tail.iter().sum::<f64>() / tail.len().max(1) as f64;

    let kkts: Vec<f64> = log.rows.iter().map(|r| r.kkt).filter(|k| k.is_finite()).collect();
    let mean_kkt = if kkts.is_empty() { None } else { Some(kkts.iter().sum::<f64>() / kkts.len() as f64) };
    let real_time_factor = if log.wall_time > 0.0 { t_end / log.wall_time } else { f64::INFINITY };
    Ok(Metrics { rmse_axes, rmse, max_error, steady_state_error, mean_kkt, real_time_factor })
}

/// Time after activation at which `‖f̂_d − f_d‖` drops below `band` and stays
/// below `2·band` until the end of the log; `None` when that never happens.
pub fn convergence_time(log: &RunLog, band: f64) -> Option<f64> {
    let errors: Vec<(f64, f64)> =
        log.rows.iter().filter(|r| r.t >= log.activation - 1e-12).map(|r| (r.t, (r.f_hat - r.f_d).norm())).collect();
    // Scan backwards for the start of the final stretch below 2·band.
    let mut first_tail = errors.len();
    for (i, (_, e)) in errors.iter().enumerate().rev() {
        if *e < 2.0 * band {
            first_tail = i;
        } else {
            break;
        }
    }
    errors[first_tail..].iter().find(|(_, e)| *e < band).map(|(t, _)| t - log.activation)
}

/// Fraction of the disturbance magnitude at switch-on used as the convergence band.
pub const CONVERGENCE_FRACTION: f64 = 0.05;

/// `0.05·‖f_d(t_activation)‖`, N; zero for an absent disturbance.
pub fn convergence_band(profile: &DisturbanceProfile) -> f64 {
    CONVERGENCE_FRACTION * profile.sample(profile.activation).force.norm()
}

/// Structured result of one run, written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub controller: ControllerId,
    pub scenario: Scenario,
    pub duration: f64,
    pub seed: u64,
    pub rmse_start: f64,
    pub metrics: Metrics,
    pub convergence_band: f64,
    /// Seconds after activation; `None` when unconverged or without an observer.
    pub convergence_time: Option<f64>,
    pub degraded_solves: usize,
    pub aborted_at: Option<f64>,
}

pub fn summarize_run(cfg: &ExperimentConfig, log: &RunLog) -> Result<RunSummary> {
    let controller = cfg.experiment.controller;
    let band = convergence_band(&cfg.disturbance_profile());
    let convergence_time = match controller.observer() {
        Some(_) if band > 0.0 => convergence_time(log, band),
        _ => None,
    };
    Ok(RunSummary {
        controller,
        scenario: cfg.experiment.scenario,
        duration: cfg.duration(),
        seed: cfg.experiment.seed,
        rmse_start: cfg.experiment.rmse_start,
        metrics: compute_rmse(log, cfg.experiment.rmse_start)?,
        convergence_band: band,
        convergence_time,
        degraded_solves: log.rows.iter().filter(|r| r.status == SolveStatus::Degraded).count(),
        aborted_at: log.aborted_at,
    })
}
