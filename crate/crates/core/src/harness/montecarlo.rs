//! Batches of runs with randomly scaled disturbances.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::compute_rmse;
use super::sim::run_closed_loop;
use crate::baselines::ControllerId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSpec {
    pub runs: usize,
    pub seed: u64,
    pub controllers: Vec<ControllerId>,
    /// Use this scale for every run instead of drawing `k ~ U[0, 1]`.
    pub fixed_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRun {
    pub controller: ControllerId,
    pub index: usize,
    pub scale: f64,
    pub rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub count: usize,
    pub failures: usize,
    pub mean: f64,
    pub median: f64,
    pub p05: f64,
    pub p25: f64,
    pub p75: f64,
    pub p95: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub runs: Vec<McRun>,
    pub summary: BTreeMap<String, Distribution>,
}

/// Linear-interpolation percentile of sorted data, `p ∈ [0, 1]`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(values: &[f64], failures: usize) -> Distribution {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let mean = if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let (p25, p75) = (percentile(&v, 0.25), percentile(&v, 0.75));
    Distribution {
        count: v.len(),
        failures,
        mean,
        median: percentile(&v, 0.5),
        p05: percentile(&v, 0.05),
        p25,
        p75,
        p95: percentile(&v, 0.95),
        iqr: p75 - p25,
        min: v.first().copied().unwrap_or(f64::NAN),
        max: v.last().copied().unwrap_or(f64::NAN),
    }
}

/// Scales drawn for run indices `0..n`; shared by every controller so the
/// comparison is paired.
pub fn draw_scales(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(0.0..=1.0)).collect()
}

/// Runs every controller on every scale. Individual failures are recorded,
/// not propagated. Results are ordered by controller, then run index.
pub fn monte_carlo(cfg: &ExperimentConfig, spec: &MonteCarloSpec) -> Result<MonteCarloResult> {
    if spec.runs == 0 {
        return Err(Error::InvalidInput("Monte Carlo needs at least one run".into()));
    }
    if let Some(k) = spec.fixed_scale {
        if !(0.0..=1.0).contains(&k) {
            return Err(Error::InvalidInput(format!("scale {k} outside [0, 1]")));
        }
    }
    cfg.validate()?;
    let scales = match spec.fixed_scale {
        Some(k) => vec![k; spec.runs],
        None => draw_scales(spec.runs, spec.seed),
    };
    let jobs: Vec<(ControllerId, usize)> =
        spec.controllers.iter().flat_map(|c| (0..spec.runs).map(move |i| (*c, i))).collect();
    let runs: Vec<McRun> = jobs
        .par_iter()
        .map(|&(controller, index)| {
            let mut c = cfg.clone();
            c.experiment.controller = controller;
            c.experiment.seed = spec.seed.wrapping_add(index as u64);
            c.disturbance.scale *= scales[index];
            let outcome = run_closed_loop(&c).and_then(|log| match log.aborted_at {
                Some(t) => Err(Error::SolverAbort { time: t, failures: super::sim::MAX_CONSECUTIVE_FAILURES + 1 }),
                None => compute_rmse(&log, c.experiment.rmse_start).map(|m| m.rmse),
            });
            let (rmse, error) = match outcome {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            McRun { controller, index, scale: scales[index], rmse, error }
        })
        .collect();

    let mut summary = BTreeMap::new();
    for c in &spec.controllers {
        let mine: Vec<&McRun> = runs.iter().filter(|r| r.controller == *c).collect();
        let values: Vec<f64> = mine.iter().filter_map(|r| r.rmse).collect();
        summary.insert(c.as_str().to_string(), summarize(&values, mine.len() - values.len()));
    }
    Ok(MonteCarloResult { runs, summary })
}

impl MonteCarloResult {
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["controller", "run", "scale", "rmse", "error"])?;
        for r in &self.runs {
            let rmse = r.rmse.map_or(String::new(), |v| v.to_string());
            w.write_record([r.controller.as_str(), &r.index.to_string(), &r.scale.to_string(), &rmse, r.error.as_deref().unwrap_or("")])?;
        }
        w.flush()
    }
}
