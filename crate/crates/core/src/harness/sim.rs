//! Multirate closed loop: plant, rate loop and observer at the plant rate,
//! outer controller at the control rate with a zero-order hold in between.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ExperimentConfig, NoiseSection};
use super::log::{LogRow, RunLog};
use crate::baselines::{ControllerId, OuterCommand, OuterController, PidController, TubeMpc};
use crate::error::{Error, Result};
use crate::inner_loop::IndiController;
use crate::math::{quat_normalize, Quat, Vec3};
use crate::mpc::{NmpcController, SolveStatus};
use crate::observer::{virtual_input, DisturbanceObserver, ObserverKind};
use crate::plant::{Plant, QuadState, Wrench};
use crate::reference::{flat_to_reference, sample_horizon};

/// Consecutive degraded solves tolerated before the run is aborted.
pub const MAX_CONSECUTIVE_FAILURES: usize = 10;

pub fn build_controller(cfg: &ExperimentConfig, id: ControllerId) -> Result<OuterController> {
    let m = cfg.vehicle.mass;
    let mpc = cfg.mpc_config();
    let period = 1.0 / cfg.experiment.control_rate;
    Ok(match id {
        ControllerId::Pid => OuterController::Pid(PidController::new(cfg.pid, m, mpc, period)?),
        ControllerId::Mpc => OuterController::Mpc { ctrl: NmpcController::new(mpc, cfg.weights, m, period)?, use_estimate: false },
        ControllerId::HgdoMpc | ControllerId::FxtdoMpc => {
            OuterController::Mpc { ctrl: NmpcController::new(mpc, cfg.weights, m, period)?, use_estimate: true }
        }
        ControllerId::Rtmpc => OuterController::Tube(TubeMpc::new(mpc, cfg.weights, m, period, cfg.tube)?),
    })
}

pub fn build_observer(cfg: &ExperimentConfig, kind: ObserverKind, z1: Vec3) -> Result<DisturbanceObserver> {
    match kind {
        ObserverKind::Fxtdo => DisturbanceObserver::fxtdo(cfg.fxtdo, z1),
        ObserverKind::Hgdo => DisturbanceObserver::hgdo(cfg.hgdo, z1),
    }
}

struct Noise {
    rng: ChaCha8Rng,
    cfg: NoiseSection,
    unit: Normal<f64>,
}

impl Noise {
    fn new(cfg: NoiseSection, seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), cfg, unit: Normal::new(0.0, 1.0).expect("unit normal") }
    }

    fn vec(&mut self, std: f64) -> Vec3 {
        if std == 0.0 {
            return Vec3::zeros();
        }
        Vec3::new(self.unit.sample(&mut self.rng), self.unit.sample(&mut self.rng), self.unit.sample(&mut self.rng)) * std
    }

    fn measure(&mut self, s: &QuadState) -> QuadState {
        if self.cfg.is_zero() {
            return *s;
        }
        let th = self.vec(self.cfg.attitude);
        let dq = Quat::new(1.0, 0.5 * th.x, 0.5 * th.y, 0.5 * th.z);
        let q = quat_normalize(&s.q.product(&dq)).unwrap_or(s.q);
        QuadState {
            p: s.p + self.vec(self.cfg.position),
            v: s.v + self.vec(self.cfg.velocity),
            q,
            w: s.w + self.vec(self.cfg.rate),
        }
    }
}

/// Runs one experiment. A run that hits [`MAX_CONSECUTIVE_FAILURES`] degraded
/// solves returns its partial log with `aborted_at` set.
pub fn run_closed_loop(cfg: &ExperimentConfig) -> Result<RunLog> {
    cfg.validate()?;
    let started = Instant::now();
    let id = cfg.experiment.controller;
    let prm = cfg.vehicle.clone();
    let m = prm.mass;
    let h = cfg.plant_step();
    let ratio = cfg.control_ratio();
    let steps = (cfg.duration() * cfg.experiment.plant_rate).round() as usize;
    let mpc = cfg.mpc_config();
    let traj = cfg.trajectory();
    let profile = cfg.disturbance_profile();

    let r0 = flat_to_reference(&traj.flat(0.0), m)?;
    let mut plant = Plant::new(prm.clone(), QuadState { p: r0.p, v: r0.v, q: r0.q, w: r0.w })?;
    let mut indi = IndiController::new(cfg.indi, prm.inertia_matrix(), Vec3::from(prm.torque_limits), h, r0.w, Vec3::zeros())?;
    let mut observer = match id.observer() {
        Some(kind) => Some(build_observer(cfg, kind, m * r0.v)?),
        None => None,
    };
    let mut outer = build_controller(cfg, id)?;
    let mut noise = Noise::new(cfg.noise, cfg.experiment.seed);

    let mut cmd = OuterCommand::new(r0.thrust, r0.w);
    let mut failures = 0usize;
    let mut rows = Vec::with_capacity(steps + 1);
    let mut aborted_at = None;
    let mut torque = Vec3::zeros();

    for k in 0..=steps {
        let t = k as f64 * h;
        let truth = plant.state;
        let meas = noise.measure(&truth);
        let f_hat = observer.as_ref().map_or(Vec3::zeros(), |o| o.estimate());

        if k < steps && k % ratio == 0 {
            let refs = sample_horizon(&traj, t, mpc.horizon, mpc.dt, m)?;
            cmd = outer.step(&meas, &f_hat, &refs)?;
            if cmd.status == SolveStatus::Degraded {
                failures += 1;
            } else {
                failures = 0;
            }
        }
        let dist = profile.sample(t);
        let flat = traj.flat(t);
        let mut row = LogRow {
            t,
            p: truth.p,
            v: truth.v,
            q: truth.q,
            w: truth.w,
            p_ref: flat.p,
            v_ref: flat.v,
            thrust_cmd: cmd.thrust,
            rates_cmd: cmd.rates,
            torque_cmd: torque,
            f_d: dist.force,
            tau_d: dist.torque,
            f_hat,
            status: cmd.status,
            kkt: cmd.kkt,
        };
        if failures > MAX_CONSECUTIVE_FAILURES {
            rows.push(row);
            aborted_at = Some(t);
            break;
        }
        if k == steps {
            rows.push(row);
            break;
        }

        if let Some(obs) = observer.as_mut() {
            let thrust = cmd.thrust.clamp(0.0, prm.max_thrust());
            obs.step(&(m * meas.v), &virtual_input(&meas.q, thrust, m), h)?;
        }
        torque = indi.step(&meas.w, &cmd.rates, &cmd.rate_dot);
        row.torque_cmd = torque;
        rows.push(row);
        plant.step(&Wrench::new(cmd.thrust, torque), &dist.force, &dist.torque, h)?;
        if !plant.state.is_finite() {
            return Err(Error::InvalidInput(format!("plant state diverged at t = {t}")));
        }
    }

    Ok(RunLog { rows, activation: profile.activation, aborted_at, wall_time: started.elapsed().as_secs_f64() })
}
