use fxmpc_core::baselines::{ControllerId, PidController};
use fxmpc_core::harness::{compute_rmse, monte_carlo, run_closed_loop, ExperimentConfig, MonteCarloSpec, RunLog};
use fxmpc_core::inner_loop::IndiController;
use fxmpc_core::math::{quat_normalize, quat_to_rotation, Quat, Vec3};
use fxmpc_core::mpc::model::{integrate, pack_state, state_quat};
use fxmpc_core::mpc::{MpcConfig, MpcWeights, NmpcController};
use fxmpc_core::plant::{rk4_step, Plant, QuadParams, QuadState, Wrench};
use fxmpc_core::reference::{flat_to_reference, hover_reference, sample_horizon, Trajectory};

fn config(overrides: &[&str]) -> ExperimentConfig {
    let owned: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ExperimentConfig::with_overrides("", &owned).unwrap()
}

fn run(overrides: &[&str]) -> RunLog {
    run_closed_loop(&config(overrides)).unwrap()
}

#[test]
fn undisturbed_eight_is_tracked_closely() {
    let log = run(&["experiment.controller=\"fxtdo-mpc\"", "disturbance.kind=\"none\"", "experiment.duration=20.0"]);
    let m = compute_rmse(&log, 5.0).unwrap();
    assert!(m.rmse < 0.02, "{}", m.rmse);
    assert_eq!(log.rows.len(), 20 * 1000 + 1);
}

#[test]
fn undisturbed_hover_stays_at_the_set_point() {
    for c in ["fxtdo-mpc", "mpc", "rtmpc", "pid"] {
        let ctrl = format!("experiment.controller=\"{c}\"");
        let log = run(&[&ctrl, "experiment.scenario=\"hover\"", "disturbance.kind=\"none\"", "experiment.duration=5.0"]);
        let worst = log.rows.iter().filter(|r| r.t >= 2.0).map(|r| r.position_error().norm()).fold(0.0, f64::max);
        assert!(worst < 1e-3, "{c}: {worst}");
    }
}

#[test]
fn same_seed_gives_identical_csv() {
    let noisy = ["experiment.duration=3.0", "noise.position=0.01", "noise.rate=0.01", "disturbance.activation=1.0"];
    let a = run(&noisy).to_csv_string();
    let b = run(&noisy).to_csv_string();
    assert_eq!(a, b);
    let mut other = noisy.to_vec();
    other.push("experiment.seed=9");
    assert_ne!(a, run(&other).to_csv_string());
}

#[test]
fn log_has_fixed_step_and_expected_length() {
    let log = run(&["experiment.duration=2.0"]);
    assert_eq!(log.rows.len(), 2001);
    for (k, r) in log.rows.iter().enumerate() {
        assert!((r.t - k as f64 * 1e-3).abs() < 1e-12);
    }
    let csv = log.to_csv_string();
    assert!(csv.starts_with("# fxmpc run log v"));
    assert_eq!(csv.lines().count(), 2001 + 2);
}

#[test]
fn commands_are_held_between_controller_updates() {
    for c in ["fxtdo-mpc", "pid", "rtmpc"] {
        let ctrl = format!("experiment.controller=\"{c}\"");
        let log = run(&[&ctrl, "experiment.duration=3.0", "disturbance.activation=1.0"]);
        let mut changes = 0;
        for block in log.rows[..3000].chunks(10) {
            for r in &block[1..] {
                assert_eq!((r.thrust_cmd, r.rates_cmd), (block[0].thrust_cmd, block[0].rates_cmd), "{c} at t = {}", r.t);
            }
            changes += 1;
        }
        assert_eq!(changes, 300);
    }
}

fn command_gap(a: &RunLog, b: &RunLog, t_from: f64) -> f64 {
    a.rows
        .iter()
        .zip(&b.rows)
        .filter(|(r, _)| r.t >= t_from)
        .map(|(x, y)| (x.thrust_cmd - y.thrust_cmd).abs().max((x.rates_cmd - y.rates_cmd).amax()))
        .fold(0.0, f64::max)
}

#[test]
fn plain_and_observer_mpc_agree_without_disturbance() {
    let hover = ["disturbance.kind=\"none\"", "experiment.duration=10.0", "experiment.scenario=\"hover\""];
    let plain = run(&[&hover[..], &["experiment.controller=\"mpc\""]].concat());
    let observed = run(&[&hover[..], &["experiment.controller=\"fxtdo-mpc\""]].concat());
    assert!(command_gap(&plain, &observed, 2.0) < 1e-6);

    // Along the eight the estimate keeps a discretization residual of about 1e-3 N.
    let eight = ["disturbance.kind=\"none\"", "experiment.duration=10.0", "fxtdo.boundary_layer=1e-6"];
    let plain = run(&[&eight[..], &["experiment.controller=\"mpc\""]].concat());
    let observed = run(&[&eight[..], &["experiment.controller=\"fxtdo-mpc\""]].concat());
    let residual = observed.rows.iter().filter(|r| r.t >= 2.0).map(|r| r.f_hat.norm()).fold(0.0, f64::max);
    assert!(residual < 3e-3, "{residual}");
    assert!(command_gap(&plain, &observed, 2.0) < 5e-3);
}

#[test]
fn both_observers_settle_on_the_same_hover_command() {
    let base = ["experiment.scenario=\"hover\"", "experiment.duration=40.0"];
    let fx = run(&[&base[..], &["experiment.controller=\"fxtdo-mpc\""]].concat());
    let hg = run(&[&base[..], &["experiment.controller=\"hgdo-mpc\""]].concat());
    let (a, b) = (fx.rows.last().unwrap(), hg.rows.last().unwrap());
    assert!((a.thrust_cmd - b.thrust_cmd).abs() < 1e-3, "{} vs {}", a.thrust_cmd, b.thrust_cmd);
    assert!((a.rates_cmd - b.rates_cmd).amax() < 1e-3);
    assert!((a.f_hat - b.f_hat).norm() < 1e-3);
    assert!((a.f_hat - Vec3::new(1.0, -0.5, 0.0)).norm() < 1e-3);
}

#[test]
fn free_fall_energy_matches_gravity_work() {
    let prm = QuadParams::default();
    let mut plant = Plant::new(prm.clone(), QuadState::at_rest(Vec3::new(0.0, 0.0, -100.0))).unwrap();
    plant.state.v = Vec3::new(1.0, -2.0, 0.5);
    let (z0, ke0) = (plant.state.p.z, 0.5 * prm.mass * plant.state.v.norm_squared());
    for _ in 0..1000 {
        plant.step(&Wrench::new(0.0, Vec3::zeros()), &Vec3::zeros(), &Vec3::zeros(), 1e-3).unwrap();
    }
    let gained = 0.5 * prm.mass * plant.state.v.norm_squared() - ke0;
    let work = prm.mass * 9.81 * (plant.state.p.z - z0);
    assert!((gained - work).abs() < 1e-6 * work.abs(), "{gained} vs {work}");
    assert!((plant.state.v.z - (0.5 + 9.81)).abs() < 1e-9);
}

#[test]
fn torque_free_rotation_conserves_energy_and_momentum() {
    let prm = QuadParams::default();
    let j = prm.inertia_matrix();
    let mut s = QuadState::at_rest(Vec3::zeros());
    s.w = Vec3::new(2.0, -1.0, 3.0);
    let energy = |s: &QuadState| 0.5 * s.w.dot(&(j * s.w));
    let momentum = |s: &QuadState| quat_to_rotation(&s.q).unwrap() * (j * s.w);
    let (e0, l0) = (energy(&s), momentum(&s));
    let hover = Wrench::new(prm.hover_thrust(), Vec3::zeros());
    for _ in 0..1000 {
        s = rk4_step(&s, &hover, &Vec3::zeros(), &Vec3::zeros(), &prm, 1e-3).unwrap();
    }
    assert!((energy(&s) - e0).abs() < 1e-6 * e0);
    assert!((momentum(&s) - l0).norm() < 1e-6 * l0.norm());
}

#[test]
fn zero_scale_batch_matches_undisturbed_run() {
    let cfg = config(&["disturbance.kind=\"constant\"", "experiment.duration=12.0"]);
    let spec = MonteCarloSpec { runs: 1, seed: 3, controllers: vec![ControllerId::FxtdoMpc], fixed_scale: Some(0.0) };
    let batch = monte_carlo(&cfg, &spec).unwrap();
    let mut plain = cfg.clone();
    plain.disturbance.kind = config(&["disturbance.kind=\"none\""]).disturbance.kind;
    plain.experiment.seed = 3;
    let reference = compute_rmse(&run_closed_loop(&plain).unwrap(), cfg.experiment.rmse_start).unwrap().rmse;
    assert_eq!(batch.runs[0].rmse, Some(reference));
}

#[test]
fn small_batch_orders_observer_mpc_ahead_and_is_reproducible() {
    let cfg = config(&["experiment.duration=30.0"]);
    let spec = MonteCarloSpec { runs: 20, seed: 11, controllers: vec![ControllerId::Mpc, ControllerId::FxtdoMpc], fixed_scale: None };
    let a = monte_carlo(&cfg, &spec).unwrap();
    assert!(a.summary["fxtdo-mpc"].median < a.summary["mpc"].median);
    assert!(a.runs.iter().all(|r| r.rmse.is_some()));
    let small = MonteCarloSpec { runs: 3, ..spec };
    let b = monte_carlo(&cfg, &small).unwrap();
    let c = monte_carlo(&cfg, &small).unwrap();
    assert_eq!(b, c);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    b.write_csv(&mut x).unwrap();
    c.write_csv(&mut y).unwrap();
    assert_eq!(x, y);
}

#[test]
fn mpc_model_objective_never_exceeds_warm_start() {
    let (m, cfg) = (1.0, MpcConfig::default());
    let target = Vec3::new(0.0, 0.0, -1.0);
    let refs = sample_horizon(&Trajectory::Hover(target), 0.0, cfg.horizon, cfg.dt, m).unwrap();
    let mut ctrl = NmpcController::new(cfg, MpcWeights::default(), m, 0.01).unwrap();
    let tilt = Quat::new(0.995, 0.05, -0.08, 0.0);
    let mut x = pack_state(&(target + Vec3::new(0.5, -0.3, 0.2)), &Vec3::new(0.2, 0.1, 0.0), &tilt);
    for step in 0..1000 {
        let out = ctrl.rti_step(&x, &Vec3::zeros(), &refs).unwrap();
        let sol = &out.solution;
        assert!(sol.objective <= sol.warm_objective + 1e-9 * sol.warm_objective.max(1.0), "step {step}");
        x = integrate(&x, &out.u0, &Vec3::zeros(), m, 0.01);
        let q = state_quat(&x);
        x.fixed_rows_mut::<4>(6).copy_from(&(q.to_vector() / q.norm()));
    }
    assert!((x.fixed_rows::<3>(0) - target).norm() < 1e-3);
}

#[test]
fn second_gauss_newton_iteration_reduces_residual() {
    let (m, mut cfg) = (1.0, MpcConfig::default());
    let refs = sample_horizon(&Trajectory::Hover(Vec3::new(0.0, 0.0, -1.0)), 0.0, cfg.horizon, cfg.dt, m).unwrap();
    let x = pack_state(&Vec3::new(0.4, 0.2, -1.3), &Vec3::new(-0.3, 0.2, 0.1), &quat_normalize(&Quat::new(0.99, 0.1, 0.0, 0.0)).unwrap());
    let mut residual = Vec::new();
    for iterations in [1, 2] {
        cfg.iterations = iterations;
        let mut ctrl = NmpcController::new(cfg, MpcWeights::default(), m, 0.1).unwrap();
        ctrl.rti_step(&x, &Vec3::zeros(), &refs).unwrap();
        residual.push(ctrl.rti_step(&x, &Vec3::zeros(), &refs).unwrap().solution.kkt_residual);
    }
    assert!(residual[1] < residual[0], "{residual:?}");
}

#[test]
fn mpc_leans_against_a_known_side_force() {
    let (m, cfg) = (1.0, MpcConfig::default());
    let target = Vec3::new(0.0, 0.0, -1.0);
    let refs = sample_horizon(&Trajectory::Hover(target), 0.0, cfg.horizon, cfg.dt, m).unwrap();
    let f_hat = Vec3::new(1.0, 0.0, 0.0);
    let mut ctrl = NmpcController::new(cfg, MpcWeights::default(), m, 0.01).unwrap();
    let mut x = pack_state(&target, &Vec3::zeros(), &Quat::identity());
    let mut u = ctrl.rti_step(&x, &f_hat, &refs).unwrap().u0;
    for _ in 0..1000 {
        u = ctrl.rti_step(&x, &f_hat, &refs).unwrap().u0;
        x = integrate(&x, &u, &f_hat, m, 0.01);
    }
    let q = state_quat(&x);
    let thrust_accel = -(u[0] / m) * quat_to_rotation(&quat_normalize(&q).unwrap()).unwrap().column(2);
    // Static balance: thrust supplies −x acceleration equal to the push.
    assert!((thrust_accel.x + 1.0).abs() < 1e-2, "{thrust_accel:?}");
    assert!((x.fixed_rows::<3>(0) - target).norm() < 1e-2);
}

#[test]
fn pid_step_response_overshoot_is_bounded() {
    let prm = QuadParams::default();
    let cfg = ExperimentConfig::default();
    let h = 1e-3;
    let start = Vec3::new(0.0, 0.0, -1.0);
    let limits = MpcConfig::for_params(&prm);
    for axis in 0..3 {
        let mut plant = Plant::new(prm.clone(), QuadState::at_rest(start)).unwrap();
        let mut pid = PidController::new(cfg.pid, prm.mass, limits, 0.01).unwrap();
        let mut indi =
            IndiController::new(cfg.indi, prm.inertia_matrix(), Vec3::from(prm.torque_limits), h, Vec3::zeros(), Vec3::zeros()).unwrap();
        let mut target = start;
        target[axis] += 1.0;
        let r = flat_to_reference(&hover_reference(target), prm.mass).unwrap();
        let mut peak: f64 = f64::NEG_INFINITY;
        let mut cmd = pid.step(&plant.state, &r).unwrap();
        for k in 0..10_000 {
            if k % 10 == 0 {
                cmd = pid.step(&plant.state, &r).unwrap();
            }
            let torque = indi.step(&plant.state.w, &cmd.rates, &cmd.rate_dot);
            plant.step(&Wrench::new(cmd.thrust, torque), &Vec3::zeros(), &Vec3::zeros(), h).unwrap();
            peak = peak.max(plant.state.p[axis] - start[axis]);
        }
        assert!(peak < 1.2, "axis {axis}: peak {peak}");
        // The integrator tail is slow; only the approach is bounded tightly.
        assert!((plant.state.p - target).norm() < 5e-2, "axis {axis}: {:?}", plant.state.p);
    }
}
