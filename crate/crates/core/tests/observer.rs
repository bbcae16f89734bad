use fxmpc_core::disturbance::{DisturbanceKind, DisturbanceProfile};
use fxmpc_core::math::Vec3;
use fxmpc_core::observer::{fxtdo_step, hgdo_step, hgdo_step_with, Discretization, FxtdoGains, HgdoGains, ObserverState};

const BAND: f64 = 1e-2;

/// Independent RK4 integration of the observer error dynamics
/// `ė₁ = e_f − φ₁(e₁)`, `ė_f = ḟ_d − φ₂(e₁)` with `L₁ = L₂ = 1`.
fn oracle_errors(e_f0: Vec3, f_dot: impl Fn(f64) -> Vec3, h: f64, t_end: f64) -> Vec<(f64, Vec3)> {
    let g = FxtdoGains::default();
    let spow = |e: &Vec3, a: f64| {
        let n = e.norm();
        if n == 0.0 {
            Vec3::zeros()
        } else {
            e * n.powf(a - 1.0)
        }
    };
    let p = 1.0 / (1.0 - g.d_inf);
    let r = (1.0 + g.d_inf) / (1.0 - g.d_inf);
    let rhs = |t: f64, e1: &Vec3, ef: &Vec3| {
        let phi1 = g.k1 * spow(e1, 0.5) + g.k1_lin * e1 + g.k1_high * spow(e1, p);
        let phi2 = g.k2 * spow(e1, 0.0) + g.k2_lin * e1 + g.k2_high * spow(e1, r);
        (ef - phi1, f_dot(t) - phi2)
    };
    let (mut e1, mut ef, mut t) = (Vec3::zeros(), e_f0, 0.0);
    let mut out = vec![(0.0, ef)];
    while t < t_end - 1e-12 {
        let k1 = rhs(t, &e1, &ef);
        let k2 = rhs(t + h / 2.0, &(e1 + h / 2.0 * k1.0), &(ef + h / 2.0 * k1.1));
        let k3 = rhs(t + h / 2.0, &(e1 + h / 2.0 * k2.0), &(ef + h / 2.0 * k2.1));
        let k4 = rhs(t + h, &(e1 + h * k3.0), &(ef + h * k3.1));
        e1 += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        ef += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        t += h;
        out.push((t, ef));
    }
    out
}

/// Runs the library observer on the synthetic plant `ż₁ = T + f_d` and
/// returns `(t, f_d − f̂_d)` samples.
fn library_errors(profile: &DisturbanceProfile, f_hat0: Vec3, h: f64, t_end: f64, hgdo: bool) -> Vec<(f64, Vec3)> {
    let input = Vec3::new(0.3, -0.2, 0.1);
    let mut z = Vec3::zeros();
    let mut st = ObserverState::new(z, f_hat0);
    let mut out = vec![(0.0, profile.sample(0.0).force - f_hat0)];
    let steps = (t_end / h).round() as usize;
    for k in 0..steps {
        let t = k as f64 * h;
        st = if hgdo {
            hgdo_step(&st, &z, &input, &HgdoGains::default(), h).unwrap()
        } else {
            fxtdo_step(&st, &z, &input, &FxtdoGains::default(), h).unwrap()
        };
        // Simpson's rule is exact for the plant's affine-in-time input here
        // up to the sinusoid's fifth derivative.
        let (f0, fm, f1) = (profile.sample(t).force, profile.sample(t + h / 2.0).force, profile.sample(t + h).force);
        z += h * input + h / 6.0 * (f0 + 4.0 * fm + f1);
        out.push((t + h, profile.sample(t + h).force - st.f_hat));
    }
    out
}

/// First time after which the error stays below `band`.
fn settle_time(errors: &[(f64, Vec3)], band: f64) -> Option<f64> {
    let mut t_in = None;
    for (t, e) in errors {
        if e.norm() < band {
            t_in.get_or_insert(*t);
        } else {
            t_in = None;
        }
    }
    t_in
}

fn sinusoid() -> DisturbanceProfile {
    DisturbanceProfile::new(DisturbanceKind::Sinusoid, 0.0)
}

fn constant(f: Vec3) -> DisturbanceProfile {
    DisturbanceProfile::new(DisturbanceKind::Constant { force: f.into() }, 0.0)
}

#[test]
fn euler_observer_tracks_rk4_oracle() {
    let f = Vec3::new(1.0, 0.0, 0.0);
    let lib = library_errors(&constant(f), Vec3::zeros(), 1e-3, 3.0, false);
    let oracle = oracle_errors(f, |_| Vec3::zeros(), 1e-5, 3.0);
    let t_lib = settle_time(&lib, BAND).unwrap();
    let t_oracle = settle_time(&oracle, BAND).unwrap();
    assert!(t_lib < 2.0, "{t_lib}");
    assert!((t_lib - t_oracle).abs() < 0.02, "library {t_lib}, oracle {t_oracle}");
    // Before the estimate reaches the sliding regime the two trajectories agree closely.
    for k in [100, 200, 300, 400] {
        let (t, e) = lib[k];
        let o = oracle[(t / 1e-5).round() as usize].1;
        assert!((e - o).norm() < 5e-3, "t = {t}: {e:?} vs {o:?}");
    }
}

#[test]
fn convergence_times_share_a_common_bound() {
    let dir = Vec3::new(1.0, -2.0, 0.5).normalize();
    let p = sinusoid();
    let times: Vec<f64> = [1.0, 1e2, 1e4]
        .iter()
        .map(|mag| {
            let f0 = p.sample(0.0).force + dir * *mag;
            settle_time(&library_errors(&p, f0, 1e-3, 8.0, false), BAND).expect("converges")
        })
        .collect();
    assert!(times.iter().all(|t| *t <= 5.0), "{times:?}");
    // Saturation: a hundredfold larger error in the high-gain regime costs < 2x.
    assert!(times[2] < 2.0 * times[1], "{times:?}");
    assert!(times[2] - times[1] < 0.5, "{times:?}");
}

#[test]
fn saturation_matches_oracle() {
    let dir = Vec3::new(0.0, 1.0, 0.0);
    for mag in [1e2, 1e4] {
        let lib = settle_time(&library_errors(&constant(Vec3::zeros()), dir * mag, 1e-3, 6.0, false), BAND).unwrap();
        let oracle = settle_time(&oracle_errors(-dir * mag, |_| Vec3::zeros(), 1e-5, 6.0), BAND).unwrap();
        assert!((lib - oracle).abs() < 0.05, "{mag}: {lib} vs {oracle}");
    }
}

/// Largest error after the first entry into the band.
fn tail_peak(errors: &[(f64, Vec3)]) -> f64 {
    let first = errors.iter().position(|(_, e)| e.norm() < BAND).expect("enters band");
    errors[first..].iter().map(|(_, e)| e.norm()).fold(0.0, f64::max)
}

#[test]
fn tail_overshoot_matches_oracle() {
    for mag in [0.5, 1.0, 2.0] {
        let f = Vec3::new(mag, 0.0, 0.0);
        let lib = tail_peak(&library_errors(&constant(f), Vec3::zeros(), 1e-3, 6.0, false));
        let oracle = tail_peak(&oracle_errors(f, |_| Vec3::zeros(), 1e-5, 6.0));
        assert!((lib - oracle).abs() < 5e-3, "{mag}: {lib} vs {oracle}");
        let settled = settle_time(&library_errors(&constant(f), Vec3::zeros(), 1e-3, 6.0, false), BAND).unwrap();
        assert!(settled < 2.0, "{mag}: {settled}");
    }
}

#[test]
fn fixed_time_observer_beats_high_gain_at_disturbance_scale() {
    let f = Vec3::new(1.0, 0.0, 0.0);
    let fx = settle_time(&library_errors(&constant(f), Vec3::zeros(), 1e-3, 5.0, false), BAND).unwrap();
    let hg = settle_time(&library_errors(&constant(f), Vec3::zeros(), 1e-3, 5.0, true), BAND).unwrap();
    assert!(fx < hg, "fxtdo {fx}, hgdo {hg}");
}

#[test]
fn high_gain_observer_matches_closed_form() {
    // Error dynamics ė₁ = e_f − 15 e₁, ė_f = −50 e₁ with e₁(0) = 0 give
    // e_f(t) = e₀ (2e^{−5t} − e^{−10t}).
    let e0 = 0.7;
    let h = 1e-3;
    let g = HgdoGains::default();
    // Zero disturbance and a constant measurement, so holding it over a step is exact.
    let mut st = ObserverState::new(Vec3::zeros(), Vec3::new(-e0, 0.0, 0.0));
    for k in 1..=2000 {
        st = hgdo_step_with(&st, &Vec3::zeros(), &Vec3::zeros(), &g, h, Discretization::Rk4).unwrap();
        let t = k as f64 * h;
        let expected = e0 * (2.0 * (-5.0 * t).exp() - (-10.0 * t).exp());
        assert!((-st.f_hat.x - expected).abs() < 1e-9, "t = {t}");
    }
}

#[test]
fn measurement_frame_scales_with_mass() {
    // Estimating on z₁ = m·v with input m·a equals m times the per-unit-mass estimate.
    let (m, h) = (2.5, 1e-3);
    let accel_dist = Vec3::new(0.2, -0.1, 0.05);
    let g = FxtdoGains::default();
    let (mut s1, mut sm) = (ObserverState::default(), ObserverState::default());
    let (mut v, a_in) = (Vec3::zeros(), Vec3::new(0.0, 0.1, -0.2));
    for _ in 0..3000 {
        s1 = fxtdo_step(&s1, &v, &a_in, &g, h).unwrap();
        sm = fxtdo_step(&sm, &(m * v), &(m * a_in), &g, h).unwrap();
        v += h * (a_in + accel_dist);
    }
    assert!((s1.f_hat - accel_dist).norm() < 1e-2);
    assert!((sm.f_hat - m * accel_dist).norm() < 1e-2 * m);
}

