mod common;

use std::f64::consts::PI;

use common::*;
use proptest::prelude::*;
use spectral_coupling::diagnostics::*;
use spectral_coupling::forcing::NoisePath;
use spectral_coupling::integrate::{integrate, StepperConfig, Trajectory};
use spectral_coupling::models::{ModelSpec, State, Variant};

fn ou_trajectory(t_end: f64) -> (ModelSpec, Trajectory) {
    let g = grid(8);
    let spec = nse(0.1).linear();
    let f = forcing(&g, &[0.3]);
    let cfg = StepperConfig::new(&spec, 0.1, t_end, 5);
    let mut path = NoisePath::new(9, 0, f.len(), 0.1);
    let traj = integrate(&spec, &State::zero_for(&spec, &g), &cfg, &f, &mut path).unwrap();
    (spec, traj)
}

#[test]
fn constant_trajectory_has_constant_mean_and_zero_error() {
    let g = grid(8);
    let s = vstate(&g, 1, 1.0, 2.0);
    let traj = Trajectory {
        times: (0..41).map(|i| i as f64 * 0.5).collect(),
        states: vec![s.clone(); 41],
        ledger: Vec::new(),
        budget_residual: vec![0.0; 41],
    };
    let spec = nse(0.1);
    let a = birkhoff_average(&traj, &spec, &Observable::energy(), 0.5, 0.0).unwrap();
    let e = spec.energy_and_dissipation(&s).unwrap().0;
    assert_eq!(a.len(), 40);
    assert!(a.running_mean.iter().all(|m| (m - e).abs() < 1e-12 * e));
    assert_eq!(a.standard_error, 0.0);
}

#[test]
fn short_trajectory_is_rejected() {
    let (spec, traj) = ou_trajectory(5.0);
    let err = birkhoff_average(&traj, &spec, &Observable::energy(), 1.0, 0.0).unwrap_err();
    assert!(matches!(err, DiagnosticsError::InsufficientDuration { .. }));
    let err = birkhoff_average(&traj, &spec, &Observable::energy(), 0.7, 0.0).unwrap_err();
    assert!(matches!(err, DiagnosticsError::Misaligned { .. }));
}

#[test]
fn ou_energy_average_matches_stationary_value() {
    let (spec, traj) = ou_trajectory(4000.0);
    let a = birkhoff_average(&traj, &spec, &Observable::energy(), 0.5, 50.0).unwrap();
    // four first-shell directions of norm² 2π²a², weight 1/|k|², rate 2ν
    let expected = 4.0 * 2.0 * PI * PI * 0.09 / (2.0 * 0.1);
    assert!((a.mean - expected).abs() < 3.0 * a.standard_error, "{} vs {expected} ± {}", a.mean, a.standard_error);
}

#[test]
fn subsampling_preserves_the_limit() {
    let (spec, traj) = ou_trajectory(2000.0);
    let obs = Observable::new("x", ObservableKind::LowModeReal { kx: 1, ky: 0 });
    let a = birkhoff_average(&traj, &spec, &obs, 0.5, 20.0).unwrap();
    let b = birkhoff_average(&traj, &spec, &obs, 1.0, 20.0).unwrap();
    assert!((a.mean - b.mean).abs() < 3.0 * a.standard_error.hypot(b.standard_error));
}

#[test]
fn tail_check_needs_enough_replicas() {
    let g = grid(8);
    let spec = nse(0.1).linear();
    let f = forcing(&g, &[0.05]);
    let cfg = StepperConfig::new(&spec, 0.01, 1.0, 1);
    let err = martingale_tail_check(&spec, &f, &State::zero_for(&spec, &g), &cfg, 0, 10, &[1.0]).unwrap_err();
    assert!(matches!(err, DiagnosticsError::Invalid(_)));
}

#[test]
fn tail_rate_uses_velocity_injection() {
    let g = grid(8);
    let f = forcing(&g, &[0.05]);
    let gamma = tail_rate(&nse(0.1), &f).unwrap();
    assert!((gamma - 0.1 / (4.0 * 2.0 * PI * PI * 0.0025)).abs() < 1e-12);
}

#[test]
fn tail_report_flags_excess() {
    let sups: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
    let r = TailReport::from_sups(1.0, sups, &[1.0, 5.0]);
    assert_eq!(r.rows[0].empirical, 0.9);
    assert!(r.rows[0].exceeds && r.rows[1].exceeds);
    assert_eq!(r.violations(), 2);
}

#[test]
fn inviscid_study_requires_voigt() {
    let g = grid(8);
    let study = LimitStudy {
        spec: nse(0.1),
        forcing: forcing(&g, &[0.1]),
        initial: vstate(&g, 1, 1.0, 1.0),
        dt: 0.01,
        horizon: 0.1,
        sample_every: 1,
        seed: 0,
        observables: vec![Observable::energy()],
    };
    assert!(matches!(inviscid_limit_study(&study, &[0.01], 1), Err(DiagnosticsError::Invalid(_))));
}

#[test]
fn inviscid_study_with_zero_viscosity_has_zero_discrepancy() {
    let g = grid(8);
    let spec = ModelSpec::new(Variant::EulerVoigt { damping: 0.5, alpha: 1.0, eps_visc: 0.0 }).unwrap();
    let study = LimitStudy {
        spec,
        forcing: forcing(&g, &[0.1]),
        initial: vstate(&g, 1, 1.0, 1.0),
        dt: 0.01,
        horizon: 0.5,
        sample_every: 10,
        seed: 0,
        observables: vec![Observable::energy()],
    };
    let r = inviscid_limit_study(&study, &[0.0, 0.02, 0.01], 3).unwrap();
    assert_eq!(r.rows.len(), 3);
    assert_eq!(r.rows[0].discrepancy, 0.0);
    assert!(r.rows[1].discrepancy > r.rows[2].discrepancy);
    assert!(r.rows.iter().all(|row| row.moment_sup > 0.0));
}

#[test]
fn observables_round_trip_through_json() {
    let o = Observable::new("b", ObservableKind::BoundedLipschitz { kx: 0, ky: 1 });
    let s = serde_json::to_string(&o).unwrap();
    assert!(s.contains("bounded-lipschitz"));
    assert_eq!(serde_json::from_str::<Observable>(&s).unwrap(), o);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bounded_observable_is_1_lipschitz_in_rho(seed in any::<u64>(), kx in 0i64..4, ky in 1i64..4, model in 0usize..3) {
        let g = grid(16);
        let spec = [
            nse(0.1),
            ModelSpec::new(Variant::FractionalEuler { gamma: 1.0 }).unwrap(),
            ModelSpec::new(Variant::EulerVoigt { damping: 0.5, alpha: 1.0, eps_visc: 0.0 }).unwrap(),
        ][model].clone();
        let a = vstate(&g, seed, 0.5, 3.0);
        let b = vstate(&g, seed.wrapping_add(1), 0.5, 3.0);
        let obs = Observable::new("b", ObservableKind::BoundedLipschitz { kx, ky });
        let (x, y) = (obs.evaluate(&spec, &a).unwrap(), obs.evaluate(&spec, &b).unwrap());
        prop_assert!(x.abs() <= 1.0 && y.abs() <= 1.0);
        prop_assert!((x - y).abs() <= spec.rho_tilde(&a, &b).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn wave_coordinate_is_1_lipschitz(seed in any::<u64>(), k in 1i64..10) {
        let g = line(64);
        let spec = ModelSpec::new(Variant::SineGordon { damping: 0.5, beta: 1.0 }).unwrap();
        let a = wave_state(&g, seed, 2.0);
        let b = wave_state(&g, seed.wrapping_add(7), 2.0);
        let (x, y) = (lipschitz_coordinate(&spec, &a, k, 0), lipschitz_coordinate(&spec, &b, k, 0));
        prop_assert!((x - y).abs() <= spec.rho_tilde(&a, &b).unwrap() * (1.0 + 1e-12));
    }
}
