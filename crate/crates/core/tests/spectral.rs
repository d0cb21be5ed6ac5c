mod common;

use common::*;
use proptest::prelude::*;
use spectral_coupling::spectral::*;

fn random(n: usize, seed: u64) -> SpectralField {
    vorticity(&grid(n), seed, 0.5, 1.0)
}

#[test]
fn advect_matches_direct_summation() {
    let g = grid(8);
    for seed in 0..5 {
        let xi = vorticity(&g, seed, 0.0, 3.0);
        let vel = biot_savart(&vorticity(&g, seed + 100, 0.0, 2.0)).unwrap();
        let fast = advect(&vel, &xi, true).unwrap();
        let slow = convolution_oracle(&vel, &xi);
        assert!(max_diff(&fast, &slow) < 1e-12, "seed {seed}: {}", max_diff(&fast, &slow));
    }
}

#[test]
fn advect_of_constant_scalar_is_zero() {
    let g = grid(16);
    let vel = biot_savart(&random(16, 4)).unwrap();
    let out = advect(&vel, &SpectralField::scalar(&g), true).unwrap();
    assert!(out.max_abs() < 1e-15);
}

#[test]
fn physical_round_trip() {
    let f = random(16, 9);
    let back = SpectralField::from_physical(f.grid(), &f.to_physical());
    assert!(max_diff(&f, &back) < 1e-14);
}

#[test]
fn parseval_uses_box_volume() {
    let f = random(16, 3);
    let g = f.grid();
    let cell = g.volume() / g.len() as f64;
    let direct: f64 = f.to_physical()[0].iter().map(|x| x * x).sum::<f64>() * cell;
    assert!((direct - f.norm_sq()).abs() < 1e-12 * direct);
}

#[test]
fn mean_zero_is_required_by_biot_savart() {
    let g = grid(8);
    let mut f = SpectralField::scalar(&g);
    f.set_mode(0, 0, 0, 1.0.into());
    assert!(matches!(biot_savart(&f), Err(SpectralError::MeanZeroViolation { .. })));
}

#[test]
fn cutoff_splits_shells() {
    let g = grid(16);
    let c = GalerkinCutoff::new(&g, 2f64.sqrt());
    assert_eq!(c.lambda_n(), 4.0);
    let f = random(16, 1);
    let low = galerkin_project(&f, &c, Part::Low);
    let high = galerkin_project(&f, &c, Part::High);
    assert!(max_diff(&(&low + &high), &f) < 1e-15);
    assert!(low.inner(&high).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn curl_inverts_biot_savart(seed in any::<u64>(), n in prop::sample::select(vec![8usize, 16, 32])) {
        let xi = random(n, seed);
        let vel = biot_savart(&xi).unwrap();
        prop_assert!(max_diff(&curl(&vel).unwrap(), &xi) < 1e-12);
        prop_assert!(vel.divergence_defect() < 1e-12);
    }

    #[test]
    fn transport_is_skew(seed in any::<u64>()) {
        let xi = random(16, seed);
        let vel = biot_savart(&random(16, seed ^ 0x55)).unwrap();
        let a = advect(&vel, &xi, true).unwrap();
        prop_assert!(a.inner(&xi).abs() < 1e-10 * (1.0 + a.norm() * xi.norm()));
    }

    #[test]
    fn fractional_powers_compose(seed in any::<u64>(), s in -2.0f64..2.0, t in -2.0f64..2.0) {
        let f = random(16, seed);
        let lhs = fractional_laplacian(&fractional_laplacian(&f, s).unwrap(), t).unwrap();
        let rhs = fractional_laplacian(&f, s + t).unwrap();
        prop_assert!(max_diff(&lhs, &rhs) < 1e-10 * (1.0 + rhs.max_abs()));
    }

    #[test]
    fn leray_is_idempotent_and_solenoidal(seed in any::<u64>()) {
        let g = grid(16);
        let a = vorticity(&g, seed, 0.0, 1.0);
        let b = vorticity(&g, seed.wrapping_add(1), 0.0, 1.0);
        let mut data = a.data().to_vec();
        data.extend_from_slice(b.data());
        let f = SpectralField::from_coefficients(&g, 2, data);
        let p = leray_project(&f).unwrap();
        prop_assert!(p.divergence_defect() < 1e-12);
        prop_assert!(max_diff(&leray_project(&p).unwrap(), &p) < 1e-14);
    }
}
