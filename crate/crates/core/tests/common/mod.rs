#![allow(dead_code)]

use std::sync::Arc;

use num_complex::Complex64;
use spectral_coupling::forcing::ForcingSet;
use spectral_coupling::models::{ModelSpec, State, Variant, WaveState};
use spectral_coupling::rng::stream_rng;
use spectral_coupling::spectral::{Grid, SpectralField};

pub fn grid(n: usize) -> Arc<Grid> {
    Grid::new(n, n).unwrap()
}

pub fn line(n: usize) -> Arc<Grid> {
    Grid::new(n, 1).unwrap()
}

/// Random mean-zero vorticity with `|ξ̂_k| ∝ |k|^{-p}`, scaled to `‖ξ‖ = norm`.
pub fn vorticity(grid: &Arc<Grid>, seed: u64, p: f64, norm: f64) -> SpectralField {
    let mut rng = stream_rng(seed, 0, 99);
    let f = SpectralField::random_scalar(grid, &mut rng, |k| k.powf(-p));
    f.scaled(norm / f.norm())
}

pub fn vstate(grid: &Arc<Grid>, seed: u64, p: f64, norm: f64) -> State {
    State::Vorticity(vorticity(grid, seed, p, norm))
}

pub fn wave_state(grid: &Arc<Grid>, seed: u64, norm: f64) -> State {
    let mut rng = stream_rng(seed, 0, 98);
    let u = SpectralField::random_odd(grid, &mut rng, |k| k.powf(-2.0));
    let v = SpectralField::random_odd(grid, &mut rng, |k| k.powf(-1.0));
    let s = norm / (u.norm_sq() + v.norm_sq()).sqrt();
    State::Wave(WaveState { u: u.scaled(s), v: v.scaled(s) })
}

pub fn nse(nu: f64) -> ModelSpec {
    ModelSpec::new(Variant::NavierStokes { nu }).unwrap()
}

pub fn forcing(grid: &Arc<Grid>, amps: &[f64]) -> ForcingSet {
    ForcingSet::canonical(grid, amps).unwrap()
}

/// Direct-summation `u·∇ξ` over all dealiased triads `p + q = k`.
pub fn convolution_oracle(vel: &SpectralField, scalar: &SpectralField) -> SpectralField {
    let g = scalar.grid().clone();
    let n = g.len();
    let mut out = vec![Complex64::default(); n];
    let (u, v, t) = (vel.component(0), vel.component(1), scalar.component(0));
    for p in 0..n {
        if !g.is_dealiased(p) {
            continue;
        }
        for q in 0..n {
            if !g.is_dealiased(q) {
                continue;
            }
            let kx = (g.kx(p) + g.kx(q)) as i64;
            let ky = (g.ky(p) + g.ky(q)) as i64;
            let Some(k) = g.index_of(kx, ky) else { continue };
            if !g.is_dealiased(k) {
                continue;
            }
            let i = Complex64::i();
            out[k] += u[p] * i * g.kx(q) * t[q] + v[p] * i * g.ky(q) * t[q];
        }
    }
    SpectralField::from_coefficients(&g, 1, out)
}

pub fn max_diff(a: &SpectralField, b: &SpectralField) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
