//! Forced directions, Wiener increments, and the Girsanov/Novikov bookkeeping
//! that gates the coupling control.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rng::{standard_normal, stream_rng, tag, word_pos_for_draws};
use crate::spectral::{biot_savart, GalerkinCutoff, Grid, SpectralField};

/// Relative residual above which a control is declared outside `Range(σ)`.
pub const RANGE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForcingError {
    #[error("control leaves the range of the forcing: residual {residual:.3e} vs norm {norm:.3e}")]
    RangeViolation { residual: f64, norm: f64 },
    #[error("forced directions are linearly dependent")]
    Degenerate,
    #[error("mode ({kx}, {ky}) inside the cutoff has no forcing direction; need Range(σ) ⊃ H_N")]
    CoverageViolation { kx: i64, ky: i64 },
    #[error("invalid forcing: {0}")]
    Invalid(String),
}

/// Which trigonometric function a canonical direction carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Cos,
    Sin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForcedMode {
    pub kx: i64,
    pub ky: i64,
    pub phase: Phase,
    pub amplitude: f64,
}

/// The forced directions in the prognostic variable (vorticity for fluid
/// models, the `v` equation for the wave pair). For fluid models the velocity
/// directions `σ_k` with `curl σ_k = ρ_k` are kept alongside.
#[derive(Clone, Debug)]
pub struct ForcingSet {
    directions: Vec<SpectralField>,
    velocity: Option<Vec<SpectralField>>,
    modes: Vec<ForcedMode>,
    gram: DMatrix<f64>,
    norm_sq: f64,
}

fn half_plane(kx: i64, ky: i64) -> bool {
    kx > 0 || (kx == 0 && ky > 0)
}

impl ForcingSet {
    /// Cosine/sine pairs on the lowest `shell_amplitudes.len()` shells of `|k|²`,
    /// shell `s` carrying amplitude `shell_amplitudes[s]`. On a one-dimensional
    /// grid the directions are sine modes `a_j sin(jx)` only (Dirichlet basis).
    pub fn canonical(grid: &Arc<Grid>, shell_amplitudes: &[f64]) -> Result<Self, ForcingError> {
        if shell_amplitudes.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(ForcingError::Invalid("shell amplitudes must be finite and nonnegative".into()));
        }
        let shells = grid.eigenvalues();
        if shell_amplitudes.len() > shells.len() {
            return Err(ForcingError::Invalid(format!(
                "{} shells requested but the grid has {}",
                shell_amplitudes.len(),
                shells.len()
            )));
        }
        let mut modes = Vec::new();
        for (s, &amp) in shell_amplitudes.iter().enumerate() {
            if amp == 0.0 {
                continue;
            }
            let k2 = shells[s];
            let mut sites: Vec<(i64, i64)> = (0..grid.len())
                .filter(|&i| grid.is_active(i) && grid.k2(i) == k2)
                .map(|i| (grid.kx(i) as i64, grid.ky(i) as i64))
                .filter(|&(a, b)| half_plane(a, b))
                .collect();
            sites.sort();
            for (kx, ky) in sites {
                let i = grid.index_of(kx, ky).expect("active site");
                if !grid.is_dealiased(i) {
                    return Err(ForcingError::Invalid(format!("forced mode ({kx}, {ky}) lies outside the dealiased band")));
                }
                if grid.dim() == 2 {
                    modes.push(ForcedMode { kx, ky, phase: Phase::Cos, amplitude: amp });
                }
                modes.push(ForcedMode { kx, ky, phase: Phase::Sin, amplitude: amp });
            }
        }
        let directions = modes.iter().map(|m| mode_field(grid, m)).collect();
        Self::from_parts(directions, modes, grid.dim() == 2)
    }

    /// Arbitrary directions; rejected unless linearly independent.
    pub fn from_directions(directions: Vec<SpectralField>, with_velocity: bool) -> Result<Self, ForcingError> {
        Self::from_parts(directions, Vec::new(), with_velocity)
    }

    fn from_parts(directions: Vec<SpectralField>, modes: Vec<ForcedMode>, with_velocity: bool) -> Result<Self, ForcingError> {
        let d = directions.len();
        let gram = DMatrix::from_fn(d, d, |i, j| directions[i].inner(&directions[j]));
        if d > 0 {
            let chol = gram.clone().cholesky().ok_or(ForcingError::Degenerate)?;
            let l = chol.l();
            let max = gram.diagonal().max();
            if (0..d).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * max) {
                return Err(ForcingError::Degenerate);
            }
        }
        let velocity = if with_velocity {
            let mut v = Vec::with_capacity(d);
            for r in &directions {
                v.push(biot_savart(r).map_err(|e| ForcingError::Invalid(e.to_string()))?);
            }
            Some(v)
        } else {
            None
        };
        let norm_sq = directions.iter().map(SpectralField::norm_sq).sum();
        Ok(Self { directions, velocity, modes, gram, norm_sq })
    }

    pub fn empty(grid: &Arc<Grid>) -> Self {
        Self::canonical(grid, &[]).expect("empty forcing is valid")
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[SpectralField] {
        &self.directions
    }

    pub fn velocity_directions(&self) -> Option<&[SpectralField]> {
        self.velocity.as_deref()
    }

    pub fn modes(&self) -> &[ForcedMode] {
        &self.modes
    }

    /// `|σ|² = Σ_k ‖σ_k‖²_{L²}` in the prognostic variable.
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// `Σ_k ‖σ_k‖²` for the velocity directions (fluid models).
    pub fn velocity_norm_sq(&self) -> Option<f64> {
        self.velocity.as_ref().map(|v| v.iter().map(SpectralField::norm_sq).sum())
    }

    /// `Σ_k w(k)|ρ̂|²`-style weighted injection rate, e.g. `‖Λ^{-α/2}ρ‖²`.
    pub fn weighted_norm_sq(&self, weight: impl Fn(usize) -> f64 + Copy) -> f64 {
        self.directions.iter().map(|r| r.weighted_norm_sq(weight)).sum()
    }

    /// Per-mode noise variance `Σ_j |ρ̂_j(k)|²` (flat index).
    pub fn mode_variance(&self, idx: usize) -> f64 {
        self.directions.iter().map(|r| r.component(0)[idx].norm_sqr()).sum()
    }

    /// `Σ_j ρ_j ΔW_j`.
    pub fn noise_field(&self, grid: &Arc<Grid>, increments: &[f64]) -> SpectralField {
        assert_eq!(increments.len(), self.len());
        let mut out = SpectralField::scalar(grid);
        for (r, &dw) in self.directions.iter().zip(increments) {
            if dw != 0.0 {
                out.axpy(dw, r);
            }
        }
        out
    }

    /// Coefficients `h` with `Σ h_j ρ_j = g`: the pseudo-inverse `σ⁻¹ g`.
    pub fn pseudo_inverse_shift(&self, g: &SpectralField) -> Result<Vec<f64>, ForcingError> {
        let d = self.len();
        let norm = g.norm();
        if norm == 0.0 {
            return Ok(vec![0.0; d]);
        }
        if d == 0 {
            return Err(ForcingError::RangeViolation { residual: norm, norm });
        }
        let rhs = DVector::from_iterator(d, self.directions.iter().map(|r| g.inner(r)));
        let h = self.gram.clone().cholesky().ok_or(ForcingError::Degenerate)?.solve(&rhs);
        let mut recon = SpectralField::scalar(g.grid());
        for (r, &c) in self.directions.iter().zip(h.iter()) {
            recon.axpy(c, r);
        }
        let residual = (&recon - g).norm();
        if residual > RANGE_TOLERANCE * norm {
            return Err(ForcingError::RangeViolation { residual, norm });
        }
        Ok(h.iter().copied().collect())
    }

    /// Every nonzero mode kept by `cutoff` must be reachable by the forcing.
    pub fn check_coverage(&self, grid: &Arc<Grid>, cutoff: &GalerkinCutoff) -> Result<(), ForcingError> {
        for i in 0..grid.len() {
            let k2 = grid.k2(i);
            if !grid.is_active(i) || k2 == 0.0 || !cutoff.is_low(k2) {
                continue;
            }
            let (kx, ky) = (grid.kx(i) as i64, grid.ky(i) as i64);
            if !half_plane(kx, ky) {
                continue;
            }
            let phases: &[Phase] = if grid.dim() == 1 { &[Phase::Sin] } else { &[Phase::Cos, Phase::Sin] };
            for &phase in phases {
                let probe = mode_field(grid, &ForcedMode { kx, ky, phase, amplitude: 1.0 });
                if self.pseudo_inverse_shift(&probe).is_err() {
                    return Err(ForcingError::CoverageViolation { kx, ky });
                }
            }
        }
        Ok(())
    }
}

/// `a cos(k·x)` or `a sin(k·x)` as a spectral field.
pub fn mode_field(grid: &Arc<Grid>, m: &ForcedMode) -> SpectralField {
    let mut f = SpectralField::scalar(grid);
    let c = match m.phase {
        Phase::Cos => Complex64::new(0.5 * m.amplitude, 0.0),
        Phase::Sin => Complex64::new(0.0, -0.5 * m.amplitude),
    };
    f.set_mode(0, m.kx, m.ky, c);
    f
}

/// Reproducible Wiener increments for one replica.
///
/// Increment `n` is the sum of `substeps` fine Gaussian draws, so a path run
/// at `dt` and one run at `dt / 2` with twice the substeps agree on the
/// underlying Brownian motion.
#[derive(Clone, Debug)]
pub struct NoisePath {
    seed: u64,
    replica_id: u64,
    dims: usize,
    dt: f64,
    substeps: u64,
    step: u64,
    rng: ChaCha8Rng,
    aux: ChaCha8Rng,
}

impl NoisePath {
    pub fn new(seed: u64, replica_id: u64, dims: usize, dt: f64) -> Self {
        Self::refined(seed, replica_id, dims, dt, 1)
    }

    /// Path whose increments over `dt` are built from `substeps` fine draws.
    pub fn refined(seed: u64, replica_id: u64, dims: usize, dt: f64, substeps: u64) -> Self {
        assert!(dt > 0.0 && dt.is_finite(), "dt must be positive");
        assert!(substeps >= 1);
        Self {
            seed,
            replica_id,
            dims,
            dt,
            substeps,
            step: 0,
            rng: stream_rng(seed, replica_id, tag::NOISE),
            aux: stream_rng(seed, replica_id, tag::AUXILIARY),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replica_id(&self) -> u64 {
        self.replica_id
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Jump to an arbitrary step without drawing the intermediate increments.
    pub fn seek(&mut self, step: u64) {
        self.step = step;
        self.rng.set_word_pos(word_pos_for_draws(step * self.substeps * self.dims as u64));
    }

    /// `dims` independent `N(0, dt)` draws; advances the step counter.
    pub fn sample_increments(&mut self) -> Vec<f64> {
        let mut out = vec![0.0; self.dims];
        for _ in 0..self.substeps {
            for x in out.iter_mut() {
                *x += standard_normal(&mut self.rng);
            }
        }
        let scale = (self.dt / self.substeps as f64).sqrt();
        out.iter_mut().for_each(|x| *x *= scale);
        self.step += 1;
        out
    }

    /// Independent standard normals from a separate stream, for schemes that
    /// need more than the increment per step (e.g. exact wave-block noise).
    pub fn sample_auxiliary(&mut self, count: usize) -> Vec<f64> {
        (0..count).map(|_| standard_normal(&mut self.aux)).collect()
    }

    /// Uniform draw from the auxiliary stream.
    pub fn auxiliary_uniform(&mut self) -> f64 {
        self.aux.random::<f64>()
    }
}

/// Running Novikov cost `∫|σ⁻¹G|² ds`, the budget `K`, and the stopping time `τ_K`.
#[derive(Clone, Debug, PartialEq)]
pub struct GirsanovLedger {
    cost: f64,
    budget: f64,
    time: f64,
    stop_time: Option<f64>,
    max_increment: f64,
}

impl GirsanovLedger {
    /// A budget of zero (or less) is exhausted from the start.
    pub fn new(budget: f64) -> Self {
        let stop_time = (budget <= 0.0).then_some(0.0);
        Self { cost: 0.0, budget, time: 0.0, stop_time, max_increment: 0.0 }
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn stopped(&self) -> bool {
        self.stop_time.is_some()
    }

    pub fn stop_time(&self) -> Option<f64> {
        self.stop_time
    }

    /// Whether the control may act during the next step.
    pub fn is_active(&self) -> bool {
        !self.stopped()
    }

    pub fn max_increment(&self) -> f64 {
        self.max_increment
    }

    /// `cost ≤ budget + largest single-step increment`.
    pub fn within_budget(&self) -> bool {
        self.cost <= self.budget + self.max_increment
    }

    /// Advance one step of length `dt` during which the shift `h` acted.
    pub fn update(&mut self, h: &[f64], dt: f64) {
        assert!(dt > 0.0);
        self.time += dt;
        if self.stopped() {
            return;
        }
        let inc = h.iter().map(|x| x * x).sum::<f64>() * dt;
        self.cost += inc;
        self.max_increment = self.max_increment.max(inc);
        if self.cost >= self.budget {
            self.stop_time = Some(self.time);
        }
    }

    pub fn updated(&self, h: &[f64], dt: f64) -> Self {
        let mut next = self.clone();
        next.update(h, dt);
        next
    }
}

/// Sample mean and variance helper used by the increment tests.
#[cfg(test)]
fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
}
