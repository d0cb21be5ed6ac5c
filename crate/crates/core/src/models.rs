//! The four SPDE right-hand sides: linear symbol, nonlinear drift, energy
//! functionals, coupling control and the coupling metric ρ̃.
//!
//! Fluid models are integrated in vorticity on the 2D torus. The damped
//! sine-Gordon pair lives on `(0, π)` with Dirichlet data, realized as odd
//! fields on a one-dimensional periodic grid.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{
    advect, biot_savart, fractional_laplacian, galerkin_project, l4_norm, pointwise, sobolev_norm, GalerkinCutoff,
    Grid, Part, SpectralError, SpectralField,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("state does not match the model: {0}")]
    StateKind(&'static str),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Variant {
    /// `dξ + (u·∇ξ - νΔξ) dt = curl f dt + Σ ρ_k dW^k`
    NavierStokes { nu: f64 },
    /// `dξ + (Λ^γ ξ + u·∇ξ) dt = Σ ρ_k dW^k`
    FractionalEuler { gamma: f64 },
    /// `dξ + (γ ξ - ε Δξ + u_α·∇ξ_α) dt = Σ ρ_k dW^k`, `ξ_α = Λ^{-α} ξ`
    EulerVoigt { damping: f64, alpha: f64, eps_visc: f64 },
    /// `dv + (α v - Δu + β sin u) dt = Σ σ_k dW^k`, `du = v dt`
    SineGordon { damping: f64, beta: f64 },
}

/// Per-mode linear part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LinearSymbol {
    /// `∂_t ŝ = -m ŝ`
    Scalar(f64),
    /// `∂_t (û, v̂) = M (û, v̂)`
    Block([[f64; 2]; 2]),
}

#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub variant: Variant,
    /// Switch the nonlinear drift off (the "linear model").
    pub nonlinear: bool,
    /// Constant deterministic forcing in the prognostic variable.
    pub body_force: Option<SpectralField>,
    /// Order `r` of the monitored `‖u‖_{H^r}` (fractional Euler).
    pub sobolev_r: f64,
}

impl ModelSpec {
    pub fn new(variant: Variant) -> Result<Self, ModelError> {
        let spec = Self::unchecked(variant);
        spec.validate()?;
        Ok(spec)
    }

    /// No parameter validation; for limiting cases such as an undamped wave.
    pub fn unchecked(variant: Variant) -> Self {
        Self { variant, nonlinear: true, body_force: None, sobolev_r: 3.0 }
    }

    pub fn linear(mut self) -> Self {
        self.nonlinear = false;
        self
    }

    pub fn with_body_force(mut self, f: SpectralField) -> Self {
        self.body_force = Some(f);
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidParameter(msg));
        let finite = |x: f64| x.is_finite();
        match self.variant {
            Variant::NavierStokes { nu } if !(finite(nu) && nu > 0.0) => bad(format!("nu must be positive, got {nu}")),
            Variant::FractionalEuler { gamma } if !(finite(gamma) && gamma > 0.0 && gamma <= 2.0) => {
                bad(format!("gamma must lie in (0, 2], got {gamma}"))
            }
            Variant::EulerVoigt { damping, alpha, eps_visc } => {
                if !(finite(damping) && damping >= 0.0) {
                    bad(format!("damping must be nonnegative, got {damping}"))
                } else if !(finite(alpha) && alpha >= 2.0 / 3.0) {
                    bad(format!("alpha must be at least 2/3, got {alpha}"))
                } else if !(finite(eps_visc) && eps_visc >= 0.0) {
                    bad(format!("eps_visc must be nonnegative, got {eps_visc}"))
                } else {
                    Ok(())
                }
            }
            Variant::SineGordon { damping, beta } => {
                if !(finite(damping) && damping > 0.0) {
                    bad(format!("damping must be positive, got {damping}"))
                } else if !finite(beta) {
                    bad(format!("beta must be finite, got {beta}"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn is_wave(&self) -> bool {
        matches!(self.variant, Variant::SineGordon { .. })
    }

    pub fn is_fluid(&self) -> bool {
        !self.is_wave()
    }

    /// Voigt regularization order, if any.
    pub fn voigt_alpha(&self) -> Option<f64> {
        match self.variant {
            Variant::EulerVoigt { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.variant {
            Variant::NavierStokes { .. } => "navier-stokes",
            Variant::FractionalEuler { .. } => "fractional-euler",
            Variant::EulerVoigt { .. } => "euler-voigt",
            Variant::SineGordon { .. } => "sine-gordon",
        }
    }

    /// Linear symbol at eigenvalue `k2 = |k|²`.
    pub fn linear_symbol(&self, k2: f64) -> LinearSymbol {
        match self.variant {
            Variant::NavierStokes { nu } => LinearSymbol::Scalar(nu * k2),
            Variant::FractionalEuler { gamma } => {
                LinearSymbol::Scalar(if k2 == 0.0 { 0.0 } else { k2.powf(0.5 * gamma) })
            }
            Variant::EulerVoigt { damping, eps_visc, .. } => LinearSymbol::Scalar(damping + eps_visc * k2),
            Variant::SineGordon { damping, .. } => LinearSymbol::Block([[0.0, 1.0], [-k2, -damping]]),
        }
    }

    /// Scalar symbol `m(k)`; panics for the wave pair.
    pub fn scalar_symbol(&self, k2: f64) -> f64 {
        match self.linear_symbol(k2) {
            LinearSymbol::Scalar(m) => m,
            LinearSymbol::Block(_) => panic!("wave models have a block symbol"),
        }
    }

    /// Nonlinear part of the drift (no body force, no control).
    pub fn nonlinear_drift(&self, state: &State) -> Result<State, ModelError> {
        match (&self.variant, state) {
            (Variant::SineGordon { beta, .. }, State::Wave(w)) => {
                let grid = w.u.grid().clone();
                let mut dv = SpectralField::scalar(&grid);
                if self.nonlinear && *beta != 0.0 {
                    dv = pointwise(&w.u, f64::sin).scaled(-beta);
                    make_odd(&mut dv);
                }
                Ok(State::Wave(WaveState { u: SpectralField::scalar(&grid), v: dv }))
            }
            (Variant::SineGordon { .. }, _) => Err(ModelError::StateKind("sine-Gordon needs a wave state")),
            (_, State::Vorticity(xi)) => {
                if !xi.is_mean_zero() {
                    return Err(SpectralError::MeanZeroViolation { op: "nonlinear_drift" }.into());
                }
                if !self.nonlinear {
                    return Ok(State::Vorticity(SpectralField::scalar(xi.grid())));
                }
                let transported = match self.variant {
                    Variant::EulerVoigt { alpha, .. } => fractional_laplacian(xi, -alpha)?,
                    _ => xi.clone(),
                };
                let vel = biot_savart(&transported)?;
                let mut out = advect(&vel, &transported, true)?.scaled(-1.0);
                out.remove_mean();
                Ok(State::Vorticity(out))
            }
            (_, State::Wave(_)) => Err(ModelError::StateKind("fluid models need a vorticity state")),
        }
    }

    /// Nonlinear drift plus the constant body force, in the forced equation.
    pub fn drift(&self, state: &State) -> Result<SpectralField, ModelError> {
        let mut d = match self.nonlinear_drift(state)? {
            State::Vorticity(f) => f,
            State::Wave(w) => w.v,
        };
        if let Some(f) = &self.body_force {
            d += f;
        }
        Ok(d)
    }

    /// Named energy functionals of a state.
    pub fn energy_functionals(&self, state: &State) -> Result<BTreeMap<String, f64>, ModelError> {
        let mut out = BTreeMap::new();
        match (&self.variant, state) {
            (Variant::NavierStokes { .. }, State::Vorticity(xi)) => {
                out.insert("velocity_l2_sq".into(), sobolev_norm(xi, -1.0)?.powi(2));
                out.insert("velocity_h1_sq".into(), xi.norm_sq());
            }
            (Variant::FractionalEuler { .. }, State::Vorticity(xi)) => {
                out.insert("vorticity_l2_sq".into(), xi.norm_sq());
                out.insert("vorticity_l4".into(), l4_norm(xi));
                out.insert("velocity_hr".into(), sobolev_norm(xi, self.sobolev_r - 1.0)?);
            }
            (Variant::EulerVoigt { alpha, .. }, State::Vorticity(xi)) => {
                out.insert("velocity_voigt_sq".into(), sobolev_norm(xi, -0.5 * alpha - 1.0)?.powi(2));
                out.insert("vorticity_voigt_sq".into(), sobolev_norm(xi, -0.5 * alpha)?.powi(2));
            }
            (Variant::SineGordon { .. }, State::Wave(w)) => {
                let eps = self.eps_shift(w.u.grid())?;
                out.insert("shifted_l2_sq".into(), w.shifted(eps).norm_sq());
                out.insert("displacement_h1_sq".into(), sobolev_norm(&w.u, 1.0)?.powi(2));
                out.insert("velocity_l2_sq".into(), w.v.norm_sq());
            }
            _ => return Err(ModelError::StateKind("state kind does not match the model")),
        }
        Ok(out)
    }

    /// Energy `E` and dissipation `D` with `dE = (-2D + 2⟨s, f⟩_w) dt + 2⟨s, σdW⟩_w + |σdW|²_w`,
    /// where `⟨·,·⟩_w` is the weighted pairing of [`Self::energy_weight`]
    /// taken on the forced component. The nonlinear drift does not appear.
    pub fn energy_and_dissipation(&self, state: &State) -> Result<(f64, f64), ModelError> {
        Ok(match (&self.variant, state) {
            (Variant::NavierStokes { nu }, State::Vorticity(xi)) => (sobolev_norm(xi, -1.0)?.powi(2), nu * xi.norm_sq()),
            (Variant::FractionalEuler { gamma }, State::Vorticity(xi)) => {
                (xi.norm_sq(), sobolev_norm(xi, 0.5 * gamma)?.powi(2))
            }
            (Variant::EulerVoigt { damping, alpha, eps_visc }, State::Vorticity(xi)) => {
                let e = sobolev_norm(xi, -0.5 * alpha)?.powi(2);
                (e, damping * e + eps_visc * sobolev_norm(xi, 1.0 - 0.5 * alpha)?.powi(2))
            }
            (Variant::SineGordon { damping, beta }, State::Wave(w)) => {
                let mut e = w.v.norm_sq() + sobolev_norm(&w.u, 1.0)?.powi(2);
                if self.nonlinear && *beta != 0.0 {
                    let potential = pointwise(&w.u, |x| 1.0 - x.cos());
                    e += 2.0 * beta * potential.component(0)[0].re * w.u.grid().volume();
                }
                (e, damping * w.v.norm_sq())
            }
            _ => return Err(ModelError::StateKind("state kind does not match the model")),
        })
    }

    /// Per-mode weight of the energy pairing on the forced component.
    pub fn energy_weight(&self, k2: f64) -> f64 {
        match self.variant {
            Variant::NavierStokes { .. } if k2 > 0.0 => 1.0 / k2,
            Variant::EulerVoigt { alpha, .. } if k2 > 0.0 => k2.powf(-0.5 * alpha),
            Variant::NavierStokes { .. } | Variant::EulerVoigt { .. } => 0.0,
            Variant::FractionalEuler { .. } | Variant::SineGordon { .. } => 1.0,
        }
    }

    /// Mean energy injection rate `|σ|²_w` of the noise.
    pub fn injection_rate(&self, forcing: &crate::forcing::ForcingSet) -> f64 {
        match forcing.directions().first() {
            Some(d) => {
                let grid = d.grid().clone();
                forcing.weighted_norm_sq(|i| self.energy_weight(grid.k2(i)))
            }
            None => 0.0,
        }
    }

    /// Control acting on the shadow's forced equation.
    ///
    /// Fluids: `gain · P_N(ξ - ξ̃)`. Sine-Gordon: `β · P_N(sin u - sin ũ)`.
    pub fn coupling_control(
        &self,
        state: &State,
        shadow: &State,
        gain: f64,
        cutoff: &GalerkinCutoff,
    ) -> Result<SpectralField, ModelError> {
        match (&self.variant, state, shadow) {
            (Variant::SineGordon { beta, .. }, State::Wave(a), State::Wave(b)) => {
                a.u.check_grid(&b.u)?;
                if a.u == b.u {
                    return Ok(SpectralField::scalar(a.u.grid()));
                }
                let diff = &pointwise(&a.u, f64::sin) - &pointwise(&b.u, f64::sin);
                let mut g = galerkin_project(&diff, cutoff, Part::Low).scaled(*beta);
                make_odd(&mut g);
                Ok(g)
            }
            (Variant::SineGordon { .. }, _, _) => Err(ModelError::StateKind("sine-Gordon needs wave states")),
            (_, State::Vorticity(a), State::Vorticity(b)) => {
                a.check_grid(b)?;
                Ok(galerkin_project(&(a - b), cutoff, Part::Low).scaled(gain))
            }
            _ => Err(ModelError::StateKind("fluid models need vorticity states")),
        }
    }

    /// Distance in which coupled pairs are expected to converge.
    pub fn rho_tilde(&self, a: &State, b: &State) -> Result<f64, ModelError> {
        match (&self.variant, a, b) {
            (Variant::SineGordon { .. }, State::Wave(x), State::Wave(y)) => {
                x.u.check_grid(&y.u)?;
                let eps = self.eps_shift(x.u.grid())?;
                let w = &x.u - &y.u;
                let mut yv = &x.v - &y.v;
                yv.axpy(eps, &w);
                Ok((yv.norm_sq() + sobolev_norm(&w, 1.0)?.powi(2)).sqrt())
            }
            (Variant::EulerVoigt { alpha, .. }, State::Vorticity(x), State::Vorticity(y)) => {
                x.check_grid(y)?;
                Ok(sobolev_norm(&(x - y), -0.5 * alpha - 1.0)?)
            }
            (Variant::SineGordon { .. }, _, _) => Err(ModelError::StateKind("sine-Gordon needs wave states")),
            (_, State::Vorticity(x), State::Vorticity(y)) => {
                x.check_grid(y)?;
                Ok(sobolev_norm(&(x - y), -1.0)?)
            }
            _ => Err(ModelError::StateKind("fluid models need vorticity states")),
        }
    }

    /// `ε = min{λ₁/α, α/2, √(λ₁/2)}` with `λ₁` the smallest Dirichlet eigenvalue.
    pub fn eps_shift(&self, grid: &Arc<Grid>) -> Result<f64, ModelError> {
        match self.variant {
            Variant::SineGordon { damping, .. } => {
                let lambda1 = grid.eigenvalues().first().copied().unwrap_or(1.0);
                Ok(eps_shift_formula(lambda1, damping))
            }
            _ => Err(ModelError::StateKind("eps_shift is defined for the wave model only")),
        }
    }
}

pub fn eps_shift_formula(lambda1: f64, damping: f64) -> f64 {
    (lambda1 / damping).min(0.5 * damping).min((0.5 * lambda1).sqrt())
}

/// Keep only the sine part of a one-dimensional field (purely imaginary coefficients).
pub fn make_odd(f: &mut SpectralField) {
    for z in f.data_mut() {
        z.re = 0.0;
    }
}

/// Displacement/velocity pair of the wave equation.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveState {
    pub u: SpectralField,
    pub v: SpectralField,
}

impl WaveState {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self { u: SpectralField::scalar(grid), v: SpectralField::scalar(grid) }
    }

    /// `r = v + ε u`
    pub fn shifted(&self, eps: f64) -> SpectralField {
        let mut r = self.v.clone();
        r.axpy(eps, &self.u);
        r
    }

    /// `½(|v|² + ‖u‖²) ≤ |r|² + ‖u‖² ≤ 2(|v|² + ‖u‖²)`
    pub fn norm_equivalence_holds(&self, eps: f64) -> bool {
        let h1 = sobolev_norm(&self.u, 1.0).map(|x| x * x).unwrap_or(f64::NAN);
        let base = self.v.norm_sq() + h1;
        let shifted = self.shifted(eps).norm_sq() + h1;
        let slack = 1e-12 * base;
        0.5 * base <= shifted + slack && shifted <= 2.0 * base + slack
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Vorticity(SpectralField),
    Wave(WaveState),
}

impl State {
    pub fn grid(&self) -> &Arc<Grid> {
        match self {
            State::Vorticity(f) => f.grid(),
            State::Wave(w) => w.u.grid(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            State::Vorticity(f) => f.is_finite(),
            State::Wave(w) => w.u.is_finite() && w.v.is_finite(),
        }
    }

    pub fn zeros_like(&self) -> State {
        match self {
            State::Vorticity(f) => State::Vorticity(SpectralField::scalar(f.grid())),
            State::Wave(w) => State::Wave(WaveState::zeros(w.u.grid())),
        }
    }

    pub fn zero_for(spec: &ModelSpec, grid: &Arc<Grid>) -> State {
        if spec.is_wave() {
            State::Wave(WaveState::zeros(grid))
        } else {
            State::Vorticity(SpectralField::scalar(grid))
        }
    }

    pub fn vorticity(&self) -> Option<&SpectralField> {
        match self {
            State::Vorticity(f) => Some(f),
            State::Wave(_) => None,
        }
    }

    pub fn wave(&self) -> Option<&WaveState> {
        match self {
            State::Wave(w) => Some(w),
            State::Vorticity(_) => None,
        }
    }

    /// Fields in storage order (one for vorticity, `u` then `v` for waves).
    pub fn fields(&self) -> Vec<&SpectralField> {
        match self {
            State::Vorticity(f) => vec![f],
            State::Wave(w) => vec![&w.u, &w.v],
        }
    }

    /// Restrict to the state space the model evolves in: mean-zero, dealiased,
    /// and odd for the wave pair.
    pub fn conformed(self) -> State {
        match self {
            State::Vorticity(mut f) => {
                f.remove_mean();
                f.dealias();
                f.symmetrize();
                State::Vorticity(f)
            }
            State::Wave(mut w) => {
                for f in [&mut w.u, &mut w.v] {
                    f.dealias();
                    make_odd(f);
                    f.symmetrize();
                }
                State::Wave(w)
            }
        }
    }

    /// Single Fourier mode helper: `amp · e^{ik·x} + c.c.` in the vorticity.
    pub fn single_mode(grid: &Arc<Grid>, kx: i64, ky: i64, amp: Complex64) -> State {
        let mut f = SpectralField::scalar(grid);
        f.set_mode(0, kx, ky, amp);
        State::Vorticity(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn random_vorticity(grid: &Arc<Grid>, seed: u64) -> SpectralField {
        let mut rng = stream_rng(seed, 0, 5);
        SpectralField::random_scalar(grid, &mut rng, |k| 1.0 / (1.0 + k * k))
    }

    fn nse() -> ModelSpec {
        ModelSpec::new(Variant::NavierStokes { nu: 0.1 }).unwrap()
    }

    fn voigt(alpha: f64) -> ModelSpec {
        ModelSpec::new(Variant::EulerVoigt { damping: 0.5, alpha, eps_visc: 0.0 }).unwrap()
    }

    fn wave(beta: f64) -> ModelSpec {
        ModelSpec::new(Variant::SineGordon { damping: 0.5, beta }).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelSpec::new(Variant::NavierStokes { nu: 0.0 }).is_err());
        assert!(ModelSpec::new(Variant::FractionalEuler { gamma: 2.5 }).is_err());
        assert!(ModelSpec::new(Variant::FractionalEuler { gamma: 2.0 }).is_ok());
        assert!(ModelSpec::new(Variant::EulerVoigt { damping: 0.5, alpha: 0.5, eps_visc: 0.0 }).is_err());
        assert!(ModelSpec::new(Variant::EulerVoigt { damping: 0.5, alpha: 2.0 / 3.0, eps_visc: 0.0 }).is_ok());
        assert!(ModelSpec::new(Variant::SineGordon { damping: 0.0, beta: 1.0 }).is_err());
    }

    #[test]
    fn linear_symbol_examples() {
        assert_eq!(nse().linear_symbol(1.0), LinearSymbol::Scalar(0.1));
        let frac = ModelSpec::new(Variant::FractionalEuler { gamma: 1.0 }).unwrap();
        assert_eq!(frac.linear_symbol(25.0), LinearSymbol::Scalar(5.0));
        for k2 in [1.0, 4.0, 100.0] {
            assert_eq!(voigt(1.0).linear_symbol(k2), LinearSymbol::Scalar(0.5));
        }
        assert_eq!(wave(1.0).linear_symbol(4.0), LinearSymbol::Block([[0.0, 1.0], [-4.0, -0.5]]));
    }

    #[test]
    fn zero_state_has_zero_drift_and_energy() {
        let g = Grid::new(16, 16).unwrap();
        let w = Grid::new(32, 1).unwrap();
        for spec in [nse(), voigt(1.0), ModelSpec::new(Variant::FractionalEuler { gamma: 1.0 }).unwrap()] {
            let z = State::zero_for(&spec, &g);
            assert_eq!(spec.drift(&z).unwrap().max_abs(), 0.0);
            assert!(spec.energy_functionals(&z).unwrap().values().all(|&e| e == 0.0));
        }
        let z = State::zero_for(&wave(1.0), &w);
        assert_eq!(wave(1.0).drift(&z).unwrap().max_abs(), 0.0);
        assert!(wave(1.0).energy_functionals(&z).unwrap().values().all(|&e| e == 0.0));
    }

    #[test]
    fn drift_rejects_nonzero_mean() {
        let g = Grid::new(8, 8).unwrap();
        let mut xi = random_vorticity(&g, 1);
        xi.data_mut()[0] = Complex64::new(0.5, 0.0);
        assert!(nse().drift(&State::Vorticity(xi)).is_err());
    }

    #[test]
    fn voigt_regularization_shrinks_drift() {
        // only the cross terms between the |k| = 1 and |k| = 2 modes survive,
        // so the drift scales by (1 · 2)^{-α}
        let g = Grid::new(32, 32).unwrap();
        let mut xi = SpectralField::scalar(&g);
        xi.set_mode(0, 1, 0, Complex64::new(1.0, 0.0));
        xi.set_mode(0, 0, 2, Complex64::new(0.0, 1.0));
        let drift_at = |alpha: f64| {
            let spec = ModelSpec::unchecked(Variant::EulerVoigt { damping: 0.0, alpha, eps_visc: 0.0 });
            spec.drift(&State::Vorticity(xi.clone())).unwrap().norm()
        };
        let base = drift_at(0.0);
        assert!(base > 0.0);
        let ratio = drift_at(8.0) / base;
        assert!((ratio / 2f64.powi(-8) - 1.0).abs() < 1e-10, "ratio {ratio:e}");
    }

    #[test]
    fn sine_gordon_drift_taylor() {
        let w = Grid::new(64, 1).unwrap();
        let mut rng = stream_rng(2, 0, 5);
        let shape = SpectralField::random_odd(&w, &mut rng, |k| 1.0 / (k * k));
        let peak = shape.to_physical()[0].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let linear = ModelSpec::new(Variant::SineGordon { damping: 0.5, beta: 0.0 }).unwrap();
        let state = State::Wave(WaveState { u: shape.clone(), v: SpectralField::scalar(&w) });
        assert_eq!(linear.drift(&state).unwrap().max_abs(), 0.0);
        for a in [0.1, 0.01] {
            let u = shape.scaled(a / peak);
            let s = State::Wave(WaveState { u: u.clone(), v: SpectralField::scalar(&w) });
            let d = wave(1.0).drift(&s).unwrap();
            // -sin(u) ≈ -u with pointwise error ≤ |u|³/6 ≤ (a²/6)|u|
            let phys_d = &d.to_physical()[0];
            let phys_u = &u.to_physical()[0];
            for (x, y) in phys_d.iter().zip(phys_u) {
                assert!((x + y).abs() <= a * a / 6.0 * y.abs() + 1e-12);
            }
        }
    }

    #[test]
    fn energy_examples() {
        let g = Grid::new(16, 16).unwrap();
        let mut xi = SpectralField::from_physical(&g, &[(0..g.len()).map(|j| g.point(j).0.sin()).collect()]);
        xi.remove_mean();
        let frac = ModelSpec::new(Variant::FractionalEuler { gamma: 1.0 }).unwrap();
        let e = frac.energy_functionals(&State::Vorticity(xi)).unwrap();
        assert!((e["vorticity_l2_sq"] - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);

        // |k| = 2 mode normalized to |ξ|² = 1
        let mut xi = SpectralField::scalar(&g);
        xi.set_mode(0, 2, 0, Complex64::new(1.0, 0.0));
        let xi = xi.scaled(1.0 / xi.norm());
        let e = voigt(1.0).energy_functionals(&State::Vorticity(xi)).unwrap();
        assert!((e["vorticity_voigt_sq"] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn control_examples() {
        let g = Grid::new(16, 16).unwrap();
        let cut = GalerkinCutoff::new(&g, 2f64.sqrt());
        let a = State::Vorticity(random_vorticity(&g, 3));
        assert_eq!(nse().coupling_control(&a, &a, 0.4, &cut).unwrap().max_abs(), 0.0);

        let delta = Complex64::new(0.3, -0.1);
        let b = State::single_mode(&g, 1, 1, delta);
        let z = State::Vorticity(SpectralField::scalar(&g));
        let c = nse().coupling_control(&b, &z, 0.4, &cut).unwrap();
        assert!((c.coeff(0, 1, 1) - delta * 0.4).norm() < 1e-15);

        let high = State::single_mode(&g, 2, 1, delta);
        assert_eq!(nse().coupling_control(&high, &z, 0.4, &cut).unwrap().max_abs(), 0.0);

        let w = Grid::new(32, 1).unwrap();
        let ws = State::Wave(WaveState::zeros(&w));
        assert!(wave(1.0).coupling_control(&ws, &ws, 0.0, &GalerkinCutoff::new(&w, 3.0)).unwrap().max_abs() == 0.0);
        assert!(nse().coupling_control(&ws, &ws, 1.0, &cut).is_err());
    }

    #[test]
    fn rho_tilde_examples() {
        let g = Grid::new(16, 16).unwrap();
        let a = State::Vorticity(random_vorticity(&g, 4));
        let b = State::Vorticity(random_vorticity(&g, 5));
        for spec in [nse(), voigt(1.0)] {
            assert_eq!(spec.rho_tilde(&a, &a).unwrap(), 0.0);
            let (ab, ba) = (spec.rho_tilde(&a, &b).unwrap(), spec.rho_tilde(&b, &a).unwrap());
            assert!((ab - ba).abs() <= 1e-14 * ab);
        }
        // velocity difference: one |k| = 2 mode with L² size 1 → vorticity amplitude 2
        let mut xi = SpectralField::scalar(&g);
        xi.set_mode(0, 2, 0, Complex64::new(1.0, 0.0));
        let scale = 1.0 / sobolev_norm(&xi, -1.0).unwrap();
        let d = State::Vorticity(xi.scaled(scale));
        let z = State::Vorticity(SpectralField::scalar(&g));
        assert!((voigt(1.0).rho_tilde(&d, &z).unwrap() - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn eps_shift_meets_all_three_constraints() {
        let w = Grid::new(128, 1).unwrap();
        for damping in [0.1, 0.5, 1.0, 1.5, 3.0, 10.0] {
            let spec = ModelSpec::new(Variant::SineGordon { damping, beta: 1.0 }).unwrap();
            let eps = spec.eps_shift(&w).unwrap();
            assert!(eps <= 1.0 / damping && eps <= damping / 2.0 && eps <= 0.5f64.sqrt());
            assert!([1.0 / damping, damping / 2.0, 0.5f64.sqrt()].iter().any(|&c| (c - eps).abs() < 1e-15));
        }
        assert_eq!(wave(1.0).eps_shift(&w).unwrap(), 0.25);
    }

    #[test]
    fn wave_norm_equivalence() {
        let w = Grid::new(64, 1).unwrap();
        let mut rng = stream_rng(6, 0, 5);
        for _ in 0..20 {
            let u = SpectralField::random_odd(&w, &mut rng, |k| 1.0 / k);
            let v = SpectralField::random_odd(&w, &mut rng, |_| 1.0);
            let s = WaveState { u, v };
            for damping in [0.2, 0.5, 2.0] {
                assert!(s.norm_equivalence_holds(eps_shift_formula(1.0, damping)));
            }
        }
    }
}
