//! Time stepping: exponential Euler–Maruyama for scalar symbols and exact
//! 2×2 block propagation for the wave pair.

use std::io::{self, Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forcing::{ForcingError, ForcingSet, GirsanovLedger, NoisePath};
use crate::models::{make_odd, LinearSymbol, ModelError, ModelSpec, State, WaveState};
use crate::spectral::{biot_savart, Grid, SpectralError, SpectralField};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ERGC";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum IntegrationError {
    #[error("trajectory diverged after t = {last_finite_time}")]
    Diverged { last_finite_time: f64 },
    #[error("dt = {dt} exceeds the advective limit {limit:.3e} at t = {time}")]
    Cfl { dt: f64, limit: f64, time: f64 },
    #[error("invalid stepper configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Forcing(#[from] ForcingError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u16),
    #[error("checkpoint grid {found:?} does not match {expected:?}")]
    Grid { expected: (usize, usize), found: (usize, usize) },
    #[error("unsupported component count {0}")]
    Components(u16),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ExponentialEm,
    WaveBlock,
}

impl Scheme {
    pub fn for_model(spec: &ModelSpec) -> Self {
        if spec.is_wave() {
            Scheme::WaveBlock
        } else {
            Scheme::ExponentialEm
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub scheme: Scheme,
    pub t_end: f64,
    pub checkpoint_every: u64,
    /// Fine Brownian draws per step; `dt` and `dt/2` runs share a path when
    /// the latter uses twice as many.
    pub noise_substeps: u64,
}

impl StepperConfig {
    pub fn new(spec: &ModelSpec, dt: f64, t_end: f64, checkpoint_every: u64) -> Self {
        Self { dt, scheme: Scheme::for_model(spec), t_end, checkpoint_every, noise_substeps: 1 }
    }

    pub fn with_substeps(mut self, substeps: u64) -> Self {
        self.noise_substeps = substeps;
        self
    }

    pub fn steps(&self) -> Result<u64, IntegrationError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(IntegrationError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(IntegrationError::Config(format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        let n = (self.t_end / self.dt).round();
        if (n * self.dt - self.t_end).abs() > 1e-9 * self.t_end.max(self.dt) {
            return Err(IntegrationError::Config(format!("t_end {} is not a multiple of dt {}", self.t_end, self.dt)));
        }
        Ok(n as u64)
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<u64, IntegrationError> {
        if self.scheme != Scheme::for_model(spec) {
            return Err(IntegrationError::Config(format!("scheme {:?} does not fit the {} model", self.scheme, spec.name())));
        }
        if self.checkpoint_every == 0 {
            return Err(IntegrationError::Config("checkpoint_every must be at least 1".into()));
        }
        if self.noise_substeps == 0 {
            return Err(IntegrationError::Config("noise_substeps must be at least 1".into()));
        }
        self.steps()
    }
}

/// `(e^z - 1)/z`, with `φ₁(0) = 1`.
pub fn phi1(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        z.exp_m1() / z
    }
}

/// Noise scaling that makes an OU mode's stationary variance exact.
pub fn eta(m: f64, dt: f64) -> f64 {
    let z = 2.0 * m * dt;
    if z == 0.0 {
        1.0
    } else {
        (-(-z).exp_m1() / z).sqrt()
    }
}

/// `exp(A τ)` for `A = [[0, 1], [-k², -α]]`.
pub fn wave_exponential(k2: f64, damping: f64, tau: f64) -> [[f64; 2]; 2] {
    let mu = -0.5 * damping;
    let delta2 = mu * mu - k2;
    let x = delta2 * tau * tau;
    let (c, s) = if x.abs() < 1e-8 {
        (1.0 + 0.5 * x, tau * (1.0 + x / 6.0))
    } else if delta2 > 0.0 {
        let d = delta2.sqrt();
        ((d * tau).cosh(), (d * tau).sinh() / d)
    } else {
        let w = (-delta2).sqrt();
        ((w * tau).cos(), (w * tau).sin() / w)
    };
    let e = (mu * tau).exp();
    [[e * (c - mu * s), e * s], [-k2 * e * s, e * (c + mu * s)]]
}

const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

/// Per-mode constants of the exact wave step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct WaveMode {
    prop: [[f64; 2]; 2],
    /// `(1/dt) ∫₀^dt e^{Aτ} b dτ`, `b = (0, 1)`
    gbar: [f64; 2],
    /// Cholesky factor of `∫ e^{Aτ}bbᵀe^{Aᵀτ} dτ - dt·ḡḡᵀ`: `[l00, l10, l11]`
    chol: [f64; 3],
}

impl WaveMode {
    fn new(k2: f64, damping: f64, dt: f64) -> Self {
        let freq = (k2.sqrt() + damping) * dt;
        let panels = (2.0 * freq).ceil().max(1.0) as usize;
        let h = dt / panels as f64;
        let (mut g, mut q) = ([0.0; 2], [0.0; 3]);
        for p in 0..panels {
            for &(x, w) in &GAUSS8 {
                let tau = h * (p as f64 + 0.5 * (x + 1.0));
                let e = wave_exponential(k2, damping, tau);
                let (a, b) = (e[0][1], e[1][1]);
                let wt = 0.5 * h * w;
                g[0] += wt * a;
                g[1] += wt * b;
                q[0] += wt * a * a;
                q[1] += wt * a * b;
                q[2] += wt * b * b;
            }
        }
        let gbar = [g[0] / dt, g[1] / dt];
        let c00 = q[0] - dt * gbar[0] * gbar[0];
        let c10 = q[1] - dt * gbar[0] * gbar[1];
        let c11 = q[2] - dt * gbar[1] * gbar[1];
        let l00 = c00.max(0.0).sqrt();
        let l10 = if l00 > 0.0 { c10 / l00 } else { 0.0 };
        let l11 = (c11 - l10 * l10).max(0.0).sqrt();
        Self { prop: wave_exponential(k2, damping, dt), gbar, chol: [l00, l10, l11] }
    }
}

#[derive(Clone, Debug)]
enum Kernel {
    Scalar { decay: Vec<f64>, phi_dt: Vec<f64>, eta: Vec<f64> },
    Wave { modes: Vec<WaveMode> },
}

/// Noise contribution of one step, shared by every member of a coupled pair.
#[derive(Clone, Debug)]
pub struct StepNoise {
    /// Raw `Σ ρ_j ΔW_j` on the forced component.
    pub raw: SpectralField,
    increment: NoiseIncrement,
}

#[derive(Clone, Debug)]
enum NoiseIncrement {
    Scalar(SpectralField),
    Wave(SpectralField, SpectralField),
}

/// Precomputed propagator for a model, grid and time step.
#[derive(Clone, Debug)]
pub struct Stepper {
    grid: Arc<Grid>,
    dt: f64,
    kernel: Kernel,
}

impl Stepper {
    pub fn new(spec: &ModelSpec, grid: &Arc<Grid>, dt: f64) -> Self {
        let n = grid.len();
        let live = |i: usize| grid.is_dealiased(i) && grid.k2(i) > 0.0;
        let kernel = match spec.linear_symbol(1.0) {
            LinearSymbol::Scalar(_) => {
                let (mut decay, mut phi_dt, mut et) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
                for i in (0..n).filter(|&i| live(i)) {
                    let m = spec.scalar_symbol(grid.k2(i));
                    decay[i] = (-m * dt).exp();
                    phi_dt[i] = phi1(-m * dt) * dt;
                    et[i] = eta(m, dt);
                }
                Kernel::Scalar { decay, phi_dt, eta: et }
            }
            LinearSymbol::Block(a) => {
                let damping = -a[1][1];
                let modes = (0..n)
                    .map(|i| if live(i) { WaveMode::new(grid.k2(i), damping, dt) } else { WaveMode::default() })
                    .collect();
                Kernel::Wave { modes }
            }
        };
        Self { grid: grid.clone(), dt, kernel }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Draw the Wiener increments (and any auxiliary normals) for one step.
    pub fn draw(&self, forcing: &ForcingSet, path: &mut NoisePath) -> StepNoise {
        let increments = path.sample_increments();
        let raw = forcing.noise_field(&self.grid, &increments);
        let increment = match &self.kernel {
            Kernel::Scalar { eta, .. } => {
                let mut f = raw.clone();
                for (z, &e) in f.data_mut().iter_mut().zip(eta) {
                    *z *= e;
                }
                NoiseIncrement::Scalar(f)
            }
            Kernel::Wave { modes } => {
                let aux = path.sample_auxiliary(2 * forcing.len());
                let mut du = SpectralField::scalar(&self.grid);
                let mut dv = SpectralField::scalar(&self.grid);
                for (j, rho) in forcing.directions().iter().enumerate() {
                    let (dw, z0, z1) = (increments[j], aux[2 * j], aux[2 * j + 1]);
                    for (i, &c) in rho.component(0).iter().enumerate() {
                        if c == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        let m = &modes[i];
                        du.data_mut()[i] += c * (m.gbar[0] * dw + m.chol[0] * z0);
                        dv.data_mut()[i] += c * (m.gbar[1] * dw + m.chol[1] * z0 + m.chol[2] * z1);
                    }
                }
                NoiseIncrement::Wave(du, dv)
            }
        };
        StepNoise { raw, increment }
    }

    /// A zero-noise step (deterministic runs).
    pub fn silent(&self) -> StepNoise {
        let z = SpectralField::scalar(&self.grid);
        let increment = match self.kernel {
            Kernel::Scalar { .. } => NoiseIncrement::Scalar(z.clone()),
            Kernel::Wave { .. } => NoiseIncrement::Wave(z.clone(), z.clone()),
        };
        StepNoise { raw: z, increment }
    }

    /// Linear propagation plus the explicit increment `forced` (drift and
    /// control) and the noise.
    pub fn advance(&self, state: &State, forced: &SpectralField, noise: &StepNoise) -> Result<State, IntegrationError> {
        match (&self.kernel, state, &noise.increment) {
            (Kernel::Scalar { decay, phi_dt, .. }, State::Vorticity(s), NoiseIncrement::Scalar(n)) => {
                s.check_grid(forced)?;
                let mut out = SpectralField::scalar(&self.grid);
                let (s, f, n) = (s.data(), forced.data(), n.data());
                for (i, o) in out.data_mut().iter_mut().enumerate() {
                    *o = s[i] * decay[i] + f[i] * phi_dt[i] + n[i];
                }
                Ok(State::Vorticity(out))
            }
            (Kernel::Wave { modes }, State::Wave(w), NoiseIncrement::Wave(nu, nv)) => {
                w.u.check_grid(forced)?;
                let mut u = SpectralField::scalar(&self.grid);
                let mut v = SpectralField::scalar(&self.grid);
                let dt = self.dt;
                let (u0, v0, f) = (w.u.data(), w.v.data(), forced.data());
                for (i, m) in modes.iter().enumerate() {
                    let p = &m.prop;
                    u.data_mut()[i] = p[0][0] * u0[i] + p[0][1] * v0[i] + dt * m.gbar[0] * f[i] + nu.data()[i];
                    v.data_mut()[i] = p[1][0] * u0[i] + p[1][1] * v0[i] + dt * m.gbar[1] * f[i] + nv.data()[i];
                }
                make_odd(&mut u);
                make_odd(&mut v);
                Ok(State::Wave(WaveState { u, v }))
            }
            _ => Err(IntegrationError::Config("state kind does not match the stepper".into())),
        }
    }

    /// One step with optional control. The control acts only while the ledger
    /// is active; its Novikov cost is charged to the ledger.
    pub fn step_controlled(
        &self,
        spec: &ModelSpec,
        state: &State,
        noise: &StepNoise,
        forcing: &ForcingSet,
        ledger: &mut GirsanovLedger,
        control: Option<&SpectralField>,
    ) -> Result<State, IntegrationError> {
        let mut forced = spec.drift(state)?;
        match control {
            Some(g) if ledger.is_active() => {
                let h = forcing.pseudo_inverse_shift(g)?;
                forced += g;
                ledger.update(&h, self.dt);
            }
            _ => ledger.update(&[], self.dt),
        }
        let next = self.advance(state, &forced, noise)?;
        if !next.is_finite() {
            return Err(IntegrationError::Diverged { last_finite_time: ledger.time() - self.dt });
        }
        Ok(next)
    }

    /// Uncontrolled step.
    pub fn step(&self, spec: &ModelSpec, state: &State, noise: &StepNoise) -> Result<State, IntegrationError> {
        let forced = spec.drift(state)?;
        self.advance(state, &forced, noise)
    }
}

/// Exponential Euler–Maruyama step of a scalar model.
pub fn step_exponential_em(
    stepper: &Stepper,
    spec: &ModelSpec,
    state: &State,
    noise: &StepNoise,
    forcing: &ForcingSet,
    ledger: &mut GirsanovLedger,
    control: Option<&SpectralField>,
) -> Result<State, IntegrationError> {
    if spec.is_wave() {
        return Err(IntegrationError::Config("exponential-EM needs a scalar model".into()));
    }
    stepper.step_controlled(spec, state, noise, forcing, ledger, control)
}

/// Exact block step of the damped wave pair.
pub fn step_wave_block(
    stepper: &Stepper,
    spec: &ModelSpec,
    state: &WaveState,
    noise: &StepNoise,
    forcing: &ForcingSet,
    ledger: &mut GirsanovLedger,
    control: Option<&SpectralField>,
) -> Result<WaveState, IntegrationError> {
    if !spec.is_wave() {
        return Err(IntegrationError::Config("wave-block needs the sine-Gordon model".into()));
    }
    match stepper.step_controlled(spec, &State::Wave(state.clone()), noise, forcing, ledger, control)? {
        State::Wave(w) => Ok(w),
        State::Vorticity(_) => unreachable!(),
    }
}

/// Largest step allowed by `dt ≤ 0.5·Δx / max|u|`; infinite for the wave model.
pub fn cfl_limit(spec: &ModelSpec, state: &State) -> Result<f64, IntegrationError> {
    let xi = match state {
        State::Vorticity(xi) => xi,
        State::Wave(_) => return Ok(f64::INFINITY),
    };
    let transported = match spec.voigt_alpha() {
        Some(alpha) => crate::spectral::fractional_laplacian(xi, -alpha)?,
        None => xi.clone(),
    };
    let vel = biot_savart(&transported)?.to_physical();
    let umax = vel[0].iter().zip(&vel[1]).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max);
    Ok(if umax == 0.0 { f64::INFINITY } else { 0.5 * xi.grid().dx() / umax })
}

pub fn check_cfl(spec: &ModelSpec, state: &State, dt: f64, time: f64) -> Result<(), IntegrationError> {
    let limit = cfl_limit(spec, state)?;
    if dt > limit {
        return Err(IntegrationError::Cfl { dt, limit, time });
    }
    Ok(())
}

/// Running terms of the discrete Itô energy identity.
#[derive(Clone, Debug, Default)]
pub struct EnergyBudget {
    initial: f64,
    dissipation: f64,
    work: f64,
    martingale: f64,
    quadratic_variation: f64,
}

impl EnergyBudget {
    pub fn new(spec: &ModelSpec, state: &State) -> Result<Self, ModelError> {
        Ok(Self { initial: spec.energy_and_dissipation(state)?.0, ..Default::default() })
    }

    /// Accumulate the left-point terms of the step starting at `state`.
    pub fn record(&mut self, spec: &ModelSpec, state: &State, noise: &SpectralField, dt: f64) -> Result<(), ModelError> {
        let (_, d) = spec.energy_and_dissipation(state)?;
        let forced = match state {
            State::Vorticity(f) => f,
            State::Wave(w) => &w.v,
        };
        let grid = forced.grid().clone();
        let w = |i: usize| spec.energy_weight(grid.k2(i));
        self.dissipation += d * dt;
        if let Some(f) = &spec.body_force {
            self.work += weighted_inner(forced, f, w) * dt;
        }
        self.martingale += weighted_inner(forced, noise, w);
        self.quadratic_variation += noise.weighted_norm_sq(w);
        Ok(())
    }

    /// `E(t) - E(0) + 2∫D - 2∫⟨s, f⟩ - 2M(t) - [M](t)`.
    pub fn residual(&self, spec: &ModelSpec, state: &State) -> Result<f64, ModelError> {
        let e = spec.energy_and_dissipation(state)?.0;
        Ok(e - self.initial + 2.0 * self.dissipation - 2.0 * self.work - 2.0 * self.martingale - self.quadratic_variation)
    }

    pub fn quadratic_variation(&self) -> f64 {
        self.quadratic_variation
    }
}

fn weighted_inner(a: &SpectralField, b: &SpectralField, w: impl Fn(usize) -> f64) -> f64 {
    let s: f64 = a.data().iter().zip(b.data()).enumerate().map(|(i, (x, y))| w(i) * (x.conj() * y).re).sum();
    s * a.grid().volume()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub t: f64,
    pub cost: f64,
    pub stopped: bool,
}

impl LedgerRecord {
    pub fn of(ledger: &GirsanovLedger) -> Self {
        Self { t: ledger.time(), cost: ledger.cost(), stopped: ledger.stopped() }
    }
}

/// States at checkpoint times, with the ledger and energy-budget history.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub ledger: Vec<LedgerRecord>,
    pub budget_residual: Vec<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &State {
        self.states.last().expect("a trajectory holds at least its initial state")
    }

    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0) - self.times.first().copied().unwrap_or(0.0)
    }
}

/// Integrate one uncontrolled trajectory driven by `path`.
pub fn integrate(
    spec: &ModelSpec,
    initial: &State,
    config: &StepperConfig,
    forcing: &ForcingSet,
    path: &mut NoisePath,
) -> Result<Trajectory, IntegrationError> {
    let steps = config.validate(spec)?;
    let grid = initial.grid().clone();
    if path.dims() != forcing.len() {
        return Err(IntegrationError::Config("noise path and forcing disagree on d".into()));
    }
    let stepper = Stepper::new(spec, &grid, config.dt);
    let mut ledger = GirsanovLedger::new(0.0);
    let mut budget = EnergyBudget::new(spec, initial)?;
    check_cfl(spec, initial, config.dt, 0.0)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![initial.clone()],
        ledger: vec![LedgerRecord::of(&ledger)],
        budget_residual: vec![0.0],
    };
    let mut state = initial.clone();
    for n in 1..=steps {
        let noise = stepper.draw(forcing, path);
        budget.record(spec, &state, &noise.raw, config.dt)?;
        state = stepper.step_controlled(spec, &state, &noise, forcing, &mut ledger, None)?;
        if n % config.checkpoint_every == 0 || n == steps {
            let t = n as f64 * config.dt;
            check_cfl(spec, &state, config.dt, t)?;
            traj.times.push(t);
            traj.ledger.push(LedgerRecord::of(&ledger));
            traj.budget_residual.push(budget.residual(spec, &state)?);
            traj.states.push(state.clone());
        }
    }
    Ok(traj)
}

/// Decoded checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub time: f64,
    pub modes: (usize, usize),
    pub components: Vec<Vec<Complex64>>,
}

impl Checkpoint {
    pub fn into_state(self, grid: &Arc<Grid>) -> Result<State, CheckpointError> {
        let expected = (grid.modes_x(), grid.modes_y());
        if self.modes != expected {
            return Err(CheckpointError::Grid { expected, found: self.modes });
        }
        let field = |data: Vec<Complex64>| SpectralField::from_coefficients(grid, 1, data);
        let mut it = self.components.into_iter();
        match it.len() {
            1 => Ok(State::Vorticity(field(it.next().unwrap()))),
            2 => Ok(State::Wave(WaveState { u: field(it.next().unwrap()), v: field(it.next().unwrap()) })),
            n => Err(CheckpointError::Components(n as u16)),
        }
    }
}

pub fn write_checkpoint<W: Write>(mut out: W, state: &State, time: f64) -> Result<(), CheckpointError> {
    let grid = state.grid();
    let fields = state.fields();
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&(grid.modes_x() as u32).to_le_bytes())?;
    out.write_all(&(grid.modes_y() as u32).to_le_bytes())?;
    out.write_all(&(fields.len() as u16).to_le_bytes())?;
    out.write_all(&time.to_le_bytes())?;
    let mut buf = Vec::with_capacity(16 * grid.len() * fields.len());
    for f in fields {
        for z in f.data() {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut b2 = [0u8; 2];
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b2)?;
    let version = u16::from_le_bytes(b2);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    input.read_exact(&mut b4)?;
    let nx = u32::from_le_bytes(b4) as usize;
    input.read_exact(&mut b4)?;
    let ny = u32::from_le_bytes(b4) as usize;
    input.read_exact(&mut b2)?;
    let count = u16::from_le_bytes(b2);
    if count == 0 || count > 2 {
        return Err(CheckpointError::Components(count));
    }
    input.read_exact(&mut b8)?;
    let time = f64::from_le_bytes(b8);
    let mut components = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mut data = Vec::with_capacity(nx * ny);
        for _ in 0..nx * ny {
            input.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            input.read_exact(&mut b8)?;
            data.push(Complex64::new(re, f64::from_le_bytes(b8)));
        }
        components.push(data);
    }
    Ok(Checkpoint { time, modes: (nx, ny), components })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Variant;

    #[test]
    fn phi1_and_eta_limits() {
        assert_eq!(phi1(0.0), 1.0);
        assert_eq!(eta(0.0, 0.1), 1.0);
        assert!((phi1(-1e-12) - 1.0).abs() < 1e-12);
        assert!((phi1(-2.0) - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-15);
        let (m, dt) = (3.0, 0.4);
        assert!((eta(m, dt).powi(2) - (1.0 - (-2.0 * m * dt).exp()) / (2.0 * m * dt)).abs() < 1e-15);
    }

    #[test]
    fn wave_exponential_matches_series() {
        for &(k2, damping) in &[(1.0, 0.5), (4.0, 0.0), (0.0625, 1.0), (1.0, 2.0), (0.25, 4.0)] {
            let tau = 0.3;
            let a = [[0.0, 1.0], [-k2, -damping]];
            // Taylor series reference
            let mut term = [[1.0, 0.0], [0.0, 1.0]];
            let mut sum = term;
            for n in 1..40 {
                let mut next = [[0.0; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        next[i][j] = (0..2).map(|l| term[i][l] * a[l][j]).sum::<f64>() * tau / n as f64;
                    }
                }
                term = next;
                for i in 0..2 {
                    for j in 0..2 {
                        sum[i][j] += term[i][j];
                    }
                }
            }
            let e = wave_exponential(k2, damping, tau);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((e[i][j] - sum[i][j]).abs() < 1e-13, "k2={k2} damping={damping}");
                }
            }
        }
    }

    #[test]
    fn wave_residual_covariance_is_small_and_psd() {
        let m = WaveMode::new(4.0, 0.5, 0.01);
        assert!(m.chol.iter().all(|x| x.is_finite()));
        // Var(∫τ dW | ΔW) = dt³/12 to leading order
        assert!((m.chol[0].powi(2) / (1e-6 / 12.0) - 1.0).abs() < 0.05);
        assert!((m.gbar[1] - 1.0).abs() < 0.01);
    }

    #[test]
    fn steps_must_divide() {
        let spec = ModelSpec::new(Variant::NavierStokes { nu: 0.1 }).unwrap();
        assert_eq!(StepperConfig::new(&spec, 0.01, 1.0, 1).steps().unwrap(), 100);
        assert!(StepperConfig::new(&spec, 0.3, 1.0, 1).steps().is_err());
        assert_eq!(StepperConfig::new(&spec, 0.1, 0.0, 1).steps().unwrap(), 0);
        let wave = ModelSpec::new(Variant::SineGordon { damping: 0.5, beta: 1.0 }).unwrap();
        let mut cfg = StepperConfig::new(&spec, 0.1, 1.0, 1);
        cfg.scheme = Scheme::WaveBlock;
        assert!(cfg.validate(&spec).is_err());
        assert!(StepperConfig::new(&wave, 0.1, 1.0, 1).validate(&wave).is_ok());
    }
}
