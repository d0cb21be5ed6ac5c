//! Time averages, exponential-martingale tails, two-start ergodic agreement
//! and the vanishing-viscosity study for Euler–Voigt.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forcing::{ForcingSet, NoisePath};
use crate::integrate::{integrate, IntegrationError, StepperConfig, Trajectory};
use crate::models::{ModelError, ModelSpec, State, Variant};
use crate::spectral::sobolev_norm;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("trajectory spans {available} after burn-in, need at least {needed}")]
    InsufficientDuration { available: f64, needed: f64 },
    #[error("sample period {period} is not a multiple of the checkpoint spacing {spacing}")]
    Misaligned { period: f64, spacing: f64 },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("replica {replica} failed: {source}")]
    Replica { replica: u64, source: IntegrationError },
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub const MIN_BATCHES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObservableKind {
    /// The model's primary energy.
    Energy,
    /// `|ξ|²` for fluids, `‖u‖²` for the wave pair.
    Enstrophy,
    /// Real part of the vorticity coefficient at `k` (sine amplitude for waves).
    LowModeReal { kx: i64, ky: i64 },
    /// `tanh` of the `k` coordinate normalized so that it is 1-Lipschitz in ρ̃.
    BoundedLipschitz { kx: i64, ky: i64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub name: String,
    #[serde(flatten)]
    pub kind: ObservableKind,
}

impl Observable {
    pub fn new(name: impl Into<String>, kind: ObservableKind) -> Self {
        Self { name: name.into(), kind }
    }

    pub fn energy() -> Self {
        Self::new("energy", ObservableKind::Energy)
    }

    pub fn evaluate(&self, spec: &ModelSpec, state: &State) -> Result<f64, ModelError> {
        match self.kind {
            ObservableKind::Energy => Ok(spec.energy_and_dissipation(state)?.0),
            ObservableKind::Enstrophy => match state {
                State::Vorticity(xi) => Ok(xi.norm_sq()),
                State::Wave(w) => Ok(sobolev_norm(&w.u, 1.0)?.powi(2)),
            },
            ObservableKind::LowModeReal { kx, ky } => Ok(match state {
                State::Vorticity(xi) => xi.coeff(0, kx, ky).re,
                State::Wave(w) => -2.0 * w.u.coeff(0, kx, ky).im,
            }),
            ObservableKind::BoundedLipschitz { kx, ky } => Ok(lipschitz_coordinate(spec, state, kx, ky).tanh()),
        }
    }
}

/// Coordinate `c` with `|c(a) - c(b)| ≤ ρ̃(a, b)`.
pub fn lipschitz_coordinate(spec: &ModelSpec, state: &State, kx: i64, ky: i64) -> f64 {
    let grid = state.grid();
    let Some(i) = grid.index_of(kx, ky) else { return 0.0 };
    let k2 = grid.k2(i);
    if k2 == 0.0 {
        return 0.0;
    }
    // a mode and its mirror both count in the norm unless they coincide
    let pair = if grid.mirror(i) == i { 1.0 } else { 2.0 };
    match (&spec.variant, state) {
        (Variant::SineGordon { .. }, State::Wave(w)) => (pair * grid.volume() * k2).sqrt() * -w.u.data()[i].im,
        (Variant::EulerVoigt { alpha, .. }, State::Vorticity(xi)) => {
            (pair * grid.volume() * k2.powf(-0.5 * alpha - 1.0)).sqrt() * xi.data()[i].re
        }
        (_, State::Vorticity(xi)) => (pair * grid.volume() / k2).sqrt() * xi.data()[i].re,
        _ => 0.0,
    }
}

/// Running Birkhoff means of samples taken every `period`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AverageSeries {
    pub name: String,
    pub period: f64,
    pub times: Vec<f64>,
    pub samples: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub mean: f64,
    /// Batch-means standard error.
    pub standard_error: f64,
    pub batches: usize,
}

impl AverageSeries {
    pub fn from_samples(name: &str, period: f64, times: Vec<f64>, samples: Vec<f64>, batches: usize) -> Self {
        let mut running_mean = Vec::with_capacity(samples.len());
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for (n, &x) in samples.iter().enumerate() {
            let y = x - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            running_mean.push(sum / (n + 1) as f64);
        }
        let mean = running_mean.last().copied().unwrap_or(0.0);
        let standard_error = batch_standard_error(&samples, batches);
        Self { name: name.to_string(), period, times, samples, running_mean, mean, standard_error, batches }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Standard error from `batches` equal consecutive batch means; the
/// leftover samples at the start are dropped.
pub fn batch_standard_error(samples: &[f64], batches: usize) -> f64 {
    let size = samples.len() / batches.max(1);
    if batches < 2 || size == 0 {
        return f64::NAN;
    }
    let skip = samples.len() - size * batches;
    let means: Vec<f64> = samples[skip..].chunks(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Sample `obs` along `trajectory` every `period` after `burn_in`.
pub fn birkhoff_average(
    trajectory: &Trajectory,
    spec: &ModelSpec,
    obs: &Observable,
    period: f64,
    burn_in: f64,
) -> Result<AverageSeries, DiagnosticsError> {
    if trajectory.times.len() < 2 {
        return Err(DiagnosticsError::InsufficientDuration { available: 0.0, needed: MIN_BATCHES as f64 * period });
    }
    let t0 = trajectory.times[0];
    let spacing = trajectory.times[1] - t0;
    let stride = (period / spacing).round();
    if stride < 1.0 || (stride * spacing - period).abs() > 1e-9 * period {
        return Err(DiagnosticsError::Misaligned { period, spacing });
    }
    let available = trajectory.duration() - burn_in;
    let needed = MIN_BATCHES as f64 * period;
    if available + 1e-9 * needed < needed {
        return Err(DiagnosticsError::InsufficientDuration { available, needed });
    }
    let (mut times, mut samples) = (Vec::new(), Vec::new());
    let stride = stride as usize;
    for (t, s) in trajectory.times.iter().zip(&trajectory.states).step_by(stride) {
        if *t - t0 > burn_in + 1e-9 * period {
            times.push(*t);
            samples.push(obs.evaluate(spec, s)?);
        }
    }
    Ok(AverageSeries::from_samples(&obs.name, period, times, samples, MIN_BATCHES))
}

/// `γ = ν/|σ|²` for the Navier–Stokes model, computed from the model parameters.
pub fn tail_rate(spec: &ModelSpec, forcing: &ForcingSet) -> Result<f64, DiagnosticsError> {
    match spec.variant {
        Variant::NavierStokes { nu } => {
            let injection = spec.injection_rate(forcing);
            if injection > 0.0 {
                Ok(nu / injection)
            } else {
                Ok(f64::INFINITY)
            }
        }
        _ => Err(DiagnosticsError::Invalid("the exponential tail bound is stated for Navier–Stokes only".into())),
    }
}

/// `sup_t |u(t)|² + ν∫‖u‖² - (|σ|² + |A^{-1/2}f|²/2ν) t - |u₀|²` from a
/// trajectory stored at every step.
pub fn tail_functional_sup(spec: &ModelSpec, forcing: &ForcingSet, trajectory: &Trajectory) -> Result<f64, DiagnosticsError> {
    let nu = match spec.variant {
        Variant::NavierStokes { nu } => nu,
        _ => return Err(DiagnosticsError::Invalid("the tail functional is defined for Navier–Stokes".into())),
    };
    let mut drift = spec.injection_rate(forcing);
    if let Some(f) = &spec.body_force {
        drift += sobolev_norm(f, -2.0).map_err(ModelError::from)?.powi(2) / (2.0 * nu);
    }
    let (e0, mut d_prev) = spec.energy_and_dissipation(&trajectory.states[0])?;
    let mut dissipated = 0.0;
    let mut sup = 0.0f64;
    for n in 1..trajectory.states.len() {
        let dt = trajectory.times[n] - trajectory.times[n - 1];
        dissipated += d_prev * dt;
        let (e, d) = spec.energy_and_dissipation(&trajectory.states[n])?;
        sup = sup.max(e + dissipated - drift * trajectory.times[n] - e0);
        d_prev = d;
    }
    Ok(sup)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub r: f64,
    pub empirical: f64,
    pub bound: f64,
    /// Binomial standard error at the bound, `√(p(1-p)/n)`.
    pub standard_error: f64,
    pub exceeds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub gamma: f64,
    pub replicas: usize,
    pub rows: Vec<TailRow>,
    pub sups: Vec<f64>,
}

impl TailReport {
    pub fn from_sups(gamma: f64, sups: Vec<f64>, radii: &[f64]) -> Self {
        let n = sups.len();
        let rows = radii
            .iter()
            .map(|&r| {
                let empirical = sups.iter().filter(|&&s| s >= r).count() as f64 / n as f64;
                let bound = (-gamma * r).exp();
                let p = bound.min(1.0);
                let standard_error = (p * (1.0 - p) / n as f64).sqrt();
                TailRow { r, empirical, bound, standard_error, exceeds: empirical > bound + 3.0 * standard_error }
            })
            .collect();
        Self { gamma, replicas: n, rows, sups }
    }

    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.exceeds).count()
    }
}

pub const MIN_TAIL_REPLICAS: u64 = 200;

/// Empirical tail of the energy functional over `replicas` independent paths.
pub fn martingale_tail_check(
    spec: &ModelSpec,
    forcing: &ForcingSet,
    initial: &State,
    config: &StepperConfig,
    seed: u64,
    replicas: u64,
    radii: &[f64],
) -> Result<TailReport, DiagnosticsError> {
    if replicas < MIN_TAIL_REPLICAS {
        return Err(DiagnosticsError::Invalid(format!("need at least {MIN_TAIL_REPLICAS} replicas, got {replicas}")));
    }
    let gamma = tail_rate(spec, forcing)?;
    let cfg = StepperConfig { checkpoint_every: 1, ..config.clone() };
    let sups: Result<Vec<f64>, DiagnosticsError> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut path = NoisePath::refined(seed, r, forcing.len(), cfg.dt, cfg.noise_substeps);
            let traj = integrate(spec, initial, &cfg, forcing, &mut path)
                .map_err(|source| DiagnosticsError::Replica { replica: r, source })?;
            tail_functional_sup(spec, forcing, &traj)
        })
        .collect();
    Ok(TailReport::from_sups(gamma, sups?, radii))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub observable: String,
    pub mean_a: f64,
    pub se_a: f64,
    pub mean_b: f64,
    pub se_b: f64,
    pub difference: f64,
    pub combined_se: f64,
    pub agree: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub horizon: f64,
    pub period: f64,
    pub burn_in: f64,
    pub rows: Vec<AgreementRow>,
}

impl AgreementReport {
    pub fn all_agree(&self) -> bool {
        self.rows.iter().all(|r| r.agree)
    }
}

/// Settings shared by the two long runs of [`ergodic_agreement`].
#[derive(Clone, Debug)]
pub struct AgreementRun {
    pub spec: ModelSpec,
    pub forcing: ForcingSet,
    pub stepper: StepperConfig,
    pub period: f64,
    pub burn_in: f64,
    /// Noise seeds of the two runs; distinct seeds give independent noise.
    pub seeds: (u64, u64),
}

pub fn ergodic_agreement(
    run: &AgreementRun,
    u0_a: &State,
    u0_b: &State,
    observables: &[Observable],
) -> Result<AgreementReport, DiagnosticsError> {
    let stride = (run.period / run.stepper.dt).round().max(1.0) as u64;
    let cfg = StepperConfig { checkpoint_every: stride, ..run.stepper.clone() };
    let needed = MIN_BATCHES as f64 * run.period + run.burn_in;
    if run.stepper.t_end < needed {
        return Err(DiagnosticsError::InsufficientDuration { available: run.stepper.t_end, needed });
    }
    let go = |u0: &State, seed: u64| {
        let mut path = NoisePath::refined(seed, 0, run.forcing.len(), cfg.dt, cfg.noise_substeps);
        integrate(&run.spec, u0, &cfg, &run.forcing, &mut path)
    };
    let (ta, tb) = rayon::join(|| go(u0_a, run.seeds.0), || go(u0_b, run.seeds.1));
    let (ta, tb) = (ta?, tb?);
    let mut rows = Vec::new();
    for obs in observables {
        let a = birkhoff_average(&ta, &run.spec, obs, run.period, run.burn_in)?;
        let b = birkhoff_average(&tb, &run.spec, obs, run.period, run.burn_in)?;
        let combined_se = a.standard_error.hypot(b.standard_error);
        let difference = a.mean - b.mean;
        rows.push(AgreementRow {
            observable: obs.name.clone(),
            mean_a: a.mean,
            se_a: a.standard_error,
            mean_b: b.mean,
            se_b: b.standard_error,
            difference,
            combined_se,
            agree: difference.abs() <= 3.0 * combined_se,
        });
    }
    Ok(AgreementReport { horizon: run.stepper.t_end, period: run.period, burn_in: run.burn_in, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableComparison {
    pub observable: String,
    /// Replica mean of the time average under `P^ε`.
    pub mean: f64,
    pub se: f64,
    /// Paired difference from the `ε = 0` average.
    pub difference: f64,
    pub difference_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub eps: f64,
    /// Replica mean of `ρ̃(u(t), u^ε(t))` at the horizon.
    pub discrepancy: f64,
    pub discrepancy_se: f64,
    /// `sup_t` of the replica-mean energy.
    pub moment_sup: f64,
    pub observables: Vec<ObservableComparison>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub horizon: f64,
    pub replicas: u64,
    pub rows: Vec<LimitRow>,
    /// Slope of `log discrepancy` against `log ε` over the nonzero entries.
    pub fitted_order: Option<f64>,
}

impl LimitReport {
    /// Whether `|difference|` of each observable shrinks as `ε` decreases,
    /// allowing one combined standard error of slack per comparison.
    pub fn observables_monotone(&self) -> bool {
        let mut rows: Vec<&LimitRow> = self.rows.iter().filter(|r| r.eps > 0.0).collect();
        rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));
        rows.windows(2).all(|w| {
            w[0].observables.iter().zip(&w[1].observables).all(|(big, small)| {
                small.difference.abs() <= big.difference.abs() + big.difference_se + small.difference_se
            })
        })
    }
}

/// Setup of the vanishing-viscosity study.
#[derive(Clone, Debug)]
pub struct LimitStudy {
    /// Euler–Voigt model; its `eps_visc` is replaced by each list entry.
    pub spec: ModelSpec,
    pub forcing: ForcingSet,
    pub initial: State,
    pub dt: f64,
    pub horizon: f64,
    /// Checkpoint stride (steps) of the time averages.
    pub sample_every: u64,
    pub seed: u64,
    pub observables: Vec<Observable>,
}

fn with_viscosity(spec: &ModelSpec, eps: f64) -> Result<ModelSpec, DiagnosticsError> {
    match spec.variant {
        Variant::EulerVoigt { damping, alpha, .. } => {
            let mut s = spec.clone();
            s.variant = Variant::EulerVoigt { damping, alpha, eps_visc: eps };
            Ok(s)
        }
        _ => Err(DiagnosticsError::Invalid("the inviscid-limit study needs the Euler–Voigt model".into())),
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_order(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        xs.iter().zip(ys).filter(|(x, y)| **x > 0.0 && **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (sxx, sxy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx).powi(2), b + (x - mx) * (y - my)));
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn inviscid_limit_study(study: &LimitStudy, eps_list: &[f64], replicas: u64) -> Result<LimitReport, DiagnosticsError> {
    if replicas == 0 || eps_list.is_empty() {
        return Err(DiagnosticsError::Invalid("need at least one replica and one ε".into()));
    }
    if eps_list.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(DiagnosticsError::Invalid("ε entries must be finite and nonnegative".into()));
    }
    let base = with_viscosity(&study.spec, 0.0)?;
    let specs: Vec<ModelSpec> = eps_list.iter().map(|&e| with_viscosity(&study.spec, e)).collect::<Result<_, _>>()?;
    let cfg = StepperConfig::new(&base, study.dt, study.horizon, study.sample_every.max(1));
    cfg.validate(&base)?;
    let d = study.forcing.len();

    struct ReplicaOut {
        discrepancy: Vec<f64>,
        averages: Vec<Vec<f64>>,
        base_averages: Vec<f64>,
        energy: Vec<Vec<f64>>,
    }
    let time_average = |spec: &ModelSpec, traj: &Trajectory| -> Result<Vec<f64>, DiagnosticsError> {
        study
            .observables
            .iter()
            .map(|o| {
                let vals: Result<Vec<f64>, _> = traj.states.iter().map(|s| o.evaluate(spec, s)).collect();
                let vals = vals?;
                Ok(vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    };
    let outs: Result<Vec<ReplicaOut>, DiagnosticsError> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let run = |spec: &ModelSpec| {
                let mut path = NoisePath::new(study.seed, r, d, study.dt);
                integrate(spec, &study.initial, &cfg, &study.forcing, &mut path)
                    .map_err(|source| DiagnosticsError::Replica { replica: r, source })
            };
            let reference = run(&base)?;
            let base_averages = time_average(&base, &reference)?;
            let mut out = ReplicaOut { discrepancy: Vec::new(), averages: Vec::new(), base_averages, energy: Vec::new() };
            for spec in &specs {
                let traj = run(spec)?;
                out.discrepancy.push(spec.rho_tilde(reference.last(), traj.last())?);
                out.averages.push(time_average(spec, &traj)?);
                let e: Result<Vec<f64>, ModelError> =
                    traj.states.iter().map(|s| spec.energy_and_dissipation(s).map(|x| x.0)).collect();
                out.energy.push(e?);
            }
            Ok(out)
        })
        .collect();
    let outs = outs?;

    let mut rows = Vec::new();
    for (j, &eps) in eps_list.iter().enumerate() {
        let disc: Vec<f64> = outs.iter().map(|o| o.discrepancy[j]).collect();
        let (discrepancy, discrepancy_se) = mean_se(&disc);
        let len = outs[0].energy[j].len();
        let moment_sup = (0..len)
            .map(|n| outs.iter().map(|o| o.energy[j][n]).sum::<f64>() / outs.len() as f64)
            .fold(0.0, f64::max);
        let observables = study
            .observables
            .iter()
            .enumerate()
            .map(|(q, obs)| {
                let vals: Vec<f64> = outs.iter().map(|o| o.averages[j][q]).collect();
                let diffs: Vec<f64> = outs.iter().map(|o| o.averages[j][q] - o.base_averages[q]).collect();
                let (mean, se) = mean_se(&vals);
                let (difference, difference_se) = mean_se(&diffs);
                ObservableComparison { observable: obs.name.clone(), mean, se, difference, difference_se }
            })
            .collect();
        rows.push(LimitRow { eps, discrepancy, discrepancy_se, moment_sup, observables });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.eps > 0.0).map(|r| (r.eps, r.discrepancy)).unzip();
    Ok(LimitReport { horizon: study.horizon, replicas, rows, fitted_order: fit_order(&xs, &ys) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_mean_is_recomputable() {
        let samples: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 * 1e-3 + 1e8).collect();
        let s = AverageSeries::from_samples("x", 1.0, (0..1000).map(|i| i as f64).collect(), samples.clone(), 20);
        for (n, m) in s.running_mean.iter().enumerate() {
            let direct = samples[..=n].iter().map(|x| x - 1e8).sum::<f64>() / (n + 1) as f64 + 1e8;
            assert!((m - direct).abs() < 1e-12 * direct);
        }
    }

    #[test]
    fn batch_se_of_constant_is_zero() {
        assert_eq!(batch_standard_error(&[3.0; 100], 20), 0.0);
        assert!(batch_standard_error(&[1.0; 10], 20).is_nan());
    }

    #[test]
    fn fit_order_recovers_power() {
        let xs = [0.04, 0.02, 0.01, 0.005];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(0.5)).collect();
        assert!((fit_order(&xs, &ys).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tail_table_flags_excess() {
        let sups = vec![10.0; 300];
        let report = TailReport::from_sups(1.0, sups, &[1.0, 2.0]);
        assert_eq!(report.violations(), 2);
        let report = TailReport::from_sups(1.0, vec![-1.0; 300], &[1.0, 2.0]);
        assert_eq!(report.violations(), 0);
        assert!(report.rows.iter().all(|r| r.empirical == 0.0));
    }
}
