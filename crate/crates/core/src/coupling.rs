//! Asymptotic coupling of a leader `u` and a controlled shadow `ũ` driven by
//! the same noise, and ensembles of such pairs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forcing::{ForcingError, ForcingSet, GirsanovLedger, NoisePath};
use crate::integrate::{check_cfl, IntegrationError, LedgerRecord, Stepper, StepperConfig, Trajectory};
use crate::models::{ModelError, ModelSpec, State};
use crate::spectral::{biot_savart, gradient, GalerkinCutoff, SpectralField};

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("incompatible control: {0}")]
    Incompatible(String),
    #[error("forcing does not cover the controlled modes (Range(σ) ⊃ H_N fails): {0}")]
    Coverage(ForcingError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlForm {
    LinearProjection,
    SineDifference,
}

impl ControlForm {
    pub fn for_model(spec: &ModelSpec) -> Self {
        if spec.is_wave() {
            ControlForm::SineDifference
        } else {
            ControlForm::LinearProjection
        }
    }
}

#[derive(Clone, Debug)]
pub struct ControlSpec {
    pub gain: f64,
    pub cutoff: GalerkinCutoff,
    pub budget: f64,
    pub form: ControlForm,
}

impl ControlSpec {
    /// Default gain is the linear symbol at the first uncontrolled shell,
    /// which for Navier–Stokes is `ν λ_N`.
    pub fn default_for(spec: &ModelSpec, cutoff: GalerkinCutoff, budget: f64) -> Self {
        let lambda_n = cutoff.lambda_n();
        let gain = if spec.is_wave() || !lambda_n.is_finite() { 0.0 } else { spec.scalar_symbol(lambda_n) };
        Self { gain, cutoff, budget, form: ControlForm::for_model(spec) }
    }

    pub fn validate(&self, spec: &ModelSpec, forcing: &ForcingSet) -> Result<(), CouplingError> {
        if self.form != ControlForm::for_model(spec) {
            return Err(CouplingError::Incompatible(format!(
                "{:?} control cannot drive the {} model",
                self.form,
                spec.name()
            )));
        }
        if !(self.gain >= 0.0 && self.gain.is_finite()) {
            return Err(CouplingError::Incompatible(format!("gain must be finite and nonnegative, got {}", self.gain)));
        }
        if self.budget.is_nan() {
            return Err(CouplingError::Incompatible("budget must not be NaN".into()));
        }
        let grid = match forcing.directions().first() {
            Some(d) => d.grid().clone(),
            None if self.cutoff.lambda_n() <= 1.0 => return Ok(()),
            None => return Err(CouplingError::Coverage(ForcingError::Invalid("no forcing directions".into()))),
        };
        forcing.check_coverage(&grid, &self.cutoff).map_err(CouplingError::Coverage)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingOptions {
    /// Success means `ρ̃(T) ≤ success_factor · ρ̃(0)`.
    pub success_factor: f64,
    /// Start of the decay fit as a fraction of the horizon.
    pub transient_fraction: f64,
    /// Threshold `R` of the leader's energy envelope.
    pub envelope_r: f64,
    /// Keep the checkpointed states of both members.
    pub record_states: bool,
}

impl Default for CouplingOptions {
    fn default() -> Self {
        Self { success_factor: 1e-3, transient_fraction: 0.1, envelope_r: 50.0, record_states: false }
    }
}

/// Least-squares line through `log ρ̃` on the fitting window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `-d log ρ̃ / dt`
    pub rate: f64,
    pub intercept: f64,
    /// Root-mean-square residual of `log ρ̃`.
    pub residual: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub points: usize,
}

/// Fit `log ρ̃ ≈ c - rate·t` over `t ≥ t_start`, stopping at the first sample
/// below `floor`.
pub fn fit_decay(times: &[f64], rho: &[f64], t_start: f64, floor: f64) -> Option<DecayFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(rho)
        .filter(|(t, _)| **t >= t_start)
        .take_while(|(_, r)| **r > floor && r.is_finite())
        .map(|(t, r)| (*t, r.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (sxx, sxy) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt).powi(2), b + (t - mt) * (y - my)));
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mt;
    let residual = (pts.iter().map(|(t, y)| (y - intercept - slope * t).powi(2)).sum::<f64>() / n).sqrt();
    Some(DecayFit { rate: -slope, intercept, residual, t_start: pts[0].0, t_end: pts[pts.len() - 1].0, points: pts.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub replica: u64,
    pub times: Vec<f64>,
    pub rho: Vec<f64>,
    /// Leader energy at the checkpoints.
    pub energy: Vec<f64>,
    pub ledger: Vec<LedgerRecord>,
    pub tau_hit: bool,
    pub tau_time: Option<f64>,
    pub decay: Option<DecayFit>,
    pub success: bool,
    /// `sup_t E(t) + ∫D - |σ|²t - E(0)` of the leader over every step.
    pub envelope_sup: f64,
    pub envelope_exceeded: bool,
    /// Largest single-step ledger increment.
    pub max_cost_increment: f64,
}

impl CouplingReport {
    pub fn final_cost(&self) -> f64 {
        self.ledger.last().map_or(0.0, |r| r.cost)
    }

    pub fn within_budget(&self, budget: f64) -> bool {
        self.final_cost() <= budget.max(0.0) + self.max_cost_increment
    }
}

/// Report plus, when requested, the stored states of both members.
#[derive(Clone, Debug)]
pub struct PairRun {
    pub report: CouplingReport,
    pub leader: Option<Trajectory>,
    pub shadow: Option<Trajectory>,
}

/// Everything a replica of a coupling experiment needs.
#[derive(Clone, Debug)]
pub struct PairJob {
    pub spec: ModelSpec,
    pub u0: State,
    pub shadow0: State,
    pub stepper: StepperConfig,
    pub forcing: ForcingSet,
    pub control: ControlSpec,
    pub seed: u64,
    pub options: CouplingOptions,
}

impl PairJob {
    pub fn run(&self, replica: u64) -> Result<PairRun, CouplingError> {
        run_pair(
            &self.spec,
            &self.u0,
            &self.shadow0,
            &self.stepper,
            &self.forcing,
            &self.control,
            self.seed,
            replica,
            &self.options,
        )
    }
}

#[allow(clippy::too_many_arguments)]
pub fn run_pair(
    spec: &ModelSpec,
    u0: &State,
    shadow0: &State,
    config: &StepperConfig,
    forcing: &ForcingSet,
    control: &ControlSpec,
    seed: u64,
    replica: u64,
    options: &CouplingOptions,
) -> Result<PairRun, CouplingError> {
    let steps = config.validate(spec)?;
    control.validate(spec, forcing)?;
    let grid = u0.grid().clone();
    if !grid.same_shape(shadow0.grid()) {
        return Err(ModelError::from(crate::spectral::SpectralError::GridMismatch).into());
    }
    let stepper = Stepper::new(spec, &grid, config.dt);
    let mut path = NoisePath::refined(seed, replica, forcing.len(), config.dt, config.noise_substeps);
    let mut leader_ledger = GirsanovLedger::new(0.0);
    let mut ledger = GirsanovLedger::new(control.budget);
    check_cfl(spec, u0, config.dt, 0.0)?;
    check_cfl(spec, shadow0, config.dt, 0.0)?;

    let injection = spec.injection_rate(forcing);
    let (e0, _) = spec.energy_and_dissipation(u0)?;
    let mut dissipated = 0.0;
    let mut envelope_sup = 0.0f64;

    let mut times = vec![0.0];
    let mut rho = vec![spec.rho_tilde(u0, shadow0)?];
    let mut energy = vec![e0];
    let mut records = vec![LedgerRecord::of(&ledger)];
    let record = options.record_states;
    let mut leader_states = record.then(|| vec![u0.clone()]);
    let mut shadow_states = record.then(|| vec![shadow0.clone()]);

    let (mut u, mut s) = (u0.clone(), shadow0.clone());
    for n in 1..=steps {
        let noise = stepper.draw(forcing, &mut path);
        let (_, d) = spec.energy_and_dissipation(&u)?;
        dissipated += d * config.dt;
        let g = if ledger.is_active() {
            Some(spec.coupling_control(&u, &s, control.gain, &control.cutoff)?)
        } else {
            None
        };
        let u_next = stepper.step_controlled(spec, &u, &noise, forcing, &mut leader_ledger, None)?;
        let s_next = stepper.step_controlled(spec, &s, &noise, forcing, &mut ledger, g.as_ref())?;
        u = u_next;
        s = s_next;
        let t = n as f64 * config.dt;
        let (e, _) = spec.energy_and_dissipation(&u)?;
        envelope_sup = envelope_sup.max(e + dissipated - injection * t - e0);
        if n % config.checkpoint_every == 0 || n == steps {
            check_cfl(spec, &u, config.dt, t)?;
            check_cfl(spec, &s, config.dt, t)?;
            times.push(t);
            rho.push(spec.rho_tilde(&u, &s)?);
            energy.push(e);
            records.push(LedgerRecord::of(&ledger));
            if let (Some(a), Some(b)) = (leader_states.as_mut(), shadow_states.as_mut()) {
                a.push(u.clone());
                b.push(s.clone());
            }
        }
    }

    let horizon = steps as f64 * config.dt;
    let rho0 = rho[0];
    let floor = (rho0 * 1e-12).max(f64::MIN_POSITIVE);
    let decay = fit_decay(&times, &rho, options.transient_fraction * horizon, floor);
    let last = *rho.last().unwrap();
    let report = CouplingReport {
        replica,
        tau_hit: ledger.stopped(),
        tau_time: ledger.stop_time(),
        decay,
        success: last <= options.success_factor * rho0,
        envelope_sup,
        envelope_exceeded: envelope_sup >= options.envelope_r,
        max_cost_increment: ledger.max_increment(),
        times,
        rho,
        energy,
        ledger: records,
    };
    let wrap = |states: Option<Vec<State>>| {
        states.map(|states| Trajectory {
            times: report.times.clone(),
            states,
            ledger: report.ledger.clone(),
            budget_residual: Vec::new(),
        })
    };
    let leader = wrap(leader_states);
    let shadow = wrap(shadow_states);
    Ok(PairRun { report, leader, shadow })
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = successes as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub replicas: usize,
    pub completed: usize,
    pub failed: Vec<(u64, String)>,
    pub successes: usize,
    pub success_frequency: f64,
    pub wilson_95: (f64, f64),
    pub tau_hit_frequency: f64,
    pub envelope_exceedance: f64,
    /// Success frequency among replicas that stayed inside the energy envelope.
    pub conditional_success_frequency: Option<f64>,
    pub decay_rates: Vec<f64>,
    pub budget_violations: usize,
    pub reports: Vec<CouplingReport>,
}

impl EnsembleSummary {
    pub fn from_results(results: Vec<(u64, Result<CouplingReport, String>)>, budget: f64) -> Self {
        let replicas = results.len();
        let mut reports = Vec::new();
        let mut failed = Vec::new();
        for (r, res) in results {
            match res {
                Ok(rep) => reports.push(rep),
                Err(e) => failed.push((r, e)),
            }
        }
        let completed = reports.len();
        let successes = reports.iter().filter(|r| r.success).count();
        let frac = |k: usize| if replicas == 0 { 0.0 } else { k as f64 / replicas as f64 };
        let inside: Vec<&CouplingReport> = reports.iter().filter(|r| !r.envelope_exceeded).collect();
        let conditional_success_frequency = (!inside.is_empty())
            .then(|| inside.iter().filter(|r| r.success).count() as f64 / inside.len() as f64);
        Self {
            replicas,
            completed,
            successes,
            success_frequency: frac(successes),
            wilson_95: wilson_interval(successes, replicas),
            tau_hit_frequency: frac(reports.iter().filter(|r| r.tau_hit).count()),
            envelope_exceedance: frac(reports.iter().filter(|r| r.envelope_exceeded).count()),
            conditional_success_frequency,
            decay_rates: reports.iter().filter_map(|r| r.decay.map(|d| d.rate)).collect(),
            budget_violations: reports.iter().filter(|r| !r.within_budget(budget)).count(),
            failed,
            reports,
        }
    }

    pub fn diverged_fraction(&self) -> f64 {
        if self.replicas == 0 {
            0.0
        } else {
            self.failed.len() as f64 / self.replicas as f64
        }
    }
}

/// Run `replicas` independent noise realizations of `job` in parallel.
/// Per-replica failures are recorded, not propagated.
pub fn run_ensemble(job: &PairJob, replicas: u64) -> Result<EnsembleSummary, CouplingError> {
    if replicas == 0 {
        return Err(CouplingError::Incompatible("at least one replica is required".into()));
    }
    job.stepper.validate(&job.spec)?;
    job.control.validate(&job.spec, &job.forcing)?;
    let light = PairJob { options: CouplingOptions { record_states: false, ..job.options.clone() }, ..job.clone() };
    let results: Vec<(u64, Result<CouplingReport, String>)> = (0..replicas)
        .into_par_iter()
        .map(|r| (r, light.run(r).map(|p| p.report).map_err(|e| e.to_string())))
        .collect();
    Ok(EnsembleSummary::from_results(results, job.control.budget))
}

/// `∫ v·∇u·v dx` with `v`, `u` the velocities of the vorticities `dv`, `xi`.
fn stretching(dv: &SpectralField, xi: &SpectralField) -> Result<f64, CouplingError> {
    let grid = xi.grid().clone();
    let v = biot_savart(dv).map_err(ModelError::from)?;
    let u = biot_savart(xi).map_err(ModelError::from)?;
    let vp = v.to_physical();
    let mut total = 0.0;
    for c in 0..2 {
        let uc = SpectralField::from_coefficients(&grid, 1, u.component(c).to_vec());
        let grad = gradient(&uc).map_err(ModelError::from)?.to_physical();
        for j in 0..grid.len() {
            total += (vp[0][j] * grad[0][j] + vp[1][j] * grad[1][j]) * vp[c][j];
        }
    }
    Ok(total * grid.volume() / grid.len() as f64)
}

/// Per-step residual of the discrete identity for `|v|²`, `v = u - ũ`:
///
/// `(|v_{n+1}|² - |v_n|²)/dt - Σ_k (a_k² - 1)/dt |v̂_k|² + 2∫v·∇u·v`
///
/// where `a_k` is the scheme's linear multiplier of the difference (viscous
/// decay, minus the control while `t < τ_K`), which tends to
/// `-2ν‖v‖² - 2λ|P_N v|²` as `dt → 0`. Needs one stored state per step.
pub fn gronwall_envelope_check(
    spec: &ModelSpec,
    control: &ControlSpec,
    leader: &Trajectory,
    shadow: &Trajectory,
) -> Result<Vec<f64>, CouplingError> {
    if spec.is_wave() || control.form != ControlForm::LinearProjection {
        return Err(CouplingError::Incompatible("the envelope check needs a fluid model with linear-projection control".into()));
    }
    if leader.states.len() != shadow.states.len() || leader.states.len() < 2 {
        return Err(CouplingError::Incompatible("trajectories must be aligned and hold at least two states".into()));
    }
    let dt = leader.times[1] - leader.times[0];
    let grid = leader.states[0].grid().clone();
    let weight = |i: usize| if grid.k2(i) > 0.0 { 1.0 / grid.k2(i) } else { 0.0 };
    let mut out = Vec::with_capacity(leader.states.len() - 1);
    for n in 0..leader.states.len() - 1 {
        if ((leader.times[n + 1] - leader.times[n]) - dt).abs() > 1e-9 * dt {
            return Err(CouplingError::Incompatible("states must be stored at every step".into()));
        }
        let (xi, xs) = (leader.states[n].vorticity().unwrap(), shadow.states[n].vorticity().unwrap());
        let v = xi - xs;
        let v_next = leader.states[n + 1].vorticity().unwrap() - shadow.states[n + 1].vorticity().unwrap();
        let active = shadow.ledger.get(n).is_some_and(|r| !r.stopped);
        let mut linear = 0.0;
        for (i, z) in v.data().iter().enumerate() {
            let k2 = grid.k2(i);
            if k2 == 0.0 || !grid.is_dealiased(i) {
                continue;
            }
            let m = spec.scalar_symbol(k2);
            let mut a = (-m * dt).exp();
            if active && control.cutoff.is_low(k2) {
                a -= control.gain * crate::integrate::phi1(-m * dt) * dt;
            }
            linear += (a * a - 1.0) / dt * weight(i) * z.norm_sqr();
        }
        linear *= grid.volume();
        let derivative = (v_next.weighted_norm_sq(weight) - v.weighted_norm_sq(weight)) / dt;
        let nonlinear = if spec.nonlinear { stretching(&v, xi)? } else { 0.0 };
        out.push(derivative - linear + 2.0 * nonlinear);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_fit_recovers_exponential() {
        let times: Vec<f64> = (0..100).map(|i| i as f64 * 0.1).collect();
        let rho: Vec<f64> = times.iter().map(|t| 2.0 * (-0.7 * t).exp()).collect();
        let fit = fit_decay(&times, &rho, 1.0, 1e-30).unwrap();
        assert!((fit.rate - 0.7).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        assert_eq!(fit.t_start, 1.0);
    }

    #[test]
    fn decay_fit_stops_at_floor() {
        let times: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let rho: Vec<f64> = times.iter().map(|t| (-t).exp().max(1e-20)).collect();
        let fit = fit_decay(&times, &rho, 0.0, 1e-16).unwrap();
        assert!((fit.rate - 1.0).abs() < 1e-12);
        assert!(fit.t_end < 37.0);
        assert!(fit_decay(&[0.0, 1.0], &[1.0, 0.5], 0.0, 0.0).is_none());
    }

    #[test]
    fn wilson_interval_examples() {
        let (lo, hi) = wilson_interval(40, 50);
        assert!((lo - 0.6696).abs() < 1e-3 && (hi - 0.8876).abs() < 1e-3, "{lo} {hi}");
        assert_eq!(wilson_interval(0, 10).0, 0.0);
        assert!((wilson_interval(10, 10).1 - 1.0).abs() < 1e-12);
    }
}
