//! Experiment configuration: TOML schema, defaults, dotted-path overrides and
//! validation.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupling::{ControlForm, ControlSpec, CouplingOptions};
use crate::diagnostics::{Observable, ObservableKind};
use crate::forcing::ForcingSet;
use crate::integrate::{Scheme, StepperConfig};
use crate::models::{ModelSpec, State, Variant, WaveState};
use crate::rng::{stream_rng, tag};
use crate::spectral::{GalerkinCutoff, Grid, SpectralField};

pub const SCHEMA_VERSION: u32 = 1;
pub const OUTPUT_ROOT_ENV: &str = "ERGC_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("could not parse config: {0}")]
    Parse(String),
    #[error("invalid override `{0}`: expected key=value")]
    Override(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.to_string(), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantName {
    NavierStokes,
    FractionalEuler,
    EulerVoigt,
    SineGordon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: VariantName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_visc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "yes")]
    pub nonlinear: bool,
    #[serde(default = "default_sobolev_r")]
    pub sobolev_r: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes_x: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes_y: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    /// Amplitude per forced shell, lowest shell first.
    #[serde(default = "default_shells")]
    pub shell_amplitudes: Vec<f64>,
}

impl Default for ForcingConfig {
    fn default() -> Self {
        Self { shell_amplitudes: default_shells() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Norm of the leader's initial prognostic field.
    #[serde(default = "one")]
    pub leader_norm: f64,
    /// Norm of the shadow's initial field (independent draw).
    #[serde(default = "two")]
    pub shadow_norm: f64,
    /// Coefficient envelope `|k|^{-slope}`.
    #[serde(default = "one")]
    pub slope: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { leader_norm: 1.0, shadow_norm: 2.0, slope: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperBlock {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: u64,
    #[serde(default = "one_u64")]
    pub noise_substeps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
}

impl Default for StepperBlock {
    fn default() -> Self {
        Self { dt: default_dt(), t_end: default_t_end(), checkpoint_every: default_checkpoint_every(), noise_substeps: 1, scheme: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    /// Galerkin cutoff `k_c`; defaults to the highest forced shell.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<f64>,
    /// Gain `λ`; defaults to the linear symbol at `λ_N` (`ν λ_N` for Navier–Stokes).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form: Option<ControlForm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transient_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_r: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "one_u64")]
    pub replicas: u64,
    #[serde(default)]
    pub seed: u64,
    /// Largest tolerated fraction of diverged replicas before exit status 3.
    #[serde(default)]
    pub diverged_tolerance: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { replicas: 1, seed: 0, diverged_tolerance: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    #[serde(default = "one")]
    pub period: f64,
    #[serde(default)]
    pub burn_in: f64,
    #[serde(default = "default_observables")]
    pub observables: Vec<Observable>,
    #[serde(default = "default_eps_list")]
    pub eps_list: Vec<f64>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self { period: 1.0, burn_in: 0.0, observables: default_observables(), eps_list: default_eps_list() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Ndjson,
    Csv,
    Checkpoint,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: None, formats: default_formats() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub forcing: ForcingConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub stepper: StepperBlock,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn yes() -> bool {
    true
}
fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn one_u64() -> u64 {
    1
}
fn schema_version() -> u32 {
    SCHEMA_VERSION
}
fn default_sobolev_r() -> f64 {
    3.0
}
fn default_shells() -> Vec<f64> {
    vec![0.3, 0.3]
}
fn default_dt() -> f64 {
    0.01
}
fn default_t_end() -> f64 {
    10.0
}
fn default_checkpoint_every() -> u64 {
    100
}
fn default_eps_list() -> Vec<f64> {
    vec![0.04, 0.02, 0.01, 0.005]
}
fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Ndjson, OutputFormat::Csv, OutputFormat::Checkpoint]
}
fn default_observables() -> Vec<Observable> {
    vec![
        Observable::energy(),
        Observable::new("low_mode_1_0", ObservableKind::LowModeReal { kx: 1, ky: 0 }),
        Observable::new("bounded_0_1", ObservableKind::BoundedLipschitz { kx: 0, ky: 1 }),
    ]
}

/// Parse, fill defaults and validate.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    parse_with_overrides(text, &[])
}

/// Parse with `key.path=value` overrides applied before validation.
pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let mut cfg: ExperimentConfig =
        toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    cfg.resolve()?;
    Ok(cfg)
}

/// Set `a.b.c = value`, creating intermediate tables. The value is read as a
/// TOML literal, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| ConfigError::Override(assignment.into()))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(|p| p.trim().is_empty()) {
        return Err(ConfigError::Override(assignment.into()));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').map(str::trim).collect();
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| invalid(key, format!("`{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Materialize every default and check all constraints.
    pub fn resolve(&mut self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid("schema_version", format!("unsupported version {}", self.schema_version)));
        }
        self.resolve_model()?;
        let wave = self.model.variant == VariantName::SineGordon;
        let (dx, dy) = if wave { (128, 1) } else { (32, 32) };
        let mx = *self.grid.modes_x.get_or_insert(dx);
        let my = *self.grid.modes_y.get_or_insert(dy);
        if wave && my != 1 {
            return Err(invalid("grid.modes_y", "the sine-Gordon model runs on a one-dimensional grid (modes_y = 1)"));
        }
        if !wave && my < 4 {
            return Err(invalid("grid.modes_y", "fluid models need a two-dimensional grid"));
        }
        let grid = Grid::new(mx, my).map_err(|e| invalid("grid", e.to_string()))?;
        let spec = self.model_spec(&grid)?;

        let forcing = ForcingSet::canonical(&grid, &self.forcing.shell_amplitudes)
            .map_err(|e| invalid("forcing.shell_amplitudes", e.to_string()))?;

        let scheme = *self.stepper.scheme.get_or_insert(Scheme::for_model(&spec));
        let s = &self.stepper;
        let stepper = StepperConfig { dt: s.dt, scheme, t_end: s.t_end, checkpoint_every: s.checkpoint_every, noise_substeps: s.noise_substeps };
        stepper.validate(&spec).map_err(|e| invalid("stepper", e.to_string()))?;

        for (path, v) in [("initial.leader_norm", self.initial.leader_norm), ("initial.shadow_norm", self.initial.shadow_norm)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(path, "must be finite and nonnegative"));
            }
        }
        if !self.initial.slope.is_finite() {
            return Err(invalid("initial.slope", "must be finite"));
        }

        self.resolve_control(&grid, &spec, &forcing)?;

        let e = &self.ensemble;
        if e.replicas == 0 {
            return Err(invalid("ensemble.replicas", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&e.diverged_tolerance) {
            return Err(invalid("ensemble.diverged_tolerance", "must lie in [0, 1]"));
        }
        let d = &self.diagnostics;
        if !(d.period > 0.0 && d.period.is_finite()) {
            return Err(invalid("diagnostics.period", "must be positive"));
        }
        if !(d.burn_in >= 0.0 && d.burn_in.is_finite()) {
            return Err(invalid("diagnostics.burn_in", "must be nonnegative"));
        }
        if d.eps_list.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(invalid("diagnostics.eps_list", "entries must be finite and nonnegative"));
        }
        if self.output.formats.is_empty() {
            return Err(invalid("output.formats", "at least one format is required"));
        }
        Ok(())
    }

    fn resolve_model(&mut self) -> Result<(), ConfigError> {
        let m = &mut self.model;
        let allowed: &[&str] = match m.variant {
            VariantName::NavierStokes => &["nu"],
            VariantName::FractionalEuler => &["gamma"],
            VariantName::EulerVoigt => &["damping", "alpha", "eps_visc"],
            VariantName::SineGordon => &["damping", "beta"],
        };
        let slots: [(&str, &mut Option<f64>, f64); 6] = [
            ("nu", &mut m.nu, 0.1),
            ("gamma", &mut m.gamma, 1.0),
            ("damping", &mut m.damping, 0.5),
            ("alpha", &mut m.alpha, 1.0),
            ("eps_visc", &mut m.eps_visc, 0.0),
            ("beta", &mut m.beta, 1.0),
        ];
        for (name, slot, default) in slots {
            if allowed.contains(&name) {
                slot.get_or_insert(default);
            } else if slot.is_some() {
                return Err(invalid(&format!("model.{name}"), format!("not a parameter of the {:?} model", m.variant)));
            }
        }
        Ok(())
    }

    fn resolve_control(&mut self, grid: &Arc<Grid>, spec: &ModelSpec, forcing: &ForcingSet) -> Result<(), ConfigError> {
        let shells = grid.eigenvalues();
        let forced = self.forcing.shell_amplitudes.iter().rposition(|a| *a > 0.0);
        let c = &mut self.control;
        let default_cutoff = forced.map_or(0.5, |s| shells[s].sqrt());
        let cutoff = *c.cutoff.get_or_insert(default_cutoff);
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(invalid("control.cutoff", "must be positive"));
        }
        let form = *c.form.get_or_insert(ControlForm::for_model(spec));
        let defaults = ControlSpec::default_for(spec, GalerkinCutoff::new(grid, cutoff), 0.0);
        let gain = *c.gain.get_or_insert(defaults.gain);
        let budget = *c.budget.get_or_insert(1e4);
        c.success_factor.get_or_insert(1e-3);
        c.transient_fraction.get_or_insert(0.1);
        c.envelope_r.get_or_insert(50.0);
        let control = ControlSpec { gain, cutoff: GalerkinCutoff::new(grid, cutoff), budget, form };
        if form != ControlForm::for_model(spec) {
            return Err(invalid("control.form", format!("{form:?} control is incompatible with the {} model", spec.name())));
        }
        control.validate(spec, forcing).map_err(|e| match e {
            crate::coupling::CouplingError::Coverage(inner) => invalid(
                "control.cutoff",
                format!("k_c = {cutoff} exceeds the forced shells; Range(σ) ⊃ H_N is required ({inner})"),
            ),
            other => invalid("control", other.to_string()),
        })
    }

    pub fn grid(&self) -> Result<Arc<Grid>, ConfigError> {
        Grid::new(self.grid.modes_x.unwrap_or(32), self.grid.modes_y.unwrap_or(32)).map_err(|e| invalid("grid", e.to_string()))
    }

    pub fn model_spec(&self, _grid: &Arc<Grid>) -> Result<ModelSpec, ConfigError> {
        let m = &self.model;
        let get = |x: Option<f64>| x.unwrap_or(f64::NAN);
        let variant = match m.variant {
            VariantName::NavierStokes => Variant::NavierStokes { nu: get(m.nu) },
            VariantName::FractionalEuler => Variant::FractionalEuler { gamma: get(m.gamma) },
            VariantName::EulerVoigt => {
                Variant::EulerVoigt { damping: get(m.damping), alpha: get(m.alpha), eps_visc: get(m.eps_visc) }
            }
            VariantName::SineGordon => Variant::SineGordon { damping: get(m.damping), beta: get(m.beta) },
        };
        let mut spec = ModelSpec::new(variant).map_err(|e| invalid("model", e.to_string()))?;
        spec.nonlinear = m.nonlinear;
        spec.sobolev_r = m.sobolev_r;
        Ok(spec)
    }

    pub fn forcing_set(&self, grid: &Arc<Grid>) -> Result<ForcingSet, ConfigError> {
        ForcingSet::canonical(grid, &self.forcing.shell_amplitudes).map_err(|e| invalid("forcing", e.to_string()))
    }

    pub fn stepper_config(&self, spec: &ModelSpec) -> StepperConfig {
        let s = &self.stepper;
        StepperConfig {
            dt: s.dt,
            scheme: s.scheme.unwrap_or(Scheme::for_model(spec)),
            t_end: s.t_end,
            checkpoint_every: s.checkpoint_every,
            noise_substeps: s.noise_substeps,
        }
    }

    pub fn control_spec(&self, grid: &Arc<Grid>, spec: &ModelSpec) -> ControlSpec {
        let c = &self.control;
        let cutoff = GalerkinCutoff::new(grid, c.cutoff.unwrap_or(1.0));
        let defaults = ControlSpec::default_for(spec, cutoff.clone(), c.budget.unwrap_or(1e4));
        ControlSpec {
            gain: c.gain.unwrap_or(defaults.gain),
            cutoff,
            budget: defaults.budget,
            form: c.form.unwrap_or(defaults.form),
        }
    }

    pub fn coupling_options(&self) -> CouplingOptions {
        let d = CouplingOptions::default();
        CouplingOptions {
            success_factor: self.control.success_factor.unwrap_or(d.success_factor),
            transient_fraction: self.control.transient_fraction.unwrap_or(d.transient_fraction),
            envelope_r: self.control.envelope_r.unwrap_or(d.envelope_r),
            record_states: false,
        }
    }

    /// Leader (`which = 0`) or shadow (`which = 1`) initial state.
    pub fn initial_state(&self, grid: &Arc<Grid>, spec: &ModelSpec, which: u64) -> State {
        let norm = if which == 0 { self.initial.leader_norm } else { self.initial.shadow_norm };
        random_state(grid, spec, self.ensemble.seed, which, self.initial.slope, norm)
    }

    /// Output directory: the configured one, else `$ERGC_OUTPUT_ROOT`, else `ergc-output`.
    pub fn output_directory(&self) -> PathBuf {
        self.output.directory.clone().unwrap_or_else(|| {
            std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("ergc-output"))
        })
    }
}

/// Reproducible random state with envelope `|k|^{-slope}` and the given norm.
pub fn random_state(grid: &Arc<Grid>, spec: &ModelSpec, seed: u64, stream: u64, slope: f64, norm: f64) -> State {
    let mut rng = stream_rng(seed, stream, tag::INITIAL);
    let scale = |f: SpectralField, n: f64| {
        let m = f.norm();
        if m == 0.0 {
            f
        } else {
            f.scaled(n / m)
        }
    };
    if spec.is_wave() {
        let u = SpectralField::random_odd(grid, &mut rng, |k| k.powf(-slope - 1.0));
        let v = SpectralField::random_odd(grid, &mut rng, |k| k.powf(-slope));
        let total = (u.norm_sq() + v.norm_sq()).sqrt();
        let s = if total == 0.0 { 0.0 } else { norm / total };
        State::Wave(WaveState { u: u.scaled(s), v: v.scaled(s) })
    } else {
        State::Vorticity(scale(SpectralField::random_scalar(grid, &mut rng, |k| k.powf(-slope)), norm))
    }
}
