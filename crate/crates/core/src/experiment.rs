//! Orchestration of the four experiment commands and their on-disk artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, OutputFormat, SCHEMA_VERSION};
use crate::coupling::{run_ensemble, PairJob};
use crate::diagnostics::{ergodic_agreement, inviscid_limit_study, AgreementRun, LimitStudy};
use crate::forcing::NoisePath;
use crate::integrate::{integrate, write_checkpoint, IntegrationError};
use crate::models::Variant;

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Couple,
    Ergodic,
    InviscidLimit,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Couple => "couple",
            Command::Ergodic => "ergodic",
            Command::InviscidLimit => "inviscid-limit",
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Run(String),
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

fn run_err(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Run(e.to_string())
}

/// Result of a completed command.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub directory: PathBuf,
    pub replicas: u64,
    pub diverged: u64,
    pub diverged_fraction: f64,
    /// Output files relative to `directory`, excluding the manifest.
    pub files: Vec<String>,
}

impl RunOutcome {
    /// 0 normally, 3 when the diverged fraction exceeds `tolerance`.
    pub fn exit_code(&self, tolerance: f64) -> i32 {
        if self.diverged_fraction > tolerance {
            3
        } else {
            0
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    version: &'a str,
    command: &'a str,
    seed: u64,
    replicas: u64,
    config_sha256: String,
    wall_time_seconds: f64,
    diverged: u64,
    files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        write!(s, "{b:02x}").unwrap();
    }
    s
}

/// Collects the files of one run inside its output directory.
struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn create(dir: PathBuf) -> Result<Self, ExperimentError> {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), ExperimentError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&path, bytes).map_err(io_err(&path))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn ndjson<T: Serialize>(&mut self, name: &str, records: impl IntoIterator<Item = T>) -> Result<(), ExperimentError> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, &r).map_err(run_err)?;
            buf.push(b'\n');
        }
        self.write(name, &buf)
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(run_err)?;
        }
        let buf = w.into_inner().map_err(run_err)?;
        self.write(name, &buf)
    }

    fn manifest(&self, manifest: &Manifest) -> Result<(), ExperimentError> {
        let path = self.dir.join(MANIFEST_FILE);
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, manifest).map_err(run_err)?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(&path))
    }

    fn hashes(&self) -> Result<BTreeMap<String, String>, ExperimentError> {
        self.files
            .iter()
            .map(|name| {
                let path = self.dir.join(name);
                fs::read(&path).map(|b| (name.clone(), sha256_hex(&b))).map_err(io_err(&path))
            })
            .collect()
    }
}

/// Read a config file and apply dotted-path overrides.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(crate::config::parse_with_overrides(&text, overrides)?)
}

/// Run `command` and write every artifact into the configured output directory.
pub fn run_command(command: Command, config: &ExperimentConfig) -> Result<RunOutcome, ExperimentError> {
    let started = Instant::now();
    let mut config = config.clone();
    config.resolve()?;
    let mut out = Output::create(config.output_directory())?;
    let resolved = config.to_toml();
    out.write(CONFIG_FILE, resolved.as_bytes())?;

    let (replicas, diverged) = match command {
        Command::Simulate => simulate(&config, &mut out)?,
        Command::Couple => couple(&config, &mut out)?,
        Command::Ergodic => ergodic(&config, &mut out)?,
        Command::InviscidLimit => inviscid_limit(&config, &mut out)?,
    };

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        version: VERSION,
        command: command.name(),
        seed: config.ensemble.seed,
        replicas,
        config_sha256: sha256_hex(resolved.as_bytes()),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        diverged,
        files: out.hashes()?,
    };
    out.manifest(&manifest)?;
    Ok(RunOutcome {
        directory: out.dir.clone(),
        replicas,
        diverged,
        diverged_fraction: diverged as f64 / replicas.max(1) as f64,
        files: out.files.clone(),
    })
}

fn wants(config: &ExperimentConfig, f: OutputFormat) -> bool {
    config.output.formats.contains(&f)
}

#[derive(Serialize)]
struct SimulateRecord {
    replica: u64,
    t: f64,
    energy: f64,
    budget_residual: f64,
}

#[derive(Serialize)]
struct SimulateRow {
    replica: u64,
    status: &'static str,
    t_final: f64,
    energy_final: f64,
    message: String,
}

fn simulate(config: &ExperimentConfig, out: &mut Output) -> Result<(u64, u64), ExperimentError> {
    let grid = config.grid()?;
    let spec = config.model_spec(&grid)?;
    let forcing = config.forcing_set(&grid)?;
    let stepper = config.stepper_config(&spec);
    let initial = config.initial_state(&grid, &spec, 0);
    let replicas = config.ensemble.replicas;
    let seed = config.ensemble.seed;
    let results: Vec<Result<_, IntegrationError>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut path = NoisePath::refined(seed, r, forcing.len(), stepper.dt, stepper.noise_substeps);
            integrate(&spec, &initial, &stepper, &forcing, &mut path)
        })
        .collect();

    let mut records = Vec::new();
    let mut rows = Vec::new();
    let mut diverged = 0;
    for (r, res) in (0..replicas).zip(&results) {
        match res {
            Ok(traj) => {
                for (i, (t, s)) in traj.times.iter().zip(&traj.states).enumerate() {
                    let (energy, _) = spec.energy_and_dissipation(s).map_err(run_err)?;
                    records.push(SimulateRecord { replica: r, t: *t, energy, budget_residual: traj.budget_residual[i] });
                }
                let (energy_final, _) = spec.energy_and_dissipation(traj.last()).map_err(run_err)?;
                let t_final = traj.times.last().copied().unwrap_or(0.0);
                rows.push(SimulateRow { replica: r, status: "ok", t_final, energy_final, message: String::new() });
                if wants(config, OutputFormat::Checkpoint) {
                    let mut buf = Vec::new();
                    write_checkpoint(&mut buf, traj.last(), t_final).map_err(run_err)?;
                    out.write(&format!("checkpoints/replica-{r:04}.ergc"), &buf)?;
                }
            }
            Err(e @ (IntegrationError::Diverged { .. } | IntegrationError::Cfl { .. })) => {
                diverged += 1;
                rows.push(SimulateRow { replica: r, status: "diverged", t_final: f64::NAN, energy_final: f64::NAN, message: e.to_string() });
            }
            Err(e) => return Err(run_err(e)),
        }
    }
    if wants(config, OutputFormat::Ndjson) {
        out.ndjson("simulate.ndjson", &records)?;
    }
    if wants(config, OutputFormat::Csv) {
        out.csv("simulate_summary.csv", &rows)?;
    }
    Ok((replicas, diverged))
}

#[derive(Serialize)]
struct CoupleRecord {
    replica: u64,
    t: f64,
    rho: f64,
    cost: f64,
    tau_hit: bool,
}

#[derive(Serialize)]
struct CoupleRow {
    replica: u64,
    status: &'static str,
    success: bool,
    tau_hit: bool,
    tau_time: Option<f64>,
    decay_rate: Option<f64>,
    decay_residual: Option<f64>,
    rho_initial: f64,
    rho_final: f64,
    final_cost: f64,
    envelope_exceeded: bool,
}

#[derive(Serialize)]
struct EnsembleRow {
    replicas: usize,
    completed: usize,
    failed: usize,
    success_frequency: f64,
    wilson_low: f64,
    wilson_high: f64,
    tau_hit_frequency: f64,
    envelope_exceedance: f64,
    conditional_success_frequency: Option<f64>,
    budget_violations: usize,
}

fn couple(config: &ExperimentConfig, out: &mut Output) -> Result<(u64, u64), ExperimentError> {
    let grid = config.grid()?;
    let spec = config.model_spec(&grid)?;
    let job = PairJob {
        u0: config.initial_state(&grid, &spec, 0),
        shadow0: config.initial_state(&grid, &spec, 1),
        stepper: config.stepper_config(&spec),
        forcing: config.forcing_set(&grid)?,
        control: config.control_spec(&grid, &spec),
        seed: config.ensemble.seed,
        options: config.coupling_options(),
        spec,
    };
    let replicas = config.ensemble.replicas;
    let summary = run_ensemble(&job, replicas).map_err(run_err)?;

    if wants(config, OutputFormat::Ndjson) {
        let records = summary.reports.iter().flat_map(|rep| {
            rep.times.iter().zip(&rep.rho).zip(&rep.ledger).map(move |((t, rho), l)| CoupleRecord {
                replica: rep.replica,
                t: *t,
                rho: *rho,
                cost: l.cost,
                tau_hit: l.stopped,
            })
        });
        out.ndjson("couple.ndjson", records)?;
    }
    if wants(config, OutputFormat::Csv) {
        let mut rows: Vec<CoupleRow> = summary
            .reports
            .iter()
            .map(|rep| CoupleRow {
                replica: rep.replica,
                status: "ok",
                success: rep.success,
                tau_hit: rep.tau_hit,
                tau_time: rep.tau_time,
                decay_rate: rep.decay.map(|d| d.rate),
                decay_residual: rep.decay.map(|d| d.residual),
                rho_initial: rep.rho.first().copied().unwrap_or(f64::NAN),
                rho_final: rep.rho.last().copied().unwrap_or(f64::NAN),
                final_cost: rep.final_cost(),
                envelope_exceeded: rep.envelope_exceeded,
            })
            .collect();
        rows.extend(summary.failed.iter().map(|(r, _)| CoupleRow {
            replica: *r,
            status: "failed",
            success: false,
            tau_hit: false,
            tau_time: None,
            decay_rate: None,
            decay_residual: None,
            rho_initial: f64::NAN,
            rho_final: f64::NAN,
            final_cost: f64::NAN,
            envelope_exceeded: false,
        }));
        rows.sort_by_key(|r| r.replica);
        out.csv("couple_replicas.csv", &rows)?;
        out.csv(
            "couple_summary.csv",
            [EnsembleRow {
                replicas: summary.replicas,
                completed: summary.completed,
                failed: summary.failed.len(),
                success_frequency: summary.success_frequency,
                wilson_low: summary.wilson_95.0,
                wilson_high: summary.wilson_95.1,
                tau_hit_frequency: summary.tau_hit_frequency,
                envelope_exceedance: summary.envelope_exceedance,
                conditional_success_frequency: summary.conditional_success_frequency,
                budget_violations: summary.budget_violations,
            }],
        )?;
    }
    Ok((replicas, summary.failed.len() as u64))
}

fn ergodic(config: &ExperimentConfig, out: &mut Output) -> Result<(u64, u64), ExperimentError> {
    let grid = config.grid()?;
    let spec = config.model_spec(&grid)?;
    let seed = config.ensemble.seed;
    let run = AgreementRun {
        forcing: config.forcing_set(&grid)?,
        stepper: config.stepper_config(&spec),
        period: config.diagnostics.period,
        burn_in: config.diagnostics.burn_in,
        seeds: (seed, seed.wrapping_add(1)),
        spec: spec.clone(),
    };
    let a = config.initial_state(&grid, &spec, 0);
    let b = config.initial_state(&grid, &spec, 1);
    let report = ergodic_agreement(&run, &a, &b, &config.diagnostics.observables).map_err(run_err)?;
    if wants(config, OutputFormat::Ndjson) {
        out.ndjson("ergodic.ndjson", &report.rows)?;
    }
    if wants(config, OutputFormat::Csv) {
        out.csv("ergodic.csv", &report.rows)?;
    }
    Ok((1, 0))
}

#[derive(Serialize)]
struct LimitCsvRow<'a> {
    eps: f64,
    discrepancy: f64,
    discrepancy_se: f64,
    moment_sup: f64,
    observable: &'a str,
    mean: f64,
    se: f64,
    difference: f64,
    difference_se: f64,
    fitted_order: Option<f64>,
}

fn inviscid_limit(config: &ExperimentConfig, out: &mut Output) -> Result<(u64, u64), ExperimentError> {
    let grid = config.grid()?;
    let spec = config.model_spec(&grid)?;
    if !matches!(spec.variant, Variant::EulerVoigt { .. }) {
        return Err(ConfigError::Invalid {
            path: "model.variant".into(),
            message: "inviscid-limit requires the euler-voigt model".into(),
        }
        .into());
    }
    let stepper = config.stepper_config(&spec);
    let study = LimitStudy {
        forcing: config.forcing_set(&grid)?,
        initial: config.initial_state(&grid, &spec, 0),
        dt: stepper.dt,
        horizon: stepper.t_end,
        sample_every: stepper.checkpoint_every,
        seed: config.ensemble.seed,
        observables: config.diagnostics.observables.clone(),
        spec,
    };
    let replicas = config.ensemble.replicas;
    let report = inviscid_limit_study(&study, &config.diagnostics.eps_list, replicas).map_err(run_err)?;
    if wants(config, OutputFormat::Ndjson) {
        out.ndjson("inviscid_limit.ndjson", &report.rows)?;
    }
    if wants(config, OutputFormat::Csv) {
        #[derive(Serialize)]
        struct Row {
            eps: f64,
            discrepancy: f64,
            discrepancy_se: f64,
            moment_sup: f64,
            fitted_order: Option<f64>,
        }
        out.csv(
            "inviscid_limit.csv",
            report.rows.iter().map(|r| Row {
                eps: r.eps,
                discrepancy: r.discrepancy,
                discrepancy_se: r.discrepancy_se,
                moment_sup: r.moment_sup,
                fitted_order: report.fitted_order,
            }),
        )?;
        out.csv(
            "inviscid_limit_observables.csv",
            report.rows.iter().flat_map(|r| {
                r.observables.iter().map(move |o| LimitCsvRow {
                    eps: r.eps,
                    discrepancy: r.discrepancy,
                    discrepancy_se: r.discrepancy_se,
                    moment_sup: r.moment_sup,
                    observable: &o.observable,
                    mean: o.mean,
                    se: o.se,
                    difference: o.difference,
                    difference_se: o.difference_se,
                    fitted_order: report.fitted_order,
                })
            }),
        )?;
    }
    Ok((replicas, 0))
}
