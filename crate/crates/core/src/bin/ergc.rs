use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use spectral_coupling::experiment::{load_config, run_command, Command};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Sub {
    Simulate,
    Couple,
    Ergodic,
    InviscidLimit,
}

/// Stochastic spectral models: simulation, coupling and ergodic diagnostics.
#[derive(Debug, Parser)]
#[command(name = "ergc", version)]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override `ensemble.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override `ensemble.replicas`.
    #[arg(long)]
    replicas: Option<u64>,
    /// Output directory; defaults to `output.directory`, then `$ERGC_OUTPUT_ROOT`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set model.nu=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("ensemble.seed={seed}"));
    }
    if let Some(r) = cli.replicas {
        overrides.push(format!("ensemble.replicas={r}"));
    }
    if let Some(dir) = &cli.output {
        overrides.push(format!("output.directory={}", toml::Value::String(dir.display().to_string())));
    }
    let command = match cli.command {
        Sub::Simulate => Command::Simulate,
        Sub::Couple => Command::Couple,
        Sub::Ergodic => Command::Ergodic,
        Sub::InviscidLimit => Command::InviscidLimit,
    };
    let result = load_config(&cli.config, &overrides).and_then(|cfg| {
        let tolerance = cfg.ensemble.diverged_tolerance;
        run_command(command, &cfg).map(|o| (o, tolerance))
    });
    match result {
        Ok((outcome, tolerance)) => {
            let code = outcome.exit_code(tolerance);
            if code != 0 {
                eprintln!(
                    "ergc: {} of {} replicas diverged (tolerance {})",
                    outcome.diverged, outcome.replicas, tolerance
                );
            }
            println!("{}", outcome.directory.display());
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("ergc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
