use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ioncav_cli::{run, CliError, Format, Mode, RunConfig};

/// Fabry-Perot ion-cavity design toolkit.
///
/// Precedence: command-line flags override the config file, which
/// overrides built-in defaults.
#[derive(Parser)]
#[command(name = "ioncav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Performance of one cavity design.
    Evaluate(Flags),
    /// Optimal (L, R, D, T) within a design envelope.
    Optimize(Flags),
    /// Two-parameter grid of one quantity.
    Sweep(Flags),
    /// Tolerance grid about the optimal design.
    Robustness(Flags),
    /// Optimised vSTIRAP emission against pulse duration.
    Vstirap(Flags),
}

#[derive(clap::Args)]
struct Flags {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (standard output when absent). CSV grids also get a
    /// `.json` sidecar next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the parallel engines (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Parameter override `key=value`; dotted keys reach nested objects.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

fn configure(mode: Mode, flags: &Flags) -> Result<RunConfig, CliError> {
    let mut config = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
            let config = RunConfig::from_json(&text)?;
            if config.mode != mode {
                return Err(CliError::validation("mode", format!("config is for `{:?}`, not this subcommand", config.mode).to_lowercase()));
            }
            config
        }
        None => RunConfig::new(mode),
    };
    for p in &flags.params {
        config.set_parameter(p)?;
    }
    if let Some(seed) = flags.seed {
        config.seed = seed;
    }
    if let Some(format) = flags.format {
        config.output.format = format;
    }
    if let Some(out) = &flags.out {
        config.output.path = Some(out.clone());
    }
    Ok(config)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn execute(mode: Mode, flags: &Flags) -> Result<(), CliError> {
    let config = configure(mode, flags)?;
    if let Some(n) = flags.threads {
        if n == 0 {
            return Err(CliError::validation("threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::io(e.to_string()))?;
    }
    let rendered = run(&config)?;
    match &config.output.path {
        Some(path) => {
            write(path, &rendered.main)?;
            if let Some(sidecar) = &rendered.sidecar {
                write(&path.with_extension("json"), sidecar)?;
            }
        }
        None => print!("{}", rendered.main),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, flags) = match &cli.command {
        Command::Evaluate(f) => (Mode::Evaluate, f),
        Command::Optimize(f) => (Mode::Optimize, f),
        Command::Sweep(f) => (Mode::Sweep, f),
        Command::Robustness(f) => (Mode::Robustness, f),
        Command::Vstirap(f) => (Mode::Vstirap, f),
    };
    match execute(mode, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
