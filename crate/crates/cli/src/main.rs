mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;
use spinbus::{Error, Result};

use config::Config;

const AFTER_HELP: &str = "\
Configuration:
  --config FILE reads a flat TOML document whose keys are the long flag
  names with '-' replaced by '_' (e.g. b_user = [0.35, -0.25]). Flags given
  on the command line override values from the file, which override the
  built-in defaults.

Output:
  Data files are written to --out; a JSON summary
  {subcommand, config, results, seed, version} is printed to stdout and
  saved as summary.json. Energies are in units of J, times in units of 1/J.

Exit codes:
  0  success
  2  configuration error
  3  resource guard (system too large, I/O failure)
  4  numerical failure
  Failures print a JSON error record on stderr.";

#[derive(Parser)]
#[command(name = "spinbus", version, about = "Multi-user state transfer across an XX spin-chain bus", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    flags: Config,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Averaged fidelities over a time grid
    Evolve,
    /// Grid search of a tuning strategy
    Optimize,
    /// Optimal parameters for a list of chain lengths
    Table,
    /// Optimal fidelity against channel temperature
    Thermal,
    /// Disorder-averaged optimal fidelity
    Disorder,
    /// Optimal fidelity against dephasing rate
    Dephasing,
    /// Pointwise fidelity against the input polar angles
    StateScan,
    /// Inverse participation ratios of sector eigenstates
    Ipr,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Evolve => "evolve",
            Command::Optimize => "optimize",
            Command::Table => "table",
            Command::Thermal => "thermal",
            Command::Disorder => "disorder",
            Command::Dephasing => "dephasing",
            Command::StateScan => "state-scan",
            Command::Ipr => "ipr",
        }
    }

    fn run(self, cfg: &Config) -> Result<commands::Outcome> {
        match self {
            Command::Evolve => commands::evolve(cfg),
            Command::Optimize => commands::optimize(cfg),
            Command::Table => commands::table(cfg),
            Command::Thermal => commands::thermal(cfg),
            Command::Disorder => commands::disorder(cfg),
            Command::Dephasing => commands::dephasing(cfg),
            Command::StateScan => commands::state(cfg),
            Command::Ipr => commands::ipr(cfg),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation(_) => 2,
        Error::Resource(_) => 3,
        Error::Numerical(_) => 4,
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::resource(format!("cannot write {}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let cfg = file.overlay(cli.flags);
    let pool = match cfg.workers {
        Some(0) => return Err(Error::validation("--workers must be at least 1")),
        Some(w) => rayon::ThreadPoolBuilder::new().num_threads(w).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| Error::resource(format!("cannot start worker pool: {e}")))?;
    let outcome = pool.install(|| cli.command.run(&cfg))?;

    let dir = PathBuf::from(cfg.out.as_deref().unwrap_or("."));
    std::fs::create_dir_all(&dir).map_err(|e| Error::resource(format!("cannot create {}: {e}", dir.display())))?;
    for (name, bytes) in &outcome.files {
        write_file(&dir, name, bytes)?;
    }
    let summary = json!({
        "subcommand": cli.command.name(),
        "config": outcome.config,
        "results": outcome.results,
        "seed": outcome.seed,
        "version": spinbus::VERSION,
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::numerical(e.to_string()))?;
    write_file(&dir, "summary.json", format!("{text}\n").as_bytes())?;
    println!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = json!({"error": {"kind": e.kind(), "message": e.to_string(), "exit_code": exit_code(&e)}});
            eprintln!("{record}");
            ExitCode::from(exit_code(&e))
        }
    }
}
