use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use beam_galerkin::config::SolverConfig;
use beam_galerkin::driver::{run, Command, DriverError};
use beam_galerkin::par::init_threads;

/// Periodic solutions of the forced nonlinear beam equation.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; tables go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Build and certify the cluster partition.
    Partition,
    /// Tabulate linear multipliers.
    Spectrum,
    /// Resonance screen over the omega grid.
    Sweep,
    /// Excluded measure against delta.
    Measure,
    /// Staged solve: history table and coefficient dump.
    Solve,
    /// Staged solve against the Newton oracle.
    OracleCompare,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Partition => Command::Partition,
            Cmd::Spectrum => Command::Spectrum,
            Cmd::Sweep => Command::Sweep,
            Cmd::Measure => Command::Measure,
            Cmd::Solve => Command::Solve,
            Cmd::OracleCompare => Command::OracleCompare,
        }
    }
}

fn execute(cli: &Cli) -> Result<(), DriverError> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path)?,
        None => "d = 1\nm = 1.0\n".to_string(),
    };
    let mut cfg = SolverConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.validate()?;
    }
    init_threads(cli.threads);
    let out = run(cli.command.into(), &cfg)?;
    match &cli.out {
        Some(dir) => out.write_to(dir)?,
        None => {
            for (name, content) in &out.files {
                println!("## {name}");
                print!("{content}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
