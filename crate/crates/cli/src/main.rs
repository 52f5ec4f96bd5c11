use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use guarantee_cli::{cmd_check, cmd_simulate, cmd_study, cmd_value, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "guarantee", version, about = "Guaranteed-control experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-loop run against one open-loop disturbance.
    Simulate(Common),
    /// Lower-value table by grid dynamic programming; prints V(t0, z0).
    Value(Common),
    /// Structural checks of the system.
    Check(Common),
    /// Convergence study over partition diameters.
    Study(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed_override: Option<u64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (Command::Simulate(c) | Command::Value(c) | Command::Check(c) | Command::Study(c)) = &cli.command;
    if let Some(jobs) = c.jobs {
        if jobs == 0 {
            return Err(CliError::Validation("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed_override {
        cfg.override_seed(seed);
    }
    let out = c.out.as_deref();
    match &cli.command {
        Command::Simulate(_) => {
            let r = cmd_simulate(&cfg, out)?;
            let x = r.trajectory.last_state();
            println!("final state: {}", x.iter().map(|c| format!("{c:.6}")).collect::<Vec<_>>().join(" "));
            for f in &r.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Value(_) => println!("{:.6}", cmd_value(&cfg, out)?),
        Command::Check(_) => println!("{}", cmd_check(&cfg, out)?.to_kv()),
        Command::Study(_) => println!("{}", cmd_study(&cfg, out)?.summary),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
