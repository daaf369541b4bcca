use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cemfield::harness::{
    experiment_command, invert_command, leadfield_command, mesh_command, metrics_command,
    simulate_command, Experiment, Manifest, ProjectConfig,
};
use cemfield::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cemfield",
    version,
    about = "FEM EEG/EIT lead fields and hierarchical Bayesian inversion"
)]
struct Cli {
    /// Project configuration (INI).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (defaults to the configured one).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and smooth the tetrahedral mesh.
    Mesh,
    /// Compute the EEG or EIT lead field.
    Leadfield,
    /// Simulate noisy measurements.
    Simulate,
    /// Reconstruct from measurements.
    Invert {
        /// Data CSV (defaults to data.csv in the output directory).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run a complete experiment protocol.
    Experiment {
        /// eeg-hypermodel or eit-hemorrhage
        name: String,
    },
    /// Recompute metrics for an existing reconstruction.
    Metrics,
}

fn run(cli: Cli) -> Result<Manifest> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let path = cli
        .config
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let cfg = ProjectConfig::load_with_seed(&path, cli.seed)?;
    let base = path.parent().map(PathBuf::from).unwrap_or_default();
    let out = cli.output.unwrap_or_else(|| base.join(&cfg.output));
    match cli.command {
        Command::Mesh => mesh_command(&cfg, &out),
        Command::Leadfield => leadfield_command(&cfg, &out),
        Command::Simulate => simulate_command(&cfg, &out),
        Command::Invert { data } => invert_command(&cfg, &out, data.as_deref()),
        Command::Experiment { name } => experiment_command(&cfg, name.parse::<Experiment>()?, &out),
        Command::Metrics => metrics_command(&cfg, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(m) => {
            for (name, hash) in &m.outputs {
                println!("{hash}  {name}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
