use clap::{Parser, Subcommand};
use sptree_cli::config::RunConfig;
use sptree_cli::{dynamics, tree_info, verify, Failure};
use std::path::PathBuf;
use std::process::ExitCode;

/// Sparse-tree laboratory. Exit codes: 0 pass, 1 assertion violation, 2 config error, 3 resource limit.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for randomized sweeps (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Branching numbers, shell sizes and sparse positions of the tree.
    TreeInfo,
    /// Run the verifier suite on the tree and one of its blocks.
    Verify,
    /// Moment sweeps, transport exponents, dimension proxy and envelopes.
    Dynamics,
}

fn run(cli: &Cli) -> Result<i32, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| {
        Failure::Config(sptree_cli::config::ConfigError { field: "--config".into(), message: "required".into() })
    })?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(Failure::Config(sptree_cli::config::ConfigError {
                field: "--workers".into(),
                message: "must be positive".into(),
            }));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Resource(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::TreeInfo => tree_info::run(&cfg),
        Command::Verify => verify::run(&cfg),
        Command::Dynamics => dynamics::run(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
