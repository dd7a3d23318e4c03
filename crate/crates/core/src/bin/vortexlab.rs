use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vortex_core::config::RunConfig;
use vortex_core::linalg::set_blas_threads;
use vortex_core::pipeline::{run_dynamics, run_kernels, run_solve, run_sweep};
use vortex_core::report::to_json_text;
use vortex_core::Result;

/// Self-consistent vortex solver, action kernels and vortex dynamics.
#[derive(Parser)]
#[command(name = "vortexlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `outputs.directory`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps and BLAS.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Disorder seed (overrides `disorder.seed`).
    #[arg(long, global = true)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Converge the gap and write the field and spectrum.
    Solve,
    /// Compute J, F_parallel, B, K and eta from the solve artifacts.
    Kernels,
    /// Integrate the vortex equation of motion.
    Dynamics,
    /// Solve and analyse every member of a disorder ensemble.
    Sweep,
    /// Check the configuration and print it in canonical form.
    ValidateConfig,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed_override {
        cfg.disorder.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.outputs.directory = out.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    let threads = cli.threads.max(1);
    let out = PathBuf::from(&cfg.outputs.directory);
    match cli.command {
        Command::ValidateConfig => {
            print!("{}", cfg.to_json());
            eprintln!("config ok, hash {}", cfg.hash());
        }
        Command::Solve => {
            set_blas_threads(threads);
            let (s, _) = run_solve(&cfg, &out, threads)?;
            print!("{}", to_json_text(&s.summary)?);
        }
        Command::Kernels => {
            set_blas_threads(threads);
            let (k, _) = run_kernels(&cfg, &out, threads)?;
            print!("{}", to_json_text(&k.summary)?);
        }
        Command::Dynamics => {
            let (d, _) = run_dynamics(&cfg, &out, threads)?;
            print!("{}", to_json_text(&d.summary)?);
        }
        Command::Sweep => {
            // Workers each run their own solves; keep BLAS single-threaded.
            set_blas_threads(1);
            let (s, _) = run_sweep(&cfg, &out, threads)?;
            print!("{}", to_json_text(&s.summary)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
