use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fgscatter::cli::{exit_code, run, JobConfig, Overrides, Task, EXIT_CONFIG};

/// Scattering data, spectral shift and KdV invariants for perturbed
/// finite-gap Schrödinger operators.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    /// Job description (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Task to run; overrides the config. One of spectrum, transmission,
    /// scattering, shift, reconstruct, invariants, kdv, verify-all.
    #[arg(long)]
    task: Option<Task>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pass threshold of the verification checks.
    #[arg(long)]
    tol: Option<f64>,
    /// Worker thread cap.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed recorded in reports (no task samples randomly).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    let cfg = match JobConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    let ov = Overrides {
        task: args.task,
        out: args.out,
        tol: args.tol,
        seed: args.seed,
    };
    let outcome = run(cfg, &ov);
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    if outcome.code == 0 {
        println!("{}", outcome.message);
    } else {
        eprintln!("exit {}: {}", outcome.code, outcome.message);
    }
    ExitCode::from(outcome.code as u8)
}
