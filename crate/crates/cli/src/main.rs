//! `lagrg`: runs orbit, critical-search, spectrum, limit and oracle experiments
//! described by JSON config files.

mod config;
mod error;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use lagrg::Precision;

use config::{Command, ExperimentConfig, Overrides};
use error::CliError;

#[derive(Parser, Debug)]
#[command(version, about, long_about = None)]
struct Cli {
    /// Experiment config; repeat to run several in parallel
    #[arg(long, required = true)]
    config: Vec<PathBuf>,
    /// Command to run instead of the one in the config
    #[arg(long, value_enum)]
    command: Option<Command>,
    /// Output directory (one subdirectory per config when several are given)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Arithmetic: double, extended or auto
    #[arg(long, env = "LAGRG_PRECISION")]
    precision: Option<Precision>,
    /// Caps orbit length, bisection count or limit depth depending on the command
    #[arg(long)]
    max_iter: Option<usize>,
    /// Suppress the per-config summary on stdout
    #[arg(long, short)]
    quiet: bool,
}

fn run_one(path: &Path, overrides: &Overrides, quiet: bool) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(path)?.resolve(overrides)?;
    let outcome = run::run(&cfg)?;
    std::fs::create_dir_all(&cfg.output.dir).map_err(|e| CliError::io(&cfg.output.dir, e))?;
    for (file, body) in &outcome.artifacts {
        std::fs::write(file, body).map_err(|e| CliError::io(file, e))?;
    }
    if !quiet {
        println!("{}: {}", path.display(), outcome.summary);
        for (file, _) in &outcome.artifacts {
            println!("  wrote {}", file.display());
        }
    }
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let several = cli.config.len() > 1;
    let jobs: Vec<(PathBuf, Overrides)> = cli
        .config
        .iter()
        .map(|path| {
            let out = match (&cli.out, several) {
                (Some(dir), true) => Some(dir.join(path.file_stem().unwrap_or_default())),
                (out, _) => out.clone(),
            };
            let o = Overrides {
                command: cli.command,
                out,
                precision: cli.precision,
                max_iter: cli.max_iter,
            };
            (path.clone(), o)
        })
        .collect();

    let results: Vec<Result<(), CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(path, o)| s.spawn(move || run_one(path, o, cli.quiet)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("experiment thread panicked"))
            .collect()
    });

    let mut code = 0;
    for ((path, _), res) in jobs.iter().zip(results) {
        if let Err(e) = res {
            let mut doc = e.to_json();
            doc["config"] = serde_json::Value::String(path.display().to_string());
            eprintln!("{doc}");
            if code == 0 {
                code = e.exit_code();
            }
        }
    }
    ExitCode::from(code as u8)
}
