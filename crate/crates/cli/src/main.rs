use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mcaurora_cli::aggregate::aggregate_dirs;
use mcaurora_cli::plotdata::emit_plot_data;
use mcaurora_cli::presets::preset;
use mcaurora_cli::runner::{resolve_output_dir, run_experiment};
use mcaurora_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mcaurora", version, about = "Multi-container quality-diversity experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for parallel evaluation.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run a named case, or print its config with --print.
    Preset {
        name: String,
        /// Use the reduced single-core budgets and grids.
        #[arg(long)]
        desk: bool,
        /// Base seed; replicate r uses seed + r.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
        /// Print the TOML config and exit.
        #[arg(long)]
        print: bool,
    },
    /// Write curve and heatmap tables for a finished or partial run.
    Plotdata { run_dir: PathBuf },
    /// Summarise metric logs across replicates.
    Aggregate {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cfg: &ExperimentConfig, out: Option<PathBuf>, threads: Option<usize>) -> Result<bool, CliError> {
    let dir = resolve_output_dir(cfg, out.as_deref());
    let summary = run_experiment(cfg, &dir, threads)?;
    let failed = summary.replicates.iter().filter(|r| r.error.is_some()).count();
    println!(
        "{}: {} replicate(s), {} failed, artifacts in {}",
        cfg.case,
        summary.replicates.len(),
        failed,
        summary.dir.display()
    );
    Ok(failed == 0)
}

fn main_inner(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run { config, out, threads } => {
            let text = std::fs::read_to_string(&config).map_err(|e| CliError::io(&config, e))?;
            let cfg = ExperimentConfig::from_toml(&text)?;
            execute(&cfg, out, threads)
        }
        Command::Preset {
            name,
            desk,
            seed,
            replicates,
            out,
            threads,
            print,
        } => {
            let mut cfg = preset(&name, desk)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = replicates {
                cfg.replicates = r;
            }
            if print {
                print!("{}", cfg.to_toml());
                return Ok(true);
            }
            execute(&cfg, out, threads)
        }
        Command::Plotdata { run_dir } => {
            for f in emit_plot_data(&run_dir)? {
                println!("{}", f.display());
            }
            Ok(true)
        }
        Command::Aggregate { run_dirs, out } => {
            let text = aggregate_dirs(&run_dirs)?;
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))?,
                None => print!("{text}"),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
