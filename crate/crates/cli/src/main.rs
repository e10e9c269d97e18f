use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eitshape_cli::experiment::{compare_meshes, run_experiment};
use eitshape_cli::verify::{run_suite, SUITES};
use eitshape_cli::{data, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "eitshape", version, about = "Latent-code shape reconstruction from simulated EIT data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate measurements for the configured phantom.
    GenerateData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides every seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Overwrite existing measurement data.
        #[arg(long)]
        force: bool,
    },
    /// Reconstruct the inclusion from the measurements in the output directory.
    Reconstruct {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run oracle suites: bem, gradient, unbiased, metrics, or all.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Hausdorff distance and volume difference between two OBJ meshes.
    Metrics { a: PathBuf, b: PathBuf },
}

fn load(config: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::GenerateData { config, out, seed, force } => {
            let cfg = load(&config, seed)?;
            let ms = data::generate_data(&cfg, &out, force)?;
            println!("wrote {} patterns to {}", ms.len(), out.join(data::MEASUREMENTS).display());
            Ok(true)
        }
        Command::Reconstruct { config, out, seed } => {
            let cfg = load(&config, seed)?;
            print!("{}", run_experiment(&cfg, &out)?.to_text());
            Ok(true)
        }
        Command::Verify { suite, seed } => {
            let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite.as_str()] };
            let mut ok = true;
            for name in names {
                for check in run_suite(name, seed)? {
                    ok &= check.pass;
                    println!("{check}");
                }
            }
            Ok(ok)
        }
        Command::Metrics { a, b } => {
            print!("{}", compare_meshes(&a, &b)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
