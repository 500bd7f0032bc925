use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wassbound_cli::config::read_config;
use wassbound_cli::error::{CliError, Result};
use wassbound_cli::estimate::estimate_files;
use wassbound_cli::experiments::{run_coupling, run_experiment};
use wassbound_cli::samples::{parse_csv_file, read_samples, write_binary, write_csv};

/// Empirical Wasserstein convergence bounds for MCMC output.
#[derive(Debug, Parser)]
#[command(name = "wassbound", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bounds on W2²(ν, μ) from samples of ν and two independent samples of μ.
    Estimate {
        #[arg(long)]
        nu: PathBuf,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        mu_prime: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Write the JSON report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs an experiment configuration and writes its tables.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs only the coupled-pair baseline of a chain experiment.
    Coupling {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Converts CSV samples to the binary format, or back.
    Convert {
        #[arg(long, conflicts_with = "bin", required_unless_present = "bin")]
        csv: Option<PathBuf>,
        #[arg(long)]
        bin: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_workers() -> Result<()> {
    let Ok(raw) = std::env::var("WB_WORKERS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("WB_WORKERS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn execute(cli: Cli) -> Result<()> {
    init_workers()?;
    match cli.command {
        Command::Estimate { nu, mu, mu_prime, alpha, out } => {
            let report = estimate_files(&nu, &mu, &mu_prime, alpha)?;
            let json = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
            match out {
                Some(path) => std::fs::write(&path, json).map_err(|e| CliError::Io {
                    path: path.display().to_string(),
                    source: e,
                }),
                None => {
                    print!("{json}");
                    Ok(())
                }
            }
        }
        Command::Run { config, out } => run_experiment(&read_config(&config)?, &out),
        Command::Coupling { config, out } => run_coupling(&read_config(&config)?, &out),
        Command::Convert { csv, bin, out } => match (csv, bin) {
            (Some(input), None) => write_binary(&out, &parse_csv_file(&input)?),
            (None, Some(input)) => write_csv(&out, &read_samples(&input)?),
            _ => Err(CliError::Config("give exactly one of --csv and --bin".into())),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
