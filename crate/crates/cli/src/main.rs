use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use driftlab_cli::commands::{self, SweepParam};
use driftlab_cli::{io, verify};

#[derive(Parser)]
#[command(
    name = "driftlab",
    version,
    about = "Finite-particle drifting dynamics: simulate flows, reproduce the two-cluster contrast, verify identities and bounds, sweep parameters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config; writes trajectory.csv,
    /// diagnostics.csv, and meta.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Two-cluster tracer experiment: conservative Gaussian vs Laplace
    /// displacement dynamics from identical starts, with curl maps.
    Figure1 {
        #[arg(long, default_value = "figure1")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a verification suite; prints a JSON report, exit 0 iff all pass.
    Verify {
        /// identities | bounds | occupancy | euler
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep N, h, or eta over a list of values; writes sweep.csv and
    /// sweep_meta.json with fitted log-log slopes.
    Sweep {
        /// N | h | eta
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated list, e.g. 50,100,200,400
        #[arg(long)]
        values: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
        /// Self-interaction constant A for the h-star prediction.
        #[arg(long, default_value_t = 1.0)]
        rate_a: f64,
        /// Quadrature constant C for the h-star prediction.
        #[arg(long, default_value_t = 1.0)]
        rate_c: f64,
        /// Quadrature growth exponent beta in [0, 2).
        #[arg(long, default_value_t = 0.0)]
        rate_beta: f64,
    },
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Simulate { config, out } => {
            commands::simulate(&config, &out)?;
            Ok(true)
        }
        Command::Figure1 { out, seed } => {
            commands::figure1(&out, &commands::figure1_options(seed))?;
            Ok(true)
        }
        Command::Verify { suite, seed, out } => {
            let report = verify::run_suite(&suite, seed)?;
            let text = serde_json::to_string_pretty(&report)?;
            println!("{text}");
            if let Some(path) = out {
                io::write_json(&path, &report)?;
            }
            Ok(report.all_pass)
        }
        Command::Sweep {
            param,
            values,
            config,
            out,
            rate_a,
            rate_c,
            rate_beta,
        } => {
            let parsed: Vec<f64> = values
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| anyhow::anyhow!("parsing --values: {e}"))?;
            commands::sweep(param, &parsed, &config, &out, rate_a, rate_c, rate_beta)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            let chain: Vec<String> = err.chain().map(|c| c.to_string()).collect();
            let report = json!({ "error": chain[0], "chain": chain });
            eprintln!("{}", serde_json::to_string_pretty(&report).unwrap());
            ExitCode::FAILURE
        }
    }
}
