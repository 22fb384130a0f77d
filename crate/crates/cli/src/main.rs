use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use weakspin::expansion::ExpansionConfig;
use weakspin::Complex64;
use weakspin_cli::{
    cmd_compare, cmd_partition, cmd_sample, cmd_validate, load_model, workers_from_env, CliError,
    RunOptions,
};

#[derive(Parser)]
#[command(
    name = "weakspin",
    version,
    about = "Cluster-expansion estimates for weakly-interacting quantum spin systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check Hermiticity and norm bounds of every operator.
    Validate {
        #[arg(long)]
        model: PathBuf,
    },
    /// Estimate the partition function.
    Partition(RunArgs),
    /// Draw samples from the diagonal of the thermal state.
    Sample {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 1)]
        n_samples: usize,
    },
    /// Compare the estimate against exact diagonalization.
    Compare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    beta: f64,
    /// Real part of the coupling.
    #[arg(long, allow_hyphen_values = true)]
    lambda: f64,
    /// Imaginary part of the coupling.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    lambda_im: f64,
    #[arg(long, default_value_t = 1e-2)]
    epsilon: f64,
    /// Override the truncation constant c0.
    #[arg(long, allow_hyphen_values = true)]
    c0: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl RunArgs {
    fn options(&self) -> Result<RunOptions, CliError> {
        let mut config = ExpansionConfig {
            workers: workers_from_env()?,
            ..Default::default()
        };
        if let Some(c0) = self.c0 {
            config.c0 = c0;
        }
        Ok(RunOptions {
            beta: self.beta,
            lambda: Complex64::new(self.lambda, self.lambda_im),
            epsilon: self.epsilon,
            seed: self.seed,
            config,
        })
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}")?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { model } => {
            let report = cmd_validate(&load_model(&model)?);
            print_json(&report)?;
            if !report.passed {
                return Err(CliError::Invalid(report.violations.join("; ")));
            }
        }
        Command::Partition(args) => {
            let model = load_model(&args.model)?;
            let report = cmd_partition(&model, &args.options()?)?;
            if !report.admissible {
                eprintln!(
                    "warning: |lambda| exceeds the weak-interaction threshold {}; the estimate carries no guarantee",
                    report.threshold
                );
            }
            print_json(&report)?;
        }
        Command::Sample { run, n_samples } => {
            let model = load_model(&run.model)?;
            // Buffer so a failure mid-stream leaves no partial output.
            let mut buf = Vec::new();
            cmd_sample(&model, &run.options()?, n_samples, &mut buf)?;
            std::io::stdout().lock().write_all(&buf)?;
        }
        Command::Compare(args) => {
            let model = load_model(&args.model)?;
            print_json(&cmd_compare(&model, &args.options()?)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
