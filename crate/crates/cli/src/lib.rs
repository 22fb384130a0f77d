//! Command implementations behind the `weakspin` binary.

pub mod model_file;
pub mod report;

use std::io::Write;
use std::path::Path;

use thiserror::Error;
use weakspin::expansion::{estimate_partition_function_with, ExpansionConfig};
use weakspin::oracle::{
    exact_partition_function, exact_thermal_distribution, OracleError, ORACLE_DIM_CAP,
};
use weakspin::sampler::{ChainRuleSampler, SamplerError};
use weakspin::{validate_model, Complex64, ExpansionError, Params, SpinModel};

use model_file::{ModelFile, ModelFileError};
use report::{sample_footer, CompareOutput, PartitionOutput, Real, ValidationOutput};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "WEAKSPIN_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    ModelFile(#[from] ModelFileError),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("invalid parameters: {0}")]
    Params(#[from] weakspin::ModelError),
    #[error("sampling needs a real coupling; got imaginary part {0}")]
    ImaginaryLambda(f64),
    #[error("{0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Expansion(#[from] ExpansionError),
    #[error("numerical failure: {0}")]
    Sampler(#[from] SamplerError),
    #[error("numerical failure: {0}")]
    Oracle(OracleError),
    #[error("numerical failure: Z = exp({0}) is not representable")]
    NonFinite(Complex64),
    #[error("state space {size} exceeds the oracle cap ORACLE_DIM_CAP = {ORACLE_DIM_CAP}")]
    OracleCap { size: String },
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. }
            | CliError::ModelFile(_)
            | CliError::Invalid(_)
            | CliError::Params(_)
            | CliError::ImaginaryLambda(_)
            | CliError::Usage(_) => 2,
            CliError::Expansion(_)
            | CliError::Sampler(_)
            | CliError::Oracle(_)
            | CliError::NonFinite(_)
            | CliError::Output(_) => 3,
            CliError::OracleCap { .. } => 4,
        }
    }
}

/// Options shared by the estimation commands.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub beta: f64,
    pub lambda: Complex64,
    pub epsilon: f64,
    pub seed: u64,
    pub config: ExpansionConfig,
}

impl RunOptions {
    fn params(&self) -> Result<Params, CliError> {
        Ok(Params::new(self.beta, self.lambda, self.epsilon)?.with_seed(self.seed))
    }
}

/// Worker count from [`WORKERS_ENV`], defaulting to 1.
pub fn workers_from_env() -> Result<usize, CliError> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Usage(format!(
                "{WORKERS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
    }
}

pub fn load_model(path: &Path) -> Result<SpinModel, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(ModelFile::parse(&text)?.to_model()?)
}

pub fn cmd_validate(model: &SpinModel) -> ValidationOutput {
    let report = validate_model(model);
    ValidationOutput {
        passed: report.passed(),
        violations: report.violations.iter().map(|v| v.to_string()).collect(),
    }
}

fn require_valid(model: &SpinModel) -> Result<(), CliError> {
    let out = cmd_validate(model);
    if out.passed {
        Ok(())
    } else {
        Err(CliError::Invalid(out.violations.join("; ")))
    }
}

pub fn cmd_partition(model: &SpinModel, opts: &RunOptions) -> Result<PartitionOutput, CliError> {
    require_valid(model)?;
    let params = opts.params()?;
    let est = estimate_partition_function_with(model, &params, &opts.config)?;
    if !est.z.is_finite() {
        return Err(CliError::NonFinite(est.log_z));
    }
    let r = est.report;
    Ok(PartitionOutput {
        admissible: r.admissible,
        threshold: Real(r.threshold),
        lambda: params.lambda.into(),
        beta: Real(params.beta),
        epsilon: Real(params.epsilon),
        truncation_order: r.truncation_order,
        polymer_count: r.polymer_count,
        cluster_count: r.cluster_count,
        log_z0: r.log_z0.into(),
        cluster_sum: r.cluster_sum.into(),
        log_z: est.log_z.into(),
        z: est.z.into(),
        partial_sums: r.partial_sums.iter().map(|&c| c.into()).collect(),
    })
}

/// Writes `n_samples` lines of base-`d` digits followed by the footer.
pub fn cmd_sample(
    model: &SpinModel,
    opts: &RunOptions,
    n_samples: usize,
    out: &mut impl Write,
) -> Result<(), CliError> {
    require_valid(model)?;
    if opts.lambda.im != 0.0 {
        return Err(CliError::ImaginaryLambda(opts.lambda.im));
    }
    if model.local_dim() > 36 {
        return Err(CliError::Usage(format!(
            "samples are printed as base-d digits, which needs d <= 36 (got {})",
            model.local_dim()
        )));
    }
    let params = opts.params()?;
    let mut sampler = ChainRuleSampler::with_config(model, &params, &opts.config)?;
    let mut queries = 0;
    for _ in 0..n_samples {
        let run = sampler.sample()?;
        queries += run.queries;
        writeln!(out, "{}", run.to_digits())?;
    }
    writeln!(out, "{}", sample_footer(opts.seed, queries, n_samples))?;
    Ok(())
}

fn check_oracle_cap(model: &SpinModel) -> Result<(), CliError> {
    let n = model.graph().n_vertices() as u32;
    let d = model.local_dim();
    match d.checked_pow(n) {
        Some(size) if size <= ORACLE_DIM_CAP => Ok(()),
        Some(size) => Err(CliError::OracleCap {
            size: size.to_string(),
        }),
        None => Err(CliError::OracleCap {
            size: format!("{d}^{n}"),
        }),
    }
}

fn oracle_err(e: OracleError) -> CliError {
    match e {
        OracleError::StateSpace => CliError::OracleCap { size: "d^n".into() },
        other => CliError::Oracle(other),
    }
}

pub fn cmd_compare(model: &SpinModel, opts: &RunOptions) -> Result<CompareOutput, CliError> {
    require_valid(model)?;
    check_oracle_cap(model)?;
    let params = opts.params()?;
    let est = estimate_partition_function_with(model, &params, &opts.config)?;
    let exact = exact_partition_function(model, &params).map_err(oracle_err)?;
    let relative_error = (est.z - exact).norm() / exact.norm();
    let tv_distance = if params.lambda.im == 0.0 {
        let table =
            ChainRuleSampler::with_config(model, &params, &opts.config)?.distribution_table()?;
        let truth = exact_thermal_distribution(model, &params).map_err(oracle_err)?;
        Some(
            0.5 * table
                .iter()
                .zip(&truth)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>(),
        )
    } else {
        None
    };
    let pass =
        relative_error <= params.epsilon && tv_distance.is_none_or(|tv| tv <= params.epsilon);
    Ok(CompareOutput {
        admissible: est.report.admissible,
        epsilon: Real(params.epsilon),
        z_estimate: est.z.into(),
        z_exact: exact.into(),
        relative_error: Real(relative_error),
        tv_distance: tv_distance.map(Real),
        pass,
    })
}
