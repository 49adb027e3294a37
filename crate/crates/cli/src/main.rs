//! `sparse-debias`: simulate data, fit the Lasso, form debiased intervals
//! and run the simulation experiments from the command line.

mod commands;
mod error;
mod params;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::error::{CliError, EXIT_VALIDATION};
use crate::params::InferMode;

#[derive(Debug, Parser)]
#[command(name = "sparse-debias", version, about = "Debiased Lasso inference and simulation experiments")]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "DEBIAS_LASSO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic dataset `y = Xθ* + w`.
    Simulate(SimulateArgs),
    /// Fit the Lasso to a dataset.
    Fit(FitArgs),
    /// Debias the Lasso and write confidence intervals and p-values.
    Infer(InferArgs),
    /// Run one of the simulation experiments.
    Experiment(ExperimentArgs),
    /// Re-run the invocation recorded in a `meta.json`.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON file with parameters; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `identity` or `circulant:R`.
    #[arg(long)]
    cov: Option<String>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    s0: Option<usize>,
    #[arg(long)]
    amp: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset envelope (`dataset.json`) or its directory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Known noise level; otherwise estimated by the scaled Lasso.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    lambda_bar: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<InferMode>,
    /// CSV with the population covariance `Σ` (known-omega mode).
    #[arg(long)]
    sigma_file: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    lambda_bar: Option<f64>,
    /// `K` in `λ̃ = K√(log p / n)` for the node-wise Lasso.
    #[arg(long)]
    lambda_tilde_k: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentKind {
    Kurtosis,
    Coverage,
    RiskCurve,
    TwoStep,
    DenoiserCheck,
    Sure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MatrixArg {
    KnownOmega,
    Nodewise,
    Split,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    kind: ExperimentKind,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the full-size configurations instead of the desk-scale ones.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the SVG plot.
    #[arg(long)]
    no_plot: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    cov: Option<String>,
    /// Shorthand for `--cov circulant:R`.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    s0: Option<usize>,
    #[arg(long)]
    amp: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Sparsity levels for a `δ_c(ε)` sweep (kurtosis).
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    matrix: Option<MatrixArg>,
    /// `K` for `--matrix nodewise`.
    #[arg(long)]
    nodewise_k: Option<f64>,
    /// Use the true `σ` instead of the scaled-Lasso estimate (coverage).
    #[arg(long)]
    known_sigma: bool,
    /// Bound multiplier (two-step).
    #[arg(long)]
    factor: Option<f64>,
}

#[derive(Debug, Args)]
struct RerunArgs {
    /// A `meta.json` written by an earlier run.
    meta: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_cov(spec: &str) -> Result<Value, CliError> {
    if spec == "identity" {
        return Ok(json!({"kind": "identity"}));
    }
    if let Some(r) = spec.strip_prefix("circulant:") {
        let r: f64 = r.parse().map_err(|_| CliError::invalid(format!("cannot parse circulant parameter {r:?}")))?;
        return Ok(json!({"kind": "circulant", "r": r}));
    }
    Err(CliError::invalid(format!("unknown covariance {spec:?}; expected identity or circulant:R")))
}

/// Object holding only the flags that were given.
#[derive(Default)]
struct Patch(Map<String, Value>);

impl Patch {
    fn set<T: serde::Serialize>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0.insert(key.into(), serde_json::to_value(v).expect("flag serializes"));
        }
        self
    }

    fn into_value(self) -> Value {
        Value::Object(self.0)
    }
}

fn simulate_patch(a: &SimulateArgs) -> Result<Value, CliError> {
    let mut p = Patch::default();
    p.set("covariance", a.cov.as_deref().map(parse_cov).transpose()?)
        .set("p", a.p)
        .set("n", a.n)
        .set("s0", a.s0)
        .set("amplitude", a.amp)
        .set("sigma", a.sigma)
        .set("seed", a.seed);
    Ok(p.into_value())
}

fn fit_patch(a: &FitArgs) -> Value {
    let mut p = Patch::default();
    p.set("data", a.data.clone())
        .set("lambda", a.lambda)
        .set("kappa", a.kappa)
        .set("sigma", a.sigma)
        .set("lambda_bar", a.lambda_bar);
    p.into_value()
}

fn infer_patch(a: &InferArgs) -> Value {
    let mut p = Patch::default();
    p.set("data", a.data.clone())
        .set("mode", a.mode)
        .set("sigma_file", a.sigma_file.clone())
        .set("alpha", a.alpha)
        .set("lambda", a.lambda)
        .set("kappa", a.kappa)
        .set("sigma", a.sigma)
        .set("lambda_bar", a.lambda_bar)
        .set("lambda_tilde_k", a.lambda_tilde_k)
        .set("split_seed", a.split_seed);
    p.into_value()
}

/// Flags of `experiment`, split into top-level and `config` patches.
fn experiment_patch(a: &ExperimentArgs) -> Result<Value, CliError> {
    let cov = match (&a.cov, a.r) {
        (Some(_), Some(_)) => return Err(CliError::invalid("give either --cov or --r, not both")),
        (Some(c), None) => Some(parse_cov(c)?),
        (None, Some(r)) => Some(json!({"kind": "circulant", "r": r})),
        (None, None) => None,
    };
    let matrix = match (a.matrix, a.nodewise_k) {
        (Some(MatrixArg::KnownOmega), None) => Some(json!({"kind": "known_omega"})),
        (Some(MatrixArg::Split), None) => Some(json!({"kind": "sample_split"})),
        (Some(MatrixArg::Nodewise) | None, Some(k)) => Some(json!({"kind": "nodewise", "k": k})),
        (Some(MatrixArg::Nodewise), None) => Some(json!({"kind": "nodewise", "k": 2.0})),
        (Some(_), Some(_)) => return Err(CliError::invalid("--nodewise-k requires --matrix nodewise")),
        (None, None) => None,
    };
    if a.known_sigma && a.kind != ExperimentKind::Coverage {
        return Err(CliError::invalid("--known-sigma applies to the coverage experiment only"));
    }
    if a.epsilons.is_some() && a.kind != ExperimentKind::Kurtosis {
        return Err(CliError::invalid("--epsilons applies to the kurtosis experiment only"));
    }
    let mut c = Patch::default();
    c.set("covariance", cov)
        .set("p", a.p)
        .set("n", a.n)
        .set("s0", a.s0)
        .set("amplitude", a.amp)
        .set("sigma", a.sigma)
        .set("replicates", a.replicates)
        .set("kappa", a.kappa)
        .set("alpha", a.alpha)
        .set("epsilon", a.epsilon)
        .set("deltas", a.deltas.clone())
        .set("lambda_grid", a.lambda_grid.clone())
        .set("matrix", matrix)
        .set("factor", a.factor);
    let mut top = Patch::default();
    top.set("seed", a.seed).set("epsilons", a.epsilons.clone()).set("plot", a.no_plot.then_some(false));
    let mut value = top.into_value();
    if !c.0.is_empty() {
        value["config"] = c.into_value();
    }
    Ok(value)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::invalid(format!("cannot configure thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => {
            let file = a.config.as_deref().map(params::read_config_file).transpose()?;
            let p = params::layer(&params::SimulateParams::default(), file, simulate_patch(&a)?)?;
            commands::simulate(&p, &a.out)
        }
        Command::Fit(a) => {
            let file = a.config.as_deref().map(params::read_config_file).transpose()?;
            let p = params::layer(&params::FitParams::default(), file, fit_patch(&a))?;
            commands::fit(p, &a.out)
        }
        Command::Infer(a) => {
            let file = a.config.as_deref().map(params::read_config_file).transpose()?;
            let p = params::layer(&params::InferParams::default(), file, infer_patch(&a))?;
            commands::infer(p, &a.out)
        }
        Command::Experiment(a) => {
            let file = a.config.as_deref().map(params::read_config_file).transpose()?;
            let run = commands::build_experiment(a.kind, a.paper_scale, a.r, file, experiment_patch(&a)?, a.known_sigma)?;
            commands::experiment(&run, &a.out)
        }
        Command::Rerun(a) => commands::rerun(&a.meta, &a.out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_VALIDATION) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code)
        }
    }
}
