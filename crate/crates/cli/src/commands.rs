//! Command implementations: each validates its parameters, runs the
//! pipeline and writes CSV results, optional SVG plots and `meta.json`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use sparse_debias::debias::{debias_known, debias_nodewise, debias_split, split_batches, NoiseLevel, SplitMatrix};
use sparse_debias::designs::{build_covariance, precision_matrix, CovarianceModel, SimulationSpec};
use sparse_debias::diagnostics::coverage::coverage_experiment;
use sparse_debias::diagnostics::denoiser_check::denoiser_approximation_check;
use sparse_debias::diagnostics::kurtosis::{kurtosis_sweep, kurtosis_sweep_grid, KurtosisSweep};
use sparse_debias::diagnostics::risk::{risk_curve, sure_consistency};
use sparse_debias::diagnostics::two_step::two_step_experiment;
use sparse_debias::diagnostics::{CoverageConfig, KurtosisConfig, RiskCurveConfig};
use sparse_debias::inference::{confidence_intervals, p_values};
use sparse_debias::io::{format_f64, read_dataset, read_json, read_matrix_csv, write_dataset, write_json, FitRecord, Table};
use sparse_debias::plot::{LinePlot, Series};
use sparse_debias::solvers::{default_lambda_bar, lasso_fit, nodewise_lambda, scaled_lasso_fit, theory_lambda, LassoOptions};
use sparse_debias::{Dataset, DebiasResult};

use crate::error::CliError;
use crate::params::{
    layer, ExperimentParams, ExperimentRun, FitParams, InferMode, InferParams, Invocation, Meta, SimulateParams,
    META_FILE, TOOL,
};
use crate::ExperimentKind;

fn prepare_out(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out)
        .map_err(|e| CliError { code: crate::error::EXIT_RUNTIME, name: "Io", message: format!("{}: {e}", out.display()) })
}

fn write_meta(out: &Path, meta: &Meta) -> Result<(), CliError> {
    Ok(write_json(&out.join(META_FILE), meta)?)
}

fn write_table(out: &Path, name: &str, table: &Table) -> Result<(), CliError> {
    Ok(table.write_csv(&out.join(name))?)
}

fn write_plot(out: &Path, name: &str, plot: &LinePlot) -> Result<(), CliError> {
    Ok(fs::write(out.join(name), plot.to_svg())?)
}

fn f(x: f64) -> String {
    format_f64(x)
}

fn canonical(path: &Path, what: &str) -> Result<PathBuf, CliError> {
    if path.as_os_str().is_empty() {
        return Err(CliError::invalid(format!("{what} path is required")));
    }
    fs::canonicalize(path).map_err(|e| CliError {
        code: crate::error::EXIT_VALIDATION,
        name: "Io",
        message: format!("{what} {}: {e}", path.display()),
    })
}

fn load(path: &Path) -> Result<(Dataset, Option<CovarianceModel>), CliError> {
    read_dataset(path).map_err(CliError::input)
}

pub fn simulate(params: &SimulateParams, out: &Path) -> Result<(), CliError> {
    let spec = SimulationSpec {
        covariance: CovarianceModel { kind: params.covariance.clone(), p: params.p },
        n: params.n,
        s0: params.s0,
        amplitude: params.amplitude,
        sigma: params.sigma,
    };
    spec.validate()?;
    build_covariance(&spec.covariance)?;
    let data = spec.simulate(params.seed)?;
    prepare_out(out)?;
    write_dataset(out, &data, Some(&spec.covariance))?;
    write_meta(out, &Meta::new(Invocation::Simulate(params.clone())))
}

fn check_positive(name: &str, v: Option<f64>) -> Result<(), CliError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(CliError::invalid(format!("{name} must be positive, got {x}"))),
        _ => Ok(()),
    }
}

/// `λ` from the parameters: explicit, or `κσ√(log p / n)` with `σ` known or
/// estimated by the scaled Lasso on the same rows.
fn choose_lambda(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: Option<f64>,
    kappa: f64,
    sigma: Option<f64>,
    lambda_bar: Option<f64>,
) -> Result<(f64, Option<f64>), CliError> {
    if let Some(l) = lambda {
        return Ok((l, None));
    }
    let s = match sigma {
        Some(s) => s,
        None => scaled_lasso_fit(x, y, lambda_bar.unwrap_or_else(|| default_lambda_bar(x.nrows(), x.ncols())))?.sigma_hat,
    };
    Ok((theory_lambda(kappa, s, x.nrows(), x.ncols()), Some(s)))
}

pub fn fit(mut params: FitParams, out: &Path) -> Result<(), CliError> {
    params.data = canonical(&params.data, "dataset")?;
    check_positive("lambda", params.lambda)?;
    check_positive("kappa", Some(params.kappa))?;
    check_positive("sigma", params.sigma)?;
    check_positive("lambda_bar", params.lambda_bar)?;
    let (data, _) = load(&params.data)?;
    let (lambda, sigma) = choose_lambda(&data.x, &data.y, params.lambda, params.kappa, params.sigma, params.lambda_bar)?;
    let fit = lasso_fit(&data.x, &data.y, lambda, &LassoOptions::default())?.require_converged()?;
    prepare_out(out)?;
    write_json(&out.join("fit.json"), &FitRecord::from_fit(&fit))?;
    let mut meta = Meta::new(Invocation::Fit(params));
    meta.derive("lambda", lambda);
    if let Some(s) = sigma {
        meta.derive("sigma_for_lambda", s);
    }
    meta.derive("support_size", fit.support.len());
    write_meta(out, &meta)
}

pub fn infer(mut params: InferParams, out: &Path) -> Result<(), CliError> {
    params.data = canonical(&params.data, "dataset")?;
    if let Some(sf) = &params.sigma_file {
        params.sigma_file = Some(canonical(sf, "covariance file")?);
    }
    check_positive("lambda", params.lambda)?;
    check_positive("kappa", Some(params.kappa))?;
    check_positive("sigma", params.sigma)?;
    check_positive("lambda_bar", params.lambda_bar)?;
    check_positive("lambda_tilde_k", Some(params.lambda_tilde_k))?;
    if !(params.alpha > 0.0 && params.alpha < 1.0) {
        return Err(sparse_debias::Error::BadAlpha(params.alpha).into());
    }
    let (data, model) = load(&params.data)?;
    let p = data.p();
    let sigma_pop = match &params.sigma_file {
        Some(path) => {
            let s = read_matrix_csv(path).map_err(CliError::input)?;
            if s.nrows() != p || s.ncols() != p {
                return Err(CliError::invalid(format!("covariance file is {}x{}, expected {p}x{p}", s.nrows(), s.ncols())));
            }
            Some(s)
        }
        None => model.as_ref().map(build_covariance).transpose()?,
    };
    let omega = sigma_pop.as_ref().map(precision_matrix).transpose().map_err(CliError::input)?;
    let noise = match params.sigma {
        Some(sigma) => NoiseLevel::Known { sigma },
        None => NoiseLevel::ScaledLasso { lambda_bar: params.lambda_bar },
    };
    let opts = LassoOptions::default();
    let mut meta_extra: Vec<(&str, Value)> = Vec::new();

    let result: DebiasResult = match params.mode {
        InferMode::KnownOmega => {
            let omega = omega.ok_or_else(|| {
                CliError::invalid("known-omega mode needs --sigma-file or a dataset envelope with a covariance model")
            })?;
            let (lambda, _) = choose_lambda(&data.x, &data.y, params.lambda, params.kappa, params.sigma, params.lambda_bar)?;
            debias_known(&data.x, &data.y, lambda, &omega, &noise, &opts)?
        }
        InferMode::Nodewise => {
            let (lambda, _) = choose_lambda(&data.x, &data.y, params.lambda, params.kappa, params.sigma, params.lambda_bar)?;
            let lambda_tilde = nodewise_lambda(params.lambda_tilde_k, data.n(), p);
            meta_extra.push(("lambda_tilde", json!(lambda_tilde)));
            debias_nodewise(&data.x, &data.y, lambda, lambda_tilde, &noise, &opts)?
        }
        InferMode::Split => {
            let (a, b) = split_batches(&data.x, &data.y, params.split_seed)?;
            let (lambda, _) = choose_lambda(&b.x, &b.y, params.lambda, params.kappa, params.sigma, params.lambda_bar)?;
            let source = match omega {
                Some(o) => SplitMatrix::KnownOmega(o),
                None => {
                    let lambda_tilde = nodewise_lambda(params.lambda_tilde_k, a.x.nrows(), p);
                    meta_extra.push(("lambda_tilde", json!(lambda_tilde)));
                    SplitMatrix::NodewiseOnCorrection { lambda_tilde }
                }
            };
            meta_extra.push(("split_matrix", json!(if matches!(source, SplitMatrix::KnownOmega(_)) { "known_omega" } else { "nodewise" })));
            debias_split((&a.x, &a.y), (&b.x, &b.y), lambda, &source, &noise, &opts)?
        }
    };
    let intervals = confidence_intervals(&result, params.alpha)?;
    let pv = p_values(&result)?;

    prepare_out(out)?;
    let mut t = Table::new(["coordinate", "theta_hat", "theta_d", "lower", "upper", "p_value"]);
    for i in 0..p {
        t.push(vec![
            i.to_string(),
            f(result.lasso.theta_hat[i]),
            f(result.theta_d[i]),
            f(intervals.lower[i]),
            f(intervals.upper[i]),
            f(pv.p[i]),
        ]);
    }
    write_table(out, "infer.csv", &t)?;
    let mut t = Table::new(["coordinate", "theta_hat", "theta_d", "var_diag"]);
    for i in 0..p {
        t.push(vec![i.to_string(), f(result.lasso.theta_hat[i]), f(result.theta_d[i]), f(result.variance_diag[i])]);
    }
    write_table(out, "debias.csv", &t)?;
    write_json(
        &out.join("debias.json"),
        &json!({
            "mode": result.mode,
            "n": result.n,
            "p": p,
            "lambda": result.lasso.lambda,
            "sigma_hat": result.sigma_hat,
            "support": result.lasso.support,
            "alpha": intervals.alpha,
            "multiplier": intervals.multiplier,
        }),
    )?;

    let mut meta = Meta::new(Invocation::Infer(params));
    meta.derive("lambda", result.lasso.lambda);
    meta.derive("sigma_hat", result.sigma_hat);
    meta.derive("multiplier", intervals.multiplier);
    meta.derive("n_correction", result.n);
    for (k, v) in meta_extra {
        meta.derive(k, v);
    }
    write_meta(out, &meta)
}

fn layered<T: Default + Serialize + DeserializeOwned>(
    defaults: T,
    file: Option<Value>,
    patch: Value,
) -> Result<ExperimentParams<T>, CliError> {
    layer(&ExperimentParams::with_config(defaults), file, patch)
}

/// Resolve the parameters of an experiment from defaults (desk or full
/// scale), the config file and the flags.
pub fn build_experiment(
    kind: ExperimentKind,
    paper_scale: bool,
    r: Option<f64>,
    file: Option<Value>,
    patch: Value,
    known_sigma: bool,
) -> Result<ExperimentRun, CliError> {
    let run = match kind {
        ExperimentKind::Kurtosis => {
            let d = if paper_scale { KurtosisConfig::paper_scale() } else { KurtosisConfig::default() };
            ExperimentRun::Kurtosis(layered(d, file, patch)?)
        }
        ExperimentKind::Coverage => {
            let mut e: ExperimentParams<CoverageConfig> = layered(CoverageConfig::default(), file, patch)?;
            if known_sigma {
                e.config.noise = NoiseLevel::Known { sigma: e.config.sigma };
            }
            ExperimentRun::Coverage(e)
        }
        ExperimentKind::RiskCurve => {
            let d = if paper_scale { RiskCurveConfig::paper_scale(r.unwrap_or(0.1)) } else { RiskCurveConfig::default() };
            ExperimentRun::RiskCurve(layered(d, file, patch)?)
        }
        ExperimentKind::TwoStep => ExperimentRun::TwoStep(layered(Default::default(), file, patch)?),
        ExperimentKind::DenoiserCheck => ExperimentRun::DenoiserCheck(layered(Default::default(), file, patch)?),
        ExperimentKind::Sure => ExperimentRun::Sure(layered(Default::default(), file, patch)?),
    };
    if let ExperimentRun::Kurtosis(e) = &run {
        if let Some(eps) = e.epsilons.iter().find(|e| !(**e >= 0.0 && **e < 1.0)) {
            return Err(CliError::invalid(format!("epsilons must lie in [0, 1), got {eps}")));
        }
    } else if let Some(eps) = patch_epsilons(&run) {
        return Err(CliError::invalid(format!("epsilons apply to the kurtosis experiment only, got {eps:?}")));
    }
    Ok(run)
}

fn patch_epsilons(run: &ExperimentRun) -> Option<Vec<f64>> {
    let eps = match run {
        ExperimentRun::Kurtosis(_) => return None,
        ExperimentRun::Coverage(e) => &e.epsilons,
        ExperimentRun::RiskCurve(e) => &e.epsilons,
        ExperimentRun::TwoStep(e) => &e.epsilons,
        ExperimentRun::DenoiserCheck(e) => &e.epsilons,
        ExperimentRun::Sure(e) => &e.epsilons,
    };
    (!eps.is_empty()).then(|| eps.clone())
}

fn kurtosis_table(sweep: &KurtosisSweep) -> Table {
    let mut t = Table::new(["delta", "n", "mean_kurtosis", "se_kurtosis", "passes", "refined"]);
    for pt in &sweep.points {
        t.push(vec![
            f(pt.delta),
            pt.n.to_string(),
            f(pt.mean_kurtosis),
            f(pt.se_kurtosis),
            pt.passes().to_string(),
            pt.refined.to_string(),
        ]);
    }
    t
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

pub fn experiment(run: &ExperimentRun, out: &Path) -> Result<(), CliError> {
    let mut meta = Meta::new(Invocation::Experiment(run.clone()));
    let summary: Value = match run {
        ExperimentRun::Kurtosis(e) if e.epsilons.is_empty() => {
            let sweep = kurtosis_sweep(&e.config, e.seed)?;
            prepare_out(out)?;
            write_table(out, "kurtosis.csv", &kurtosis_table(&sweep))?;
            if e.plot {
                let mut plot = LinePlot::new(format!("excess kurtosis, epsilon = {}", f(sweep.epsilon)), "delta = n/p", "kurtosis");
                plot.push(Series::line("mean", sweep.deltas(), sweep.mean_kurtosis()).with_markers());
                plot.push(Series::line("standard error", sweep.deltas(), sweep.se_kurtosis()).dashed());
                write_plot(out, "kurtosis.svg", &plot)?;
            }
            meta.derive("delta_c", sweep.delta_c);
            json!({
                "epsilon": sweep.epsilon,
                "delta_c": sweep.delta_c,
                "grid_too_coarse": sweep.grid_too_coarse,
                "replicates": sweep.replicates,
                "kurtosis_estimator": sweep.kurtosis_estimator,
            })
        }
        ExperimentRun::Kurtosis(e) => {
            let sweeps = kurtosis_sweep_grid(&e.config, &e.epsilons, e.seed)?;
            prepare_out(out)?;
            let mut dc = Table::new(["epsilon", "delta_c", "grid_too_coarse"]);
            let mut plot = LinePlot::new("excess kurtosis by sparsity", "delta = n/p", "kurtosis");
            for s in &sweeps {
                write_table(out, &format!("kurtosis_eps_{}.csv", f(s.epsilon)), &kurtosis_table(s))?;
                dc.push(vec![f(s.epsilon), opt(s.delta_c), s.grid_too_coarse.to_string()]);
                plot.push(Series::line(format!("epsilon = {}", f(s.epsilon)), s.deltas(), s.mean_kurtosis()).with_markers());
            }
            write_table(out, "delta_c.csv", &dc)?;
            if e.plot {
                write_plot(out, "kurtosis.svg", &plot)?;
                let (xs, ys): (Vec<f64>, Vec<f64>) =
                    sweeps.iter().filter_map(|s| s.delta_c.map(|d| (s.epsilon, d))).unzip();
                let mut dplot = LinePlot::new("critical sample ratio", "epsilon", "delta_c");
                dplot.push(Series::line("delta_c", xs, ys).with_markers());
                write_plot(out, "delta_c.svg", &dplot)?;
            }
            let curve: Vec<Value> = sweeps.iter().map(|s| json!({"epsilon": s.epsilon, "delta_c": s.delta_c})).collect();
            meta.derive("delta_c", &curve);
            json!({ "delta_c": curve, "replicates": e.config.replicates })
        }
        ExperimentRun::Coverage(e) => {
            let rep = coverage_experiment(&e.config, e.seed)?;
            prepare_out(out)?;
            let mut t = Table::new(["coordinate", "coverage"]);
            for (i, c) in rep.coverage.iter().enumerate() {
                t.push(vec![i.to_string(), f(*c)]);
            }
            write_table(out, "coverage.csv", &t)?;
            let mut t = Table::new(["p_value"]);
            for v in &rep.null_p_values {
                t.push(vec![f(*v)]);
            }
            write_table(out, "null_p_values.csv", &t)?;
            if e.plot {
                let mut sorted = rep.null_p_values.clone();
                sorted.sort_by(f64::total_cmp);
                let m = sorted.len() as f64;
                let q: Vec<f64> = (0..sorted.len()).map(|k| (k as f64 + 0.5) / m).collect();
                let mut plot = LinePlot::new("null p-values", "uniform quantile", "empirical quantile");
                plot.push(Series::line("p-values", q.clone(), sorted));
                plot.push(Series::line("uniform", q.clone(), q).dashed());
                write_plot(out, "null_p_values.svg", &plot)?;
            }
            meta.derive("mean_coverage", rep.mean_coverage);
            json!({
                "alpha": rep.alpha,
                "replicates": rep.replicates,
                "mean_coverage": rep.mean_coverage,
                "support_coverage": rep.support_coverage,
                "null_coverage": rep.null_coverage,
                "mean_length": rep.mean_length,
                "null_ks": rep.null_ks,
            })
        }
        ExperimentRun::RiskCurve(e) => {
            let curve = risk_curve(&e.config, e.seed)?;
            prepare_out(out)?;
            let mut t = Table::new(["lambda", "R_true", "R_naive", "R_sure", "df"]);
            for k in 0..curve.lambdas.len() {
                t.push(vec![f(curve.lambdas[k]), f(curve.r_true[k]), f(curve.r_naive[k]), f(curve.r_sure[k]), f(curve.mean_df[k])]);
            }
            write_table(out, "risk.csv", &t)?;
            if e.plot {
                let mut plot = LinePlot::new("prediction risk", "lambda", "risk");
                plot.push(Series::line("true", curve.lambdas.clone(), curve.r_true.clone()));
                plot.push(Series::line("naive", curve.lambdas.clone(), curve.r_naive.clone()).dashed());
                plot.push(Series::line("SURE", curve.lambdas.clone(), curve.r_sure.clone()).with_markers());
                write_plot(out, "risk.svg", &plot)?;
            }
            let argmin = |v: &[f64]| {
                let k = (0..v.len()).min_by(|&a, &b| v[a].total_cmp(&v[b])).expect("non-empty grid");
                curve.lambdas[k]
            };
            meta.derive("mean_sigma_hat", curve.mean_sigma_hat);
            json!({
                "replicates": curve.replicates,
                "mean_sigma_hat": curve.mean_sigma_hat,
                "argmin_true": argmin(&curve.r_true),
                "argmin_naive": argmin(&curve.r_naive),
                "argmin_sure": argmin(&curve.r_sure),
            })
        }
        ExperimentRun::TwoStep(e) => {
            let rep = two_step_experiment(&e.config, e.seed)?;
            prepare_out(out)?;
            let mut t = Table::new(["replicate", "loss", "lasso_loss", "bound", "ratio"]);
            for (r, row) in rep.rows.iter().enumerate() {
                t.push(vec![r.to_string(), f(row.loss), f(row.lasso_loss), f(row.bound), f(row.ratio)]);
            }
            write_table(out, "two_step.csv", &t)?;
            meta.derive("lambda", rep.lambda);
            json!({
                "lambda": rep.lambda,
                "factor": rep.factor,
                "within_bound": rep.within_bound,
                "median_ratio": rep.median_ratio,
                "thresholds_below_lambda": rep.thresholds_below_lambda,
            })
        }
        ExperimentRun::DenoiserCheck(e) => {
            let rep = denoiser_approximation_check(&e.config, e.seed)?;
            prepare_out(out)?;
            let mut t = Table::new(["replicate", "approx_gap", "lasso_err", "ratio", "predicted_err", "relative_err"]);
            for (r, row) in rep.rows.iter().enumerate() {
                t.push(vec![
                    r.to_string(),
                    f(row.approx_gap),
                    f(row.lasso_err),
                    f(row.ratio),
                    opt(row.predicted_err),
                    opt(row.relative_err),
                ]);
            }
            write_table(out, "denoiser.csv", &t)?;
            meta.derive("lambda", rep.lambda);
            json!({
                "lambda": rep.lambda,
                "median_ratio": rep.median_ratio,
                "median_relative_err": rep.median_relative_err,
            })
        }
        ExperimentRun::Sure(e) => {
            let rep = sure_consistency(&e.config, e.seed)?;
            prepare_out(out)?;
            let mut t = Table::new(["replicate", "R_true", "R_naive", "R_sure", "df", "sigma_hat"]);
            for (r, row) in rep.rows.iter().enumerate() {
                t.push(vec![r.to_string(), f(row.r_true), f(row.r_naive), f(row.r_sure), row.df.to_string(), f(row.sigma_hat)]);
            }
            write_table(out, "sure.csv", &t)?;
            meta.derive("lambda", rep.lambda);
            json!({
                "lambda": rep.lambda,
                "tolerance": rep.tolerance,
                "within_tolerance": rep.within_tolerance,
                "naive_underestimates": rep.naive_underestimates,
            })
        }
    };
    write_json(&out.join("summary.json"), &summary)?;
    write_meta(out, &meta)
}

/// Run the invocation stored in a `meta.json` again, writing into `out`.
pub fn rerun(meta_path: &Path, out: &Path) -> Result<(), CliError> {
    let path = if meta_path.is_dir() { meta_path.join(META_FILE) } else { meta_path.to_path_buf() };
    let meta: Meta = read_json(&path).map_err(CliError::input)?;
    if meta.tool != TOOL {
        return Err(CliError::config(format!("{} was written by {:?}, not {TOOL}", path.display(), meta.tool)));
    }
    match meta.invocation {
        Invocation::Simulate(p) => simulate(&p, out),
        Invocation::Fit(p) => fit(p, out),
        Invocation::Infer(p) => infer(p, out),
        Invocation::Experiment(run) => experiment(&run, out),
    }
}
