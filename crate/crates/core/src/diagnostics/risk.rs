//! Prediction-risk experiments: SURE against the true risk along a `λ`
//! grid, and the per-replicate consistency check at a fixed `λ`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{require, require_positive, run_replicates};
use crate::designs::{build_covariance, CovarianceKind, CovarianceModel, GaussianSampler, SimulationSpec};
use crate::error::Result;
use crate::inference::{noise_refit, prediction_error, sure_estimate, RiskTriple};
use crate::solvers::{lasso_fit, theory_lambda, LassoOptions};

/// `√(2 log p / n)`, the universal level used for the refit noise estimate
/// in the risk experiments.
pub fn universal_lambda_bar(n: usize, p: usize) -> f64 {
    (2.0 * (p as f64).ln() / n as f64).sqrt()
}

/// `count` values spaced geometrically from `lo` to `hi`.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|k| lo * (ratio * k as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskCurveConfig {
    pub covariance: CovarianceKind,
    pub n: usize,
    pub p: usize,
    pub s0: usize,
    pub amplitude: f64,
    pub sigma: f64,
    pub lambda_grid: Vec<f64>,
    pub replicates: usize,
    /// Scaled-Lasso level for the support used by the refit `σ̂`;
    /// defaults to `√(2 log p / n)`.
    pub refit_lambda_bar: Option<f64>,
}

impl Default for RiskCurveConfig {
    fn default() -> Self {
        Self {
            covariance: CovarianceKind::Circulant { r: 0.1 },
            n: 360,
            p: 1000,
            s0: 20,
            amplitude: 0.1,
            sigma: 1.0,
            lambda_grid: geometric_grid(0.01, 0.5, 20),
            replicates: 20,
            refit_lambda_bar: None,
        }
    }
}

impl RiskCurveConfig {
    pub fn paper_scale(r: f64) -> Self {
        Self {
            covariance: CovarianceKind::Circulant { r },
            n: 1800,
            p: 5000,
            s0: 100,
            lambda_grid: geometric_grid(0.01, 0.5, 30),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        require(!self.lambda_grid.is_empty(), || "lambda grid is empty".into())?;
        require(self.lambda_grid.iter().all(|l| *l > 0.0 && l.is_finite()), || "lambda grid values must be positive".into())?;
        require(self.replicates >= 1, || "replicates must be at least 1".into())?;
        if let Some(lb) = self.refit_lambda_bar {
            require_positive("refit_lambda_bar", lb)?;
        }
        self.spec().validate()?;
        build_covariance(&self.spec().covariance)?;
        Ok(())
    }

    fn spec(&self) -> SimulationSpec {
        SimulationSpec {
            covariance: CovarianceModel { kind: self.covariance.clone(), p: self.p },
            n: self.n,
            s0: self.s0,
            amplitude: self.amplitude,
            sigma: self.sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurve {
    pub lambdas: Vec<f64>,
    /// Replicate means per `λ`.
    pub r_true: Vec<f64>,
    pub r_naive: Vec<f64>,
    pub r_sure: Vec<f64>,
    pub mean_df: Vec<f64>,
    pub mean_sigma_hat: f64,
    pub replicates: usize,
}

/// Lasso path over `lambdas` (warm-started from large to small), results in
/// the caller's order.
fn lasso_path(
    x: &nalgebra::DMatrix<f64>,
    y: &DVector<f64>,
    lambdas: &[f64],
) -> Result<Vec<crate::solvers::LassoFit>> {
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let mut fits = vec![None; lambdas.len()];
    let mut warm: Option<DVector<f64>> = None;
    for idx in order {
        let opts = LassoOptions { warm_start: warm.take(), ..LassoOptions::default() };
        let fit = lasso_fit(x, y, lambdas[idx], &opts)?.require_converged()?;
        warm = Some(fit.theta_hat.clone());
        fits[idx] = Some(fit);
    }
    Ok(fits.into_iter().map(|f| f.expect("every index visited")).collect())
}

pub fn risk_curve(config: &RiskCurveConfig, seed: u64) -> Result<RiskCurve> {
    config.validate()?;
    let spec = config.spec();
    let sampler = GaussianSampler::from_model(&spec.covariance)?;
    let lambda_bar = config.refit_lambda_bar.unwrap_or_else(|| universal_lambda_bar(config.n, config.p));

    let per_rep: Vec<(f64, Vec<RiskTriple>)> = run_replicates(config.replicates, |r| {
        let data = spec.simulate_with(&sampler, seed, r)?;
        let (theta_star, w) = (data.theta_star.as_ref().expect("simulated"), data.w.as_ref().expect("simulated"));
        let sigma_hat = noise_refit(&data.x, &data.y, lambda_bar)?;
        let fits = lasso_path(&data.x, &data.y, &config.lambda_grid)?;
        let triples = fits
            .iter()
            .map(|fit| {
                let mut t = sure_estimate(&data.x, &data.y, fit, sigma_hat)?;
                t.r_true = Some(prediction_error(&data.x, fit, theta_star, w)?);
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((sigma_hat, triples))
    })?;

    let reps = per_rep.len() as f64;
    let avg = |f: &dyn Fn(&RiskTriple) -> f64| -> Vec<f64> {
        (0..config.lambda_grid.len()).map(|j| per_rep.iter().map(|(_, t)| f(&t[j])).sum::<f64>() / reps).collect()
    };
    Ok(RiskCurve {
        lambdas: config.lambda_grid.clone(),
        r_true: avg(&|t| t.r_true.expect("set above")),
        r_naive: avg(&|t| t.r_naive),
        r_sure: avg(&|t| t.r_sure),
        mean_df: avg(&|t| t.df as f64),
        mean_sigma_hat: per_rep.iter().map(|(s, _)| s).sum::<f64>() / reps,
        replicates: config.replicates,
    })
}

/// Noise level plugged into SURE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SureSigma {
    Known,
    Refit { lambda_bar: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SureConfig {
    pub covariance: CovarianceKind,
    pub n: usize,
    pub p: usize,
    pub s0: usize,
    pub amplitude: f64,
    pub sigma: f64,
    /// `λ = κσ√(log p / n)`.
    pub kappa: f64,
    pub replicates: usize,
    pub sigma_source: SureSigma,
    /// Replicates pass when `|R̂_SURE − R| ≤ tolerance_factor·σ²/√n`.
    pub tolerance_factor: f64,
}

impl Default for SureConfig {
    fn default() -> Self {
        Self {
            covariance: CovarianceKind::Identity,
            n: 900,
            p: 2000,
            s0: 30,
            amplitude: 0.1,
            sigma: 1.0,
            kappa: 9.0,
            replicates: 200,
            sigma_source: SureSigma::Known,
            tolerance_factor: 3.0,
        }
    }
}

impl SureConfig {
    pub fn validate(&self) -> Result<()> {
        require_positive("kappa", self.kappa)?;
        require_positive("sigma", self.sigma)?;
        require_positive("tolerance_factor", self.tolerance_factor)?;
        require(self.replicates >= 1, || "replicates must be at least 1".into())?;
        self.spec().validate()?;
        build_covariance(&self.spec().covariance)?;
        Ok(())
    }

    fn spec(&self) -> SimulationSpec {
        SimulationSpec {
            covariance: CovarianceModel { kind: self.covariance.clone(), p: self.p },
            n: self.n,
            s0: self.s0,
            amplitude: self.amplitude,
            sigma: self.sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SureRow {
    pub r_true: f64,
    pub r_naive: f64,
    pub r_sure: f64,
    pub df: usize,
    pub sigma_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SureReport {
    pub lambda: f64,
    pub tolerance: f64,
    pub rows: Vec<SureRow>,
    /// Share of replicates with `|R̂_SURE − R| ≤ tolerance`.
    pub within_tolerance: f64,
    /// Share of replicates with `R̂ < R`.
    pub naive_underestimates: f64,
}

pub fn sure_consistency(config: &SureConfig, seed: u64) -> Result<SureReport> {
    config.validate()?;
    let spec = config.spec();
    let sampler = GaussianSampler::from_model(&spec.covariance)?;
    let lambda = theory_lambda(config.kappa, config.sigma, config.n, config.p);
    let tolerance = config.tolerance_factor * config.sigma * config.sigma / (config.n as f64).sqrt();

    let rows = run_replicates(config.replicates, |r| {
        let data = spec.simulate_with(&sampler, seed, r)?;
        let fit = lasso_fit(&data.x, &data.y, lambda, &LassoOptions::default())?.require_converged()?;
        let sigma_hat = match config.sigma_source {
            SureSigma::Known => config.sigma,
            SureSigma::Refit { lambda_bar } => noise_refit(
                &data.x,
                &data.y,
                lambda_bar.unwrap_or_else(|| universal_lambda_bar(config.n, config.p)),
            )?,
        };
        let t = sure_estimate(&data.x, &data.y, &fit, sigma_hat)?;
        let r_true = prediction_error(
            &data.x,
            &fit,
            data.theta_star.as_ref().expect("simulated"),
            data.w.as_ref().expect("simulated"),
        )?;
        Ok(SureRow { r_true, r_naive: t.r_naive, r_sure: t.r_sure, df: t.df, sigma_hat })
    })?;

    let reps = rows.len() as f64;
    let within = rows.iter().filter(|row| (row.r_sure - row.r_true).abs() <= tolerance).count() as f64 / reps;
    let under = rows.iter().filter(|row| row.r_naive < row.r_true).count() as f64 / reps;
    Ok(SureReport { lambda, tolerance, rows, within_tolerance: within, naive_underestimates: under })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_curve() -> RiskCurveConfig {
        RiskCurveConfig {
            n: 80,
            p: 120,
            s0: 4,
            amplitude: 1.0,
            lambda_grid: vec![0.05, 0.2, 5.0, 10.0],
            replicates: 4,
            ..RiskCurveConfig::default()
        }
    }

    #[test]
    fn curve_identities() {
        let curve = risk_curve(&small_curve(), 3).unwrap();
        for j in 0..curve.lambdas.len() {
            assert!(curve.r_naive[j] <= curve.r_sure[j]);
        }
        // Beyond λ_max the fit is zero: R̂ = R̂_SURE and df = 0.
        assert_eq!(curve.mean_df[3], 0.0);
        assert_eq!(curve.r_naive[3], curve.r_sure[3]);
        assert_eq!(curve.r_naive[2], curve.r_naive[3]);
    }

    #[test]
    fn path_matches_cold_fits() {
        let spec = small_curve().spec();
        let data = spec.simulate(9).unwrap();
        let lambdas = [0.3, 0.05, 0.1];
        let path = lasso_path(&data.x, &data.y, &lambdas).unwrap();
        for (fit, &l) in path.iter().zip(&lambdas) {
            let cold = lasso_fit(&data.x, &data.y, l, &LassoOptions::default()).unwrap();
            assert!((&fit.theta_hat - &cold.theta_hat).amax() < 1e-6);
        }
    }

    #[test]
    fn sure_report_fractions() {
        let cfg = SureConfig { n: 100, p: 150, s0: 5, replicates: 6, ..SureConfig::default() };
        let rep = sure_consistency(&cfg, 1).unwrap();
        assert_eq!(rep.rows.len(), 6);
        assert!((0.0..=1.0).contains(&rep.within_tolerance));
        assert!((rep.tolerance - 0.3).abs() < 1e-15);
        for row in &rep.rows {
            assert!((row.r_sure - row.r_naive - 2.0 * row.df as f64 / 100.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_helper() {
        let g = geometric_grid(0.01, 1.0, 3);
        assert!((g[1] - 0.1).abs() < 1e-15 && (g[2] - 1.0).abs() < 1e-12);
    }
}
