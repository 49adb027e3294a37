//! Risk of the thresholded two-step estimator against the
//! `(2s₀σ²/n)·log(p/s₀)` benchmark.

use serde::{Deserialize, Serialize};

use super::{require, require_positive, run_replicates};
use crate::debias::{debias, DebiasMode};
use crate::designs::{build_covariance, precision_matrix, CovarianceKind, CovarianceModel, GaussianSampler, SimulationSpec};
use crate::error::{Error, Result};
use crate::inference::two_step_estimate;
use crate::solvers::{lasso_fit, theory_lambda, LassoOptions};
use crate::stats::median;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwoStepConfig {
    pub covariance: CovarianceKind,
    pub n: usize,
    pub p: usize,
    pub s0: usize,
    pub amplitude: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub replicates: usize,
    /// A replicate passes when its loss is at most `factor` times the bound.
    pub factor: f64,
}

impl Default for TwoStepConfig {
    fn default() -> Self {
        Self {
            covariance: CovarianceKind::Identity,
            n: 1500,
            p: 2000,
            s0: 50,
            amplitude: 1.0,
            sigma: 1.0,
            kappa: 8.0,
            replicates: 200,
            factor: 1.3,
        }
    }
}

impl TwoStepConfig {
    pub fn validate(&self) -> Result<()> {
        require_positive("kappa", self.kappa)?;
        require_positive("sigma", self.sigma)?;
        require_positive("factor", self.factor)?;
        require(self.replicates >= 1, || "replicates must be at least 1".into())?;
        if self.s0 == 0 || self.s0 >= self.p {
            return Err(Error::BadSparsity(format!("two-step experiment needs 0 < s0 < p, got s0 = {}", self.s0)));
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
pub struct TwoStepRow {
    /// `‖θ̂⁽²⁾ − θ*‖²`.
    pub loss: f64,
    /// `‖θ̂ − θ*‖²` for the Lasso itself.
    pub lasso_loss: f64,
    /// `(2s₀σ²/n)·log(p/s₀)·(mean of Ω_ii over the support)`.
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStepReport {
    pub lambda: f64,
    pub factor: f64,
    pub rows: Vec<TwoStepRow>,
    /// Share of replicates with `loss ≤ factor·bound`.
    pub within_bound: f64,
    pub median_ratio: f64,
    /// Every threshold `τ_i` was below `λ` in every replicate.
    pub thresholds_below_lambda: bool,
}

pub fn two_step_experiment(config: &TwoStepConfig, seed: u64) -> Result<TwoStepReport> {
    config.validate()?;
    let spec = config.spec();
    let sigma_mat = build_covariance(&spec.covariance)?;
    let omega = precision_matrix(&sigma_mat)?;
    let sampler = GaussianSampler::new(&sigma_mat)?;
    let (n, p, s0) = (config.n, config.p, config.s0);
    let lambda = theory_lambda(config.kappa, config.sigma, n, p);

    let rows: Vec<(TwoStepRow, bool)> = run_replicates(config.replicates, |r| {
        let data = spec.simulate_with(&sampler, seed, r)?;
        let theta_star = data.theta_star.as_ref().expect("simulated");
        let lasso = lasso_fit(&data.x, &data.y, lambda, &LassoOptions::default())?.require_converged()?;
        let lasso_loss = (&lasso.theta_hat - theta_star).norm_squared();
        let result = debias(&data.x, &data.y, lasso, omega.clone(), config.sigma, DebiasMode::KnownOmega)?;
        let est = two_step_estimate(&result, &omega, config.sigma, s0)?;
        let loss = (&est.theta2 - theta_star).norm_squared();
        let support: Vec<usize> = (0..p).filter(|&i| theta_star[i] != 0.0).collect();
        let omega_avg = support.iter().map(|&i| omega[(i, i)]).sum::<f64>() / support.len().max(1) as f64;
        let bound = 2.0 * s0 as f64 * config.sigma * config.sigma / n as f64 * (p as f64 / s0 as f64).ln() * omega_avg;
        let below = est.tau.iter().all(|&t| t < lambda);
        Ok((TwoStepRow { loss, lasso_loss, bound, ratio: loss / bound }, below))
    })?;

    let reps = rows.len() as f64;
    let within = rows.iter().filter(|(row, _)| row.loss <= config.factor * row.bound).count() as f64 / reps;
    let ratios: Vec<f64> = rows.iter().map(|(row, _)| row.ratio).collect();
    Ok(TwoStepReport {
        lambda,
        factor: config.factor,
        within_bound: within,
        median_ratio: median(&ratios),
        thresholds_below_lambda: rows.iter().all(|(_, b)| *b),
        rows: rows.into_iter().map(|(row, _)| row).collect(),
    })
}
