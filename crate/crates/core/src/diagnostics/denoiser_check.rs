//! Compare the Lasso with the `Σ`-weighted denoiser applied to the
//! idealized observation `θ* + ΩXᵀw/n`, and (for `Σ = I`) the Lasso error
//! with its coordinate-wise soft-thresholding prediction.

use serde::{Deserialize, Serialize};

use super::{require, require_positive, run_replicates};
use crate::designs::{build_covariance, precision_matrix, CovarianceKind, CovarianceModel, GaussianSampler, SimulationSpec};
use crate::error::Result;
use crate::solvers::{lasso_fit, sigma_denoiser, soft_threshold, theory_lambda, LassoOptions};
use crate::stats::{gauss_hermite, median};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiserCheckConfig {
    pub covariance: CovarianceKind,
    pub n: usize,
    pub p: usize,
    pub s0: usize,
    pub amplitude: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub replicates: usize,
    pub quadrature_order: usize,
}

impl Default for DenoiserCheckConfig {
    fn default() -> Self {
        Self {
            covariance: CovarianceKind::Identity,
            n: 800,
            p: 400,
            s0: 10,
            amplitude: 2.0,
            sigma: 1.0,
            kappa: 8.0,
            replicates: 50,
            quadrature_order: 120,
        }
    }
}

impl DenoiserCheckConfig {
    pub fn validate(&self) -> Result<()> {
        require_positive("kappa", self.kappa)?;
        require_positive("sigma", self.sigma)?;
        require(self.replicates >= 1, || "replicates must be at least 1".into())?;
        require(self.quadrature_order >= 2, || "quadrature_order must be at least 2".into())?;
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
pub struct DenoiserRow {
    /// `‖θ̂ − η_Σ(θ* + ΩXᵀw/n)‖²`.
    pub approx_gap: f64,
    /// `‖θ̂ − θ*‖²`.
    pub lasso_err: f64,
    pub ratio: f64,
    /// `Σ_{i∈S} E[η(θ*_i + σZ/√n; λ) − θ*_i]²`, identity designs only.
    pub predicted_err: Option<f64>,
    pub relative_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserCheckReport {
    pub lambda: f64,
    pub rows: Vec<DenoiserRow>,
    pub median_ratio: f64,
    pub median_relative_err: Option<f64>,
}

/// `E[(η(μ + sZ; λ) − μ)²]` for `Z ~ N(0, 1)` by Gauss-Hermite quadrature.
pub fn soft_threshold_risk(mu: f64, s: f64, lambda: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    nodes.iter().zip(weights).map(|(z, w)| w * (soft_threshold(mu + s * z, lambda) - mu).powi(2)).sum()
}

pub fn denoiser_approximation_check(config: &DenoiserCheckConfig, seed: u64) -> Result<DenoiserCheckReport> {
    config.validate()?;
    let spec = config.spec();
    let sigma_mat = build_covariance(&spec.covariance)?;
    let omega = precision_matrix(&sigma_mat)?;
    let sampler = GaussianSampler::new(&sigma_mat)?;
    let n = config.n;
    let lambda = theory_lambda(config.kappa, config.sigma, n, config.p);
    let identity = spec.covariance.is_identity();
    let (nodes, weights) = gauss_hermite(config.quadrature_order);
    let s = config.sigma / (n as f64).sqrt();

    let rows = run_replicates(config.replicates, |r| {
        let data = spec.simulate_with(&sampler, seed, r)?;
        let theta_star = data.theta_star.as_ref().expect("simulated");
        let w = data.w.as_ref().expect("simulated");
        let lasso = lasso_fit(&data.x, &data.y, lambda, &LassoOptions::default())?.require_converged()?;
        let z = theta_star + &omega * data.x.tr_mul(w) / n as f64;
        let eta = sigma_denoiser(&z, &sigma_mat, lambda)?;
        let approx_gap = (&lasso.theta_hat - eta).norm_squared();
        let lasso_err = (&lasso.theta_hat - theta_star).norm_squared();
        let predicted_err = identity.then(|| {
            theta_star
                .iter()
                .filter(|v| **v != 0.0)
                .map(|&mu| soft_threshold_risk(mu, s, lambda, &nodes, &weights))
                .sum::<f64>()
        });
        let relative_err = predicted_err.map(|pe| (lasso_err - pe).abs() / pe);
        Ok(DenoiserRow { approx_gap, lasso_err, ratio: approx_gap / lasso_err, predicted_err, relative_err })
    })?;

    let ratios: Vec<f64> = rows.iter().map(|row| row.ratio).collect();
    let rel: Vec<f64> = rows.iter().filter_map(|row| row.relative_err).collect();
    Ok(DenoiserCheckReport {
        lambda,
        median_ratio: median(&ratios),
        median_relative_err: (!rel.is_empty()).then(|| median(&rel)),
        rows,
    })
}
