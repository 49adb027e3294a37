//! Confidence intervals, p-values, the thresholded two-step estimator and
//! SURE prediction-risk estimates.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::debias::DebiasResult;
use crate::error::{check_dims, Error, Result};
use crate::solvers::{run_scaled_lasso, soft_threshold, LassoFit, ScaledOutcome};
use crate::stats::{normal_quantile, normal_sf};

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    pub alpha: f64,
    /// `Φ⁻¹(1 − α/2)`.
    pub multiplier: f64,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub half_width: DVector<f64>,
}

impl IntervalSet {
    pub fn contains(&self, i: usize, value: f64) -> bool {
        self.lower[i] <= value && value <= self.upper[i]
    }
}

fn check_variances(result: &DebiasResult) -> Result<()> {
    if let Some(i) = result.variance_diag.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::InvalidParameter(format!("variance for coordinate {i} is not positive")));
    }
    if !(result.sigma_hat > 0.0) {
        return Err(Error::InvalidParameter("sigma_hat must be positive".into()));
    }
    Ok(())
}

/// `θ̂ᵈ_i ± Φ⁻¹(1 − α/2)·σ̂·(MΣ̂Mᵀ)_ii^{1/2}/√n`.
pub fn confidence_intervals(result: &DebiasResult, alpha: f64) -> Result<IntervalSet> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::BadAlpha(alpha));
    }
    check_variances(result)?;
    let multiplier = normal_quantile(1.0 - alpha / 2.0);
    let scale = result.sigma_hat / (result.n as f64).sqrt();
    let half_width = result.variance_diag.map(|v| multiplier * scale * v.sqrt());
    let lower = &result.theta_d - &half_width;
    let upper = &result.theta_d + &half_width;
    Ok(IntervalSet { alpha, multiplier, lower, upper, half_width })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PValueSet {
    pub z: DVector<f64>,
    pub p: DVector<f64>,
}

/// Two-sided p-values `2(1 − Φ(√n|θ̂ᵈ_i| / (σ̂ (MΣ̂Mᵀ)_ii^{1/2})))`.
pub fn p_values(result: &DebiasResult) -> Result<PValueSet> {
    check_variances(result)?;
    let sqrt_n = (result.n as f64).sqrt();
    let z = DVector::from_fn(result.theta_d.len(), |i, _| {
        sqrt_n * result.theta_d[i] / (result.sigma_hat * result.variance_diag[i].sqrt())
    });
    let p = z.map(|v| (2.0 * normal_sf(v.abs())).min(1.0));
    Ok(PValueSet { z, p })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepEstimate {
    pub theta2: DVector<f64>,
    pub tau: DVector<f64>,
}

/// `√(2σ²Ω_ii log(p/s₀)/n)`, written in terms of `log(p/s₀)`.
pub fn two_step_threshold(sigma: f64, omega_ii: f64, n: usize, log_p_over_s0: f64) -> f64 {
    (2.0 * sigma * sigma * omega_ii * log_p_over_s0 / n as f64).sqrt()
}

/// Soft-threshold each debiased coordinate at its own level `τ_i`.
/// Requires the true sparsity `s0`.
pub fn two_step_estimate(result: &DebiasResult, omega: &DMatrix<f64>, sigma: f64, s0: usize) -> Result<TwoStepEstimate> {
    let p = result.theta_d.len();
    check_dims("precision matrix size", omega.nrows(), p)?;
    if s0 == 0 || s0 >= p {
        return Err(Error::BadSparsity(format!("two-step estimator needs 0 < s0 < p, got s0 = {s0}, p = {p}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let log_ratio = (p as f64 / s0 as f64).ln();
    let tau = DVector::from_fn(p, |i, _| two_step_threshold(sigma, omega[(i, i)], result.n, log_ratio));
    let theta2 = DVector::from_fn(p, |i, _| soft_threshold(result.theta_d[i], tau[i]));
    Ok(TwoStepEstimate { theta2, tau })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskTriple {
    /// Needs the simulation ground truth.
    pub r_true: Option<f64>,
    pub r_naive: f64,
    pub r_sure: f64,
    /// `‖θ̂‖₀`.
    pub df: usize,
}

/// `R̂ = ‖y − Xθ̂‖²/n` and `R̂_SURE = R̂ + 2σ̂²‖θ̂‖₀/n`.
pub fn sure_estimate(x: &DMatrix<f64>, y: &DVector<f64>, lasso: &LassoFit, sigma_hat: f64) -> Result<RiskTriple> {
    check_dims("response length", y.len(), x.nrows())?;
    check_dims("coefficient length", lasso.theta_hat.len(), x.ncols())?;
    if !(sigma_hat > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma_hat must be positive, got {sigma_hat}")));
    }
    let n = x.nrows() as f64;
    let r_naive = (y - x * &lasso.theta_hat).norm_squared() / n;
    let df = lasso.theta_hat.iter().filter(|&&v| v != 0.0).count();
    let r_sure = r_naive + 2.0 * sigma_hat * sigma_hat * df as f64 / n;
    Ok(RiskTriple { r_true: None, r_naive, r_sure, df })
}

/// `‖X(θ̂ − θ*)‖²/n + ‖w‖²/n`.
pub fn prediction_error(x: &DMatrix<f64>, lasso: &LassoFit, theta_star: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
    check_dims("theta_star length", theta_star.len(), x.ncols())?;
    check_dims("coefficient length", lasso.theta_hat.len(), x.ncols())?;
    check_dims("noise length", w.len(), x.nrows())?;
    let n = x.nrows() as f64;
    Ok((x * (&lasso.theta_hat - theta_star)).norm_squared() / n + w.norm_squared() / n)
}

/// Noise level from least squares on the scaled-Lasso support:
/// `σ̂ = ‖y − X_Ŝ θ̂ᴸˢ‖₂/√n`.
pub fn noise_refit(x: &DMatrix<f64>, y: &DVector<f64>, lambda_bar: f64) -> Result<f64> {
    let support = match run_scaled_lasso(x, y, lambda_bar)? {
        ScaledOutcome::Converged(fit) => fit.lasso.support,
        ScaledOutcome::Degenerate(lasso) => lasso.support,
    };
    least_squares_residual_scale(x, y, &support)
}

pub(crate) fn least_squares_residual_scale(x: &DMatrix<f64>, y: &DVector<f64>, support: &[usize]) -> Result<f64> {
    let n = x.nrows();
    let sqrt_n = (n as f64).sqrt();
    if support.is_empty() {
        return Ok(y.norm() / sqrt_n);
    }
    if support.len() >= n {
        return Err(Error::ModelTooLarge { size: support.len(), n });
    }
    let xs = x.select_columns(support);
    let coef = least_squares(&xs, y)?;
    Ok((y - &xs * coef).norm() / sqrt_n)
}

/// Ordinary least squares by Householder QR. Columns whose `R` diagonal
/// falls below `1e-10` of the largest are treated as rank deficiency.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    check_dims("response length", y.len(), x.nrows())?;
    if x.ncols() > x.nrows() {
        return Err(Error::ModelTooLarge { size: x.ncols(), n: x.nrows() });
    }
    let qr = x.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let diag_max = r.diagonal().amax();
    if !(diag_max > 0.0) || r.diagonal().iter().any(|d| d.abs() <= 1e-10 * diag_max) {
        return Err(Error::RankDeficient);
    }
    r.solve_upper_triangular(&(q.transpose() * y)).ok_or(Error::RankDeficient)
}
