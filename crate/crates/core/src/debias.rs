//! The debiased (de-sparsified) Lasso `θ̂ᵈ = θ̂ + (1/n)·M·Xᵀ(y − Xθ̂)`.
//!
//! Three ways of choosing `M` are supported: the known precision matrix,
//! the node-wise Lasso estimate, and a sample split where the Lasso and the
//! correction use different halves of the data.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::rng::{stream, StreamRole};
use crate::solvers::{
    default_lambda_bar, lasso_fit, nodewise_lasso, scaled_lasso_fit, LassoFit, LassoOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DebiasMode {
    KnownOmega,
    Nodewise,
    SampleSplit,
}

/// How `σ̂` is obtained for interval widths and p-values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseLevel {
    Known { sigma: f64 },
    /// Scaled Lasso with `λ̄`, defaulting to `10√(2 log p / n)`.
    ScaledLasso { lambda_bar: Option<f64> },
}

impl Default for NoiseLevel {
    fn default() -> Self {
        NoiseLevel::ScaledLasso { lambda_bar: None }
    }
}

impl NoiseLevel {
    pub fn resolve(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
        match *self {
            NoiseLevel::Known { sigma } => {
                if !(sigma > 0.0) || !sigma.is_finite() {
                    return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
                }
                Ok(sigma)
            }
            NoiseLevel::ScaledLasso { lambda_bar } => {
                let lb = lambda_bar.unwrap_or_else(|| default_lambda_bar(x.nrows(), x.ncols()));
                Ok(scaled_lasso_fit(x, y, lb)?.sigma_hat)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DebiasResult {
    pub theta_d: DVector<f64>,
    pub m: DMatrix<f64>,
    /// `(M Σ̂ Mᵀ)_ii` on the correction batch.
    pub variance_diag: DVector<f64>,
    pub sigma_hat: f64,
    pub lasso: LassoFit,
    pub mode: DebiasMode,
    /// Number of samples in the correction term.
    pub n: usize,
}

/// `(M Σ̂ Mᵀ)_ii = ‖X m_i‖² / n` with `m_i` the i-th row of `M`; exact zeros
/// in `M` are skipped.
pub fn variance_diagonal(x: &DMatrix<f64>, m: &DMatrix<f64>) -> DVector<f64> {
    let (n, p) = x.shape();
    let values: Vec<f64> = (0..p)
        .into_par_iter()
        .map(|i| {
            let mut v = vec![0.0; n];
            for j in 0..p {
                let c = m[(i, j)];
                if c != 0.0 {
                    for (vk, xk) in v.iter_mut().zip(x.column(j).iter()) {
                        *vk += c * xk;
                    }
                }
            }
            v.iter().map(|a| a * a).sum::<f64>() / n as f64
        })
        .collect();
    DVector::from_vec(values)
}

/// Apply the one-step correction with a given `M`.
pub fn debias(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lasso: LassoFit,
    m: DMatrix<f64>,
    sigma_hat: f64,
    mode: DebiasMode,
) -> Result<DebiasResult> {
    let (n, p) = x.shape();
    check_dims("response length", y.len(), n)?;
    check_dims("lasso coefficient length", lasso.theta_hat.len(), p)?;
    check_dims("M rows", m.nrows(), p)?;
    check_dims("M columns", m.ncols(), p)?;
    let residual = y - x * &lasso.theta_hat;
    let correction = &m * x.tr_mul(&residual) / n as f64;
    let theta_d = &lasso.theta_hat + correction;
    let variance_diag = variance_diagonal(x, &m);
    Ok(DebiasResult { theta_d, m, variance_diag, sigma_hat, lasso, mode, n })
}

/// Lasso followed by debiasing with the known precision matrix `Ω`.
pub fn debias_known(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    omega: &DMatrix<f64>,
    noise: &NoiseLevel,
    opts: &LassoOptions,
) -> Result<DebiasResult> {
    let lasso = lasso_fit(x, y, lambda, opts)?.require_converged()?;
    let sigma_hat = noise.resolve(x, y)?;
    debias(x, y, lasso, omega.clone(), sigma_hat, DebiasMode::KnownOmega)
}

/// Lasso followed by debiasing with the node-wise estimate `M = T̂⁻²Ĉ`.
pub fn debias_nodewise(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    lambda_tilde: f64,
    noise: &NoiseLevel,
    opts: &LassoOptions,
) -> Result<DebiasResult> {
    let lasso = lasso_fit(x, y, lambda, opts)?.require_converged()?;
    let precision = nodewise_lasso(x, lambda_tilde, opts)?;
    let sigma_hat = noise.resolve(x, y)?;
    debias(x, y, lasso, precision.m, sigma_hat, DebiasMode::Nodewise)
}

/// One half of a split sample.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Rows of the original data, in batch order.
    pub rows: Vec<usize>,
}

/// Split rows by a seeded uniform permutation. The correction batch gets
/// `⌊N/2⌋` rows and the Lasso batch the rest.
pub fn split_batches(x: &DMatrix<f64>, y: &DVector<f64>, seed: u64) -> Result<(Batch, Batch)> {
    let total = x.nrows();
    check_dims("response length", y.len(), total)?;
    if total < 2 {
        return Err(Error::InvalidParameter("sample splitting needs at least two rows".into()));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut stream(seed, 0, StreamRole::Split));
    let half = total / 2;
    let take = |rows: &[usize]| Batch {
        x: x.select_rows(rows),
        y: DVector::from_iterator(rows.len(), rows.iter().map(|&r| y[r])),
        rows: rows.to_vec(),
    };
    Ok((take(&order[..half]), take(&order[half..])))
}

/// Source of `M` for the split estimator.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitMatrix {
    KnownOmega(DMatrix<f64>),
    NodewiseOnCorrection { lambda_tilde: f64 },
}

/// Sample-splitting estimator: `θ̂` from the Lasso batch, then
/// `θ̂ + (1/n_A)·M·X_Aᵀ(y_A − X_A θ̂)` on the correction batch `A`. `σ̂` is
/// resolved on batch `A`, whose noise drives the correction.
pub fn debias_split(
    correction: (&DMatrix<f64>, &DVector<f64>),
    estimation: (&DMatrix<f64>, &DVector<f64>),
    lambda: f64,
    source: &SplitMatrix,
    noise: &NoiseLevel,
    opts: &LassoOptions,
) -> Result<DebiasResult> {
    let (xa, ya) = correction;
    let (xb, yb) = estimation;
    check_dims("batch dimension p", xb.ncols(), xa.ncols())?;
    let lasso = lasso_fit(xb, yb, lambda, opts)?.require_converged()?;
    let m = match source {
        SplitMatrix::KnownOmega(omega) => omega.clone(),
        SplitMatrix::NodewiseOnCorrection { lambda_tilde } => nodewise_lasso(xa, *lambda_tilde, opts)?.m,
    };
    let sigma_hat = noise.resolve(xa, ya)?;
    debias(xa, ya, lasso, m, sigma_hat, DebiasMode::SampleSplit)
}

/// `√n(θ̂ᵈ − θ*) = Z + R` for simulated data.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasNoiseSplit {
    /// `M Xᵀ w / √n`.
    pub z: DVector<f64>,
    /// `√n (M Σ̂ − I)(θ* − θ̂)`.
    pub r: DVector<f64>,
    pub r_inf: f64,
    /// `‖√n(θ̂ᵈ − θ*) − (Z + R)‖_∞`, with `θ̂ᵈ` recomputed from `y = Xθ* + w`.
    pub identity_residual: f64,
}

pub fn decompose_bias_noise(
    x: &DMatrix<f64>,
    w: &DVector<f64>,
    theta_star: &DVector<f64>,
    lasso: &LassoFit,
    m: &DMatrix<f64>,
) -> Result<BiasNoiseSplit> {
    let (n, p) = x.shape();
    check_dims("noise length", w.len(), n)?;
    check_dims("theta_star length", theta_star.len(), p)?;
    check_dims("lasso coefficient length", lasso.theta_hat.len(), p)?;
    check_dims("M size", m.nrows() * m.ncols(), p * p)?;
    let nf = n as f64;
    let sqrt_n = nf.sqrt();

    let z = m * x.tr_mul(w) / sqrt_n;
    let d = theta_star - &lasso.theta_hat;
    let m_sigma_d = m * x.tr_mul(&(x * &d)) / nf;
    let r = (m_sigma_d - &d) * sqrt_n;
    let r_inf = r.amax();

    let y = x * theta_star + w;
    let theta_d = &lasso.theta_hat + m * x.tr_mul(&(y - x * &lasso.theta_hat)) / nf;
    let lhs = (theta_d - theta_star) * sqrt_n;
    let identity_residual = (lhs - (&z + &r)).amax();

    Ok(BiasNoiseSplit { z, r, r_inf, identity_residual })
}
