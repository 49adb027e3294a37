//! Cyclic coordinate descent for `(1/2n)‖y − Xθ‖² + λ‖θ‖₁`.
//!
//! The solver keeps the residual `r = y − Xθ` up to date, alternates full
//! sweeps with passes over the current active set, and stops on a duality
//! gap certificate together with a KKT check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::soft_threshold;
use crate::error::{check_dims, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoOptions {
    /// Maximum number of full coordinate sweeps.
    pub max_iter: usize,
    /// Absolute duality-gap tolerance on the objective scale.
    pub gap_tol: f64,
    /// Relative KKT tolerance, as a fraction of λ.
    pub kkt_tol: f64,
    #[serde(skip)]
    pub warm_start: Option<DVector<f64>>,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { max_iter: 10_000, gap_tol: 1e-8, kkt_tol: 1e-8, warm_start: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub theta_hat: DVector<f64>,
    pub lambda: f64,
    /// Indices with `θ̂_i != 0`, ascending.
    pub support: Vec<usize>,
    /// Full sweeps performed.
    pub iterations: usize,
    pub gap: f64,
    pub objective: f64,
    pub converged: bool,
}

impl LassoFit {
    /// Turns a flagged non-converged fit into an error.
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::DidNotConverge { iterations: self.iterations, gap: self.gap })
        }
    }

    /// A fit with `θ̂ = 0`, used where the pilot estimate is skipped.
    pub fn zero(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Self {
        let n = x.nrows() as f64;
        Self {
            theta_hat: DVector::zeros(x.ncols()),
            lambda,
            support: Vec::new(),
            iterations: 0,
            gap: 0.0,
            objective: y.norm_squared() / (2.0 * n),
            converged: true,
        }
    }

    pub fn df(&self) -> usize {
        self.support.len()
    }
}

/// `(1/2n)‖y − Xθ‖² + λ‖θ‖₁`.
pub fn lasso_objective(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>, lambda: f64) -> f64 {
    let r = y - x * theta;
    r.norm_squared() / (2.0 * x.nrows() as f64) + lambda * theta.lp_norm(1)
}

/// Smallest λ with an all-zero solution: `‖Xᵀy/n‖_∞`.
pub fn lambda_max(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    (x.tr_mul(y) / x.nrows() as f64).amax()
}

/// `κ σ √(log p / n)`.
pub fn theory_lambda(kappa: f64, sigma: f64, n: usize, p: usize) -> f64 {
    kappa * sigma * ((p as f64).ln() / n as f64).sqrt()
}

/// Stationarity certificate of a fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// `‖Xᵀ(y − Xθ̂)/n‖_∞ / λ`.
    pub max_correlation_ratio: f64,
    /// Smallest `sign(θ̂_i)·(Xᵀ(y − Xθ̂)/n)_i / λ` over the support (1 if empty).
    pub min_support_ratio: f64,
}

impl KktReport {
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.max_correlation_ratio <= 1.0 + rel_tol && self.min_support_ratio >= 1.0 - rel_tol
    }
}

pub fn kkt_report(x: &DMatrix<f64>, y: &DVector<f64>, fit: &LassoFit) -> KktReport {
    let n = x.nrows() as f64;
    let corr = x.tr_mul(&(y - x * &fit.theta_hat)) / n;
    let max_correlation_ratio = corr.amax() / fit.lambda;
    let min_support_ratio = fit
        .support
        .iter()
        .map(|&i| fit.theta_hat[i].signum() * corr[i] / fit.lambda)
        .fold(1.0, f64::min);
    KktReport { max_correlation_ratio, min_support_ratio }
}

pub(crate) struct CdOutput {
    pub beta: Vec<f64>,
    pub residual: Vec<f64>,
    pub iterations: usize,
    pub gap: f64,
    pub objective: f64,
    pub converged: bool,
}

#[inline]
fn column(x: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = x.nrows();
    &x.as_slice()[j * n..(j + 1) * n]
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Coordinate descent restricted to the columns `cols` of `x`; `beta` is
/// indexed like `cols`.
pub(crate) fn coordinate_descent(
    x: &DMatrix<f64>,
    cols: &[usize],
    y: &[f64],
    lambda: f64,
    opts: &LassoOptions,
    warm: Option<&[f64]>,
) -> CdOutput {
    let n = x.nrows();
    let nf = n as f64;
    let m = cols.len();
    let col_sq: Vec<f64> = cols.iter().map(|&j| dot(column(x, j), column(x, j)) / nf).collect();

    let mut beta = warm.map_or_else(|| vec![0.0; m], <[f64]>::to_vec);
    let mut r = y.to_vec();
    for (k, &j) in cols.iter().enumerate() {
        if beta[k] != 0.0 {
            for (ri, xi) in r.iter_mut().zip(column(x, j)) {
                *ri -= beta[k] * xi;
            }
        }
    }
    let y_sq = dot(y, y);
    // Correlations cannot be resolved below rounding of |x_jᵀr|/n.
    let max_col_sq = col_sq.iter().copied().fold(0.0, f64::max);
    let kkt_floor = 1e-13 * (y_sq / nf * max_col_sq).sqrt();

    let primal = |r: &[f64], beta: &[f64]| {
        dot(r, r) / (2.0 * nf) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    };

    // One coordinate update; returns |Δβ|·‖x_j‖/√n.
    let update = |k: usize, beta: &mut [f64], r: &mut [f64]| -> f64 {
        let c = col_sq[k];
        if c == 0.0 {
            return 0.0;
        }
        let xj = column(x, cols[k]);
        let old = beta[k];
        let rho = dot(xj, r) / nf + c * old;
        let new = soft_threshold(rho, lambda) / c;
        if new != old {
            let delta = new - old;
            for (ri, xi) in r.iter_mut().zip(xj) {
                *ri -= delta * xi;
            }
            beta[k] = new;
            delta.abs() * c.sqrt()
        } else {
            0.0
        }
    };

    let mut objective = primal(&r, &beta);
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        for k in 0..m {
            update(k, &mut beta, &mut r);
        }
        iterations += 1;

        let new_objective = primal(&r, &beta);
        debug_assert!(
            new_objective <= objective + 1e-12 * (1.0 + objective.abs()),
            "objective increased across a sweep: {objective} -> {new_objective}"
        );
        objective = new_objective;

        // Duality gap at the rescaled residual, plus KKT violation.
        let mut max_corr: f64 = 0.0;
        let mut kkt_violation: f64 = 0.0;
        for (k, &j) in cols.iter().enumerate() {
            let corr = dot(column(x, j), &r) / nf;
            max_corr = max_corr.max(corr.abs());
            let v = if beta[k] == 0.0 {
                corr.abs() - lambda
            } else {
                (corr - lambda * beta[k].signum()).abs()
            };
            kkt_violation = kkt_violation.max(v);
        }
        let s = if max_corr > lambda { lambda / max_corr } else { 1.0 };
        let y_dot_r = dot(y, &r);
        let r_sq = dot(&r, &r);
        let dual = (2.0 * s * y_dot_r - s * s * r_sq) / (2.0 * nf);
        debug_assert!(dual <= y_sq / (2.0 * nf) + 1e-12);
        gap = (objective - dual).max(0.0);
        if gap <= opts.gap_tol && kkt_violation <= opts.kkt_tol * lambda + kkt_floor {
            converged = true;
            break;
        }

        // Active-set passes between full sweeps.
        let active: Vec<usize> = (0..m).filter(|&k| beta[k] != 0.0).collect();
        for _ in 0..100 {
            let mut max_step: f64 = 0.0;
            for &k in &active {
                max_step = max_step.max(update(k, &mut beta, &mut r));
            }
            if max_step <= 1e-12 {
                break;
            }
        }
        objective = primal(&r, &beta);
    }

    CdOutput { beta, residual: r, iterations, gap, objective, converged }
}

/// Solve the Lasso at `lambda` by cyclic coordinate descent.
///
/// A fit that hits `max_iter` is returned with `converged == false`; use
/// [`LassoFit::require_converged`] to treat that as an error.
pub fn lasso_fit(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, opts: &LassoOptions) -> Result<LassoFit> {
    check_dims("response length", y.len(), x.nrows())?;
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::DimensionMismatch("empty design".into()));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let p = x.ncols();
    if let Some(w) = &opts.warm_start {
        check_dims("warm start length", w.len(), p)?;
    }
    let cols: Vec<usize> = (0..p).collect();
    let out = coordinate_descent(
        x,
        &cols,
        y.as_slice(),
        lambda,
        opts,
        opts.warm_start.as_ref().map(|w| w.as_slice()),
    );
    let theta_hat = DVector::from_vec(out.beta);
    let support = (0..p).filter(|&i| theta_hat[i] != 0.0).collect();
    Ok(LassoFit {
        theta_hat,
        lambda,
        support,
        iterations: out.iterations,
        gap: out.gap,
        objective: out.objective,
        converged: out.converged,
    })
}
