use nalgebra::{DMatrix, DVector};

use super::lasso::{lasso_fit, LassoFit, LassoOptions};
use crate::error::{check_dims, Error, Result};

const MAX_ALTERNATIONS: usize = 500;
const SIGMA_REL_TOL: f64 = 1e-8;
const SIGMA_FLOOR: f64 = 1e-12;

/// Joint estimate of the coefficients and the noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledLassoFit {
    pub theta_hat: DVector<f64>,
    /// `‖y − Xθ̂‖₂ / √n` at the returned `θ̂`.
    pub sigma_hat: f64,
    pub lambda_bar: f64,
    /// Last inner Lasso fit, at `λ = σ̂_prev·λ̄`.
    pub lasso: LassoFit,
    pub alternations: usize,
}

/// `10 √(2 log p / n)`.
pub fn default_lambda_bar(n: usize, p: usize) -> f64 {
    10.0 * (2.0 * (p as f64).ln() / n as f64).sqrt()
}

/// `‖y − Xθ‖²/(2σn) + σ/2 + λ̄‖θ‖₁`.
pub(crate) fn joint_objective(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>, sigma: f64, lambda_bar: f64) -> f64 {
    let r = y - x * theta;
    r.norm_squared() / (2.0 * sigma * x.nrows() as f64) + 0.5 * sigma + lambda_bar * theta.lp_norm(1)
}

pub(crate) enum ScaledOutcome {
    Converged(ScaledLassoFit),
    /// `σ̂` collapsed below the floor; carries the last inner fit.
    Degenerate(LassoFit),
}

pub(crate) fn run_scaled_lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda_bar: f64) -> Result<ScaledOutcome> {
    check_dims("response length", y.len(), x.nrows())?;
    if !(lambda_bar > 0.0) || !lambda_bar.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda_bar must be positive, got {lambda_bar}")));
    }
    let sqrt_n = (x.nrows() as f64).sqrt();
    let mut sigma = y.norm() / sqrt_n;
    if sigma < SIGMA_FLOOR {
        return Err(Error::DegenerateFit("response is identically zero".into()));
    }

    let mut opts = LassoOptions::default();
    let mut previous_cost = f64::INFINITY;
    for alternation in 1..=MAX_ALTERNATIONS {
        let lasso = lasso_fit(x, y, sigma * lambda_bar, &opts)?.require_converged()?;
        let new_sigma = (y - x * &lasso.theta_hat).norm() / sqrt_n;
        if new_sigma < SIGMA_FLOOR {
            return Ok(ScaledOutcome::Degenerate(lasso));
        }
        let cost = joint_objective(x, y, &lasso.theta_hat, new_sigma, lambda_bar);
        debug_assert!(cost <= previous_cost + 1e-9 * (1.0 + previous_cost.abs()));
        previous_cost = cost;

        let change = (new_sigma - sigma).abs() / sigma;
        sigma = new_sigma;
        if change < SIGMA_REL_TOL {
            return Ok(ScaledOutcome::Converged(ScaledLassoFit {
                theta_hat: lasso.theta_hat.clone(),
                sigma_hat: sigma,
                lambda_bar,
                lasso,
                alternations: alternation,
            }));
        }
        opts.warm_start = Some(lasso.theta_hat);
    }
    Err(Error::DidNotConverge { iterations: MAX_ALTERNATIONS, gap: f64::NAN })
}

/// Scaled Lasso by alternating minimization: a Lasso at `λ = σ̂ λ̄`, then
/// `σ̂ ← ‖y − Xθ̂‖₂/√n`, until `σ̂` moves by less than 1e-8 relative.
/// Each half-step minimizes the jointly convex cost exactly in one block,
/// so the cost never increases.
pub fn scaled_lasso_fit(x: &DMatrix<f64>, y: &DVector<f64>, lambda_bar: f64) -> Result<ScaledLassoFit> {
    match run_scaled_lasso(x, y, lambda_bar)? {
        ScaledOutcome::Converged(fit) => Ok(fit),
        ScaledOutcome::Degenerate(_) => {
            Err(Error::DegenerateFit("residual vanished (perfect interpolation)".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{sample_design, sample_response};
    use crate::rng::{stream, StreamRole};

    fn instance(n: usize, p: usize, amp: f64, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let x = sample_design(&DMatrix::identity(p, p), n, seed).unwrap();
        let theta = DVector::from_fn(p, |i, _| if i < 3 { amp } else { 0.0 });
        let (y, _) = sample_response(&x, &theta, 1.0, &mut stream(seed, 0, StreamRole::Noise)).unwrap();
        (x, y)
    }

    #[test]
    fn default_lambda_bar_formula() {
        assert!((default_lambda_bar(100, 1000) - 10.0 * (2.0 * 1000f64.ln() / 100.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_and_cost_decrease() {
        let (x, y) = instance(100, 40, 1.0, 1);
        let lb = 0.3;
        let fit = scaled_lasso_fit(&x, &y, lb).unwrap();
        let resid = (&y - &x * &fit.theta_hat).norm_squared() / 100.0;
        assert!((fit.sigma_hat.powi(2) - resid).abs() <= 1e-6 * resid);
        // The joint cost at the fixed point is no larger than at the start.
        let start = joint_objective(&x, &y, &DVector::zeros(40), y.norm() / 10.0, lb);
        assert!(joint_objective(&x, &y, &fit.theta_hat, fit.sigma_hat, lb) <= start);
    }

    #[test]
    fn pure_noise_sigma_is_consistent() {
        let (n, p) = (500, 50);
        let estimates: Vec<f64> = (0..100)
            .map(|s| {
                let (x, y) = instance(n, p, 0.0, 100 + s);
                scaled_lasso_fit(&x, &y, default_lambda_bar(n, p)).unwrap().sigma_hat
            })
            .collect();
        let m = crate::stats::mean(&estimates);
        assert!((0.9..=1.1).contains(&m), "mean sigma_hat = {m}");
    }

    #[test]
    fn joint_scale_equivariance() {
        let (x, y) = instance(80, 30, 1.0, 3);
        let lb = 0.25;
        let a = scaled_lasso_fit(&x, &y, lb).unwrap();
        let b = scaled_lasso_fit(&x, &(&y * 3.0), lb).unwrap();
        assert!((b.sigma_hat - 3.0 * a.sigma_hat).abs() < 1e-6 * a.sigma_hat);
        assert!((&b.theta_hat - &a.theta_hat * 3.0).amax() < 1e-5);
    }

    #[test]
    fn degenerate_inputs() {
        let x = DMatrix::identity(3, 3);
        assert!(matches!(scaled_lasso_fit(&x, &DVector::zeros(3), 0.1), Err(Error::DegenerateFit(_))));
        // n = p with tiny λ̄: interpolation drives σ̂ to zero.
        let y = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        assert!(matches!(scaled_lasso_fit(&x, &y, 1e-14), Err(Error::DegenerateFit(_)) | Err(Error::DidNotConverge { .. })));
    }
}
