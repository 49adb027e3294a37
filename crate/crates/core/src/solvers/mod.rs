//! Convex solvers: the Lasso, the scaled Lasso, node-wise regressions for
//! the debiasing matrix, and the `Σ`-weighted soft-thresholding denoiser.

mod denoiser;
mod lasso;
mod nodewise;
mod scaled;

pub use denoiser::sigma_denoiser;
pub use lasso::{
    kkt_report, lambda_max, lasso_fit, lasso_objective, theory_lambda, KktReport, LassoFit, LassoOptions,
};
pub use nodewise::{nodewise_lambda, nodewise_lasso, PrecisionEstimate};
pub(crate) use scaled::{run_scaled_lasso, ScaledOutcome};
pub use scaled::{default_lambda_bar, scaled_lasso_fit, ScaledLassoFit};

/// Scalar soft thresholding `(|x| − τ)₊ sign(x)`; exactly zero when `|x| <= τ`.
#[inline]
pub fn soft_threshold(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}
