//! Simulation protocols (kurtosis sweep, coverage, risk curves, two-step
//! risk, denoiser approximation) and design-quality diagnostics.
//!
//! Every experiment is a pure function of its config and a seed. Replicates
//! run in parallel on independent random streams and are aggregated in
//! replicate order, so outputs do not depend on the thread count.

pub mod compatibility;
pub mod coverage;
pub mod denoiser_check;
pub mod kurtosis;
pub mod risk;
pub mod subset_norm;
pub mod two_step;

pub use compatibility::{compatibility_constant_estimate, CompatibilityEstimate};
pub use coverage::{coverage_experiment, CoverageConfig, CoverageReport};
pub use denoiser_check::{denoiser_approximation_check, DenoiserCheckConfig, DenoiserCheckReport};
pub use kurtosis::{kurtosis_sweep, kurtosis_sweep_grid, KurtosisConfig, KurtosisPoint, KurtosisSweep};
pub use risk::{risk_curve, sure_consistency, RiskCurve, RiskCurveConfig, SureConfig, SureReport};
pub use subset_norm::{rho_subset_norm, SubsetNormMethod, SubsetNormReport};
pub use two_step::{two_step_experiment, TwoStepConfig, TwoStepReport};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Source of the debiasing matrix `M` in experiments.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixMode {
    #[default]
    KnownOmega,
    /// Node-wise Lasso with `λ̃ = k·√(log p / n)`.
    Nodewise { k: f64 },
    /// Half the rows for the Lasso, half for the correction with `M = Ω`.
    SampleSplit,
}

/// Run `count` replicates in parallel, returning results in replicate order.
pub(crate) fn run_replicates<T, F>(count: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..count as u64).into_par_iter().map(f).collect()
}

pub(crate) fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}

pub(crate) fn require_positive(name: &str, v: f64) -> Result<()> {
    require(v > 0.0 && v.is_finite(), || format!("{name} must be positive and finite, got {v}"))
}
