//! Debiased Lasso inference for high-dimensional linear regression with
//! Gaussian designs.
//!
//! The crate covers the full pipeline: simulate or load `(X, y)`, fit the
//! Lasso, build a debiasing matrix (known precision, node-wise Lasso, or a
//! sample split), form per-coordinate confidence intervals and p-values,
//! and evaluate the thresholded two-step estimator and SURE risk estimate.
//! [`diagnostics`] hosts the Monte-Carlo experiments and design
//! diagnostics.

pub mod debias;
pub mod designs;
pub mod diagnostics;
pub mod error;
pub mod inference;
pub mod io;
pub mod plot;
pub mod rng;
pub mod solvers;
pub mod stats;

pub use designs::{
    build_covariance, empirical_covariance, make_sparse_signal, precision_matrix, sample_design,
    sample_response, CovarianceKind, CovarianceModel, Dataset, GaussianSampler, SimulationSpec,
    SparseSignal,
};
pub use error::{Error, Result};
pub use solvers::{
    lasso_fit, nodewise_lasso, scaled_lasso_fit, sigma_denoiser, soft_threshold, LassoFit,
    LassoOptions, PrecisionEstimate, ScaledLassoFit,
};
pub use inference::{
    confidence_intervals, noise_refit, p_values, prediction_error, sure_estimate,
    two_step_estimate, IntervalSet, PValueSet, RiskTriple, TwoStepEstimate,
};
pub use debias::{
    debias, debias_known, debias_nodewise, debias_split, decompose_bias_noise, split_batches,
    BiasNoiseSplit, DebiasMode, DebiasResult, NoiseLevel, SplitMatrix,
};
pub use diagnostics::MatrixMode;
