//! Monte-Carlo coverage of the per-coordinate confidence intervals.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{require, require_positive, run_replicates, MatrixMode};
use crate::debias::{debias, debias_split, split_batches, DebiasMode, NoiseLevel, SplitMatrix};
use crate::designs::{build_covariance, precision_matrix, CovarianceKind, CovarianceModel, GaussianSampler, SimulationSpec};
use crate::error::Result;
use crate::inference::{confidence_intervals, p_values};
use crate::rng::derive_seed;
use crate::solvers::{lasso_fit, nodewise_lambda, nodewise_lasso, theory_lambda, LassoOptions};
use crate::stats::ks_distance_uniform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoverageConfig {
    pub covariance: CovarianceKind,
    pub n: usize,
    pub p: usize,
    pub s0: usize,
    pub amplitude: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub replicates: usize,
    pub matrix: MatrixMode,
    /// `λ = κσ̂√(log p / n)`, with `σ̂ = σ` when the noise level is known.
    pub kappa: f64,
    pub noise: NoiseLevel,
    /// Null coordinates (lowest indices off the support) whose p-values are
    /// collected per replicate.
    pub null_per_replicate: usize,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self {
            covariance: CovarianceKind::Circulant { r: 0.8 },
            n: 600,
            p: 300,
            s0: 10,
            amplitude: 0.15,
            sigma: 1.0,
            alpha: 0.05,
            replicates: 500,
            matrix: MatrixMode::KnownOmega,
            kappa: 8.0,
            noise: NoiseLevel::default(),
            null_per_replicate: 2,
        }
    }
}

impl CoverageConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.replicates >= 1, || "replicates must be at least 1".into())?;
        require(self.alpha > 0.0 && self.alpha < 1.0, || format!("alpha must lie in (0, 1), got {}", self.alpha))?;
        require_positive("kappa", self.kappa)?;
        require(self.null_per_replicate <= self.p - self.s0.min(self.p), || {
            "null_per_replicate exceeds the number of null coordinates".into()
        })?;
        if let MatrixMode::Nodewise { k } = self.matrix {
            require_positive("nodewise k", k)?;
        }
        if let NoiseLevel::Known { sigma } = self.noise {
            require_positive("known sigma", sigma)?;
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
pub struct CoverageReport {
    pub alpha: f64,
    pub replicates: usize,
    /// Per-coordinate hit frequency.
    pub coverage: Vec<f64>,
    pub mean_coverage: f64,
    /// Hit rate pooled over support coordinates.
    pub support_coverage: f64,
    /// Hit rate pooled over null coordinates.
    pub null_coverage: f64,
    /// Mean interval length over coordinates and replicates.
    pub mean_length: f64,
    pub null_p_values: Vec<f64>,
    /// Kolmogorov distance of `null_p_values` from Uniform(0, 1).
    pub null_ks: f64,
}

struct ReplicateOutcome {
    hits: Vec<bool>,
    on_support: Vec<bool>,
    mean_length: f64,
    null_p: Vec<f64>,
}

pub fn coverage_experiment(config: &CoverageConfig, seed: u64) -> Result<CoverageReport> {
    config.validate()?;
    let spec = config.spec();
    let sigma = build_covariance(&spec.covariance)?;
    let omega = precision_matrix(&sigma)?;
    let sampler = GaussianSampler::new(&sigma)?;
    let opts = LassoOptions::default();
    let p = config.p;

    let outcomes = run_replicates(config.replicates, |r| {
        let data = spec.simulate_with(&sampler, seed, r)?;
        let theta_star = data.theta_star.clone().expect("simulated");
        let (x, y) = (&data.x, &data.y);
        let lambda_sigma = |xs: &DMatrix<f64>, ys: &nalgebra::DVector<f64>| config.noise.resolve(xs, ys);

        let result = match config.matrix {
            MatrixMode::SampleSplit => {
                let (a, b) = split_batches(x, y, derive_seed(seed, r))?;
                let lambda = theory_lambda(config.kappa, lambda_sigma(&b.x, &b.y)?, b.x.nrows(), p);
                debias_split((&a.x, &a.y), (&b.x, &b.y), lambda, &SplitMatrix::KnownOmega(omega.clone()), &config.noise, &opts)?
            }
            mode => {
                let sigma_hat = lambda_sigma(x, y)?;
                let lambda = theory_lambda(config.kappa, sigma_hat, config.n, p);
                let lasso = lasso_fit(x, y, lambda, &opts)?.require_converged()?;
                let (m, tag) = match mode {
                    MatrixMode::Nodewise { k } => {
                        (nodewise_lasso(x, nodewise_lambda(k, config.n, p), &opts)?.m, DebiasMode::Nodewise)
                    }
                    _ => (omega.clone(), DebiasMode::KnownOmega),
                };
                debias(x, y, lasso, m, sigma_hat, tag)?
            }
        };
        let ci = confidence_intervals(&result, config.alpha)?;
        let pv = p_values(&result)?;
        let hits: Vec<bool> = (0..p).map(|i| ci.contains(i, theta_star[i])).collect();
        let on_support: Vec<bool> = (0..p).map(|i| theta_star[i] != 0.0).collect();
        let null_p: Vec<f64> =
            (0..p).filter(|&i| !on_support[i]).take(config.null_per_replicate).map(|i| pv.p[i]).collect();
        Ok(ReplicateOutcome { hits, on_support, mean_length: 2.0 * ci.half_width.mean(), null_p })
    })?;

    let reps = outcomes.len() as f64;
    let coverage: Vec<f64> =
        (0..p).map(|i| outcomes.iter().filter(|o| o.hits[i]).count() as f64 / reps).collect();
    let pooled = |want: bool| {
        let (mut hit, mut total) = (0usize, 0usize);
        for o in &outcomes {
            for i in 0..p {
                if o.on_support[i] == want {
                    total += 1;
                    hit += o.hits[i] as usize;
                }
            }
        }
        if total == 0 { f64::NAN } else { hit as f64 / total as f64 }
    };
    let null_p_values: Vec<f64> = outcomes.iter().flat_map(|o| o.null_p.iter().copied()).collect();
    let null_ks = if null_p_values.is_empty() { f64::NAN } else { ks_distance_uniform(&null_p_values) };
    Ok(CoverageReport {
        alpha: config.alpha,
        replicates: config.replicates,
        mean_coverage: coverage.iter().sum::<f64>() / p as f64,
        coverage,
        support_coverage: pooled(true),
        null_coverage: pooled(false),
        mean_length: outcomes.iter().map(|o| o.mean_length).sum::<f64>() / reps,
        null_p_values,
        null_ks,
    })
}
