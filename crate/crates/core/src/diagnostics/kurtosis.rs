//! Empirical kurtosis of the standardized debiased coordinates as a function
//! of the sampling ratio `δ = n/p`, and the one-standard-error rule for the
//! critical ratio `δ_c`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{require, require_positive, run_replicates, MatrixMode};
use crate::debias::variance_diagonal;
use crate::designs::{
    build_covariance, make_sparse_signal, precision_matrix, sample_response, CovarianceKind, CovarianceModel,
    GaussianSampler,
};
use crate::error::{Error, Result};
use crate::inference::least_squares;
use crate::rng::{derive_seed, stream, StreamRole};
use crate::solvers::{
    default_lambda_bar, lasso_fit, nodewise_lambda, nodewise_lasso, scaled_lasso_fit, theory_lambda, LassoOptions,
};
use crate::stats::{excess_kurtosis, mean, std_dev};

pub const KURTOSIS_ESTIMATOR: &str = "sample excess kurtosis m4/m2^2 - 3, no small-sample correction";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KurtosisConfig {
    pub p: usize,
    /// `s₀ / p`; `s₀ = round(εp)`.
    pub epsilon: f64,
    /// Nondecreasing grid of `n/p` values; `n = ⌈δp⌉`.
    pub deltas: Vec<f64>,
    /// Noise draws per `δ`.
    pub replicates: usize,
    pub covariance: CovarianceKind,
    pub amplitude: f64,
    pub sigma: f64,
    pub matrix: MatrixMode,
    /// `λ = κσ√(log p / n)`; `κ = 0` uses least squares (needs `n > p`).
    pub kappa: f64,
    /// Standardize with the scaled-Lasso `σ̂` instead of the true `σ`.
    pub estimate_sigma: bool,
    /// Draw a fresh design per replicate instead of one per `δ`.
    pub resample_design: bool,
    /// Re-scan the interval below the coarse `δ_c` with `refine_step`.
    pub refine: bool,
    pub refine_step: f64,
}

impl Default for KurtosisConfig {
    fn default() -> Self {
        Self {
            p: 400,
            epsilon: 0.2,
            deltas: default_delta_grid(),
            replicates: 100,
            covariance: CovarianceKind::Circulant { r: 0.8 },
            amplitude: 0.15,
            sigma: 1.0,
            matrix: MatrixMode::KnownOmega,
            kappa: 8.0,
            estimate_sigma: false,
            resample_design: false,
            refine: true,
            refine_step: 0.01,
        }
    }
}

/// `0.10, 0.15, …, 0.95`.
pub fn default_delta_grid() -> Vec<f64> {
    (2..=19).map(|k| k as f64 * 5.0 / 100.0).collect()
}

impl KurtosisConfig {
    pub fn paper_scale() -> Self {
        Self { p: 3000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        require(self.p >= 2, || format!("p must be at least 2, got {}", self.p))?;
        require((0.0..=1.0).contains(&self.epsilon), || format!("epsilon must lie in [0, 1], got {}", self.epsilon))?;
        require(!self.deltas.is_empty(), || "delta grid is empty".into())?;
        require(self.deltas.iter().all(|d| *d > 0.0 && d.is_finite()), || "delta grid values must be positive".into())?;
        require(self.deltas.windows(2).all(|w| w[0] <= w[1]), || "delta grid must be nondecreasing".into())?;
        require(self.replicates >= 2, || format!("replicates must be at least 2, got {}", self.replicates))?;
        require_positive("sigma", self.sigma)?;
        require(self.amplitude.is_finite(), || "amplitude must be finite".into())?;
        require(self.kappa >= 0.0 && self.kappa.is_finite(), || format!("kappa must be >= 0, got {}", self.kappa))?;
        require_positive("refine_step", self.refine_step)?;
        if matches!(self.matrix, MatrixMode::SampleSplit) {
            return Err(Error::InvalidParameter("the kurtosis sweep supports known_omega and nodewise only".into()));
        }
        if let MatrixMode::Nodewise { k } = self.matrix {
            require_positive("nodewise k", k)?;
        }
        if self.kappa == 0.0 {
            let min_n = self.sample_size(self.deltas[0]);
            require(min_n > self.p, || format!("kappa = 0 needs n > p for every delta, got n = {min_n}"))?;
        }
        build_covariance(&self.model())?;
        Ok(())
    }

    pub fn s0(&self) -> usize {
        (self.epsilon * self.p as f64).round() as usize
    }

    pub fn sample_size(&self, delta: f64) -> usize {
        ((delta * self.p as f64) - 1e-9).ceil().max(1.0) as usize
    }

    fn model(&self) -> CovarianceModel {
        CovarianceModel { kind: self.covariance.clone(), p: self.p }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KurtosisPoint {
    pub delta: f64,
    pub n: usize,
    /// `m(γ^δ)`.
    pub mean_kurtosis: f64,
    /// `SD(γ^δ)/√p`.
    pub se_kurtosis: f64,
    /// Point from the refinement pass.
    pub refined: bool,
}

impl KurtosisPoint {
    pub fn passes(&self) -> bool {
        self.mean_kurtosis <= self.se_kurtosis
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KurtosisSweep {
    pub epsilon: f64,
    pub replicates: usize,
    /// All evaluated points sorted by `δ`.
    pub points: Vec<KurtosisPoint>,
    /// Smallest evaluated `δ` with `m(γ^δ) ≤ SE(γ^δ)`.
    pub delta_c: Option<f64>,
    /// No grid point satisfied the rule.
    pub grid_too_coarse: bool,
    pub kurtosis_estimator: String,
}

impl KurtosisSweep {
    pub fn deltas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.delta).collect()
    }

    pub fn mean_kurtosis(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_kurtosis).collect()
    }

    pub fn se_kurtosis(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.se_kurtosis).collect()
    }
}

struct Setup {
    sampler: GaussianSampler,
    omega: DMatrix<f64>,
    theta_scale: f64,
}

pub fn kurtosis_sweep(config: &KurtosisConfig, seed: u64) -> Result<KurtosisSweep> {
    config.validate()?;
    let sigma = build_covariance(&config.model())?;
    let setup = Setup { sampler: GaussianSampler::new(&sigma)?, omega: precision_matrix(&sigma)?, theta_scale: config.amplitude };

    let coarse: Vec<KurtosisPoint> = config
        .deltas
        .par_iter()
        .map(|&d| evaluate(config, &setup, seed, d, false))
        .collect::<Result<_>>()?;
    let first = coarse.iter().position(KurtosisPoint::passes);

    let mut points = coarse.clone();
    let mut delta_c = first.map(|j| coarse[j].delta);
    if let (Some(j), true) = (first, config.refine) {
        if j > 0 {
            let (lo, hi) = (config.deltas[j - 1], config.deltas[j]);
            let steps = ((hi - lo) / config.refine_step - 1e-9).floor() as usize;
            let fine: Vec<f64> = (1..=steps).map(|k| tidy(lo + k as f64 * config.refine_step)).filter(|d| *d < hi - 1e-12).collect();
            let refined: Vec<KurtosisPoint> =
                fine.par_iter().map(|&d| evaluate(config, &setup, seed, d, true)).collect::<Result<_>>()?;
            if let Some(pt) = refined.iter().find(|pt| pt.passes()) {
                delta_c = Some(pt.delta);
            }
            points.extend(refined);
            points.sort_by(|a, b| a.delta.total_cmp(&b.delta));
        }
    }
    Ok(KurtosisSweep {
        epsilon: config.epsilon,
        replicates: config.replicates,
        points,
        delta_c,
        grid_too_coarse: delta_c.is_none(),
        kurtosis_estimator: KURTOSIS_ESTIMATOR.into(),
    })
}

/// One sweep per sparsity level. Designs and noise are shared across
/// levels for a given `δ`.
pub fn kurtosis_sweep_grid(config: &KurtosisConfig, epsilons: &[f64], seed: u64) -> Result<Vec<KurtosisSweep>> {
    epsilons
        .iter()
        .map(|&eps| kurtosis_sweep(&KurtosisConfig { epsilon: eps, ..config.clone() }, seed))
        .collect()
}

/// Round away binary noise so grid values print as typed.
fn tidy(x: f64) -> f64 {
    format!("{x:.10}").parse().unwrap_or(x)
}

fn delta_key(delta: f64) -> u64 {
    (delta * 1e6).round() as u64
}

struct Prepared {
    x: DMatrix<f64>,
    m: DMatrix<f64>,
    variance: DVector<f64>,
}

fn prepare(config: &KurtosisConfig, setup: &Setup, n: usize, design_seed: u64, replicate: u64) -> Result<Prepared> {
    let x = setup.sampler.sample(n, &mut stream(design_seed, replicate, StreamRole::Design));
    let m = match config.matrix {
        MatrixMode::Nodewise { k } => {
            nodewise_lasso(&x, nodewise_lambda(k, n, config.p), &LassoOptions::default())?.m
        }
        _ => setup.omega.clone(),
    };
    let variance = variance_diagonal(&x, &m);
    if let Some(i) = variance.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::DegenerateFit(format!("variance of coordinate {i} is zero")));
    }
    Ok(Prepared { x, m, variance })
}

fn evaluate(config: &KurtosisConfig, setup: &Setup, seed: u64, delta: f64, refined: bool) -> Result<KurtosisPoint> {
    let p = config.p;
    let n = config.sample_size(delta);
    let local = derive_seed(seed, delta_key(delta));
    let theta_star = make_sparse_signal(p, config.s0(), setup.theta_scale, &mut stream(local, 0, StreamRole::Signal))?.theta;
    let shared = if config.resample_design { None } else { Some(prepare(config, setup, n, local, 0)?) };
    let lambda = theory_lambda(config.kappa, config.sigma, n, p);
    let sqrt_n = (n as f64).sqrt();

    let stats: Vec<DVector<f64>> = run_replicates(config.replicates, |r| {
        let owned;
        let prep = match &shared {
            Some(prep) => prep,
            None => {
                owned = prepare(config, setup, n, local, r + 1)?;
                &owned
            }
        };
        let x = &prep.x;
        let (y, _) = sample_response(x, &theta_star, config.sigma, &mut stream(local, r, StreamRole::Noise))?;
        let theta_hat = if config.kappa == 0.0 {
            least_squares(x, &y)?
        } else {
            lasso_fit(x, &y, lambda, &LassoOptions::default())?.require_converged()?.theta_hat
        };
        let theta_d = &theta_hat + &prep.m * x.tr_mul(&(&y - x * &theta_hat)) / n as f64;
        let scale = if config.estimate_sigma {
            scaled_lasso_fit(x, &y, default_lambda_bar(n, p))?.sigma_hat
        } else {
            config.sigma
        };
        Ok(DVector::from_fn(p, |i, _| sqrt_n * (theta_d[i] - theta_star[i]) / (scale * prep.variance[i].sqrt())))
    })?;

    let gamma: Vec<f64> = (0..p)
        .map(|i| excess_kurtosis(&stats.iter().map(|t| t[i]).collect::<Vec<_>>()))
        .collect();
    Ok(KurtosisPoint {
        delta,
        n,
        mean_kurtosis: mean(&gamma),
        se_kurtosis: std_dev(&gamma) / (p as f64).sqrt(),
        refined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calibration_config() -> KurtosisConfig {
        KurtosisConfig {
            p: 30,
            epsilon: 0.0,
            deltas: vec![2.0, 3.0],
            replicates: 400,
            covariance: CovarianceKind::Circulant { r: 0.5 },
            kappa: 0.0,
            ..KurtosisConfig::default()
        }
    }

    #[test]
    fn exact_normal_case_is_calibrated() {
        let sweep = kurtosis_sweep(&calibration_config(), 11).unwrap();
        for pt in &sweep.points {
            assert!(pt.mean_kurtosis.abs() <= 3.0 * pt.se_kurtosis, "{pt:?}");
        }
        assert_eq!(sweep.delta_c, Some(2.0));
    }

    #[test]
    fn deterministic_for_a_seed() {
        let cfg = KurtosisConfig { p: 20, deltas: vec![0.5, 1.0], replicates: 20, ..KurtosisConfig::default() };
        assert_eq!(kurtosis_sweep(&cfg, 3).unwrap(), kurtosis_sweep(&cfg, 3).unwrap());
    }

    #[test]
    fn default_grid_values() {
        let g = default_delta_grid();
        assert_eq!(g.len(), 18);
        assert_eq!(g[1], 0.15);
        assert_eq!(g[17], 0.95);
        assert_eq!(tidy(0.5 + 7.0 * 0.01), 0.57);
    }

    #[test]
    fn refinement_lands_between_grid_points() {
        let cfg = KurtosisConfig {
            p: 20,
            epsilon: 0.0,
            deltas: vec![1.2, 1.5],
            replicates: 10,
            covariance: CovarianceKind::Identity,
            kappa: 0.0,
            ..KurtosisConfig::default()
        };
        let sweep = kurtosis_sweep(&cfg, 5).unwrap();
        let dc = sweep.delta_c.unwrap();
        assert!((1.2..=1.5).contains(&dc));
        if sweep.points.len() > 2 {
            assert!(sweep.points.iter().any(|p| p.refined));
        }
    }

    #[test]
    fn validation() {
        let bad = KurtosisConfig { deltas: vec![0.5, 0.3], ..KurtosisConfig::default() };
        assert!(bad.validate().is_err());
        let bad = KurtosisConfig { replicates: 1, ..KurtosisConfig::default() };
        assert!(bad.validate().is_err());
        let bad = KurtosisConfig { kappa: 0.0, ..KurtosisConfig::default() };
        assert!(bad.validate().is_err());
        assert_eq!(KurtosisConfig::default().sample_size(0.57), 228);
    }
}
