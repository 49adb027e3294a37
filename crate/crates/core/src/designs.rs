//! Population covariance models, Gaussian designs and simulated responses.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::rng::{stream, StreamRole};

/// Largest admissible population variance: every `Σ_ii <= 1`.
const DIAGONAL_LIMIT: f64 = 1.0 + 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceKind {
    Identity,
    /// `Σ_ij = r^|i-j|`.
    Circulant { r: f64 },
    /// `count` copies of `block` along the diagonal.
    BlockDiagonal { block: Vec<Vec<f64>>, count: usize },
    Dense { matrix: Vec<Vec<f64>> },
}

/// Unknown keys are rejected by the flattened `kind` payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    #[serde(flatten)]
    pub kind: CovarianceKind,
    pub p: usize,
}

impl CovarianceModel {
    pub fn identity(p: usize) -> Self {
        Self { kind: CovarianceKind::Identity, p }
    }

    pub fn circulant(r: f64, p: usize) -> Self {
        Self { kind: CovarianceKind::Circulant { r }, p }
    }

    pub fn dense(matrix: &DMatrix<f64>) -> Self {
        let rows = matrix.row_iter().map(|r| r.iter().copied().collect()).collect();
        Self { kind: CovarianceKind::Dense { matrix: rows }, p: matrix.nrows() }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, CovarianceKind::Identity)
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let k = rows.len();
    if k == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    for (i, row) in rows.iter().enumerate() {
        check_dims(&format!("row {i} length"), row.len(), k)?;
    }
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

fn validate_spd(m: &DMatrix<f64>) -> Result<()> {
    let p = m.nrows();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotSpd("non-finite entry".into()));
    }
    for i in 0..p {
        for j in 0..i {
            let scale = m[(i, j)].abs().max(m[(j, i)].abs()).max(1.0);
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::NotSpd(format!("asymmetric at ({i}, {j})")));
            }
        }
    }
    if Cholesky::new(m.clone()).is_none() {
        return Err(Error::NotSpd("Cholesky factorization failed".into()));
    }
    Ok(())
}

fn validate_diagonal(m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        if m[(i, i)] > DIAGONAL_LIMIT {
            return Err(Error::DiagonalTooLarge { index: i, value: m[(i, i)] });
        }
    }
    Ok(())
}

/// Realize the population covariance `Σ` of a model.
pub fn build_covariance(model: &CovarianceModel) -> Result<DMatrix<f64>> {
    let p = model.p;
    if p == 0 {
        return Err(Error::InvalidParameter("p must be positive".into()));
    }
    match &model.kind {
        CovarianceKind::Identity => Ok(DMatrix::identity(p, p)),
        CovarianceKind::Circulant { r } => {
            if !(*r > 0.0 && *r < 1.0) {
                return Err(Error::InvalidParameter(format!("circulant r must lie in (0, 1), got {r}")));
            }
            Ok(DMatrix::from_fn(p, p, |i, j| r.powi(i.abs_diff(j) as i32)))
        }
        CovarianceKind::BlockDiagonal { block, count } => {
            let b = rows_to_matrix(block)?;
            let k = b.nrows();
            if *count == 0 || k * count != p {
                return Err(Error::DimensionMismatch(format!(
                    "{count} blocks of size {k} do not make p = {p}"
                )));
            }
            validate_spd(&b)?;
            validate_diagonal(&b)?;
            let mut sigma = DMatrix::zeros(p, p);
            for c in 0..*count {
                sigma.view_mut((c * k, c * k), (k, k)).copy_from(&b);
            }
            Ok(sigma)
        }
        CovarianceKind::Dense { matrix } => {
            let m = rows_to_matrix(matrix)?;
            check_dims("dense covariance size", m.nrows(), p)?;
            validate_spd(&m)?;
            validate_diagonal(&m)?;
            Ok(m)
        }
    }
}

/// `Ω = Σ⁻¹` through the Cholesky factor, symmetrized.
pub fn precision_matrix(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !sigma.is_square() {
        return Err(Error::DimensionMismatch("covariance must be square".into()));
    }
    let chol = Cholesky::new(sigma.clone())
        .ok_or_else(|| Error::NotSpd("Cholesky factorization failed".into()))?;
    let inv = chol.inverse();
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Draws rows `x ~ N(0, Σ)` as `L z` with `L` the lower Cholesky factor.
///
/// Only the exactly nonzero entries of `L` are kept, so the identity and
/// other structured models sample in time proportional to their fill.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    p: usize,
    factor_rows: Vec<Vec<(usize, f64)>>,
}

impl GaussianSampler {
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::DimensionMismatch("covariance must be square".into()));
        }
        let chol = Cholesky::new(sigma.clone())
            .ok_or_else(|| Error::NotSpd("Cholesky factorization failed".into()))?;
        let l = chol.l();
        let p = sigma.nrows();
        let factor_rows = (0..p)
            .map(|j| (0..=j).filter(|&k| l[(j, k)] != 0.0).map(|k| (k, l[(j, k)])).collect())
            .collect();
        Ok(Self { p, factor_rows })
    }

    pub fn from_model(model: &CovarianceModel) -> Result<Self> {
        Self::new(&build_covariance(model)?)
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// An `n × p` design with i.i.d. rows. Normals are consumed row by row.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let p = self.p;
        let mut x = DMatrix::zeros(n, p);
        let mut z = vec![0.0; p];
        for row in 0..n {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            for (j, entries) in self.factor_rows.iter().enumerate() {
                x[(row, j)] = entries.iter().map(|&(k, l)| l * z[k]).sum();
            }
        }
        x
    }
}

/// Sample an `n × p` Gaussian design with covariance `sigma`, deterministic
/// in `seed`.
pub fn sample_design(sigma: &DMatrix<f64>, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let sampler = GaussianSampler::new(sigma)?;
    Ok(sampler.sample(n, &mut stream(seed, 0, StreamRole::Design)))
}

/// `w ~ N(0, σ² I)` and `y = X θ* + w`; both are returned.
pub fn sample_response<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    theta_star: &DVector<f64>,
    sigma: f64,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dims("theta_star length", theta_star.len(), x.ncols())?;
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be nonnegative, got {sigma}")));
    }
    let w = DVector::from_fn(x.nrows(), |_, _| {
        let g: f64 = rng.sample(StandardNormal);
        sigma * g
    });
    let y = x * theta_star + &w;
    Ok((y, w))
}

/// `Σ̂ = XᵀX / n`, exactly symmetric.
pub fn empirical_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let mut s = x.tr_mul(x) / n;
    let p = s.nrows();
    for i in 0..p {
        for j in 0..i {
            s[(j, i)] = s[(i, j)];
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    pub theta: DVector<f64>,
    /// Sorted support indices.
    pub support: Vec<usize>,
}

impl SparseSignal {
    pub fn s0(&self) -> usize {
        self.support.len()
    }
}

/// `s0` distinct coordinates chosen uniformly without replacement, each set
/// to `amplitude`.
pub fn make_sparse_signal<R: Rng + ?Sized>(
    p: usize,
    s0: usize,
    amplitude: f64,
    rng: &mut R,
) -> Result<SparseSignal> {
    if s0 > p {
        return Err(Error::BadSparsity(format!("s0 = {s0} exceeds p = {p}")));
    }
    let mut support = rand::seq::index::sample(rng, p, s0).into_vec();
    support.sort_unstable();
    let mut theta = DVector::zeros(p);
    for &i in &support {
        theta[i] = amplitude;
    }
    Ok(SparseSignal { theta, support })
}

/// One regression instance. Ground-truth fields are present for simulated
/// data only.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub theta_star: Option<DVector<f64>>,
    pub w: Option<DVector<f64>>,
    pub sigma: Option<f64>,
    pub seed: u64,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, seed: u64) -> Result<Self> {
        let ds = Self { x, y, theta_star: None, w: None, sigma: None, seed };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n() == 0 || self.p() == 0 {
            return Err(Error::DimensionMismatch("dataset must have n >= 1 and p >= 1".into()));
        }
        check_dims("response length", self.y.len(), self.n())?;
        if self.x.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("dataset contains NaN or infinite values".into()));
        }
        if let Some(t) = &self.theta_star {
            check_dims("theta_star length", t.len(), self.p())?;
        }
        if let Some(w) = &self.w {
            check_dims("noise length", w.len(), self.n())?;
        }
        Ok(())
    }
}

/// Parameters of a simulated instance (design model plus sparse signal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    pub covariance: CovarianceModel,
    pub n: usize,
    pub s0: usize,
    pub amplitude: f64,
    pub sigma: f64,
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        if self.s0 > self.covariance.p {
            return Err(Error::BadSparsity(format!(
                "s0 = {} exceeds p = {}",
                self.s0, self.covariance.p
            )));
        }
        if !(self.sigma >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::InvalidParameter("sigma must be >= 0 and amplitude finite".into()));
        }
        Ok(())
    }

    /// Draw design, signal and noise from independent streams of `seed`,
    /// using `replicate` to select the stream family.
    pub fn simulate_with(&self, sampler: &GaussianSampler, seed: u64, replicate: u64) -> Result<Dataset> {
        self.validate()?;
        check_dims("sampler dimension", sampler.dim(), self.covariance.p)?;
        let x = sampler.sample(self.n, &mut stream(seed, replicate, StreamRole::Design));
        let signal = make_sparse_signal(
            self.covariance.p,
            self.s0,
            self.amplitude,
            &mut stream(seed, replicate, StreamRole::Signal),
        )?;
        let (y, w) = sample_response(&x, &signal.theta, self.sigma, &mut stream(seed, replicate, StreamRole::Noise))?;
        Ok(Dataset { x, y, theta_star: Some(signal.theta), w: Some(w), sigma: Some(self.sigma), seed })
    }

    pub fn simulate(&self, seed: u64) -> Result<Dataset> {
        self.validate()?;
        let sampler = GaussianSampler::from_model(&self.covariance)?;
        self.simulate_with(&sampler, seed, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    #[test]
    fn identity_and_circulant() {
        let id = build_covariance(&CovarianceModel::identity(3)).unwrap();
        assert_eq!(id, DMatrix::identity(3, 3));

        let c = build_covariance(&CovarianceModel::circulant(0.8, 3)).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.8, 0.64, 0.8, 1.0, 0.8, 0.64, 0.8, 1.0]);
        assert!(max_abs(&(c - expected)) < 1e-15);

        let c = build_covariance(&CovarianceModel::circulant(0.5, 4)).unwrap();
        assert_eq!(c[(0, 3)], 0.125);
    }

    #[test]
    fn bad_models_are_rejected() {
        assert!(matches!(
            build_covariance(&CovarianceModel::circulant(1.0, 3)),
            Err(Error::InvalidParameter(_))
        ));
        let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(build_covariance(&CovarianceModel::dense(&not_pd)), Err(Error::NotSpd(_))));
        let big_diag = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            build_covariance(&CovarianceModel::dense(&big_diag)),
            Err(Error::DiagonalTooLarge { index: 0, .. })
        ));
    }

    #[test]
    fn block_diagonal_layout() {
        let model = CovarianceModel {
            kind: CovarianceKind::BlockDiagonal { block: vec![vec![1.0, 0.5], vec![0.5, 1.0]], count: 2 },
            p: 4,
        };
        let s = build_covariance(&model).unwrap();
        assert_eq!(s[(0, 1)], 0.5);
        assert_eq!(s[(2, 3)], 0.5);
        assert_eq!(s[(1, 2)], 0.0);
    }

    #[test]
    fn precision_closed_forms() {
        let omega = precision_matrix(&DMatrix::identity(4, 4)).unwrap();
        assert!(max_abs(&(omega - DMatrix::identity(4, 4))) < 1e-15);

        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]) / 0.75;
        assert!(max_abs(&(precision_matrix(&s).unwrap() - expected)) < 1e-12);
    }

    #[test]
    fn circulant_precision_is_tridiagonal() {
        for p in [3, 8, 50] {
            let s = build_covariance(&CovarianceModel::circulant(0.8, p)).unwrap();
            let omega = precision_matrix(&s).unwrap();
            assert!(max_abs(&(&s * &omega - DMatrix::identity(p, p))) <= 1e-8);
            for i in 0..p {
                let off = (0..p).filter(|&j| j != i && omega[(i, j)].abs() > 1e-10).count();
                assert!(off <= 2, "row {i} has {off} off-diagonal nonzeros");
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = build_covariance(&CovarianceModel::circulant(0.8, 5)).unwrap();
        let a = sample_design(&s, 20, 11).unwrap();
        let b = sample_design(&s, 20, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_design(&s, 20, 12).unwrap());
    }

    #[test]
    fn identity_design_has_unit_sample_covariance() {
        let x = sample_design(&DMatrix::identity(2, 2), 10_000, 3).unwrap();
        let s = empirical_covariance(&x);
        assert!(max_abs(&(s - DMatrix::identity(2, 2))) < 0.05);
    }

    #[test]
    fn circulant_design_correlation() {
        let s = build_covariance(&CovarianceModel::circulant(0.8, 3)).unwrap();
        let x = sample_design(&s, 10_000, 5).unwrap();
        let c = empirical_covariance(&x);
        let corr = c[(0, 1)] / (c[(0, 0)] * c[(1, 1)]).sqrt();
        assert!((corr - 0.8).abs() < 0.03, "corr = {corr}");
    }

    #[test]
    fn response_noise_laws() {
        let x = DMatrix::from_fn(4, 2, |i, j| (i + j) as f64);
        let theta = DVector::from_vec(vec![1.0, -2.0]);
        let (y, w) = sample_response(&x, &theta, 0.0, &mut stream(1, 0, StreamRole::Noise)).unwrap();
        assert_eq!(w, DVector::zeros(4));
        assert_eq!(y, &x * &theta);

        let x = DMatrix::zeros(10_000, 3);
        let (y, _) = sample_response(&x, &DVector::zeros(3), 1.0, &mut stream(2, 0, StreamRole::Noise)).unwrap();
        let ys: Vec<f64> = y.iter().copied().collect();
        assert!(crate::stats::mean(&ys).abs() < 0.05);
        assert!((crate::stats::variance(&ys) - 1.0).abs() < 0.05);

        let (_, w1) = sample_response(&x, &DVector::zeros(3), 1.0, &mut stream(9, 0, StreamRole::Noise)).unwrap();
        let (_, w2) = sample_response(&x, &DVector::zeros(3), 1.0, &mut stream(9, 0, StreamRole::Noise)).unwrap();
        assert_eq!(w1, w2);

        assert!(matches!(
            sample_response(&x, &DVector::zeros(2), 1.0, &mut stream(2, 0, StreamRole::Noise)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn empirical_covariance_matches_triple_loop() {
        let x = sample_design(&DMatrix::identity(3, 3), 5, 17).unwrap();
        let s = empirical_covariance(&x);
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for r in 0..5 {
                    acc += x[(r, i)] * x[(r, j)];
                }
                assert!((s[(i, j)] - acc / 5.0).abs() < 1e-12);
            }
        }
        let eye = DMatrix::<f64>::identity(4, 4);
        assert_eq!(empirical_covariance(&eye), eye / 4.0);
        let row = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, -1.0]);
        assert_eq!(empirical_covariance(&row), row.transpose() * &row);
    }

    #[test]
    fn sparse_signal_shapes() {
        let mut rng = stream(0, 0, StreamRole::Signal);
        assert_eq!(make_sparse_signal(5, 0, 1.0, &mut rng).unwrap().theta, DVector::zeros(5));
        let full = make_sparse_signal(4, 4, 0.3, &mut rng).unwrap();
        assert!(full.theta.iter().all(|&v| v == 0.3));
        let full = make_sparse_signal(3000, 600, 0.15, &mut rng).unwrap();
        assert_eq!(full.s0(), 600);
        assert_eq!(full.theta.iter().filter(|&&v| v == 0.15).count(), 600);
        assert!(matches!(make_sparse_signal(3, 4, 1.0, &mut rng), Err(Error::BadSparsity(_))));
    }

    #[test]
    fn simulated_dataset_is_exact_linear_model() {
        let spec = SimulationSpec {
            covariance: CovarianceModel::circulant(0.8, 30),
            n: 60,
            s0: 3,
            amplitude: 0.15,
            sigma: 1.0,
        };
        let ds = spec.simulate(7).unwrap();
        let recomposed = &ds.x * ds.theta_star.as_ref().unwrap() + ds.w.as_ref().unwrap();
        assert_eq!(recomposed, ds.y);
    }

    #[test]
    fn covariance_model_json() {
        let m = CovarianceModel::circulant(0.8, 6);
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(text, r#"{"kind":"circulant","r":0.8,"p":6}"#);
        assert_eq!(serde_json::from_str::<CovarianceModel>(&text).unwrap(), m);
        assert!(serde_json::from_str::<CovarianceModel>(r#"{"kind":"circulant","r":0.8,"p":6,"q":1}"#).is_err());
        assert!(serde_json::from_str::<CovarianceModel>(r#"{"kind":"identity","p":3}"#).unwrap().is_identity());
    }
}
