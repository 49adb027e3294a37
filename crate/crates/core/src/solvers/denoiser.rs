use nalgebra::{Cholesky, DMatrix, DVector};

use super::soft_threshold;
use crate::error::{check_dims, Error, Result};

const MAX_SWEEPS: usize = 100_000;

/// `η_Σ(z) = argmin_θ ½(θ − z)ᵀΣ(θ − z) + λ‖θ‖₁`, by coordinate descent.
/// For `Σ = I` this is componentwise soft thresholding at `λ`.
pub fn sigma_denoiser(z: &DVector<f64>, sigma: &DMatrix<f64>, lambda: f64) -> Result<DVector<f64>> {
    let p = z.len();
    check_dims("covariance size", sigma.nrows(), p)?;
    check_dims("covariance size", sigma.ncols(), p)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if Cholesky::new(sigma.clone()).is_none() {
        return Err(Error::NotSpd("Cholesky factorization failed".into()));
    }

    let mut theta = DVector::zeros(p);
    // g = Σ(θ − z)
    let mut g = -(sigma * z);
    let tol = 1e-13 * (1.0 + lambda + g.amax());
    for _ in 0..MAX_SWEEPS {
        for k in 0..p {
            let a = sigma[(k, k)];
            let old = theta[k];
            let new = soft_threshold(a * old - g[k], lambda) / a;
            if new != old {
                g.axpy(new - old, &sigma.column(k), 1.0);
                theta[k] = new;
            }
        }
        let violation = (0..p)
            .map(|k| if theta[k] == 0.0 { g[k].abs() - lambda } else { (g[k] + lambda * theta[k].signum()).abs() })
            .fold(0.0, f64::max);
        if violation <= tol {
            return Ok(theta);
        }
    }
    Err(Error::DidNotConverge { iterations: MAX_SWEEPS, gap: f64::NAN })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_is_soft_thresholding() {
        let z = DVector::from_vec(vec![2.0, -0.3, 0.5, -4.0]);
        let out = sigma_denoiser(&z, &DMatrix::identity(4, 4), 0.5).unwrap();
        for i in 0..4 {
            assert_eq!(out[i], soft_threshold(z[i], 0.5));
        }
    }

    #[test]
    fn large_lambda_gives_zero() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let z = DVector::from_vec(vec![1.0, 2.0]);
        let lam = (&s * &z).amax();
        assert_eq!(sigma_denoiser(&z, &s, lam).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn matches_grid_search() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let z = DVector::from_vec(vec![1.0, -1.0]);
        let lam = 0.1;
        let cost = |a: f64, b: f64| {
            let d = DVector::from_vec(vec![a - z[0], b - z[1]]);
            0.5 * d.dot(&(&s * &d)) + lam * (a.abs() + b.abs())
        };
        // coarse grid, then a fine grid around the coarse winner
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let steps = 400;
        for i in 0..=steps {
            for j in 0..=steps {
                let (a, b) = (-2.0 + 4.0 * i as f64 / steps as f64, -2.0 + 4.0 * j as f64 / steps as f64);
                let c = cost(a, b);
                if c < best.0 {
                    best = (c, a, b);
                }
            }
        }
        let (_, ca, cb) = best;
        for i in 0..=400 {
            for j in 0..=400 {
                let (a, b) = (ca - 0.02 + 0.04 * i as f64 / 400.0, cb - 0.02 + 0.04 * j as f64 / 400.0);
                let c = cost(a, b);
                if c < best.0 {
                    best = (c, a, b);
                }
            }
        }
        let out = sigma_denoiser(&z, &s, lam).unwrap();
        assert!((out[0] - best.1).abs() < 1e-4 && (out[1] - best.2).abs() < 1e-4, "{out:?} vs {best:?}");
    }

    #[test]
    fn rejects_indefinite() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(sigma_denoiser(&DVector::zeros(2), &s, 0.1), Err(Error::NotSpd(_))));
    }

    proptest! {
        #[test]
        fn nonexpansive_in_sigma_norm(
            z1 in proptest::collection::vec(-3.0f64..3.0, 4),
            z2 in proptest::collection::vec(-3.0f64..3.0, 4),
            r in 0.05f64..0.9,
            lam in 0.01f64..1.0,
        ) {
            let s = DMatrix::from_fn(4, 4, |i, j| r.powi(i.abs_diff(j) as i32));
            let (z1, z2) = (DVector::from_vec(z1), DVector::from_vec(z2));
            let d_out = sigma_denoiser(&z1, &s, lam).unwrap() - sigma_denoiser(&z2, &s, lam).unwrap();
            let d_in = &z1 - &z2;
            let lhs = d_out.dot(&(&s * &d_out)).sqrt();
            let rhs = d_in.dot(&(&s * &d_in)).sqrt();
            prop_assert!(lhs <= rhs + 1e-9);
        }
    }
}
