use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::lasso::{coordinate_descent, LassoOptions};
use crate::error::{Error, Result};

/// Node-wise Lasso estimate of the precision matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    /// Row `i` holds `γ̂_i` over the columns `j != i` in increasing order.
    pub gamma: DMatrix<f64>,
    /// `τ̂_i² = (x_i − X_{∼i}γ̂_i)ᵀ x_i / n`.
    pub tau_sq: DVector<f64>,
    /// Unit diagonal, `−γ̂_{i,j}` off the diagonal.
    pub c_hat: DMatrix<f64>,
    /// `T̂⁻² Ĉ`.
    pub m: DMatrix<f64>,
    pub lambda_tilde: f64,
}

/// `K √(log p / n)`.
pub fn nodewise_lambda(k: f64, n: usize, p: usize) -> f64 {
    k * ((p as f64).ln() / n as f64).sqrt()
}

/// Regress every column on all the others with penalty `lambda_tilde` and
/// assemble `M = T̂⁻² Ĉ`. The `p` regressions run in parallel; each is
/// deterministic, so the result does not depend on scheduling.
pub fn nodewise_lasso(x: &DMatrix<f64>, lambda_tilde: f64, opts: &LassoOptions) -> Result<PrecisionEstimate> {
    let (n, p) = x.shape();
    if n < 2 {
        return Err(Error::InvalidParameter("node-wise regression needs n >= 2".into()));
    }
    if !(lambda_tilde > 0.0) || !lambda_tilde.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda_tilde must be positive, got {lambda_tilde}")));
    }
    let opts = LassoOptions { warm_start: None, ..opts.clone() };

    let rows: Vec<Result<(Vec<f64>, f64)>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let cols: Vec<usize> = (0..p).filter(|&j| j != i).collect();
            let target = x.column(i);
            let target = target.as_slice();
            let out = coordinate_descent(x, &cols, target, lambda_tilde, &opts, None);
            if !out.converged {
                return Err(Error::DidNotConverge { iterations: out.iterations, gap: out.gap });
            }
            let tau_sq = out.residual.iter().zip(target).map(|(r, t)| r * t).sum::<f64>() / n as f64;
            if !(tau_sq > 0.0) {
                return Err(Error::TauNonPositive(i));
            }
            Ok((out.beta, tau_sq))
        })
        .collect();

    let mut gamma = DMatrix::zeros(p, p.saturating_sub(1));
    let mut tau_sq = DVector::zeros(p);
    let mut c_hat = DMatrix::identity(p, p);
    let mut m = DMatrix::zeros(p, p);
    for (i, row) in rows.into_iter().enumerate() {
        let (beta, t) = row?;
        tau_sq[i] = t;
        m[(i, i)] = 1.0 / t;
        for (k, g) in beta.into_iter().enumerate() {
            let j = if k < i { k } else { k + 1 };
            gamma[(i, k)] = g;
            c_hat[(i, j)] = -g;
            m[(i, j)] = -g / t;
        }
    }
    Ok(PrecisionEstimate { gamma, tau_sq, c_hat, m, lambda_tilde })
}
