//! Numerical estimate of the compatibility constant
//! `φ²(Σ̂, S) = min |S|·⟨θ, Σ̂θ⟩ / ‖θ_S‖₁²` over the cone
//! `‖θ_{Sᶜ}‖₁ ≤ L‖θ_S‖₁`.
//!
//! Fixing the sign pattern `s` of `θ_S` and normalizing `sᵀθ_S = 1` turns
//! each piece of the cone into a convex quadratic program over a simplex
//! times an `ℓ₁` ball, solved by accelerated projected gradient. Sign
//! patterns are enumerated when there are few of them and sampled
//! otherwise, so the result is an upper bound on the true constant.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, StreamRole};

pub const PROJECTED_GRADIENT_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityEstimate {
    /// Upper-bound estimate of `φ²(Σ̂, S)`.
    pub phi_sq: f64,
    pub patterns_searched: usize,
    /// All sign patterns were searched.
    pub exhaustive: bool,
    /// Minimizer with `‖θ_S‖₁ = 1`.
    pub minimizer: Vec<f64>,
}

/// Euclidean projection onto `{u ≥ 0, Σu = 1}`.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&u| (u - theta).max(0.0)).collect()
}

/// Euclidean projection onto `{‖v‖₁ ≤ radius}`.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return v.to_vec();
    }
    let abs: Vec<f64> = v.iter().map(|x| x.abs() / radius).collect();
    let w = project_simplex(&abs);
    v.iter().zip(w).map(|(x, u)| x.signum() * u * radius).collect()
}

pub fn compatibility_constant_estimate(
    sigma_hat: &DMatrix<f64>,
    support: &[usize],
    l: f64,
    restarts: usize,
) -> Result<CompatibilityEstimate> {
    let p = sigma_hat.nrows();
    if !sigma_hat.is_square() {
        return Err(Error::DimensionMismatch("Σ̂ must be square".into()));
    }
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if let Some(&i) = support.iter().find(|&&i| i >= p) {
        return Err(Error::InvalidParameter(format!("support index {i} out of range for p = {p}")));
    }
    let mut sorted = support.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != support.len() {
        return Err(Error::InvalidParameter("support contains duplicates".into()));
    }
    if !(l > 0.0) {
        return Err(Error::InvalidParameter(format!("cone constant L must be positive, got {l}")));
    }
    if restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be positive".into()));
    }
    let s = sorted.len();
    let complement: Vec<usize> = (0..p).filter(|i| sorted.binary_search(i).is_err()).collect();

    // θ and −θ give the same value, so the first sign is fixed to +1.
    let free_bits = s - 1;
    let exhaustive = free_bits < 63 && (1u64 << free_bits) as u128 <= restarts as u128;
    let patterns: Vec<Vec<f64>> = if exhaustive {
        (0..1u64 << free_bits)
            .map(|mask| (0..s).map(|j| if j > 0 && (mask >> (j - 1)) & 1 == 1 { -1.0 } else { 1.0 }).collect())
            .collect()
    } else {
        let mut rng = stream(0, 0, StreamRole::Restart);
        (0..restarts)
            .map(|_| (0..s).map(|j| if j > 0 && rng.random::<bool>() { -1.0 } else { 1.0 }).collect())
            .collect()
    };

    // Gershgorin bound on the largest eigenvalue of Σ̂.
    let gersh = sigma_hat.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let lipschitz = 2.0 * s as f64 * gersh.max(f64::MIN_POSITIVE);

    let mut best: Option<(f64, DVector<f64>)> = None;
    for signs in &patterns {
        let (value, theta) = solve_pattern(sigma_hat, &sorted, &complement, signs, l, lipschitz);
        if best.as_ref().map_or(true, |(b, _)| value < *b) {
            best = Some((value, theta));
        }
    }
    let (phi_sq, minimizer) = best.expect("at least one pattern");
    Ok(CompatibilityEstimate {
        phi_sq: phi_sq.max(0.0),
        patterns_searched: patterns.len(),
        exhaustive,
        minimizer: minimizer.iter().copied().collect(),
    })
}

fn solve_pattern(
    sigma_hat: &DMatrix<f64>,
    support: &[usize],
    complement: &[usize],
    signs: &[f64],
    l: f64,
    lipschitz: f64,
) -> (f64, DVector<f64>) {
    let p = sigma_hat.nrows();
    let s = support.len() as f64;
    let objective = |t: &DVector<f64>| s * t.dot(&(sigma_hat * t));
    let project = |v: &DVector<f64>| {
        let mut out = DVector::zeros(p);
        let u: Vec<f64> = support.iter().zip(signs).map(|(&i, &sg)| sg * v[i]).collect();
        for ((&i, &sg), ui) in support.iter().zip(signs).zip(project_simplex(&u)) {
            out[i] = sg * ui;
        }
        let c: Vec<f64> = complement.iter().map(|&i| v[i]).collect();
        for (&i, ci) in complement.iter().zip(project_l1_ball(&c, l)) {
            out[i] = ci;
        }
        out
    };

    let mut theta = DVector::zeros(p);
    for (&i, &sg) in support.iter().zip(signs) {
        theta[i] = sg / s;
    }
    let mut best = (objective(&theta), theta.clone());
    let mut momentum = theta.clone();
    let mut t_k: f64 = 1.0;
    for _ in 0..PROJECTED_GRADIENT_ITERATIONS {
        let grad = sigma_hat * &momentum * (2.0 * s);
        let next = project(&(&momentum - grad / lipschitz));
        let t_next = (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt()) / 2.0;
        momentum = &next + (&next - &theta) * ((t_k - 1.0) / t_next);
        theta = next;
        t_k = t_next;
        let f = objective(&theta);
        if f < best.0 {
            best = (f, theta.clone());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_gives_one() {
        for support in [vec![0], vec![1, 3], vec![0, 2, 4]] {
            let est = compatibility_constant_estimate(&DMatrix::identity(5, 5), &support, 3.0, 200).unwrap();
            assert!((est.phi_sq - 1.0).abs() < 1e-6, "{support:?}: {}", est.phi_sq);
            assert!(est.exhaustive);
        }
    }

    /// `θ = (1, t)`, `t ∈ [−L, L]`: `f(t) = 1 + 2ρt + t²`.
    fn grid_oracle(rho: f64, l: f64) -> f64 {
        (0..=600_000)
            .map(|k| -l + 2.0 * l * k as f64 / 600_000.0)
            .map(|t| 1.0 + 2.0 * rho * t + t * t)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn two_dimensional_grid_oracle() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let est = compatibility_constant_estimate(&a, &[0], 3.0, 200).unwrap();
        let oracle = grid_oracle(0.9, 3.0);
        assert!((oracle - 0.19).abs() < 1e-9);
        assert!((est.phi_sq - oracle).abs() <= 0.02 * oracle);
        // Cone constraint binds when L < ρ.
        let est = compatibility_constant_estimate(&a, &[0], 0.5, 200).unwrap();
        assert!((est.phi_sq - grid_oracle(0.9, 0.5)).abs() <= 0.02 * grid_oracle(0.9, 0.5));
    }

    #[test]
    fn scales_with_sigma() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.2, 0.5, 1.0, 0.4, 0.2, 0.4, 1.0]);
        let base = compatibility_constant_estimate(&a, &[0, 2], 3.0, 50).unwrap().phi_sq;
        let scaled = compatibility_constant_estimate(&(&a * 2.5), &[0, 2], 3.0, 50).unwrap().phi_sq;
        assert!((scaled - 2.5 * base).abs() < 1e-6 * scaled);
    }

    #[test]
    fn empty_support_rejected() {
        assert!(matches!(
            compatibility_constant_estimate(&DMatrix::identity(2, 2), &[], 3.0, 10),
            Err(Error::EmptySupport)
        ));
    }

    proptest! {
        #[test]
        fn simplex_projection_is_feasible_and_optimal(v in proptest::collection::vec(-3.0f64..3.0, 1..8)) {
            let u = project_simplex(&v);
            prop_assert!(u.iter().all(|&x| x >= 0.0));
            prop_assert!((u.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // Optimality: v − u is constant on the support and smaller off it.
            let shift: Vec<f64> = v.iter().zip(&u).filter(|(_, &ui)| ui > 0.0).map(|(a, b)| a - b).collect();
            for d in &shift {
                prop_assert!((d - shift[0]).abs() < 1e-12);
            }
            for (a, b) in v.iter().zip(&u) {
                if *b == 0.0 {
                    prop_assert!(*a <= shift[0] + 1e-12);
                }
            }
        }

        #[test]
        fn l1_projection_lands_in_ball(v in proptest::collection::vec(-3.0f64..3.0, 1..8), r in 0.1f64..4.0) {
            let u = project_l1_ball(&v, r);
            prop_assert!(u.iter().map(|x| x.abs()).sum::<f64>() <= r + 1e-12);
        }
    }
}
