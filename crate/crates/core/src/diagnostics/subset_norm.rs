//! `ρ(A, k)`: the largest `ℓ∞` operator norm of `(A_{T,T})⁻¹` over index
//! sets with `|T| ≤ k`.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Enumeration is used while the number of subsets stays at or below this.
pub const MAX_ENUMERATED_SUBSETS: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetNormMethod {
    ExactEnumeration,
    /// Greedy growth from every anchor index; a lower bound on `ρ`.
    GreedyLowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetNormReport {
    pub k: usize,
    pub rho: f64,
    pub method: SubsetNormMethod,
    /// A maximizing index set (0-based).
    pub argmax: Vec<usize>,
}

/// Max row `ℓ₁` norm of `(A_{T,T})⁻¹`.
pub fn principal_inverse_norm(a: &DMatrix<f64>, subset: &[usize]) -> Result<f64> {
    let sub = a.select_rows(subset).select_columns(subset);
    let inv = Cholesky::new(sub)
        .ok_or_else(|| Error::NotSpd(format!("principal submatrix on {subset:?} is not positive definite")))?
        .inverse();
    Ok(inf_norm(&inv))
}

/// Max row `ℓ₁` norm.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// Number of nonempty subsets of `[p]` with at most `k` elements.
pub fn subset_count(p: usize, k: usize) -> u128 {
    let mut total: u128 = 0;
    for j in 1..=k.min(p) {
        total = total.saturating_add(binomial(p, j));
        if total > u64::MAX as u128 {
            break;
        }
    }
    total
}

fn check_spd(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!("matrix is {}x{}, expected square", a.nrows(), a.ncols())));
    }
    let p = a.nrows();
    for i in 0..p {
        for j in 0..i {
            let scale = a[(i, j)].abs().max(a[(j, i)].abs()).max(1.0);
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::NotSpd(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    if Cholesky::new(a.clone()).is_none() {
        return Err(Error::NotSpd("Cholesky factorization failed".into()));
    }
    Ok(())
}

pub fn rho_subset_norm(a: &DMatrix<f64>, k: usize) -> Result<SubsetNormReport> {
    check_spd(a)?;
    let p = a.nrows();
    if k == 0 || k > p {
        return Err(Error::InvalidParameter(format!("k must satisfy 1 <= k <= p = {p}, got {k}")));
    }
    if subset_count(p, k) <= MAX_ENUMERATED_SUBSETS {
        exact(a, k)
    } else {
        greedy(a, k)
    }
}

fn exact(a: &DMatrix<f64>, k: usize) -> Result<SubsetNormReport> {
    let p = a.nrows();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for size in 1..=k {
        // Lexicographic walk over size-element combinations.
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let v = principal_inverse_norm(a, &idx)?;
            if v > best.0 {
                best = (v, idx.clone());
            }
            let mut i = size;
            while i > 0 && idx[i - 1] == p - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    Ok(SubsetNormReport { k, rho: best.0, method: SubsetNormMethod::ExactEnumeration, argmax: best.1 })
}

fn greedy(a: &DMatrix<f64>, k: usize) -> Result<SubsetNormReport> {
    let p = a.nrows();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for anchor in 0..p {
        let mut set = vec![anchor];
        let mut value = principal_inverse_norm(a, &set)?;
        if value > best.0 {
            best = (value, set.clone());
        }
        while set.len() < k {
            let mut step: Option<(f64, usize)> = None;
            for j in 0..p {
                if set.contains(&j) {
                    continue;
                }
                let mut trial = set.clone();
                trial.push(j);
                let v = principal_inverse_norm(a, &trial)?;
                if step.map_or(true, |(sv, _)| v > sv) {
                    step = Some((v, j));
                }
            }
            let (v, j) = step.expect("k <= p leaves a candidate");
            set.push(j);
            value = v;
            if value > best.0 {
                let mut sorted = set.clone();
                sorted.sort_unstable();
                best = (value, sorted);
            }
        }
    }
    Ok(SubsetNormReport { k, rho: best.0, method: SubsetNormMethod::GreedyLowerBound, argmax: best.1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{build_covariance, CovarianceModel};

    fn circulant(r: f64, p: usize) -> DMatrix<f64> {
        build_covariance(&CovarianceModel::circulant(r, p)).unwrap()
    }

    #[test]
    fn identity_gives_one() {
        for k in 1..=5 {
            let rep = rho_subset_norm(&DMatrix::identity(5, 5), k).unwrap();
            assert!((rep.rho - 1.0).abs() < 1e-15);
            assert_eq!(rep.method, SubsetNormMethod::ExactEnumeration);
        }
    }

    #[test]
    fn k_one_is_inverse_diagonal() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 0.5, 0.0, 0.1, 0.0, 1.0]);
        let rep = rho_subset_norm(&a, 1).unwrap();
        assert!((rep.rho - 2.0).abs() < 1e-15);
        assert_eq!(rep.argmax, vec![1]);
    }

    #[test]
    fn full_size_is_inverse_norm() {
        let a = circulant(0.6, 6);
        let rep = rho_subset_norm(&a, 6).unwrap();
        let inv = a.clone().try_inverse().unwrap();
        assert!((rep.rho - inf_norm(&inv)).abs() < 1e-10);
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(subset_count(6, 3), 41);
        assert_eq!(subset_count(4, 4), 15);
        assert_eq!(binomial(10, 3), 120);
    }

    #[test]
    fn greedy_is_a_lower_bound() {
        let a = circulant(0.8, 7);
        for k in 1..=7 {
            let e = exact(&a, k).unwrap();
            let g = greedy(&a, k).unwrap();
            assert!(g.rho <= e.rho + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(rho_subset_norm(&a, 1), Err(Error::NotSpd(_))));
        assert!(matches!(rho_subset_norm(&DMatrix::identity(3, 3), 0), Err(Error::InvalidParameter(_))));
        assert!(matches!(rho_subset_norm(&DMatrix::identity(3, 3), 4), Err(Error::InvalidParameter(_))));
    }
}
