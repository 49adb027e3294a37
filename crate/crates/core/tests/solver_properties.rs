//! Property checks of the Lasso solver on random small problems.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sparse_debias::{lasso_fit, LassoOptions};

fn objective(x: &DMatrix<f64>, y: &DVector<f64>, t: &DVector<f64>, lambda: f64) -> f64 {
    (y - x * t).norm_squared() / (2.0 * x.nrows() as f64) + lambda * t.iter().map(|v| v.abs()).sum::<f64>()
}

fn problem() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>, f64)> {
    (2usize..12, 1usize..10).prop_flat_map(|(n, p)| {
        (
            proptest::collection::vec(-2.0f64..2.0, n * p),
            proptest::collection::vec(-3.0f64..3.0, n),
            0.01f64..1.0,
        )
            .prop_map(move |(xs, ys, frac)| {
                let x = DMatrix::from_row_slice(n, p, &xs);
                let y = DVector::from_vec(ys);
                let lmax = (x.tr_mul(&y).amax() / n as f64).max(1e-3);
                (x, y, frac * lmax)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn stationarity_holds((x, y, lambda) in problem()) {
        let fit = lasso_fit(&x, &y, lambda, &LassoOptions::default()).unwrap();
        prop_assert!(fit.converged);
        let g = x.tr_mul(&(&y - &x * &fit.theta_hat)) / x.nrows() as f64;
        prop_assert!(g.amax() <= lambda * (1.0 + 1e-6));
        for (t, gi) in fit.theta_hat.iter().zip(g.iter()) {
            if *t != 0.0 {
                prop_assert!(t.signum() * gi >= lambda * (1.0 - 1e-6));
            }
        }
    }

    #[test]
    fn no_coordinate_move_improves((x, y, lambda) in problem(), j in 0usize..10, step in -0.1f64..0.1) {
        let fit = lasso_fit(&x, &y, lambda, &LassoOptions::default()).unwrap();
        let j = j % x.ncols();
        let mut moved = fit.theta_hat.clone();
        moved[j] += step;
        prop_assert!(objective(&x, &y, &moved, lambda) >= objective(&x, &y, &fit.theta_hat, lambda) - 1e-10);
    }

    #[test]
    fn above_lambda_max_the_fit_is_zero((x, y, _l) in problem(), scale in 1.0f64..3.0) {
        let lmax = x.tr_mul(&y).amax() / x.nrows() as f64;
        prop_assume!(lmax > 0.0);
        let fit = lasso_fit(&x, &y, lmax * scale * (1.0 + 1e-9), &LassoOptions::default()).unwrap();
        prop_assert!(fit.support.is_empty());
    }
}
