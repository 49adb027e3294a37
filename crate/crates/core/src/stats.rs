//! Small statistical helpers: the standard normal law, sample moments,
//! Kolmogorov distances and Gauss-Hermite quadrature.

use nalgebra::{DMatrix, SymmetricEigen};

const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Upper tail `1 - Φ(x)` (Hart's rational approximation, absolute error
/// around 1e-14 over the whole line).
pub fn normal_sf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    let tail = if ax > 37.0 {
        0.0
    } else {
        let e = (-0.5 * ax * ax).exp();
        if ax < 7.071_067_811_865_47 {
            let mut num = 3.526_249_659_989_11e-2 * ax + 0.700_383_064_443_688;
            num = num * ax + 6.373_962_203_531_65;
            num = num * ax + 33.912_866_078_383;
            num = num * ax + 112.079_291_497_871;
            num = num * ax + 221.213_596_169_931;
            num = num * ax + 220.206_867_912_376;
            let mut den = 8.838_834_764_831_84e-2 * ax + 1.755_667_163_182_64;
            den = den * ax + 16.064_177_579_207;
            den = den * ax + 86.780_732_202_946_1;
            den = den * ax + 296.564_248_779_674;
            den = den * ax + 637.333_633_378_831;
            den = den * ax + 793.826_512_519_948;
            den = den * ax + 440.413_735_824_752;
            e * num / den
        } else {
            let mut b = ax + 0.65;
            b = ax + 4.0 / b;
            b = ax + 3.0 / b;
            b = ax + 2.0 / b;
            b = ax + 1.0 / b;
            e / b / SQRT_2PI
        }
    };
    if x > 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// Standard normal distribution function Φ.
pub fn normal_cdf(x: f64) -> f64 {
    1.0 - normal_sf(x)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Φ⁻¹ via Acklam's rational approximation followed by one Halley step.
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement; measure the error on the tail closest to p.
    let e = if p < 0.5 {
        normal_cdf(x) - p
    } else {
        (1.0 - p) - normal_sf(x)
    };
    let u = e * SQRT_2PI * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with denominator `n - 1`.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Plain sample excess kurtosis `m4 / m2^2 - 3` with central moments taken
/// over `n` (no small-sample correction).
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in xs {
        let d2 = (x - m).powi(2);
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n;
    m4 /= n;
    m4 / (m2 * m2) - 3.0
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Kolmogorov distance between the empirical law of `xs` and a continuous
/// distribution function.
pub fn ks_distance(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub fn ks_distance_uniform(xs: &[f64]) -> f64 {
    ks_distance(xs, |x| x.clamp(0.0, 1.0))
}

pub fn ks_distance_normal(xs: &[f64]) -> f64 {
    ks_distance(xs, normal_cdf)
}

/// Nodes and weights for `E[f(Z)]`, `Z ~ N(0, 1)`, by Golub-Welsch on the
/// probabilists' Hermite recurrence. Weights sum to one.
pub fn gauss_hermite(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}
