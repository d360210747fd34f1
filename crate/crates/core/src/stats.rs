//! Small numeric helpers shared across modules.

use nalgebra::DMatrix;
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};

/// Two-sided 95% normal quantile, to the six decimals used for every
/// reported interval.
pub const Z95: f64 = 1.959_964;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with the n−1 denominator.
pub fn var(x: &[f64]) -> f64 {
    cov(x, x)
}

/// Sample covariance with the n−1 denominator.
pub fn cov(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean of `x` over rows where `mask` equals `level`.
pub fn mean_where(x: &[f64], mask: &[f64], level: f64) -> Option<f64> {
    let (s, c) = x
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m == level)
        .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
    (c > 0).then(|| s / c as f64)
}

pub fn subset(x: &[f64], mask: &[f64], level: f64) -> Vec<f64> {
    x.iter().zip(mask).filter(|(_, m)| **m == level).map(|(v, _)| *v).collect()
}

pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").cdf(x)
}

pub fn chi2_sf(x: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("positive df").sf(x)
}

pub fn chi2_quantile(p: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("positive df").inverse_cdf(p)
}

pub fn f_sf(x: f64, df1: f64, df2: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    FisherSnedecor::new(df1, df2).expect("positive df").sf(x)
}

/// Column-major matrix from column slices, optionally led by a column of ones.
pub fn design(columns: &[&[f64]], n: usize, intercept: bool) -> DMatrix<f64> {
    let p = columns.len() + usize::from(intercept);
    let mut m = DMatrix::zeros(n, p);
    let mut j = 0;
    if intercept {
        m.column_mut(0).fill(1.0);
        j = 1;
    }
    for c in columns {
        m.column_mut(j).copy_from_slice(c);
        j += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basics() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&x), 2.5);
        assert!((var(&x) - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(median(&x), 2.5);
        assert_eq!(mean_where(&x, &[0.0, 1.0, 1.0, 0.0], 1.0), Some(2.5));
        assert_eq!(mean_where(&x, &[0.0; 4], 1.0), None);
        assert!((logistic(logit(0.3)) - 0.3).abs() < 1e-15);
        assert!((normal_cdf(Z95) - 0.975).abs() < 1e-7);
        assert!((chi2_quantile(0.95, 1.0) - 3.841_458_820_694_124).abs() < 1e-8);
    }
}
