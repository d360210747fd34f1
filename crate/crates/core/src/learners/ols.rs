use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Least-squares (or penalized) linear fit.
///
/// Coefficients are ordered as the design columns, with the intercept first
/// when one was requested.
#[derive(Clone, Debug, Serialize)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub intercept: bool,
    #[serde(skip)]
    pub cov_homoskedastic: DMatrix<f64>,
    #[serde(skip)]
    pub cov_hc0: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub rank: usize,
    pub lambda: f64,
}

impl LinearFit {
    pub fn fitted(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.residuals).map(|(y, r)| y - r).collect()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let off = usize::from(self.intercept);
        let b0 = if self.intercept { self.coefficients[0] } else { 0.0 };
        (0..x.nrows())
            .map(|i| {
                b0 + (0..x.ncols()).map(|j| x[(i, j)] * self.coefficients[j + off]).sum::<f64>()
            })
            .collect()
    }

    pub fn se_hc0(&self, j: usize) -> f64 {
        self.cov_hc0[(j, j)].max(0.0).sqrt()
    }

    pub fn se_homoskedastic(&self, j: usize) -> f64 {
        self.cov_homoskedastic[(j, j)].max(0.0).sqrt()
    }

    pub fn sse(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }
}

pub(crate) fn with_intercept(design: &DMatrix<f64>, intercept: bool) -> DMatrix<f64> {
    if intercept {
        design.clone().insert_column(0, 1.0)
    } else {
        design.clone()
    }
}

/// Triangular factor of a thin QR, plus `Qᵀy`.
pub(crate) struct Factor {
    pub r: DMatrix<f64>,
    pub qty: DVector<f64>,
}

/// QR-factors `x` and checks its rank; the error names the first column
/// (in `x`'s own indexing) that depends on earlier ones.
pub(crate) fn factor(x: &DMatrix<f64>, y: &[f64]) -> Result<Factor> {
    let p = x.ncols();
    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    if let Some(col) = first_dependent_column(&r) {
        return Err(Error::RankDeficient { column: col });
    }
    debug_assert_eq!(r.nrows(), p);
    Ok(Factor { r, qty })
}

fn first_dependent_column(r: &DMatrix<f64>) -> Option<usize> {
    let p = r.ncols();
    if p == 0 {
        return None;
    }
    let full = r.clone().singular_values();
    let smax = full.max();
    if smax == 0.0 {
        return Some(0);
    }
    if full.min() > RANK_TOL * smax {
        return None;
    }
    // The leading k×k block of R factors the first k columns.
    (1..=p).find(|&k| {
        let sv = r.view((0, 0), (k, k)).into_owned().singular_values();
        sv.min() <= RANK_TOL * smax
    })
    .map(|k| k - 1)
}

pub(crate) fn r_inverse(r: &DMatrix<f64>) -> DMatrix<f64> {
    let p = r.ncols();
    r.solve_upper_triangular(&DMatrix::identity(p, p)).expect("checked full rank")
}

/// `(XᵀX)⁻¹ Xᵀ diag(e²) X (XᵀX)⁻¹`.
pub(crate) fn sandwich(x: &DMatrix<f64>, bread: &DMatrix<f64>, resid: &[f64]) -> DMatrix<f64> {
    let p = x.ncols();
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for (i, e) in resid.iter().enumerate() {
        let w = e * e;
        for a in 0..p {
            let xa = x[(i, a)] * w;
            for b in 0..=a {
                meat[(a, b)] += xa * x[(i, b)];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            meat[(b, a)] = meat[(a, b)];
        }
    }
    let v = bread * meat * bread;
    (&v + v.transpose()) * 0.5
}

/// Ordinary least squares via Householder QR.
///
/// Both the homoskedastic and the HC0 covariance are populated.
pub fn fit_ols(design: &DMatrix<f64>, y: &[f64], intercept: bool) -> Result<LinearFit> {
    let x = with_intercept(design, intercept);
    let (n, p) = x.shape();
    if n != y.len() {
        return Err(Error::Invalid(format!("design has {n} rows but y has {}", y.len())));
    }
    if n < p + 1 {
        return Err(Error::Invalid(format!("need at least {} rows for {p} columns, got {n}", p + 1)));
    }
    let f = factor(&x, y).map_err(|e| match e {
        Error::RankDeficient { column } if intercept && column > 0 => {
            Error::RankDeficient { column: column - 1 }
        }
        other => other,
    })?;
    let beta = f
        .r
        .solve_upper_triangular(&f.qty)
        .ok_or_else(|| Error::Numeric("singular triangular factor".into()))?;
    let fitted = &x * &beta;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let rinv = r_inverse(&f.r);
    let bread = &rinv * rinv.transpose();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let sigma2 = sse / (n - p) as f64;
    let cov_homoskedastic = &bread * sigma2;
    let cov_hc0 = sandwich(&x, &bread, &residuals);
    Ok(LinearFit {
        coefficients: beta.iter().copied().collect(),
        intercept,
        cov_homoskedastic,
        cov_hc0,
        residuals,
        rank: p,
        lambda: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::design;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let fit = fit_ols(&design(&[&x], 10, false), &y, true).unwrap();
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn intercept_only_is_mean() {
        let y = [1.0, 4.0, 2.0, 9.0];
        let fit = fit_ols(&DMatrix::zeros(4, 0), &y, true).unwrap();
        assert!((fit.coefficients[0] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn duplicated_column_is_rank_error() {
        let a = [1.0, 2.0, 3.0, 5.0, 8.0];
        let b = [0.5, -1.0, 2.0, 0.0, 1.0];
        let y = [1.0, 0.0, 3.0, 2.0, 1.0];
        let err = fit_ols(&design(&[&a, &b, &a], 5, false), &y, true).unwrap_err();
        assert_eq!(err, Error::RankDeficient { column: 2 });
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let x1 = [0.3, -1.2, 2.2, 0.1, 1.7, -0.4, 0.9];
        let x2 = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0];
        let y = [1.1, -0.2, 3.0, 0.8, 2.5, 0.0, 1.9];
        let x = design(&[&x1, &x2], 7, false);
        let fit = fit_ols(&x, &y, true).unwrap();
        for col in [&x1[..], &x2[..], &[1.0; 7][..]] {
            let d: f64 = col.iter().zip(&fit.residuals).map(|(a, b)| a * b).sum();
            assert!(d.abs() < 1e-10);
        }
        // Both covariances symmetric.
        assert!((&fit.cov_hc0 - fit.cov_hc0.transpose()).amax() < 1e-15);
    }

    #[test]
    fn hc0_equals_homoskedastic_in_balanced_case() {
        // Balanced binary regressor with residuals of constant magnitude:
        // the sandwich collapses to σ̂²(XᵀX)⁻¹ with σ̂² = SSE/n.
        let x = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let y = [1.0, -1.0, 1.0, -1.0, 3.0, 1.0, 3.0, 1.0];
        let fit = fit_ols(&design(&[&x], 8, false), &y, true).unwrap();
        let n = 8.0;
        let p = 2.0;
        let scaled = &fit.cov_homoskedastic * ((n - p) / n);
        assert!((&scaled - &fit.cov_hc0).amax() < 1e-14);
    }
}
