//! L1-penalized least squares by cyclic coordinate descent.
//!
//! Objective, on standardized columns (mean 0, `1/n` variance 1):
//!
//! ```text
//! (1/2n) ‖y − ȳ − X̃β‖² + λ ‖β‖₁
//! ```
//!
//! The intercept is never penalized. Returned coefficients are on the
//! original column scale.

use nalgebra::DMatrix;

use super::ols::{r_inverse, sandwich, LinearFit};
use crate::error::{Error, Result};

const TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 200_000;

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

struct Standardized {
    cols: Vec<Vec<f64>>,
    centers: Vec<f64>,
    scales: Vec<f64>,
    y_mean: f64,
    yc: Vec<f64>,
}

fn standardize(design: &DMatrix<f64>, y: &[f64]) -> Standardized {
    let (n, p) = design.shape();
    let nf = n as f64;
    let mut cols = Vec::with_capacity(p);
    let mut centers = Vec::with_capacity(p);
    let mut scales = Vec::with_capacity(p);
    for j in 0..p {
        let c = design.column(j);
        let m = c.sum() / nf;
        let s = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / nf).sqrt();
        centers.push(m);
        scales.push(s);
        cols.push(if s > 0.0 { c.iter().map(|v| (v - m) / s).collect() } else { vec![0.0; n] });
    }
    let y_mean = y.iter().sum::<f64>() / nf;
    let yc = y.iter().map(|v| v - y_mean).collect();
    Standardized { cols, centers, scales, y_mean, yc }
}

/// Smallest λ at which every slope is zero: `max_j |⟨x̃_j, y − ȳ⟩| / n`.
pub fn lambda_max(design: &DMatrix<f64>, y: &[f64]) -> f64 {
    let s = standardize(design, y);
    let n = y.len() as f64;
    s.cols
        .iter()
        .map(|c| c.iter().zip(&s.yc).map(|(a, b)| a * b).sum::<f64>().abs() / n)
        .fold(0.0, f64::max)
}

/// Fits the LASSO path point at `lambda`.
///
/// The covariance fields describe a least-squares refit restricted to the
/// active set (zeros elsewhere).
pub fn fit_lasso(design: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<LinearFit> {
    let (n, p) = design.shape();
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Invalid(format!("lambda must be a finite nonnegative number, got {lambda}")));
    }
    if y.len() != n {
        return Err(Error::Invalid(format!("design has {n} rows but y has {}", y.len())));
    }
    if n < p + 2 {
        return Err(Error::Invalid(format!("need at least {} rows for {} columns, got {n}", p + 2, p + 1)));
    }
    let s = standardize(design, y);
    let nf = n as f64;
    let mut beta = vec![0.0; p];
    let mut resid = s.yc.clone();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            if s.scales[j] == 0.0 {
                continue;
            }
            let col = &s.cols[j];
            let old = beta[j];
            // ‖x̃_j‖²/n = 1 for standardized columns.
            let rho = col.iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>() / nf + old;
            let new = soft_threshold(rho, lambda);
            let delta = new - old;
            if delta != 0.0 {
                for (r, x) in resid.iter_mut().zip(col) {
                    *r -= delta * x;
                }
                beta[j] = new;
            }
            max_delta = max_delta.max(delta.abs());
        }
        if max_delta < TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric("coordinate descent did not converge".into()));
    }

    let mut coefficients = vec![0.0; p + 1];
    let mut b0 = s.y_mean;
    for j in 0..p {
        if s.scales[j] > 0.0 && beta[j] != 0.0 {
            let b = beta[j] / s.scales[j];
            coefficients[j + 1] = b;
            b0 -= b * s.centers[j];
        }
    }
    coefficients[0] = b0;
    let residuals: Vec<f64> = (0..n)
        .map(|i| y[i] - b0 - (0..p).map(|j| design[(i, j)] * coefficients[j + 1]).sum::<f64>())
        .collect();

    // Covariance of the active-set refit design.
    let active: Vec<usize> = (0..p).filter(|&j| coefficients[j + 1] != 0.0).collect();
    let mut xa = DMatrix::zeros(n, active.len() + 1);
    xa.column_mut(0).fill(1.0);
    for (k, &j) in active.iter().enumerate() {
        xa.column_mut(k + 1).copy_from(&design.column(j));
    }
    let r = xa.clone().qr().r();
    let mut cov_homoskedastic = DMatrix::zeros(p + 1, p + 1);
    let mut cov_hc0 = DMatrix::zeros(p + 1, p + 1);
    if r.diagonal().iter().all(|d| d.abs() > 0.0) {
        let rinv = r_inverse(&r);
        let bread = &rinv * rinv.transpose();
        let dof = (n - active.len() - 1).max(1) as f64;
        let sigma2 = residuals.iter().map(|e| e * e).sum::<f64>() / dof;
        let hc = sandwich(&xa, &bread, &residuals);
        let idx: Vec<usize> = std::iter::once(0).chain(active.iter().map(|j| j + 1)).collect();
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                cov_homoskedastic[(ia, ib)] = bread[(a, b)] * sigma2;
                cov_hc0[(ia, ib)] = hc[(a, b)];
            }
        }
    }

    Ok(LinearFit {
        coefficients,
        intercept: true,
        cov_homoskedastic,
        cov_hc0,
        residuals,
        rank: active.len() + 1,
        lambda,
    })
}
