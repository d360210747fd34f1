use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stats::logistic;

/// Coefficient magnitude (standardized scale) beyond which the fit is
/// declared separated.
pub const SEPARATION_LIMIT: f64 = 15.0;
const MAX_ITER: usize = 100;
const TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticFit {
    /// Original-scale coefficients, intercept first when present.
    pub coefficients: Vec<f64>,
    pub intercept: bool,
    pub iterations: usize,
}

impl LogisticFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let off = usize::from(self.intercept);
        let b0 = if self.intercept { self.coefficients[0] } else { 0.0 };
        (0..x.nrows())
            .map(|i| {
                let eta = b0 + (0..x.ncols()).map(|j| x[(i, j)] * self.coefficients[j + off]).sum::<f64>();
                logistic(eta)
            })
            .collect()
    }
}

/// Bernoulli maximum likelihood by Newton/IRLS on internally standardized
/// columns.
pub fn fit_logistic(design: &DMatrix<f64>, y: &[f64], intercept: bool) -> Result<LogisticFit> {
    let (n, k) = design.shape();
    if y.len() != n {
        return Err(Error::Invalid(format!("design has {n} rows but y has {}", y.len())));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::NonBinary { role: "logistic response".into(), column: "y".into() });
    }
    let p = k + usize::from(intercept);
    if n < p + 1 {
        return Err(Error::Invalid(format!("need at least {} rows for {p} columns, got {n}", p + 1)));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::Separation);
    }

    // Standardize non-intercept columns (centering only when an intercept
    // can absorb the shift).
    let mut centers = vec![0.0; k];
    let mut scales = vec![1.0; k];
    let mut x = DMatrix::zeros(n, p);
    let off = usize::from(intercept);
    if intercept {
        x.column_mut(0).fill(1.0);
    }
    for j in 0..k {
        let col = design.column(j);
        let m = if intercept { col.mean() } else { 0.0 };
        let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
        centers[j] = m;
        scales[j] = if s > 0.0 { s } else { 1.0 };
        for i in 0..n {
            x[(i, j + off)] = (col[i] - m) / scales[j];
        }
    }

    let yv = DVector::from_column_slice(y);
    let mut beta = DVector::<f64>::zeros(p);
    let mut iterations = 0;
    for it in 1..=MAX_ITER {
        iterations = it;
        let eta = &x * &beta;
        let prob = eta.map(logistic);
        let w = prob.map(|q| (q * (1.0 - q)).max(1e-12));
        let grad = x.transpose() * (&yv - &prob);
        let mut xtwx = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            for a in 0..p {
                let xa = x[(i, a)] * w[i];
                for b in 0..=a {
                    xtwx[(a, b)] += xa * x[(i, b)];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtwx[(b, a)] = xtwx[(a, b)];
            }
        }
        let step = match xtwx.cholesky() {
            Some(ch) => ch.solve(&grad),
            None => return Err(Error::Separation),
        };
        beta += &step;
        if beta.iter().any(|b| !b.is_finite() || b.abs() > SEPARATION_LIMIT) {
            return Err(Error::Separation);
        }
        if step.amax() < TOL {
            break;
        }
    }

    let mut coefficients = vec![0.0; p];
    let mut b0 = if intercept { beta[0] } else { 0.0 };
    for j in 0..k {
        let b = beta[j + off] / scales[j];
        coefficients[j + off] = b;
        b0 -= b * centers[j];
    }
    if intercept {
        coefficients[0] = b0;
    }
    Ok(LogisticFit { coefficients, intercept, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::design;

    #[test]
    fn saturated_binary_design() {
        // x=0 cell: 1 success of 4; x=1 cell: 3 of 4. Saturated MLE gives the
        // cell log-odds: ln(1/3) and ln(3).
        let x = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let y = [1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let fit = fit_logistic(&design(&[&x], 8, false), &y, true).unwrap();
        assert!((fit.coefficients[0] - (1.0f64 / 3.0).ln()).abs() < 1e-6);
        assert!((fit.coefficients[1] - (3.0f64.ln() - (1.0f64 / 3.0).ln())).abs() < 1e-6);
    }

    #[test]
    fn constant_response_is_separation() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0; 4];
        assert_eq!(fit_logistic(&design(&[&x], 4, false), &y, true), Err(Error::Separation));
    }

    #[test]
    fn perfectly_separated() {
        let x = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        assert_eq!(fit_logistic(&design(&[&x], 6, false), &y, true), Err(Error::Separation));
    }

    #[test]
    fn symmetric_data_has_zero_intercept() {
        let x = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0, -1.5, 1.5];
        let y = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0];
        // Flipping (x, y) -> (-x, 1-y) maps the data set onto itself.
        let fit = fit_logistic(&design(&[&x], 8, false), &y, true).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-8);
    }

    #[test]
    fn score_equation_mean_matches() {
        let x = [0.3, -1.2, 2.2, 0.1, 1.7, -0.4, 0.9, -2.0, 0.5, 1.1];
        let y = [1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let xm = design(&[&x], 10, false);
        let fit = fit_logistic(&xm, &y, true).unwrap();
        let p = fit.predict(&xm);
        let diff = p.iter().sum::<f64>() / 10.0 - 0.5;
        assert!(diff.abs() < 1e-8);
    }
}
