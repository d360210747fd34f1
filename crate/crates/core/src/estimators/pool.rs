use super::EstimateResult;
use crate::error::{Error, Result};

/// Combines estimates of one quantity from several completed datasets.
///
/// Total variance is the mean within-variance plus `(1 + 1/m)` times the
/// between-estimate variance.
pub fn pool_rubin(results: &[EstimateResult]) -> Result<EstimateResult> {
    let m = results.len();
    if m < 2 {
        return Err(Error::TooFewResults { need: 2, got: m });
    }
    let first = &results[0];
    if let Some(r) = results.iter().find(|r| r.method != first.method || r.estimand != first.estimand) {
        return Err(Error::HeterogeneousEstimands(format!(
            "{} ({}) cannot be pooled with {} ({})",
            first.method, first.estimand, r.method, r.estimand
        )));
    }
    let mf = m as f64;
    let est: Vec<f64> = results.iter().map(|r| r.estimate).collect();
    let qbar = est.iter().sum::<f64>() / mf;
    let within = results.iter().map(|r| r.std_err * r.std_err).sum::<f64>() / mf;
    let between = est.iter().map(|q| (q - qbar).powi(2)).sum::<f64>() / (mf - 1.0);
    let total = within + (1.0 + 1.0 / mf) * between;
    let n_used = results.iter().map(|r| r.n_used).min().unwrap_or(0);
    Ok(EstimateResult::new(first.estimand, first.method.clone(), qbar, total.sqrt(), n_used)
        .with_meta("pooled", "rubin")
        .with_meta("m", m)
        .with_meta("within_variance", within)
        .with_meta("between_variance", between)
        .with_meta("total_variance", total))
}
