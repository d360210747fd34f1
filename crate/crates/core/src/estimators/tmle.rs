//! Targeted maximum likelihood for the ATE with a logistic fluctuation on
//! the [0, 1]-rescaled outcome.

use serde::{Deserialize, Serialize};

use super::{arm_outcomes, check_covariates, matrix, propensities, require_binary, EstimateResult, Estimand, NuisanceSpec, PropensitySpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{fold_assignment, Learner};
use crate::rng::derive_seed;
use crate::stats::{logistic, logit};

/// Propensities are truncated into this interval.
pub const TMLE_PS_BOUNDS: (f64, f64) = (0.01, 0.99);
/// Initial outcome predictions are bounded away from 0 and 1 by this much
/// before taking logits.
pub const TMLE_Q_BOUND: f64 = 1e-9;
const MAX_STEPS: usize = 100;
const TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TmleOptions {
    pub propensity: PropensitySpec,
    pub outcome: NuisanceSpec,
    pub k_folds: usize,
    pub seed: u64,
}

impl Default for TmleOptions {
    fn default() -> Self {
        TmleOptions {
            propensity: PropensitySpec::logistic(),
            outcome: NuisanceSpec::new(Learner::Ols),
            k_folds: 1,
            seed: 0,
        }
    }
}

fn loglik(ys: &[f64], off: &[f64], h: &[f64], eps: f64) -> f64 {
    (0..ys.len())
        .map(|i| {
            let q = logistic(off[i] + eps * h[i]).clamp(1e-300, 1.0 - 1e-16);
            ys[i] * q.ln() + (1.0 - ys[i]) * (1.0 - q).ln()
        })
        .sum()
}

/// One-dimensional logistic regression of `ys` on `h` with offset `off`,
/// by damped Newton steps.
fn fluctuate(ys: &[f64], off: &[f64], h: &[f64]) -> Result<f64> {
    let mut eps = 0.0;
    for _ in 0..MAX_STEPS {
        let (mut score, mut info) = (0.0, 0.0);
        for i in 0..ys.len() {
            let q = logistic(off[i] + eps * h[i]);
            score += h[i] * (ys[i] - q);
            info += h[i] * h[i] * q * (1.0 - q);
        }
        if info <= 0.0 || !info.is_finite() {
            return Err(Error::Numeric("flat fluctuation likelihood".into()));
        }
        let mut step = score / info;
        let base = loglik(ys, off, h, eps);
        while loglik(ys, off, h, eps + step) < base && step.abs() > 1e-16 {
            step *= 0.5;
        }
        eps += step;
        if step.abs() < TOL * (1.0 + eps.abs()) {
            break;
        }
    }
    Ok(eps)
}

/// TMLE of the ATE. Nuisances are cross-fitted when `k_folds ≥ 2`.
pub fn tmle_ate(ds: &Dataset, opts: &TmleOptions) -> Result<EstimateResult> {
    let y = ds.outcome()?;
    let d = ds.treatment()?;
    require_binary(d, "treatment")?;
    let n = y.len();
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let base = |r: EstimateResult| {
        r.with_meta("ps_bounds", TMLE_PS_BOUNDS)
            .with_meta("q_bound", TMLE_Q_BOUND)
            .with_meta("k_folds", opts.k_folds)
            .with_meta("propensity", opts.propensity.describe())
            .with_meta("outcome_model", &opts.outcome.learner)
    };
    if hi == lo {
        return Ok(base(EstimateResult::new(Estimand::Ate, "tmle", 0.0, 0.0, n))
            .with_meta("epsilon", 0.0)
            .with_meta("n_truncated", 0));
    }
    let range = hi - lo;
    let ys: Vec<f64> = y.iter().map(|v| (v - lo) / range).collect();

    let k = opts.k_folds.max(1);
    let folds = if k == 1 { vec![0; n] } else { fold_assignment(n, k, opts.seed)? };
    let raw = propensities(ds, &opts.propensity, &folds, k, derive_seed(opts.seed, 1))?;
    let (glo, ghi) = TMLE_PS_BOUNDS;
    let n_truncated = raw.iter().filter(|&&p| !(glo..=ghi).contains(&p)).count();
    let g: Vec<f64> = raw.iter().map(|p| p.clamp(glo, ghi)).collect();

    let feats = opts.outcome.features(ds);
    check_covariates(ds, &feats)?;
    let x = matrix(ds, &feats)?;
    let (q0, q1) = arm_outcomes(&opts.outcome.learner, &x, &ys, d, &folds, k, derive_seed(opts.seed, 2))?;
    let bound = |q: f64| q.clamp(TMLE_Q_BOUND, 1.0 - TMLE_Q_BOUND);
    let q0: Vec<f64> = q0.into_iter().map(bound).collect();
    let q1: Vec<f64> = q1.into_iter().map(bound).collect();

    let h: Vec<f64> = (0..n).map(|i| d[i] / g[i] - (1.0 - d[i]) / (1.0 - g[i])).collect();
    let off: Vec<f64> = (0..n).map(|i| logit(if d[i] == 1.0 { q1[i] } else { q0[i] })).collect();
    let eps = fluctuate(&ys, &off, &h)?;

    let q1s: Vec<f64> = (0..n).map(|i| logistic(logit(q1[i]) + eps / g[i])).collect();
    let q0s: Vec<f64> = (0..n).map(|i| logistic(logit(q0[i]) - eps / (1.0 - g[i]))).collect();
    let psi = (0..n).map(|i| q1s[i] - q0s[i]).sum::<f64>() / n as f64;
    let ic2: f64 = (0..n)
        .map(|i| {
            let qs = if d[i] == 1.0 { q1s[i] } else { q0s[i] };
            (h[i] * (ys[i] - qs) + q1s[i] - q0s[i] - psi).powi(2)
        })
        .sum();
    let se = ic2.sqrt() / n as f64;
    Ok(base(EstimateResult::new(Estimand::Ate, "tmle", psi * range, se * range, n))
        .with_meta("epsilon", eps)
        .with_meta("n_truncated", n_truncated))
}
