//! Double/debiased machine learning for the partially linear model and its
//! IV variant, with cross-fitted nuisances.

use serde::{Deserialize, Serialize};

use super::{check_covariates, matrix, EstimateResult, Estimand};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{cross_fit_with_folds, fold_assignment, Learner};
use crate::rng::derive_seed;
use crate::stats::design;

const DERIVATIVE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DmlMode {
    Plm,
    Pliv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmlOptions {
    pub mode: DmlMode,
    pub learner: Learner,
    #[serde(default = "default_folds")]
    pub k_folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    #[serde(default)]
    pub instruments: Option<Vec<String>>,
}

fn default_folds() -> usize {
    5
}

impl DmlOptions {
    pub fn new(mode: DmlMode, learner: Learner) -> Self {
        DmlOptions { mode, learner, k_folds: 5, seed: 0, covariates: None, instruments: None }
    }

    pub fn folds(mut self, k: usize) -> Self {
        self.k_folds = k;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Cross-fitted residuals entering the score.
#[derive(Clone, Debug, PartialEq)]
pub struct DmlNuisances {
    /// `Y − ℓ̂(X)`.
    pub ry: Vec<f64>,
    /// `D − m̂(X)`.
    pub rd: Vec<f64>,
    /// `r̂(X, Z) − m̂(X)`, the residualized instrument index (pliv only).
    pub v: Option<Vec<f64>>,
    pub folds: Vec<usize>,
}

pub fn dml_nuisances(ds: &Dataset, opts: &DmlOptions) -> Result<DmlNuisances> {
    let y = ds.outcome()?;
    let d = ds.treatment()?;
    let n = y.len();
    if opts.k_folds < 1 {
        return Err(Error::Invalid("k_folds must be at least 1".into()));
    }
    let covariates = opts.covariates.clone().unwrap_or_else(|| ds.covariates());
    check_covariates(ds, &covariates)?;
    let x = matrix(ds, &covariates)?;
    let k = opts.k_folds;
    let folds = fold_assignment(n, k, opts.seed)?;
    let l = &opts.learner;
    let ell = cross_fit_with_folds(l, &x, y, &folds, k, derive_seed(opts.seed, 1))?;
    let m = cross_fit_with_folds(l, &x, d, &folds, k, derive_seed(opts.seed, 2))?;
    let ry: Vec<f64> = y.iter().zip(&ell).map(|(a, b)| a - b).collect();
    let rd: Vec<f64> = d.iter().zip(&m).map(|(a, b)| a - b).collect();
    let v = match opts.mode {
        DmlMode::Plm => None,
        DmlMode::Pliv => {
            let instruments = opts.instruments.clone().unwrap_or_else(|| ds.instruments());
            if instruments.is_empty() {
                return Err(Error::Invalid("pliv needs at least one instrument".into()));
            }
            if let Some(c) = instruments.iter().find(|z| covariates.contains(z)) {
                return Err(Error::Invalid(format!("column '{c}' is both an instrument and a covariate")));
            }
            check_covariates(ds, &instruments)?;
            let mut cols: Vec<&[f64]> = covariates.iter().map(|c| ds.column(c)).collect::<Result<_>>()?;
            for z in &instruments {
                cols.push(ds.column(z)?);
            }
            let xz = design(&cols, n, false);
            let r = cross_fit_with_folds(l, &xz, d, &folds, k, derive_seed(opts.seed, 3))?;
            Some(r.iter().zip(&m).map(|(a, b)| a - b).collect())
        }
    };
    Ok(DmlNuisances { ry, rd, v, folds })
}

/// Solves the pooled moment over all folds; returns `(β, se)`.
pub fn dml_solve(nuis: &DmlNuisances) -> Result<(f64, f64)> {
    let n = nuis.ry.len() as f64;
    let inst = nuis.v.as_deref().unwrap_or(&nuis.rd);
    let jac = nuis.rd.iter().zip(inst).map(|(a, b)| a * b).sum::<f64>() / n;
    if jac.abs() < DERIVATIVE_TOL {
        return Err(Error::WeakResidualIdentification(jac));
    }
    let beta = nuis.ry.iter().zip(inst).map(|(a, b)| a * b).sum::<f64>() / n / jac;
    let s2 = (0..nuis.ry.len())
        .map(|i| ((nuis.ry[i] - nuis.rd[i] * beta) * inst[i]).powi(2))
        .sum::<f64>()
        / n;
    Ok((beta, (s2 / (jac * jac) / n).sqrt()))
}

/// Cross-fitted partialling-out estimate. `k_folds = 1` fits the nuisances
/// in-sample, which is useful only for comparison.
pub fn dml_estimate(ds: &Dataset, opts: &DmlOptions) -> Result<EstimateResult> {
    let nuis = dml_nuisances(ds, opts)?;
    let (beta, se) = dml_solve(&nuis)?;
    let (estimand, method) = match opts.mode {
        DmlMode::Plm => (Estimand::Ate, "dml_plm"),
        DmlMode::Pliv => (Estimand::Late, "dml_pliv"),
    };
    Ok(EstimateResult::new(estimand, method, beta, se, ds.n_rows())
        .with_meta("learner", &opts.learner)
        .with_meta("k_folds", opts.k_folds)
        .with_meta("seed", opts.seed))
}
