//! Treatment-effect estimators. Every estimator returns an [`EstimateResult`].

mod dml;
mod iv;
mod naive;
mod pool;
mod tmle;
mod weighting;

pub use dml::{dml_estimate, dml_nuisances, dml_solve, DmlMode, DmlNuisances, DmlOptions};
pub use iv::{iv_linear, post_lasso_iv, tsls_fit, wald, FirstStageLink, IvMode, IvOptions, TslsFit};
pub use naive::{diff_in_means, ols_adjust};
pub use pool::pool_rubin;
pub use tmle::{tmle_ate, TmleOptions, TMLE_PS_BOUNDS, TMLE_Q_BOUND};
pub use weighting::{aiptw, iptw, iptw_weights, AiptwOptions, Bootstrap, IptwOptions, WeightVector};

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{cross_fit_with_folds, Learner};
use crate::rng::derive_seed;
use crate::stats::Z95;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimand {
    #[serde(rename = "ATE")]
    Ate,
    #[serde(rename = "ATT")]
    Att,
    #[serde(rename = "LATE")]
    Late,
    #[serde(rename = "naive")]
    Naive,
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimand::Ate => "ATE",
            Estimand::Att => "ATT",
            Estimand::Late => "LATE",
            Estimand::Naive => "naive",
        })
    }
}

/// Point estimate with a 95% normal interval and method metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub estimand: Estimand,
    pub estimate: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_used: usize,
    pub method: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, Value>,
}

impl EstimateResult {
    pub fn new(estimand: Estimand, method: impl Into<String>, estimate: f64, std_err: f64, n_used: usize) -> Self {
        let std_err = std_err.abs();
        EstimateResult {
            estimand,
            estimate,
            std_err,
            ci_low: estimate - Z95 * std_err,
            ci_high: estimate + Z95 * std_err,
            n_used,
            method: method.into(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl Serialize) -> Self {
        self.metadata.insert(key.to_string(), serde_json::to_value(value).expect("metadata serializes"));
        self
    }

    pub fn meta_f64(&self, key: &str) -> Option<f64> {
        self.metadata.get(key).and_then(Value::as_f64)
    }

    pub fn covers(&self, target: f64) -> bool {
        self.ci_low <= target && target <= self.ci_high
    }
}

/// A nuisance regression: a learner and the columns it sees. `None`
/// features means the dataset's declared covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuisanceSpec {
    pub learner: Learner,
    #[serde(default)]
    pub features: Option<Vec<String>>,
}

impl NuisanceSpec {
    pub fn new(learner: Learner) -> Self {
        NuisanceSpec { learner, features: None }
    }

    pub fn on<I: IntoIterator<Item = S>, S: Into<String>>(learner: Learner, features: I) -> Self {
        NuisanceSpec { learner, features: Some(features.into_iter().map(Into::into).collect()) }
    }

    pub fn features(&self, ds: &Dataset) -> Vec<String> {
        self.features.clone().unwrap_or_else(|| ds.covariates())
    }
}

/// Where propensity scores come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensitySpec {
    /// Fitted by a learner on the treatment column.
    Model(NuisanceSpec),
    /// Read from a column of known propensities.
    Known(String),
}

impl PropensitySpec {
    pub fn logistic() -> Self {
        PropensitySpec::Model(NuisanceSpec::new(Learner::Logistic))
    }

    pub fn describe(&self) -> String {
        match self {
            PropensitySpec::Model(m) => format!("{:?}", m.learner.kind()).to_lowercase(),
            PropensitySpec::Known(c) => format!("known:{c}"),
        }
    }
}

/// Column-major matrix of the named columns (no intercept).
pub(crate) fn matrix(ds: &Dataset, names: &[String]) -> Result<DMatrix<f64>> {
    let cols: Vec<&[f64]> = names.iter().map(|n| ds.column(n)).collect::<Result<_>>()?;
    Ok(crate::stats::design(&cols, ds.n_rows(), false))
}

pub fn columns<'a>(ds: &'a Dataset, names: &[String]) -> Result<Vec<&'a [f64]>> {
    names.iter().map(|n| ds.column(n)).collect()
}

pub(crate) fn require_binary(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|&x| x == 0.0 || x == 1.0) {
        Ok(())
    } else {
        Err(Error::NonBinary { role: what.to_string(), column: what.to_string() })
    }
}

/// Per-arm outcome predictions `(μ0, μ1)` for every row. With `k ≥ 2` the
/// arm models for fold `f` are fit on the rows outside `f`.
pub(crate) fn arm_outcomes(
    learner: &Learner,
    x: &DMatrix<f64>,
    y: &[f64],
    d: &[f64],
    folds: &[usize],
    k: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let mut mu = [vec![f64::NAN; n], vec![f64::NAN; n]];
    for f in 0..k {
        let test: Vec<usize> = (0..n).filter(|&i| k == 1 || folds[i] == f).collect();
        let xt = x.select_rows(test.iter());
        for (arm, out) in mu.iter_mut().enumerate() {
            let train: Vec<usize> =
                (0..n).filter(|&i| d[i] == arm as f64 && (k == 1 || folds[i] != f)).collect();
            if train.is_empty() {
                return Err(Error::EmptyArm(format!("no rows with treatment {arm} to fit the outcome model")));
            }
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let model = learner
                .with_seed(derive_seed(seed, (2 * f + arm) as u64))
                .fit(&x.select_rows(train.iter()), &yt)?;
            for (i, p) in test.iter().zip(model.predict(&xt)) {
                out[*i] = p;
            }
        }
    }
    let [mu0, mu1] = mu;
    Ok((mu0, mu1))
}

/// Propensity scores, fitted (cross-fitted when `k ≥ 2`) or read from a column.
pub(crate) fn propensities(ds: &Dataset, spec: &PropensitySpec, folds: &[usize], k: usize, seed: u64) -> Result<Vec<f64>> {
    match spec {
        PropensitySpec::Known(c) => Ok(ds.column(c)?.to_vec()),
        PropensitySpec::Model(m) => {
            let names = m.features(ds);
            check_covariates(ds, &names)?;
            let x = matrix(ds, &names)?;
            cross_fit_with_folds(&m.learner, &x, ds.treatment()?, folds, k, seed)
        }
    }
}

/// Rejects covariate lists that name the treatment or outcome.
pub(crate) fn check_covariates(ds: &Dataset, covariates: &[String]) -> Result<()> {
    for c in covariates {
        if Some(c) == ds.treatment_name().as_ref() || Some(c) == ds.outcome_name().as_ref() {
            return Err(Error::Invalid(format!("covariate list names the treatment or outcome column '{c}'")));
        }
        ds.column(c)?;
    }
    Ok(())
}
