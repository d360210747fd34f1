//! Fitting primitives for estimators and nuisance models.

mod forest;
mod lasso;
mod logistic;
pub(crate) mod ols;

pub use forest::{fit_forest, Forest, ForestParams};
pub use lasso::{fit_lasso, lambda_max};
pub use logistic::{fit_logistic, LogisticFit, SEPARATION_LIMIT};
pub use ols::{fit_ols, LinearFit, RANK_TOL};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};

/// A learner specification: what to fit, not the fitted state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learner {
    Ols,
    Ridge { lambda: f64 },
    Lasso { lambda: f64 },
    Logistic,
    Forest(ForestParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Ols,
    Ridge,
    Lasso,
    Logistic,
    Forest,
}

#[derive(Clone, Debug)]
enum Fitted {
    Linear { coefficients: Vec<f64> },
    Logistic(LogisticFit),
    Forest(Forest),
}

/// A fitted model. Always carries an intercept for the linear kinds.
#[derive(Clone, Debug)]
pub struct Predictor {
    pub kind: LearnerKind,
    state: Fitted,
}

impl Predictor {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        match &self.state {
            Fitted::Linear { coefficients } => (0..x.nrows())
                .map(|i| {
                    coefficients[0]
                        + (0..x.ncols()).map(|j| x[(i, j)] * coefficients[j + 1]).sum::<f64>()
                })
                .collect(),
            Fitted::Logistic(fit) => fit.predict(x),
            Fitted::Forest(f) => f.predict(x),
        }
    }
}

fn fit_ridge(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    let nf = n as f64;
    let means: Vec<f64> = (0..p).map(|j| x.column(j).sum() / nf).collect();
    let ym = y.iter().sum::<f64>() / nf;
    let mut xc = x.clone();
    for j in 0..p {
        xc.column_mut(j).add_scalar_mut(-means[j]);
    }
    let mut gram = xc.transpose() * &xc;
    for j in 0..p {
        gram[(j, j)] += nf * lambda;
    }
    let rhs = xc.transpose() * nalgebra::DVector::from_iterator(n, y.iter().map(|v| v - ym));
    let beta = gram
        .cholesky()
        .ok_or_else(|| Error::Numeric("ridge system not positive definite".into()))?
        .solve(&rhs);
    let b0 = ym - (0..p).map(|j| beta[j] * means[j]).sum::<f64>();
    Ok(std::iter::once(b0).chain(beta.iter().copied()).collect())
}

impl Learner {
    pub fn kind(&self) -> LearnerKind {
        match self {
            Learner::Ols => LearnerKind::Ols,
            Learner::Ridge { .. } => LearnerKind::Ridge,
            Learner::Lasso { .. } => LearnerKind::Lasso,
            Learner::Logistic => LearnerKind::Logistic,
            Learner::Forest(_) => LearnerKind::Forest,
        }
    }

    /// Same learner with its random seed replaced (forests only).
    pub fn with_seed(&self, seed: u64) -> Learner {
        match self {
            Learner::Forest(p) => Learner::Forest(ForestParams { seed, ..p.clone() }),
            other => other.clone(),
        }
    }

    pub fn fit(&self, x: &DMatrix<f64>, y: &[f64]) -> Result<Predictor> {
        let state = match self {
            Learner::Ols => Fitted::Linear { coefficients: fit_ols(x, y, true)?.coefficients },
            Learner::Ridge { lambda } => Fitted::Linear { coefficients: fit_ridge(x, y, *lambda)? },
            Learner::Lasso { lambda } => Fitted::Linear { coefficients: fit_lasso(x, y, *lambda)?.coefficients },
            Learner::Logistic => Fitted::Logistic(fit_logistic(x, y, true)?),
            Learner::Forest(p) => Fitted::Forest(fit_forest(x, y, p)?),
        };
        Ok(Predictor { kind: self.kind(), state })
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Learner::Ols | Learner::Ridge { .. } | Learner::Lasso { .. })
    }
}

/// Out-of-fold predictions and the fold each row belonged to.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossFit {
    pub predictions: Vec<f64>,
    pub folds: Vec<usize>,
    pub k: usize,
}

/// Near-equal folds from a seeded shuffle of `0..n`. `k = 1` puts every
/// row in fold 0.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::Invalid(format!("fold count {k} must lie in 1..={n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream(seed, 0));
    let mut folds = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        folds[row] = pos % k;
    }
    Ok(folds)
}

/// Cross-fitted predictions with `k` seeded folds.
///
/// `k = 1` is the no-split comparison mode: one fit on all rows, predicted
/// in-sample.
pub fn cross_fit(learner: &Learner, x: &DMatrix<f64>, y: &[f64], k: usize, seed: u64) -> Result<CrossFit> {
    let folds = fold_assignment(y.len(), k, seed)?;
    let predictions = cross_fit_with_folds(learner, x, y, &folds, k, seed)?;
    Ok(CrossFit { predictions, folds, k })
}

/// Cross-fitted predictions for a given fold assignment.
pub fn cross_fit_with_folds(
    learner: &Learner,
    x: &DMatrix<f64>,
    y: &[f64],
    folds: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = y.len();
    if x.nrows() != n || folds.len() != n {
        return Err(Error::Invalid("design, response and folds differ in length".into()));
    }
    if k == 1 {
        return Ok(learner.with_seed(derive_seed(seed, 0)).fit(x, y)?.predict(x));
    }
    let parts: Vec<Result<(Vec<usize>, Vec<f64>)>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
            let xt = x.select_rows(train.iter());
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let model = learner.with_seed(derive_seed(seed, f as u64)).fit(&xt, &yt)?;
            Ok((test.clone(), model.predict(&x.select_rows(test.iter()))))
        })
        .collect();
    let mut out = vec![f64::NAN; n];
    for part in parts {
        let (rows, preds) = part?;
        for (i, p) in rows.into_iter().zip(preds) {
            out[i] = p;
        }
    }
    Ok(out)
}
