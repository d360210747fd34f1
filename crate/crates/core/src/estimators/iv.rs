//! Instrumental-variable estimators: Wald, 2SLS and its control-function
//! and three-step variants, and post-LASSO instrument selection.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_covariates, columns, require_binary, EstimateResult, Estimand};
use crate::data::Dataset;
use crate::diagnostics::first_stage_f_cols;
use crate::error::{Error, Result};
use crate::learners::ols::sandwich;
use crate::learners::{fit_lasso, fit_logistic, fit_ols};
use crate::stats::{design, mean_where, subset, var};

const WALD_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IvMode {
    Tsls,
    Tsri,
    ThreeStep,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstStageLink {
    #[default]
    Linear,
    Logistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IvOptions {
    pub mode: IvMode,
    /// Defaults to the dataset's covariates.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    /// Defaults to the dataset's instruments.
    #[serde(default)]
    pub instruments: Option<Vec<String>>,
    #[serde(default)]
    pub link: FirstStageLink,
}

impl IvOptions {
    pub fn new(mode: IvMode) -> Self {
        IvOptions { mode, covariates: None, instruments: None, link: FirstStageLink::Linear }
    }

    pub fn tsls() -> Self {
        IvOptions::new(IvMode::Tsls)
    }

    pub fn covariates<I: IntoIterator<Item = S>, S: Into<String>>(mut self, names: I) -> Self {
        self.covariates = Some(names.into_iter().map(Into::into).collect());
        self
    }

    pub fn instruments<I: IntoIterator<Item = S>, S: Into<String>>(mut self, names: I) -> Self {
        self.instruments = Some(names.into_iter().map(Into::into).collect());
        self
    }

    pub fn link(mut self, link: FirstStageLink) -> Self {
        self.link = link;
        self
    }
}

/// A 2SLS fit. Coefficients follow `(1, X…, D)`.
#[derive(Clone, Debug)]
pub struct TslsFit {
    pub coefficients: Vec<f64>,
    pub cov_hc0: DMatrix<f64>,
    pub cov_homoskedastic: DMatrix<f64>,
    /// `Y − Sβ` at the observed treatment.
    pub residuals: Vec<f64>,
}

impl TslsFit {
    pub fn effect(&self) -> f64 {
        *self.coefficients.last().expect("treatment coefficient")
    }

    pub fn se_hc0(&self) -> f64 {
        let p = self.coefficients.len() - 1;
        self.cov_hc0[(p, p)].max(0.0).sqrt()
    }

    pub fn se_homoskedastic(&self) -> f64 {
        let p = self.coefficients.len() - 1;
        self.cov_homoskedastic[(p, p)].max(0.0).sqrt()
    }
}

/// Two-stage least squares with first-stage design `(1, X, Z)` and
/// second-stage design `(1, X, D)`.
pub fn tsls_fit(y: &[f64], d: &[f64], x: &[&[f64]], z: &[&[f64]]) -> Result<TslsFit> {
    let n = y.len();
    if z.is_empty() {
        return Err(Error::Invalid("2SLS needs at least one instrument".into()));
    }
    let mut first: Vec<&[f64]> = x.to_vec();
    first.extend_from_slice(z);
    let fs = fit_ols(&design(&first, n, false), d, true)?;
    let d_hat = fs.fitted(d);

    let mut proj: Vec<&[f64]> = x.to_vec();
    proj.push(&d_hat);
    let s_hat = design(&proj, n, true);
    let ss = fit_ols(&design(&proj, n, false), y, true).map_err(|e| match e {
        Error::RankDeficient { .. } => Error::IrrelevantInstrument(0.0),
        other => other,
    })?;
    let beta = ss.coefficients;
    let p = beta.len();

    let mut obs: Vec<&[f64]> = x.to_vec();
    obs.push(d);
    let s = design(&obs, n, true);
    let fitted = &s * nalgebra::DVector::from_column_slice(&beta);
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();

    let bread = (s_hat.transpose() * &s_hat)
        .try_inverse()
        .ok_or_else(|| Error::Numeric("singular projected design".into()))?;
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let cov_homoskedastic = &bread * (sse / (n - p) as f64);
    let cov_hc0 = sandwich(&s_hat, &bread, &residuals);
    Ok(TslsFit { coefficients: beta, cov_hc0, cov_homoskedastic, residuals })
}

/// Ratio of the outcome contrast to the treatment contrast across a binary
/// instrument, with a delta-method standard error.
pub fn wald(ds: &Dataset, instrument: &str) -> Result<EstimateResult> {
    let y = ds.outcome()?;
    let d = ds.treatment()?;
    let z = ds.column(instrument)?;
    if z.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::NonBinary { role: "instrument".into(), column: instrument.to_string() });
    }
    let (Some(y1), Some(y0)) = (mean_where(y, z, 1.0), mean_where(y, z, 0.0)) else {
        return Err(Error::Invalid(format!("instrument '{instrument}' needs both levels present")));
    };
    let den = mean_where(d, z, 1.0).unwrap() - mean_where(d, z, 0.0).unwrap();
    if den.abs() <= WALD_TOL {
        return Err(Error::IrrelevantInstrument(den));
    }
    let est = (y1 - y0) / den;
    // Var of (ȳ1 − ȳ0) − β(d̄1 − d̄0), i.e. of the arm means of Y − βD.
    let u: Vec<f64> = y.iter().zip(d).map(|(a, b)| a - est * b).collect();
    let arm = |level: f64| {
        let v = subset(&u, z, level);
        if v.len() < 2 {
            0.0
        } else {
            var(&v) / v.len() as f64
        }
    };
    let se = (arm(1.0) + arm(0.0)).sqrt() / den.abs();
    Ok(EstimateResult::new(Estimand::Late, "wald", est, se, y.len())
        .with_meta("instrument", instrument)
        .with_meta("first_stage_contrast", den))
}

fn resolve(ds: &Dataset, opts: &IvOptions) -> Result<(Vec<String>, Vec<String>)> {
    let covariates = opts.covariates.clone().unwrap_or_else(|| ds.covariates());
    let instruments = opts.instruments.clone().unwrap_or_else(|| ds.instruments());
    if instruments.is_empty() {
        return Err(Error::Invalid("at least one instrument is required".into()));
    }
    if let Some(c) = instruments.iter().find(|z| covariates.contains(z)) {
        return Err(Error::Invalid(format!("column '{c}' is both an instrument and a covariate")));
    }
    check_covariates(ds, &covariates)?;
    check_covariates(ds, &instruments)?;
    Ok((covariates, instruments))
}

fn first_stage_meta(r: EstimateResult, d: &[f64], x: &[&[f64]], z: &[&[f64]]) -> Result<EstimateResult> {
    let f = first_stage_f_cols(d, x, z, false)?;
    Ok(r.with_meta("first_stage_f", f.f).with_meta("first_stage_perfect_fit", f.perfect_fit))
}

/// Linear IV estimation in one of three modes.
pub fn iv_linear(ds: &Dataset, opts: &IvOptions) -> Result<EstimateResult> {
    let (cov_names, z_names) = resolve(ds, opts)?;
    let y = ds.outcome()?;
    let d = ds.treatment()?;
    let n = y.len();
    let x = columns(ds, &cov_names)?;
    let z = columns(ds, &z_names)?;
    let mut first: Vec<&[f64]> = x.clone();
    first.extend_from_slice(&z);

    let r = match opts.mode {
        IvMode::Tsls => {
            if opts.link == FirstStageLink::Logistic {
                return Err(Error::ForbiddenRegression);
            }
            let fit = tsls_fit(y, d, &x, &z)?;
            let r = EstimateResult::new(Estimand::Late, "tsls", fit.effect(), fit.se_hc0(), n)
                .with_meta("se_homoskedastic", fit.se_homoskedastic());
            first_stage_meta(r, d, &x, &z)?
        }
        IvMode::Tsri => {
            let resid: Vec<f64> = match opts.link {
                FirstStageLink::Linear => fit_ols(&design(&first, n, false), d, true)?.residuals,
                FirstStageLink::Logistic => {
                    require_binary(d, "treatment")?;
                    let p = fit_logistic(&design(&first, n, false), d, true)?.predict(&design(&first, n, false));
                    d.iter().zip(p).map(|(a, b)| a - b).collect()
                }
            };
            let mut cols: Vec<&[f64]> = x.clone();
            cols.push(d);
            cols.push(&resid);
            let fit = fit_ols(&design(&cols, n, false), y, true)?;
            let j = 1 + x.len();
            let r = EstimateResult::new(Estimand::Late, "tsri", fit.coefficients[j], fit.se_hc0(j), n)
                .with_meta("control_function_coef", fit.coefficients[j + 1])
                .with_meta("se_homoskedastic", fit.se_homoskedastic(j))
                .with_meta("se_method", "second-stage HC0, first stage treated as known");
            first_stage_meta(r, d, &x, &z)?
        }
        IvMode::ThreeStep => {
            require_binary(d, "treatment")?;
            let fd = design(&first, n, false);
            let p_hat = fit_logistic(&fd, d, true)?.predict(&fd);
            let fit = tsls_fit(y, d, &x, &[&p_hat])?;
            let r = EstimateResult::new(Estimand::Late, "three_step", fit.effect(), fit.se_hc0(), n)
                .with_meta("se_homoskedastic", fit.se_homoskedastic());
            first_stage_meta(r, d, &x, &[&p_hat])?
        }
    };
    Ok(r.with_meta("link", opts.link)
        .with_meta("covariates", &cov_names)
        .with_meta("instruments", &z_names))
}

/// LASSO-selected instruments followed by 2SLS on the retained set.
///
/// The LASSO uses the `(1/2n)‖·‖² + λ‖·‖₁` objective on standardized columns
/// and penalizes covariates and instruments alike; covariates always enter
/// the 2SLS fit.
pub fn post_lasso_iv(ds: &Dataset, covariates: &[String], instruments: &[String], lambda: f64) -> Result<EstimateResult> {
    let opts = IvOptions::tsls().covariates(covariates.to_vec()).instruments(instruments.to_vec());
    let (cov_names, z_names) = resolve(ds, &opts)?;
    let y = ds.outcome()?;
    let d = ds.treatment()?;
    let n = y.len();
    let x = columns(ds, &cov_names)?;
    let z = columns(ds, &z_names)?;
    let mut first: Vec<&[f64]> = x.clone();
    first.extend_from_slice(&z);
    let lasso = fit_lasso(&design(&first, n, false), d, lambda)?;
    let k = x.len();
    let kept: Vec<usize> = (0..z.len()).filter(|&j| lasso.coefficients[1 + k + j] != 0.0).collect();
    if kept.is_empty() {
        return Err(Error::NoInstrumentsRetained);
    }
    let zk: Vec<&[f64]> = kept.iter().map(|&j| z[j]).collect();
    let retained: Vec<&String> = kept.iter().map(|&j| &z_names[j]).collect();
    let fit = tsls_fit(y, d, &x, &zk)?;
    let r = EstimateResult::new(Estimand::Late, "post_lasso_iv", fit.effect(), fit.se_hc0(), n)
        .with_meta("lambda", lambda)
        .with_meta("retained_instruments", &retained)
        .with_meta("se_homoskedastic", fit.se_homoskedastic());
    first_stage_meta(r, d, &x, &zk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RoleMap;
    use crate::estimators::fixtures::{td1, td2_with_instrument};
    use crate::estimators::{diff_in_means, ols_adjust};
    use crate::learners::lambda_max;

    #[test]
    fn td1_wald_and_tsls() {
        // Outcome means 1.5 / 2.5 and treatment means 0.25 / 0.75 by z.
        let ds = td1();
        let w = wald(&ds, "z").unwrap();
        assert!((w.estimate - 2.0).abs() < 1e-12);
        let t = iv_linear(&ds, &IvOptions::tsls()).unwrap();
        assert!((t.estimate - w.estimate).abs() < 1e-10);
        assert!((t.meta_f64("first_stage_f").unwrap() - 2.0).abs() < 1e-9);
        let c = iv_linear(&ds, &IvOptions::new(IvMode::Tsri)).unwrap();
        assert!((c.estimate - t.estimate).abs() < 1e-10);
    }

    #[test]
    fn wald_se_matches_tsls_hc0() {
        // With a single binary instrument the delta-method variance and the
        // HC0 2SLS variance differ only by the n−1 versus n denominators.
        let ds = crate::scm::simulate(&crate::scm::ScmSpec::default(), 400, 11).unwrap();
        let w = wald(&ds, "z1").unwrap();
        let t = iv_linear(&ds, &IvOptions::tsls().covariates(Vec::<String>::new())).unwrap();
        assert!((w.estimate - t.estimate).abs() < 1e-10);
        assert!((w.std_err / t.std_err - 1.0).abs() < 0.01);
    }

    #[test]
    fn perfect_first_stage() {
        let ds = td1();
        let z = ds.column("z").unwrap().to_vec();
        let ds = Dataset::new(
            vec![("z".into(), z.clone()), ("d".into(), z), ("y".into(), ds.outcome().unwrap().to_vec())],
            RoleMap::new().instruments(["z"]).treatment("d").outcome("y"),
        )
        .unwrap();
        let t = iv_linear(&ds, &IvOptions::tsls()).unwrap();
        assert!((t.estimate - ols_adjust(&ds, &[]).unwrap().estimate).abs() < 1e-12);
        assert!((wald(&ds, "z").unwrap().estimate - diff_in_means(&ds).unwrap().estimate).abs() < 1e-12);
    }

    #[test]
    fn guards() {
        let ds = td1();
        let e = iv_linear(&ds, &IvOptions::tsls().link(FirstStageLink::Logistic)).unwrap_err();
        assert_eq!(e, Error::ForbiddenRegression);
        let ds2 = td2_with_instrument();
        assert!(iv_linear(&ds2, &IvOptions::tsls().covariates(["x", "z"])).is_err());
        let flat = td1().with_column("z", vec![1., 0., 0., 1., 1., 1., 0., 0.]).unwrap();
        // d = (0,0,0,1,0,1,1,1): both z levels have two treated rows.
        assert!(matches!(wald(&flat, "z"), Err(Error::IrrelevantInstrument(_))));
        let dup = ds2.with_column("z2", ds2.column("z").unwrap().to_vec()).unwrap();
        assert!(matches!(
            iv_linear(&dup, &IvOptions::tsls().instruments(["z", "z2"])),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn three_step_and_logistic_tsri_run() {
        let ds = crate::scm::simulate(&crate::scm::ScmSpec::default(), 2000, 5).unwrap();
        for mode in [IvMode::ThreeStep, IvMode::Tsri] {
            let r = iv_linear(&ds, &IvOptions::new(mode).link(FirstStageLink::Logistic)).unwrap();
            assert!((r.estimate - 1.0).abs() < 0.5, "{mode:?} {}", r.estimate);
        }
    }

    #[test]
    fn post_lasso_limits() {
        let ds = crate::scm::simulate(&crate::scm::ScmSpec::default(), 500, 6).unwrap();
        let x = vec!["x1".to_string()];
        let z = vec!["z1".to_string()];
        let a = post_lasso_iv(&ds, &x, &z, 0.0).unwrap();
        let b = iv_linear(&ds, &IvOptions::tsls()).unwrap();
        assert!((a.estimate - b.estimate).abs() < 1e-8);
        let cols = [ds.column("x1").unwrap(), ds.column("z1").unwrap()];
        let lmax = lambda_max(&design(&cols, 500, false), ds.treatment().unwrap());
        assert_eq!(post_lasso_iv(&ds, &x, &z, lmax * 1.01).unwrap_err(), Error::NoInstrumentsRetained);
    }
}
