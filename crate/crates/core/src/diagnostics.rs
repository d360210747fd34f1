//! Assumption probes: covariate balance, instrument strength,
//! overidentification, overlap and the OLS/2SLS bias ratio.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{columns, tsls_fit};
use crate::learners::fit_ols;
use crate::stats::{chi2_sf, design, f_sf, mean, mean_where, subset, var};

/// Weight above which a row counts as extreme.
pub const EXTREME_WEIGHT: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub mean0: f64,
    pub mean1: f64,
    pub pooled_sd: f64,
    pub smd: f64,
    pub zero_variance: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceTable {
    pub group: String,
    pub rows: Vec<BalanceRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstStageF {
    /// `+∞` when the first stage fits perfectly.
    pub f: f64,
    pub df1: usize,
    pub df2: usize,
    pub p: f64,
    pub robust: bool,
    pub perfect_fit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SarganJ {
    pub j: f64,
    pub df: usize,
    /// Absent in the just-identified case.
    pub p: Option<f64>,
    pub applicable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub min: f64,
    pub max: f64,
    pub below_01: usize,
    pub below_05: usize,
    pub above_95: usize,
    pub above_99: usize,
    /// Rows where `1/p` or `1/(1−p)` exceeds [`EXTREME_WEIGHT`].
    pub extreme_weights: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasRatio {
    pub bias_ols: f64,
    pub bias_tsls: f64,
    pub ratio: Option<f64>,
    pub tsls_more_sensitive: bool,
}

/// Everything `diagnose` can report; sections that were not requested or
/// do not apply are absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balance: Option<BalanceTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_stage: Option<FirstStageF>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sargan: Option<SarganJ>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap: Option<PositivityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_ratio: Option<BiasRatio>,
}

fn binary(ds: &Dataset, name: &str, role: &str) -> Result<Vec<f64>> {
    let g = ds.column(name)?;
    if g.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::NonBinary { role: role.into(), column: name.into() });
    }
    if !g.contains(&0.0) || !g.contains(&1.0) {
        return Err(Error::Invalid(format!("{role} column '{name}' needs both levels present")));
    }
    Ok(g.to_vec())
}

/// Standardized mean differences of `covariates` across a binary `group`.
pub fn smd_table(ds: &Dataset, group: &str, covariates: &[String]) -> Result<BalanceTable> {
    let g = binary(ds, group, "group")?;
    let mut rows = Vec::with_capacity(covariates.len());
    for c in covariates {
        let x = ds.column(c)?;
        let (a, b) = (subset(x, &g, 0.0), subset(x, &g, 1.0));
        let sv = |v: &[f64]| if v.len() < 2 { 0.0 } else { var(v) };
        let pooled_sd = ((sv(&a) + sv(&b)) / 2.0).sqrt();
        let (mean0, mean1) = (mean(&a), mean(&b));
        let zero_variance = pooled_sd == 0.0;
        let smd = if zero_variance { 0.0 } else { (mean1 - mean0).abs() / pooled_sd };
        rows.push(BalanceRow { covariate: c.clone(), mean0, mean1, pooled_sd, smd, zero_variance });
    }
    Ok(BalanceTable { group: group.to_string(), rows })
}

/// First-stage F from raw columns.
pub fn first_stage_f_cols(d: &[f64], x: &[&[f64]], z: &[&[f64]], robust: bool) -> Result<FirstStageF> {
    let n = d.len();
    let mut cols: Vec<&[f64]> = x.to_vec();
    cols.extend_from_slice(z);
    let full = fit_ols(&design(&cols, n, false), d, true)?;
    let df1 = z.len();
    let df2 = n - (1 + x.len() + z.len());
    let sse = full.sse();
    let sst: f64 = {
        let m = mean(d);
        d.iter().map(|v| (v - m).powi(2)).sum()
    };
    let perfect_fit = sse <= 1e-24 * sst.max(1.0);
    let f = if perfect_fit {
        f64::INFINITY
    } else if robust {
        let idx: Vec<usize> = (1 + x.len()..1 + x.len() + df1).collect();
        let b = nalgebra::DVector::from_iterator(df1, idx.iter().map(|&i| full.coefficients[i]));
        let v = nalgebra::DMatrix::from_fn(df1, df1, |a, c| full.cov_hc0[(idx[a], idx[c])]);
        let vinv = v.try_inverse().ok_or_else(|| Error::Numeric("singular robust covariance".into()))?;
        (b.transpose() * vinv * &b)[(0, 0)] / df1 as f64
    } else {
        let restricted = fit_ols(&design(x, n, false), d, true)?;
        ((restricted.sse() - sse) / df1 as f64) / (sse / df2 as f64)
    };
    Ok(FirstStageF { f, df1, df2, p: f_sf(f, df1 as f64, df2 as f64), robust, perfect_fit })
}

/// Joint test of the instrument coefficients in the regression of D on
/// `(1, X, Z)`. `robust` switches to the HC0 Wald form divided by `df1`.
pub fn first_stage_f(ds: &Dataset, covariates: &[String], instruments: &[String], robust: bool) -> Result<FirstStageF> {
    if instruments.is_empty() {
        return Err(Error::Invalid("at least one instrument is required".into()));
    }
    first_stage_f_cols(ds.treatment()?, &columns(ds, covariates)?, &columns(ds, instruments)?, robust)
}

/// Sargan overidentification statistic `n·R²` of the 2SLS residuals on
/// `(1, X, Z)`.
pub fn sargan_j(ds: &Dataset, covariates: &[String], instruments: &[String]) -> Result<SarganJ> {
    let y = ds.outcome()?;
    let d = ds.treatment()?;
    let x = columns(ds, covariates)?;
    let z = columns(ds, instruments)?;
    let fit = tsls_fit(y, d, &x, &z)?;
    let df = z.len() - 1;
    if df == 0 {
        return Ok(SarganJ { j: 0.0, df, p: None, applicable: false });
    }
    let mut cols = x.clone();
    cols.extend_from_slice(&z);
    let n = y.len();
    let aux = fit_ols(&design(&cols, n, false), &fit.residuals, true)?;
    let e = &fit.residuals;
    let m = mean(e);
    let sst: f64 = e.iter().map(|v| (v - m).powi(2)).sum();
    let r2 = if sst > 0.0 { 1.0 - aux.sse() / sst } else { 0.0 };
    let j = n as f64 * r2;
    Ok(SarganJ { j, df, p: Some(chi2_sf(j, df as f64)), applicable: true })
}

/// Threshold counts of a propensity vector.
pub fn overlap_report(p: &[f64]) -> Result<PositivityReport> {
    if p.is_empty() {
        return Err(Error::Invalid("empty propensity vector".into()));
    }
    if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Invalid(format!("propensity {v} lies outside [0, 1]")));
    }
    let count = |f: &dyn Fn(f64) -> bool| p.iter().filter(|&&v| f(v)).count();
    Ok(PositivityReport {
        min: p.iter().copied().fold(f64::INFINITY, f64::min),
        max: p.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        below_01: count(&|v| v < 0.01),
        below_05: count(&|v| v < 0.05),
        above_95: count(&|v| v > 0.95),
        above_99: count(&|v| v > 0.99),
        extreme_weights: count(&|v| 1.0 / v > EXTREME_WEIGHT || 1.0 / (1.0 - v) > EXTREME_WEIGHT),
    })
}

/// Bias from omitting `omitted` (with outcome coefficient `beta2`) in the
/// unadjusted treatment contrast and in the Wald ratio.
pub fn bias_ratio(ds: &Dataset, omitted: &str, instrument: &str, beta2: f64) -> Result<BiasRatio> {
    let d = binary(ds, &ds.treatment_name().unwrap_or_default(), "treatment")?;
    let z = binary(ds, instrument, "instrument")?;
    let x = ds.column(omitted)?;
    let by = |v: &[f64], g: &[f64]| mean_where(v, g, 1.0).unwrap() - mean_where(v, g, 0.0).unwrap();
    let den = by(&d, &z);
    if den.abs() <= 1e-10 {
        return Err(Error::IrrelevantInstrument(den));
    }
    let bias_ols = beta2 * by(x, &d);
    let bias_tsls = beta2 * by(x, &z) / den;
    let ratio = (bias_ols != 0.0).then(|| bias_tsls.abs() / bias_ols.abs());
    Ok(BiasRatio { bias_ols, bias_tsls, ratio, tsls_more_sensitive: ratio.is_some_and(|r| r > 1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::fixtures::{td1, td2, td2_with_instrument};
    use crate::estimators::{diff_in_means, ols_adjust};

    #[test]
    fn td1_values() {
        // d by z: means 0.25 / 0.75, each group variance 0.25 (n−1 form),
        // pooled SD 0.5, SMD 1. ANOVA: SSR 0.5 on 1 df, SSE 1.5 on 6 df.
        let ds = td1();
        let t = smd_table(&ds, "z", &["d".into()]).unwrap();
        assert!((t.rows[0].smd - 1.0).abs() < 1e-12);
        let f = first_stage_f(&ds, &[], &["z".into()], false).unwrap();
        assert!((f.f - 2.0).abs() < 1e-12);
        assert_eq!((f.df1, f.df2), (1, 6));
    }

    #[test]
    fn balance_edge_cases() {
        let ds = td1().with_column("c", vec![5.0; 8]).unwrap();
        let t = smd_table(&ds, "z", &["c".into()]).unwrap();
        assert!(t.rows[0].zero_variance && t.rows[0].smd == 0.0);
        assert!(smd_table(&ds, "y", &["c".into()]).is_err());
    }

    #[test]
    fn perfect_first_stage_is_infinite() {
        let ds = td1().with_column("zz", td1().column("d").unwrap().to_vec()).unwrap();
        let f = first_stage_f(&ds, &[], &["zz".into()], false).unwrap();
        assert!(f.perfect_fit && f.f.is_infinite());
    }

    #[test]
    fn robust_f_single_instrument_is_squared_t() {
        let ds = crate::scm::simulate(&crate::scm::ScmSpec::default(), 300, 4).unwrap();
        let f = first_stage_f(&ds, &["x1".into()], &["z1".into()], true).unwrap();
        let cols = [ds.column("x1").unwrap(), ds.column("z1").unwrap()];
        let fit = fit_ols(&design(&cols, 300, false), ds.treatment().unwrap(), true).unwrap();
        let t = fit.coefficients[2] / fit.se_hc0(2);
        assert!((f.f - t * t).abs() < 1e-9);
    }

    #[test]
    fn sargan_just_identified() {
        let s = sargan_j(&td1(), &[], &["z".into()]).unwrap();
        assert!(!s.applicable && s.p.is_none() && s.df == 0);
    }

    #[test]
    fn overlap_counts() {
        let r = overlap_report(&[0.5; 4]).unwrap();
        assert_eq!(r.below_01 + r.below_05 + r.above_95 + r.above_99 + r.extreme_weights, 0);
        let r = overlap_report(&[0.001, 0.5]).unwrap();
        assert_eq!(r.below_01, 1);
        assert!(r.extreme_weights >= 1);
        let r = overlap_report(&[0.25, 0.75, 0.25, 0.75]).unwrap();
        assert_eq!(r.extreme_weights + r.below_05 + r.above_95, 0);
        assert!(overlap_report(&[1.2]).is_err());
    }

    #[test]
    fn td2_bias_components() {
        let ds = td2_with_instrument();
        let b = bias_ratio(&ds, "x", "z", 1.0).unwrap();
        assert!((b.bias_ols - 0.5).abs() < 1e-12);
        let gap = diff_in_means(&td2()).unwrap().estimate - ols_adjust(&td2(), &["x".into()]).unwrap().estimate;
        assert!((b.bias_ols - gap).abs() < 1e-12);
        assert_eq!(b.bias_tsls, 0.0);
        assert_eq!(b.ratio, Some(0.0));
        assert!(!b.tsls_more_sensitive);
    }
}
