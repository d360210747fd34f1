//! Inverse-probability weighting and its augmented (doubly robust) form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{arm_outcomes, matrix, propensities, require_binary, EstimateResult, Estimand, NuisanceSpec, PropensitySpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};
use rand::Rng;

/// Seeded nonparametric bootstrap of the point estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bootstrap {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for Bootstrap {
    fn default() -> Self {
        Bootstrap { resamples: 500, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IptwOptions {
    pub propensity: PropensitySpec,
    pub stabilize: bool,
    /// Propensities are clamped into `[low, high]` when set.
    pub trim: Option<(f64, f64)>,
    /// Unnormalized weights instead of the default Hájek form.
    pub horvitz_thompson: bool,
    /// Replaces the sandwich standard error by a bootstrap one.
    pub bootstrap: Option<Bootstrap>,
}

impl Default for IptwOptions {
    fn default() -> Self {
        IptwOptions {
            propensity: PropensitySpec::logistic(),
            stabilize: false,
            trim: None,
            horvitz_thompson: false,
            bootstrap: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AiptwOptions {
    pub propensity: PropensitySpec,
    pub outcome: NuisanceSpec,
    pub trim: Option<(f64, f64)>,
}

impl Default for AiptwOptions {
    fn default() -> Self {
        AiptwOptions {
            propensity: PropensitySpec::logistic(),
            outcome: NuisanceSpec::new(crate::learners::Learner::Ols),
            trim: None,
        }
    }
}

/// Inverse-probability weights for the observed arm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub stabilized: bool,
    pub trim_bounds: Option<(f64, f64)>,
    /// Rows whose propensity was moved by trimming.
    pub n_trimmed: usize,
}

/// Applies trimming, or checks positivity when there is none.
fn prepare(p: &[f64], trim: Option<(f64, f64)>) -> Result<(Vec<f64>, usize)> {
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite propensity".into()));
    }
    match trim {
        Some((lo, hi)) => {
            if !(0.0 < lo && lo < hi && hi < 1.0) {
                return Err(Error::Invalid(format!("trim bounds ({lo}, {hi}) must satisfy 0 < low < high < 1")));
            }
            let moved = p.iter().filter(|&&v| v < lo || v > hi).count();
            Ok((p.iter().map(|v| v.clamp(lo, hi)).collect(), moved))
        }
        None => {
            let bad = p.iter().filter(|&&v| v <= 0.0 || v >= 1.0).count();
            if bad > 0 {
                return Err(Error::Positivity { count: bad });
            }
            Ok((p.to_vec(), 0))
        }
    }
}

pub fn iptw_weights(d: &[f64], p: &[f64], stabilize: bool, trim: Option<(f64, f64)>) -> Result<WeightVector> {
    require_binary(d, "treatment")?;
    let (p, n_trimmed) = prepare(p, trim)?;
    let share = d.iter().sum::<f64>() / d.len() as f64;
    let weights = d
        .iter()
        .zip(&p)
        .map(|(&t, &e)| {
            let (num, den) = if t == 1.0 { (share, e) } else { (1.0 - share, 1.0 - e) };
            if stabilize {
                num / den
            } else {
                1.0 / den
            }
        })
        .collect();
    Ok(WeightVector { weights, stabilized: stabilize, trim_bounds: trim, n_trimmed })
}

/// Weighted contrast and its influence-function standard error, with
/// propensities treated as known.
fn contrast(y: &[f64], d: &[f64], p: &[f64], ht: bool) -> Result<(f64, f64)> {
    let n = y.len() as f64;
    if !d.contains(&1.0) || !d.contains(&0.0) {
        return Err(Error::EmptyArm("weighting needs both arms".into()));
    }
    if ht {
        let psi: Vec<f64> = (0..y.len())
            .map(|i| d[i] * y[i] / p[i] - (1.0 - d[i]) * y[i] / (1.0 - p[i]))
            .collect();
        let est = psi.iter().sum::<f64>() / n;
        let se = psi.iter().map(|v| (v - est).powi(2)).sum::<f64>().sqrt() / n;
        return Ok((est, se));
    }
    let (mut s1, mut w1, mut s0, mut w0) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..y.len() {
        if d[i] == 1.0 {
            s1 += y[i] / p[i];
            w1 += 1.0 / p[i];
        } else {
            s0 += y[i] / (1.0 - p[i]);
            w0 += 1.0 / (1.0 - p[i]);
        }
    }
    let (m1, m0) = (s1 / w1, s0 / w0);
    let (w1, w0) = (w1 / n, w0 / n);
    let ss: f64 = (0..y.len())
        .map(|i| {
            let v = if d[i] == 1.0 {
                (y[i] - m1) / (p[i] * w1)
            } else {
                -(y[i] - m0) / ((1.0 - p[i]) * w0)
            };
            v * v
        })
        .sum();
    Ok((m1 - m0, ss.sqrt() / n))
}

fn bootstrap_se<F>(n: usize, b: Bootstrap, estimate: F) -> (f64, usize)
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    let draws: Vec<Option<f64>> = (0..b.resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(derive_seed(b.seed, r as u64), 0);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            estimate(&idx).ok()
        })
        .collect();
    let ok: Vec<f64> = draws.iter().flatten().copied().collect();
    let failed = draws.len() - ok.len();
    let se = if ok.len() >= 2 { crate::stats::var(&ok).sqrt() } else { f64::NAN };
    (se, failed)
}

fn iptw_core(ds: &Dataset, opts: &IptwOptions) -> Result<(f64, f64, WeightVector)> {
    let y = ds.outcome()?;
    let d = ds.treatment()?;
    require_binary(d, "treatment")?;
    let raw = propensities(ds, &opts.propensity, &vec![0; y.len()], 1, 0)?;
    let w = iptw_weights(d, &raw, opts.stabilize, opts.trim)?;
    let (p, _) = prepare(&raw, opts.trim)?;
    let (est, se) = contrast(y, d, &p, opts.horvitz_thompson)?;
    Ok((est, se, w))
}

/// Inverse-probability-of-treatment weighted ATE.
///
/// Stabilization rescales each arm's weights by a constant, so it changes
/// the reported weights but neither the Hájek nor the Horvitz–Thompson
/// point estimate.
pub fn iptw(ds: &Dataset, opts: &IptwOptions) -> Result<EstimateResult> {
    let (est, mut se, w) = iptw_core(ds, opts)?;
    let max_weight = w.weights.iter().copied().fold(0.0, f64::max);
    let mut r_meta = vec![("se_method", serde_json::json!("sandwich"))];
    if let Some(b) = opts.bootstrap {
        let (bse, failed) = bootstrap_se(ds.n_rows(), b, |idx| Ok(iptw_core(&ds.select_rows(idx), opts)?.0));
        r_meta = vec![
            ("se_method", serde_json::json!("bootstrap")),
            ("sandwich_se", serde_json::json!(se)),
            ("bootstrap_resamples", serde_json::json!(b.resamples)),
            ("bootstrap_failures", serde_json::json!(failed)),
        ];
        se = bse;
    }
    let mut r = EstimateResult::new(Estimand::Ate, "iptw", est, se, ds.n_rows())
        .with_meta("propensity", opts.propensity.describe())
        .with_meta("form", if opts.horvitz_thompson { "horvitz_thompson" } else { "hajek" })
        .with_meta("stabilized", opts.stabilize)
        .with_meta("trim_bounds", opts.trim)
        .with_meta("n_trimmed", w.n_trimmed)
        .with_meta("max_weight", max_weight);
    for (k, v) in r_meta {
        r = r.with_meta(k, v);
    }
    Ok(r)
}

/// Augmented IPW: outcome-model contrast plus a weighted residual correction.
pub fn aiptw(ds: &Dataset, opts: &AiptwOptions) -> Result<EstimateResult> {
    let y = ds.outcome()?;
    let d = ds.treatment()?;
    require_binary(d, "treatment")?;
    let n = y.len();
    let zeros = vec![0; n];
    let raw = propensities(ds, &opts.propensity, &zeros, 1, 0)?;
    let (p, n_trimmed) = prepare(&raw, opts.trim)?;
    let feats = opts.outcome.features(ds);
    super::check_covariates(ds, &feats)?;
    let x = matrix(ds, &feats)?;
    let (mu0, mu1) = arm_outcomes(&opts.outcome.learner, &x, y, d, &zeros, 1, 0)?;
    let psi: Vec<f64> = (0..n)
        .map(|i| {
            mu1[i] - mu0[i] + d[i] * (y[i] - mu1[i]) / p[i] - (1.0 - d[i]) * (y[i] - mu0[i]) / (1.0 - p[i])
        })
        .collect();
    let est = psi.iter().sum::<f64>() / n as f64;
    let se = psi.iter().map(|v| (v - est).powi(2)).sum::<f64>().sqrt() / n as f64;
    Ok(EstimateResult::new(Estimand::Ate, "aiptw", est, se, n)
        .with_meta("propensity", opts.propensity.describe())
        .with_meta("outcome_model", &opts.outcome.learner)
        .with_meta("trim_bounds", opts.trim)
        .with_meta("n_trimmed", n_trimmed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RoleMap;
    use crate::estimators::fixtures::td2;
    use crate::estimators::{diff_in_means, NuisanceSpec};
    use crate::learners::Learner;

    fn saturated() -> IptwOptions {
        IptwOptions { propensity: PropensitySpec::Model(NuisanceSpec::on(Learner::Logistic, ["x"])), ..Default::default() }
    }

    #[test]
    fn td2_saturated_propensity() {
        // p = 1/4 at x = 0 and 3/4 at x = 1. Treated: (1/.25 + 3·2/.75)/8 =
        // 1.5; controls: (1/.25)/8 = 0.5.
        let ds = td2();
        for ht in [false, true] {
            for stabilize in [false, true] {
                let r = iptw(&ds, &IptwOptions { horvitz_thompson: ht, stabilize, ..saturated() }).unwrap();
                assert!((r.estimate - 1.0).abs() < 1e-7, "{ht} {stabilize} {}", r.estimate);
            }
        }
    }

    #[test]
    fn uniform_weights_match_difference() {
        let ds = td2().with_column("half", vec![0.5; 8]).unwrap();
        let r = iptw(&ds, &IptwOptions { propensity: PropensitySpec::Known("half".into()), ..Default::default() }).unwrap();
        assert_eq!(r.estimate, diff_in_means(&ds).unwrap().estimate);
    }

    #[test]
    fn positivity_and_trim() {
        let p = vec![0.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5];
        let ds = td2().with_column("p", p).unwrap();
        let known = PropensitySpec::Known("p".into());
        let err = iptw(&ds, &IptwOptions { propensity: known.clone(), ..Default::default() }).unwrap_err();
        assert_eq!(err, Error::Positivity { count: 1 });
        let r = iptw(&ds, &IptwOptions { propensity: known, trim: Some((0.05, 0.95)), ..Default::default() }).unwrap();
        assert_eq!(r.metadata["n_trimmed"], 1);
    }

    #[test]
    fn stabilized_weights_average_one_per_arm() {
        let d = [1., 0., 0., 0., 1., 1., 1., 0.];
        let p = [0.25, 0.25, 0.25, 0.25, 0.75, 0.75, 0.75, 0.75];
        let w = iptw_weights(&d, &p, true, None).unwrap();
        let arm = |t: f64| {
            let v: Vec<f64> = (0..8).filter(|&i| d[i] == t).map(|i| w.weights[i]).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!((arm(1.0) - 1.0).abs() < 0.05 && (arm(0.0) - 1.0).abs() < 0.05);
        assert!(w.weights.iter().all(|&v| v > 0.0 && v.is_finite()));
    }

    #[test]
    fn bootstrap_is_seeded() {
        let opts = IptwOptions { bootstrap: Some(Bootstrap { resamples: 50, seed: 3 }), ..saturated() };
        let ds = crate::scm::simulate(&crate::scm::ScmSpec::default(), 300, 2).unwrap();
        let ds = ds.with_roles(RoleMap::new().outcome("y").treatment("d").covariates(["x1"])).unwrap();
        let opts = IptwOptions { propensity: PropensitySpec::logistic(), ..opts };
        let a = iptw(&ds, &opts).unwrap();
        let b = iptw(&ds, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.std_err > 0.0);
        assert_eq!(a.metadata["se_method"], "bootstrap");
    }

    #[test]
    fn aiptw_saturated_and_null() {
        let ds = td2();
        let opts = AiptwOptions {
            propensity: PropensitySpec::Model(NuisanceSpec::on(Learner::Logistic, ["x"])),
            outcome: NuisanceSpec::on(Learner::Ols, ["x"]),
            trim: None,
        };
        assert!((aiptw(&ds, &opts).unwrap().estimate - 1.0).abs() < 1e-12);

        let x = ds.column("x").unwrap().to_vec();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 3.0 * v).collect();
        let only_x = Dataset::new(
            vec![("x".into(), x), ("d".into(), ds.treatment().unwrap().to_vec()), ("y".into(), y)],
            RoleMap::new().covariates(["x"]).treatment("d").outcome("y"),
        )
        .unwrap();
        assert!(aiptw(&only_x, &opts).unwrap().estimate.abs() < 1e-10);

        let flat = only_x.with_column("y", vec![4.0; 8]).unwrap();
        assert!(aiptw(&flat, &opts).unwrap().estimate.abs() < 1e-12);
    }
}
