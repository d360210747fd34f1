//! Replicated simulation scenarios and their comparison with theory.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{
    aiptw, diff_in_means, dml_estimate, iptw, iv_linear, ols_adjust, post_lasso_iv, tmle_ate, wald, AiptwOptions,
    DmlOptions, EstimateResult, IptwOptions, IvMode, IvOptions, TmleOptions,
};
use crate::rng::derive_seed;
use crate::scm::{oracle_effects, predicted_biases, simulate, ScmSpec, TheoryPrediction};
use crate::stats::{median, Z95};

/// Probe size used for the theory columns of a summary.
pub const DEFAULT_PROBE: usize = 1_000_000;

/// One estimator invocation, as written in a scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum EstimatorCall {
    Diff,
    Ols {
        #[serde(default)]
        covariates: Option<Vec<String>>,
    },
    Iptw(IptwOptions),
    Aiptw(AiptwOptions),
    Wald {
        #[serde(default)]
        instrument: Option<String>,
    },
    Iv(IvOptions),
    PostLassoIv {
        #[serde(default)]
        covariates: Option<Vec<String>>,
        #[serde(default)]
        instruments: Option<Vec<String>>,
        lambda: f64,
    },
    Dml(DmlOptions),
    Tmle(TmleOptions),
}

impl EstimatorCall {
    pub fn name(&self) -> String {
        match self {
            EstimatorCall::Diff => "diff".into(),
            EstimatorCall::Ols { .. } => "ols".into(),
            EstimatorCall::Iptw(_) => "iptw".into(),
            EstimatorCall::Aiptw(_) => "aiptw".into(),
            EstimatorCall::Wald { .. } => "wald".into(),
            EstimatorCall::Iv(o) => match o.mode {
                IvMode::Tsls => "tsls".into(),
                IvMode::Tsri => "tsri".into(),
                IvMode::ThreeStep => "three_step".into(),
            },
            EstimatorCall::PostLassoIv { .. } => "post_lasso_iv".into(),
            EstimatorCall::Dml(o) => format!("dml_{:?}", o.mode).to_lowercase(),
            EstimatorCall::Tmle(_) => "tmle".into(),
        }
    }

    /// Runs the estimator. `seed` replaces the seed of estimators that
    /// split or resample.
    pub fn run(&self, ds: &Dataset, seed: u64) -> Result<EstimateResult> {
        match self {
            EstimatorCall::Diff => diff_in_means(ds),
            EstimatorCall::Ols { covariates } => ols_adjust(ds, &covariates.clone().unwrap_or_else(|| ds.covariates())),
            EstimatorCall::Iptw(o) => {
                let mut o = o.clone();
                if let Some(b) = o.bootstrap.as_mut() {
                    b.seed = seed;
                }
                iptw(ds, &o)
            }
            EstimatorCall::Aiptw(o) => aiptw(ds, o),
            EstimatorCall::Wald { instrument } => {
                let z = match instrument {
                    Some(z) => z.clone(),
                    None => ds
                        .instruments()
                        .first()
                        .cloned()
                        .ok_or_else(|| Error::Roles("dataset declares no instrument".into()))?,
                };
                wald(ds, &z)
            }
            EstimatorCall::Iv(o) => iv_linear(ds, o),
            EstimatorCall::PostLassoIv { covariates, instruments, lambda } => post_lasso_iv(
                ds,
                &covariates.clone().unwrap_or_else(|| ds.covariates()),
                &instruments.clone().unwrap_or_else(|| ds.instruments()),
                *lambda,
            ),
            EstimatorCall::Dml(o) => dml_estimate(ds, &DmlOptions { seed, ..o.clone() }),
            EstimatorCall::Tmle(o) => tmle_ate(ds, &TmleOptions { seed, ..o.clone() }),
        }
    }

    /// Which theory prediction, if any, this call's bias should match.
    fn theory_quantity(&self, spec: &ScmSpec) -> Option<&'static str> {
        let xs: Vec<String> = (1..=spec.k_covariates).map(|i| format!("x{i}")).collect();
        let default_x = |c: &Option<Vec<String>>| c.as_ref().is_none_or(|c| *c == xs);
        match self {
            EstimatorCall::Diff if spec.k_covariates == 0 => Some("ols_bias"),
            EstimatorCall::Ols { covariates } if default_x(covariates) => Some("ols_bias"),
            EstimatorCall::Wald { .. } if spec.j_instruments == 1 && spec.k_covariates == 0 => {
                Some("tsls_inconsistency")
            }
            EstimatorCall::Iv(o)
                if o.mode == IvMode::Tsls && default_x(&o.covariates) && o.instruments.is_none() =>
            {
                Some("tsls_inconsistency")
            }
            _ => None,
        }
    }
}

/// An estimator with the label it is reported under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedEstimator {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(flatten)]
    pub call: EstimatorCall,
}

impl NamedEstimator {
    pub fn new(label: impl Into<String>, call: EstimatorCall) -> Self {
        NamedEstimator { label: Some(label.into()), call }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.call.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    #[default]
    Ate,
    Late,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub spec: ScmSpec,
    pub n: usize,
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    pub estimators: Vec<NamedEstimator>,
    #[serde(default)]
    pub target: Target,
    /// Probe size for the theory columns; 0 skips them.
    #[serde(default = "default_probe")]
    pub n_probe: usize,
}

fn default_probe() -> usize {
    DEFAULT_PROBE
}

impl ScenarioConfig {
    pub fn new(spec: ScmSpec, n: usize, reps: usize, seed: u64, estimators: Vec<NamedEstimator>) -> Self {
        ScenarioConfig { spec, n, reps, seed, estimators, target: Target::Ate, n_probe: 0 }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: ScenarioConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.reps < 1 {
            return Err(Error::Invalid("reps must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::Invalid("n must be at least 2".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Invalid("estimator list is empty".into()));
        }
        if self.target == Target::Late && !self.spec.has_potential_treatments() {
            return Err(Error::Invalid("a LATE target needs a binary instrument".into()));
        }
        Ok(())
    }
}

/// Oracle values and estimator outcomes for one replicate.
#[derive(Clone, Debug, PartialEq)]
pub struct Replicate {
    pub ate: f64,
    pub att: f64,
    pub late: Option<f64>,
    pub target: f64,
    pub results: Vec<std::result::Result<EstimateResult, Error>>,
}

/// Simulates and estimates every replicate, in replicate order.
pub fn run_replicates(config: &ScenarioConfig) -> Result<Vec<Replicate>> {
    config.validate()?;
    let z = config.spec.has_potential_treatments().then_some("z1");
    (0..config.reps)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(config.seed, r as u64);
            let ds = simulate(&config.spec, config.n, seed)?;
            let oracle = oracle_effects(&ds, z)?;
            let target = match config.target {
                Target::Ate => oracle.ate,
                Target::Late => oracle.late.ok_or_else(|| Error::Numeric("replicate has no compliers".into()))?,
            };
            let results = config
                .estimators
                .iter()
                .enumerate()
                .map(|(e, est)| est.call.run(&ds, derive_seed(seed, 1 + e as u64)))
                .collect();
            Ok(Replicate { ate: oracle.ate, att: oracle.att, late: oracle.late, target, results })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub label: String,
    pub method: String,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mean_estimate: f64,
    pub median_estimate: f64,
    /// Mean of estimate minus the replicate's own oracle target.
    pub mean_bias: f64,
    /// Standard deviation (1/R) of the per-replicate errors.
    pub sd: f64,
    /// Standard deviation (1/R) of the estimates.
    pub sd_estimate: f64,
    pub mean_std_err: f64,
    pub rmse: f64,
    /// Share of intervals covering the replicate's oracle target.
    pub coverage: f64,
    /// Share of replicates rejecting a zero effect at the 5% level.
    pub rejection_rate: f64,
    /// Monte Carlo standard error of the mean bias, `sd/√R`.
    pub mcse: f64,
    pub errors: BTreeMap<String, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theory_quantity: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleMeans {
    pub ate: f64,
    pub att: f64,
    pub late: Option<f64>,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub spec_hash: String,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub target: Target,
    /// X and U are drawn standardized, so biases are in those units.
    pub scale_note: String,
    pub oracle: OracleMeans,
    pub theory: Option<TheoryPrediction>,
    pub rows: Vec<McRow>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        f64::NAN
    } else {
        s / c as f64
    }
}

fn summarize_row(label: String, call: &EstimatorCall, spec: &ScmSpec, reps: &[Replicate], e: usize) -> McRow {
    let mut ok: Vec<(&EstimateResult, f64)> = Vec::new();
    let mut errors = BTreeMap::new();
    for r in reps {
        match &r.results[e] {
            Ok(res) => ok.push((res, r.target)),
            Err(err) => *errors.entry(err.to_string()).or_insert(0) += 1,
        }
    }
    let k = ok.len();
    let est: Vec<f64> = ok.iter().map(|(r, _)| r.estimate).collect();
    let err: Vec<f64> = ok.iter().map(|(r, t)| r.estimate - t).collect();
    let mean_estimate = mean(est.iter().copied());
    let mean_bias = mean(err.iter().copied());
    let sd = mean(err.iter().map(|v| (v - mean_bias).powi(2))).sqrt();
    let sd_estimate = mean(est.iter().map(|v| (v - mean_estimate).powi(2))).sqrt();
    let rmse = mean(err.iter().map(|v| v * v)).sqrt();
    McRow {
        label,
        method: call.name(),
        n_ok: k,
        n_failed: reps.len() - k,
        mean_estimate,
        median_estimate: if k > 0 { median(&est) } else { f64::NAN },
        mean_bias,
        sd,
        sd_estimate,
        mean_std_err: mean(ok.iter().map(|(r, _)| r.std_err)),
        rmse,
        coverage: mean(ok.iter().map(|(r, t)| f64::from(u8::from(r.covers(*t))))),
        rejection_rate: mean(ok.iter().map(|(r, _)| f64::from(u8::from(r.estimate.abs() > Z95 * r.std_err)))),
        mcse: sd / (k as f64).sqrt(),
        errors,
        theory_quantity: call.theory_quantity(spec).map(String::from),
    }
}

/// Aggregates replicates into one row per estimator.
pub fn summarize(config: &ScenarioConfig, reps: &[Replicate]) -> Result<McSummary> {
    let theory = if config.n_probe > 0 {
        predicted_biases(&config.spec, config.n_probe, derive_seed(config.seed, u64::MAX)).ok()
    } else {
        None
    };
    let late: Vec<f64> = reps.iter().filter_map(|r| r.late).collect();
    let oracle = OracleMeans {
        ate: mean(reps.iter().map(|r| r.ate)),
        att: mean(reps.iter().map(|r| r.att)),
        late: (late.len() == reps.len() && !late.is_empty()).then(|| mean(late.iter().copied())),
        target: mean(reps.iter().map(|r| r.target)),
    };
    let rows = config
        .estimators
        .iter()
        .enumerate()
        .map(|(e, est)| summarize_row(est.label(), &est.call, &config.spec, reps, e))
        .collect();
    Ok(McSummary {
        spec_hash: config.spec.hash(),
        n: config.n,
        reps: config.reps,
        seed: config.seed,
        target: config.target,
        scale_note: "X and U standardized to mean 0, variance 1".into(),
        oracle,
        theory,
        rows,
    })
}

/// Runs a scenario end to end. Estimator failures are counted per row
/// rather than aborting the run.
pub fn run_scenario(config: &ScenarioConfig) -> Result<McSummary> {
    let reps = run_replicates(config)?;
    summarize(config, &reps)
}

impl McSummary {
    pub fn row(&self, label: &str) -> Option<&McRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// One CSV row per estimator.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Io(e.to_string());
        out.write_record([
            "label",
            "method",
            "n_ok",
            "n_failed",
            "mean_estimate",
            "median_estimate",
            "mean_bias",
            "sd",
            "sd_estimate",
            "mean_std_err",
            "rmse",
            "coverage",
            "rejection_rate",
            "mcse",
        ])
        .map_err(io)?;
        for r in &self.rows {
            let nums = [
                r.mean_estimate,
                r.median_estimate,
                r.mean_bias,
                r.sd,
                r.sd_estimate,
                r.mean_std_err,
                r.rmse,
                r.coverage,
                r.rejection_rate,
                r.mcse,
            ];
            let mut rec = vec![r.label.clone(), r.method.clone(), r.n_ok.to_string(), r.n_failed.to_string()];
            rec.extend(nums.iter().map(f64::to_string));
            out.write_record(&rec).map_err(io)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub label: String,
    pub quantity: String,
    pub empirical_bias: f64,
    pub predicted: f64,
    pub mcse: f64,
    /// `(empirical − predicted)/mcse`.
    pub z: f64,
}

/// Pairs each estimator's mean bias with the matching theory prediction.
pub fn compare_to_theory(summary: &McSummary, spec: &ScmSpec) -> Result<Vec<TheoryRow>> {
    if summary.spec_hash != spec.hash() {
        return Err(Error::SpecMismatch(format!("summary was produced from spec {}", summary.spec_hash)));
    }
    let theory = summary
        .theory
        .as_ref()
        .ok_or_else(|| Error::Invalid("summary carries no theory predictions (n_probe = 0)".into()))?;
    let mut rows = Vec::new();
    for r in &summary.rows {
        let predicted = match r.theory_quantity.as_deref() {
            Some("ols_bias") => Some(theory.ols_bias),
            Some("tsls_inconsistency") => theory.tsls_inconsistency,
            _ => None,
        };
        if let (Some(p), Some(q)) = (predicted, &r.theory_quantity) {
            rows.push(TheoryRow {
                label: r.label.clone(),
                quantity: q.clone(),
                empirical_bias: r.mean_bias,
                predicted: p,
                mcse: r.mcse,
                z: (r.mean_bias - p) / r.mcse,
            });
        }
    }
    Ok(rows)
}
