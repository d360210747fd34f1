//! Command-line front end. [`run`] parses arguments, dispatches, and
//! returns the process exit code: 0 on success, 1 for invalid requests,
//! 2 for numeric failures.

pub mod advisor;
pub mod table;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use crate::data::{ingest_csv, Dataset, RoleMap};
use crate::diagnostics::{bias_ratio, first_stage_f, overlap_report, sargan_j, smd_table, DiagnosticsReport};
use crate::error::{Error, Result};
use crate::estimators::{
    pool_rubin, AiptwOptions, DmlMode, DmlOptions, EstimateResult, FirstStageLink, IptwOptions, IvMode, IvOptions,
    NuisanceSpec, PropensitySpec, TmleOptions,
};
use crate::learners::{fit_logistic, fit_ols, ForestParams, Learner};
use crate::mc::{compare_to_theory, run_scenario, EstimatorCall, ScenarioConfig};
use crate::scm::{simulate, ScmSpec};
use crate::stats::design;
use advisor::{advise, AdvisorInput, SampleSize, Strength, YesNo};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "causal-workbench", version, about = "Confounder and instrumental-variable effect estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a dataset from a structural model spec.
    Simulate(SimulateArgs),
    /// Estimate a treatment effect from a CSV file.
    Estimate(EstimateArgs),
    /// Balance, instrument strength, overidentification, overlap, bias ratio.
    Diagnose(DiagnoseArgs),
    /// Run a Monte Carlo scenario.
    Mc(McArgs),
    /// Pool estimates with Rubin's rules.
    Pool(PoolArgs),
    /// Walk the method-selection flowchart.
    Advise(AdviseArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Args, Debug)]
struct Output {
    /// Write to this file instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    treatment: String,
    #[arg(long)]
    outcome: String,
    #[arg(long, value_delimiter = ',')]
    covariates: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    instruments: Vec<String>,
    /// Do not require the treatment to be 0/1.
    #[arg(long)]
    continuous_treatment: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let mut roles = RoleMap::new()
            .treatment(&self.treatment)
            .outcome(&self.outcome)
            .covariates(self.covariates.clone())
            .instruments(self.instruments.clone());
        if self.continuous_treatment {
            roles = roles.continuous_treatment();
        }
        ingest_csv(&self.data, &roles)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// ScmSpec JSON file.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Diff,
    Ols,
    Iptw,
    Aiptw,
    Wald,
    Tsls,
    Tsri,
    ThreeStep,
    PostLassoIv,
    DmlPlm,
    DmlPliv,
    Tmle,
    All,
}

const ALL_METHODS: [Method; 12] = [
    Method::Diff,
    Method::Ols,
    Method::Iptw,
    Method::Aiptw,
    Method::Tmle,
    Method::DmlPlm,
    Method::Wald,
    Method::Tsls,
    Method::Tsri,
    Method::ThreeStep,
    Method::PostLassoIv,
    Method::DmlPliv,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LearnerArg {
    Ols,
    Ridge,
    Lasso,
    Logistic,
    Forest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LinkArg {
    Linear,
    Logistic,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    method: Method,
    /// Nuisance learner for DML (default forest) and the TMLE outcome model
    /// (default ols).
    #[arg(long, value_enum)]
    learner: Option<LearnerArg>,
    /// Penalty for ridge/lasso learners and post-LASSO selection.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    trees: usize,
    #[arg(long, default_value_t = 6)]
    max_depth: usize,
    #[arg(long, default_value_t = 5)]
    min_leaf: usize,
    /// Propensity trim bounds, e.g. 0.05,0.95.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    trim: Option<Vec<f64>>,
    #[arg(long)]
    stabilize: bool,
    #[arg(long)]
    horvitz_thompson: bool,
    /// Bootstrap resamples for the IPTW standard error.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Column holding known propensity scores.
    #[arg(long)]
    propensity_column: Option<String>,
    #[arg(long, value_enum, default_value = "linear")]
    link: LinkArg,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Binary column defining the balance groups (default: first
    /// instrument, else the treatment).
    #[arg(long)]
    group: Option<String>,
    /// Use the HC0 robust first-stage F.
    #[arg(long)]
    robust: bool,
    #[arg(long)]
    propensity_column: Option<String>,
    /// Covariate treated as omitted for the bias ratio.
    #[arg(long)]
    omitted: Option<String>,
    /// Outcome coefficient of the omitted covariate; fitted when absent.
    #[arg(long)]
    beta2: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct McArgs {
    /// ScenarioConfig JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Also write one CSV row per estimator here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Add the comparison with theory predictions.
    #[arg(long)]
    compare: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct PoolArgs {
    /// JSON files holding an estimate, an envelope, or a list of estimates.
    #[arg(long, num_args = 1.., required = true)]
    results: Vec<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct AdviseArgs {
    #[arg(long, value_enum)]
    unobserved_confounding: Option<YesNo>,
    #[arg(long, value_enum)]
    suitable_ivs: Option<YesNo>,
    #[arg(long, value_enum)]
    late_useful: Option<YesNo>,
    #[arg(long, value_enum)]
    sample_size: Option<SampleSize>,
    #[arg(long, value_enum)]
    iv_strength: Option<Strength>,
    #[command(flatten)]
    output: Output,
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error.to_string()))?;
    Ok(())
}

fn envelope(command: &str, result: impl Serialize) -> Result<String> {
    let v = serde_json::json!({
        "tool_version": TOOL_VERSION,
        "command": command,
        "result": serde_json::to_value(result)?,
    });
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn emit(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => Ok(stdout.write_all(text.as_bytes())?),
    }
}

fn learner(args: &EstimateArgs, kind: LearnerArg) -> Learner {
    match kind {
        LearnerArg::Ols => Learner::Ols,
        LearnerArg::Ridge => Learner::Ridge { lambda: args.lambda.unwrap_or(0.01) },
        LearnerArg::Lasso => Learner::Lasso { lambda: args.lambda.unwrap_or(0.01) },
        LearnerArg::Logistic => Learner::Logistic,
        LearnerArg::Forest => Learner::Forest(ForestParams {
            n_trees: args.trees,
            max_depth: args.max_depth,
            min_leaf: args.min_leaf,
            seed: args.seed,
            ..ForestParams::default()
        }),
    }
}

fn call_for(method: Method, args: &EstimateArgs) -> Result<EstimatorCall> {
    let propensity = match &args.propensity_column {
        Some(c) => PropensitySpec::Known(c.clone()),
        None => PropensitySpec::logistic(),
    };
    let trim = match &args.trim {
        Some(v) if v.len() == 2 => Some((v[0], v[1])),
        Some(_) => return Err(Error::Invalid("--trim takes two values".into())),
        None => None,
    };
    let link = match args.link {
        LinkArg::Linear => FirstStageLink::Linear,
        LinkArg::Logistic => FirstStageLink::Logistic,
    };
    let iv = |mode| IvOptions::new(mode).link(link);
    let dml = |mode| {
        let l = learner(args, args.learner.unwrap_or(LearnerArg::Forest));
        EstimatorCall::Dml(DmlOptions::new(mode, l).folds(args.folds).seed(args.seed))
    };
    Ok(match method {
        Method::Diff => EstimatorCall::Diff,
        Method::Ols => EstimatorCall::Ols { covariates: None },
        Method::Iptw => EstimatorCall::Iptw(IptwOptions {
            propensity,
            stabilize: args.stabilize,
            trim,
            horvitz_thompson: args.horvitz_thompson,
            bootstrap: args.bootstrap.map(|resamples| crate::estimators::Bootstrap { resamples, seed: args.seed }),
        }),
        Method::Aiptw => EstimatorCall::Aiptw(AiptwOptions { propensity, trim, ..AiptwOptions::default() }),
        Method::Wald => EstimatorCall::Wald { instrument: None },
        Method::Tsls => EstimatorCall::Iv(iv(IvMode::Tsls)),
        Method::Tsri => EstimatorCall::Iv(iv(IvMode::Tsri)),
        Method::ThreeStep => EstimatorCall::Iv(iv(IvMode::ThreeStep)),
        Method::PostLassoIv => {
            EstimatorCall::PostLassoIv { covariates: None, instruments: None, lambda: args.lambda.unwrap_or(0.05) }
        }
        Method::DmlPlm => dml(DmlMode::Plm),
        Method::DmlPliv => dml(DmlMode::Pliv),
        Method::Tmle => EstimatorCall::Tmle(TmleOptions {
            propensity,
            outcome: NuisanceSpec::new(learner(args, args.learner.unwrap_or(LearnerArg::Ols))),
            k_folds: args.folds,
            seed: args.seed,
        }),
        Method::All => return Err(Error::Invalid("'all' is not a single method".into())),
    })
}

fn needs_instrument(m: Method) -> bool {
    matches!(
        m,
        Method::Wald | Method::Tsls | Method::Tsri | Method::ThreeStep | Method::PostLassoIv | Method::DmlPliv
    )
}

fn cmd_estimate(args: &EstimateArgs, stdout: &mut dyn Write) -> Result<()> {
    let ds = args.data.load()?;
    let format = args.output.format.unwrap_or(Format::Table);
    if args.method == Method::All {
        let methods: Vec<Method> = ALL_METHODS
            .iter()
            .copied()
            .filter(|m| !needs_instrument(*m) || !ds.instruments().is_empty())
            .collect();
        let rows: Vec<(String, Result<EstimateResult>)> = methods
            .iter()
            .map(|&m| {
                let label = m.to_possible_value().expect("named").get_name().to_string();
                (label, call_for(m, args).and_then(|c| c.run(&ds, args.seed)))
            })
            .collect();
        let text = match format {
            Format::Table => table::estimates(&rows),
            Format::Json => {
                let v: Vec<Value> = rows
                    .iter()
                    .map(|(l, r)| match r {
                        Ok(r) => serde_json::json!({"method": l, "estimate": r}),
                        Err(e) => serde_json::json!({"method": l, "error": e.to_string()}),
                    })
                    .collect();
                envelope("estimate", v)?
            }
        };
        return emit(&args.output.out, &text, stdout);
    }
    let r = call_for(args.method, args)?.run(&ds, args.seed)?;
    let text = match format {
        Format::Table => {
            let label = args.method.to_possible_value().expect("named").get_name().to_string();
            table::estimates(&[(label, Ok(r))])
        }
        Format::Json => envelope("estimate", &r)?,
    };
    emit(&args.output.out, &text, stdout)
}

fn cmd_diagnose(args: &DiagnoseArgs, stdout: &mut dyn Write) -> Result<()> {
    let ds = args.data.load()?;
    let x = ds.covariates();
    let z = ds.instruments();
    let d = ds.treatment()?;
    let binary_d = d.iter().all(|&v| v == 0.0 || v == 1.0);
    let mut report = DiagnosticsReport::default();

    let group = args.group.clone().or_else(|| z.first().cloned()).or_else(|| ds.treatment_name());
    if let Some(g) = group {
        let cols: Vec<String> = if z.contains(&g) || args.group.is_some() {
            let mut c = x.clone();
            if !c.contains(&args.data.treatment) && g != args.data.treatment {
                c.push(args.data.treatment.clone());
            }
            c
        } else {
            x.clone()
        };
        if !cols.is_empty() {
            report.balance = Some(smd_table(&ds, &g, &cols)?);
        }
    }
    if !z.is_empty() {
        report.first_stage = Some(first_stage_f(&ds, &x, &z, args.robust)?);
        report.sargan = Some(sargan_j(&ds, &x, &z)?);
    }
    if binary_d {
        let p = match &args.propensity_column {
            Some(c) => Some(ds.column(c)?.to_vec()),
            None if !x.is_empty() => {
                let m = design(&crate::estimators::columns(&ds, &x)?, ds.n_rows(), false);
                Some(fit_logistic(&m, d, true)?.predict(&m))
            }
            None => None,
        };
        if let Some(p) = p {
            report.overlap = Some(overlap_report(&p)?);
        }
    }
    if let Some(om) = &args.omitted {
        let inst = z.first().ok_or_else(|| Error::Invalid("--omitted needs an instrument".into()))?;
        let beta2 = match args.beta2 {
            Some(b) => b,
            None => {
                let mut cols = vec![d, ds.column(om)?];
                for c in x.iter().filter(|c| *c != om) {
                    cols.push(ds.column(c)?);
                }
                fit_ols(&design(&cols, ds.n_rows(), false), ds.outcome()?, true)?.coefficients[2]
            }
        };
        report.bias_ratio = Some(bias_ratio(&ds, om, inst, beta2)?);
    }
    let text = match args.output.format.unwrap_or(Format::Table) {
        Format::Table => table::diagnostics(&report),
        Format::Json => envelope("diagnose", &report)?,
    };
    emit(&args.output.out, &text, stdout)
}

fn cmd_mc(args: &McArgs, stdout: &mut dyn Write) -> Result<()> {
    let config = ScenarioConfig::from_json(&fs::read_to_string(&args.config)?)?;
    let summary = run_scenario(&config)?;
    let comparison = if args.compare { Some(compare_to_theory(&summary, &config.spec)?) } else { None };
    if let Some(p) = &args.csv {
        let mut buf = Vec::new();
        summary.write_csv(&mut buf)?;
        write_atomic(p, &buf)?;
    }
    let text = match args.output.format.unwrap_or(Format::Json) {
        Format::Table => table::mc(&summary, comparison.as_deref()),
        Format::Json => match &comparison {
            Some(c) => envelope("mc", serde_json::json!({"summary": summary, "theory_comparison": c}))?,
            None => envelope("mc", &summary)?,
        },
    };
    emit(&args.output.out, &text, stdout)
}

fn read_results(path: &Path) -> Result<Vec<EstimateResult>> {
    let v: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    let v = if v.get("tool_version").is_some() { v["result"].clone() } else { v };
    match v {
        Value::Array(items) => items.into_iter().map(|i| Ok(serde_json::from_value(i)?)).collect(),
        other => Ok(vec![serde_json::from_value(other)?]),
    }
}

fn cmd_pool(args: &PoolArgs, stdout: &mut dyn Write) -> Result<()> {
    let mut all = Vec::new();
    for p in &args.results {
        all.extend(read_results(p)?);
    }
    let r = pool_rubin(&all)?;
    let text = match args.output.format.unwrap_or(Format::Table) {
        Format::Table => table::estimates(&[(format!("pooled {} (m = {})", r.method, all.len()), Ok(r))]),
        Format::Json => envelope("pool", &r)?,
    };
    emit(&args.output.out, &text, stdout)
}

fn cmd_advise(args: &AdviseArgs, stdout: &mut dyn Write) -> Result<()> {
    let input = AdvisorInput {
        unobserved_confounding: args.unobserved_confounding,
        suitable_ivs: args.suitable_ivs,
        late_useful: args.late_useful,
        sample_size: args.sample_size,
        iv_strength_or_proportion: args.iv_strength,
    };
    let rec = advise(&input)?;
    let text = match args.output.format.unwrap_or(Format::Table) {
        Format::Table => {
            let mut s = String::new();
            for (i, step) in rec.path.iter().enumerate() {
                s.push_str(&format!("{}. {step}\n", i + 1));
            }
            s.push_str(&format!("Recommendation: {}\n", rec.recommendation));
            s
        }
        Format::Json => envelope("advise", &rec)?,
    };
    emit(&args.output.out, &text, stdout)
}

fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    let spec = ScmSpec::from_json(&fs::read_to_string(&args.spec)?)?;
    let ds = simulate(&spec, args.n, args.seed)?;
    emit(&args.out, &ds.to_csv_string(), stdout)
}

/// Runs the command line `argv` (including the program name).
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let mut text = e.render().to_string();
            return if e.use_stderr() {
                if !text.contains("Usage:") {
                    text.push_str(&format!("\n{}\n", Cli::command().render_usage()));
                }
                let _ = stderr.write_all(text.as_bytes());
                1
            } else {
                let _ = stdout.write_all(text.as_bytes());
                0
            };
        }
    };
    let outcome = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Estimate(a) => cmd_estimate(a, stdout),
        Command::Diagnose(a) => cmd_diagnose(a, stdout),
        Command::Mc(a) => cmd_mc(a, stdout),
        Command::Pool(a) => cmd_pool(a, stdout),
        Command::Advise(a) => cmd_advise(a, stdout),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_numeric() {
                2
            } else {
                1
            }
        }
    }
}
