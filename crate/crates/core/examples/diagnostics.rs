//! Balance across instrument levels, propensity overlap and the OLS/2SLS
//! bias ratio for a covariate treated as omitted.

use causal_workbench::cli::table;
use causal_workbench::diagnostics::{bias_ratio, first_stage_f, overlap_report, smd_table, DiagnosticsReport};
use causal_workbench::learners::fit_logistic;
use causal_workbench::scm::{simulate, ScmSpec};
use causal_workbench::stats::design;

fn main() -> causal_workbench::Result<()> {
    let spec = ScmSpec { k_covariates: 2, gamma_x: vec![1.2, 0.4], beta_x: vec![0.5, 0.5], ..ScmSpec::default() };
    let ds = simulate(&spec, 2000, 3)?;
    let x = ds.covariates();
    let cols: Vec<&[f64]> = x.iter().map(|c| ds.column(c)).collect::<Result<_, _>>()?;
    let m = design(&cols, ds.n_rows(), false);
    let ps = fit_logistic(&m, ds.treatment()?, true)?.predict(&m);
    let report = DiagnosticsReport {
        balance: Some(smd_table(&ds, "z1", &[x.clone(), vec!["d".to_string()]].concat())?),
        first_stage: Some(first_stage_f(&ds, &x, &ds.instruments(), false)?),
        sargan: None,
        overlap: Some(overlap_report(&ps)?),
        bias_ratio: Some(bias_ratio(&ds, "x1", "z1", spec.beta_x[0])?),
    };
    print!("{}", table::diagnostics(&report));
    Ok(())
}
