//! IV estimators and instrument diagnostics under unobserved confounding.

use causal_workbench::cli::table;
use causal_workbench::diagnostics::{first_stage_f, sargan_j};
use causal_workbench::estimators::{iv_linear, ols_adjust, post_lasso_iv, wald, FirstStageLink, IvMode, IvOptions};
use causal_workbench::scm::{simulate, ScmSpec};

fn main() -> causal_workbench::Result<()> {
    let spec = ScmSpec {
        j_instruments: 2,
        gamma_z: vec![1.0, 0.6],
        gamma_u: 0.8,
        beta_u: 1.0,
        ..ScmSpec::default()
    };
    let ds = simulate(&spec, 4000, 9)?;
    let (x, z) = (ds.covariates(), ds.instruments());
    let rows = vec![
        ("ols_adjust".to_string(), ols_adjust(&ds, &x)),
        ("wald (z1)".to_string(), wald(&ds, "z1")),
        ("tsls".to_string(), iv_linear(&ds, &IvOptions::new(IvMode::Tsls))),
        ("tsri (logistic)".to_string(), iv_linear(&ds, &IvOptions::new(IvMode::Tsri).link(FirstStageLink::Logistic))),
        ("three_step".to_string(), iv_linear(&ds, &IvOptions::new(IvMode::ThreeStep))),
        ("post_lasso_iv".to_string(), post_lasso_iv(&ds, &x, &z, 0.01)),
    ];
    println!("true effect {}\n", spec.beta_d);
    print!("{}", table::estimates(&rows));
    let f = first_stage_f(&ds, &x, &z, true)?;
    let j = sargan_j(&ds, &x, &z)?;
    println!("\nrobust first-stage F = {:.1} on ({}, {}) df", f.f, f.df1, f.df2);
    println!("Sargan J = {:.3}, p = {:.3}", j.j, j.p.unwrap_or(f64::NAN));
    Ok(())
}
