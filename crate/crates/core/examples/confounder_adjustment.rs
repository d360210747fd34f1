//! Confounder-adjustment estimators side by side on one simulated sample
//! where treatment depends on observed covariates only.

use causal_workbench::cli::table;
use causal_workbench::estimators::{
    aiptw, diff_in_means, iptw, ols_adjust, tmle_ate, AiptwOptions, IptwOptions, TmleOptions,
};
use causal_workbench::scm::{simulate, ScmSpec};

fn main() -> causal_workbench::Result<()> {
    let spec = ScmSpec {
        k_covariates: 2,
        gamma_x: vec![0.8, -0.5],
        beta_x: vec![1.0, 0.5],
        gamma_u: 0.0,
        ..ScmSpec::default()
    };
    let ds = simulate(&spec, 3000, 1)?;
    let x = ds.covariates();
    let rows = vec![
        ("diff_in_means".to_string(), diff_in_means(&ds)),
        ("ols_adjust".to_string(), ols_adjust(&ds, &x)),
        ("iptw".to_string(), iptw(&ds, &IptwOptions::default())),
        ("iptw (stabilized, trimmed)".to_string(), iptw(&ds, &IptwOptions { stabilize: true, trim: Some((0.05, 0.95)), ..IptwOptions::default() })),
        ("aiptw".to_string(), aiptw(&ds, &AiptwOptions::default())),
        ("tmle".to_string(), tmle_ate(&ds, &TmleOptions::default())),
    ];
    println!("true ATE = {}\n", spec.average_effect());
    print!("{}", table::estimates(&rows));
    Ok(())
}
