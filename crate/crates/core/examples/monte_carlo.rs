//! A Monte Carlo scenario comparing OLS and 2SLS with the predicted
//! large-sample biases, then a sweep over instrument strength.

use causal_workbench::cli::table;
use causal_workbench::estimators::IvOptions;
use causal_workbench::mc::{compare_to_theory, run_scenario, EstimatorCall, NamedEstimator, ScenarioConfig};
use causal_workbench::scm::ScmSpec;

fn main() -> causal_workbench::Result<()> {
    let spec = ScmSpec { gamma_u: 0.8, beta_u: 1.0, delta_z_to_y: vec![0.1], ..ScmSpec::default() };
    let estimators = vec![
        NamedEstimator::new("ols", EstimatorCall::Ols { covariates: None }),
        NamedEstimator::new("tsls", EstimatorCall::Iv(IvOptions::tsls())),
    ];
    let mut config = ScenarioConfig::new(spec.clone(), 1000, 300, 2024, estimators.clone());
    config.n_probe = 500_000;
    let summary = run_scenario(&config)?;
    let theory = compare_to_theory(&summary, &spec)?;
    print!("{}", table::mc(&summary, Some(&theory)));

    println!("\ninstrument strength sweep (n = 200)");
    for s in [1.0, 0.3, 0.1] {
        let cfg = ScenarioConfig::new(spec.scale_instruments(s), 200, 300, 7, estimators.clone());
        let out = run_scenario(&cfg)?;
        let t = out.row("tsls").expect("tsls row");
        println!("  gamma_z x {s:<4} median tsls {:.3}  sd {:.3}", t.median_estimate, t.sd_estimate);
    }
    Ok(())
}
