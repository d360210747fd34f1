//! Cross-fitted double machine learning with random-forest nuisances, for
//! the partially linear model and its IV variant.

use causal_workbench::estimators::{dml_estimate, DmlMode, DmlOptions};
use causal_workbench::learners::{ForestParams, Learner};
use causal_workbench::scm::{simulate, ScmSpec};

fn main() -> causal_workbench::Result<()> {
    let spec = ScmSpec {
        k_covariates: 3,
        gamma_x: vec![0.7, -0.4, 0.3],
        beta_x: vec![1.0, 1.0, -0.5],
        gamma_u: 0.0,
        ..ScmSpec::default()
    };
    let ds = simulate(&spec, 2000, 5)?;
    let forest = Learner::Forest(ForestParams { n_trees: 100, max_depth: 6, min_leaf: 5, ..ForestParams::default() });
    for mode in [DmlMode::Plm, DmlMode::Pliv] {
        let r = dml_estimate(&ds, &DmlOptions::new(mode, forest.clone()).folds(5).seed(11))?;
        println!(
            "{:<8} estimate {:.3}  se {:.3}  95% CI ({:.3}, {:.3})  [{}]",
            r.method, r.estimate, r.std_err, r.ci_low, r.ci_high, r.estimand
        );
    }
    println!("true effect {}", spec.beta_d);
    Ok(())
}
