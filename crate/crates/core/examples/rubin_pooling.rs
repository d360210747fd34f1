//! Pooling estimates from several completed datasets with Rubin's rules.
//! Each "imputation" here is an independent draw of the same design.

use causal_workbench::estimators::{ols_adjust, pool_rubin};
use causal_workbench::scm::{simulate, ScmSpec};

fn main() -> causal_workbench::Result<()> {
    let spec = ScmSpec { gamma_u: 0.0, ..ScmSpec::default() };
    let mut results = Vec::new();
    for m in 0..5 {
        let ds = simulate(&spec, 500, 100 + m)?;
        let r = ols_adjust(&ds, &ds.covariates())?;
        println!("imputation {m}: {:.3} ({:.3})", r.estimate, r.std_err);
        results.push(r);
    }
    let p = pool_rubin(&results)?;
    println!(
        "pooled: {:.3} ({:.3}); within {:.4}, between {:.4}",
        p.estimate,
        p.std_err,
        p.meta_f64("within_variance").unwrap_or(f64::NAN),
        p.meta_f64("between_variance").unwrap_or(f64::NAN)
    );
    Ok(())
}
