use super::{check_covariates, columns, EstimateResult, Estimand};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::fit_ols;
use crate::stats::{design, mean, subset, var};

fn arm_var(x: &[f64]) -> f64 {
    if x.len() < 2 {
        0.0
    } else {
        var(x)
    }
}

/// Unadjusted contrast of arm means with a Welch standard error.
pub fn diff_in_means(ds: &Dataset) -> Result<EstimateResult> {
    let y = ds.outcome()?;
    let d = ds.treatment()?;
    let y1 = subset(y, d, 1.0);
    let y0 = subset(y, d, 0.0);
    if y1.is_empty() || y0.is_empty() {
        return Err(Error::EmptyArm(format!("{} treated, {} control rows", y1.len(), y0.len())));
    }
    let est = mean(&y1) - mean(&y0);
    let se = (arm_var(&y1) / y1.len() as f64 + arm_var(&y0) / y0.len() as f64).sqrt();
    Ok(EstimateResult::new(Estimand::Naive, "diff", est, se, y.len())
        .with_meta("n_treated", y1.len())
        .with_meta("n_control", y0.len()))
}

/// Treatment coefficient from least squares of Y on `(1, D, covariates)`.
pub fn ols_adjust(ds: &Dataset, covariates: &[String]) -> Result<EstimateResult> {
    check_covariates(ds, covariates)?;
    let y = ds.outcome()?;
    let mut cols = vec![ds.treatment()?];
    cols.extend(columns(ds, covariates)?);
    let fit = fit_ols(&design(&cols, y.len(), false), y, true)?;
    Ok(EstimateResult::new(Estimand::Ate, "ols", fit.coefficients[1], fit.se_hc0(1), y.len())
        .with_meta("covariates", covariates)
        .with_meta("se_homoskedastic", fit.se_homoskedastic(1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RoleMap;
    use crate::estimators::fixtures::{td1, td2};

    #[test]
    fn td1_difference() {
        // Four treated rows, all y = 3; four controls, all y = 1.
        let r = diff_in_means(&td1()).unwrap();
        assert!((r.estimate - 2.0).abs() < 1e-12);
        assert_eq!(r.estimand, Estimand::Naive);
    }

    #[test]
    fn empty_arm() {
        let ds = Dataset::new(
            vec![("d".into(), vec![1.0; 4]), ("y".into(), vec![1., 2., 3., 4.])],
            RoleMap::new().treatment("d").outcome("y"),
        )
        .unwrap();
        assert!(matches!(diff_in_means(&ds), Err(Error::EmptyArm(_))));
    }

    #[test]
    fn td2_adjusted_is_exact() {
        let r = ols_adjust(&td2(), &["x".to_string()]).unwrap();
        assert!((r.estimate - 1.0).abs() < 1e-12);
        assert!(r.std_err < 1e-10);
        let naive = diff_in_means(&td2()).unwrap();
        assert!((naive.estimate - 1.5).abs() < 1e-12);
    }

    #[test]
    fn pure_effect_and_guards() {
        let d = vec![0., 1., 0., 1., 1., 0.];
        let y: Vec<f64> = d.iter().map(|v| 3.0 * v).collect();
        let ds = Dataset::new(
            vec![("d".into(), d.clone()), ("y".into(), y), ("dd".into(), d)],
            RoleMap::new().treatment("d").outcome("y"),
        )
        .unwrap();
        assert!((ols_adjust(&ds, &[]).unwrap().estimate - 3.0).abs() < 1e-12);
        assert!(matches!(ols_adjust(&ds, &["dd".into()]), Err(Error::RankDeficient { .. })));
        assert!(matches!(ols_adjust(&ds, &["y".into()]), Err(Error::Invalid(_))));
    }
}
