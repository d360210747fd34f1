use causal_workbench::cli::advisor::{advise, all_inputs, CONFOUNDER, IV_FLEXIBLE, IV_STRONG};
use causal_workbench::data::{parse_csv, validate_roles, Dataset, RoleMap};
use causal_workbench::diagnostics::{sargan_j, smd_table};
use causal_workbench::estimators::{
    diff_in_means, dml_estimate, iptw, iv_linear, ols_adjust, pool_rubin, wald, DmlMode, DmlOptions, Estimand,
    EstimateResult, IptwOptions, IvOptions, PropensitySpec,
};
use causal_workbench::learners::{cross_fit_with_folds, fit_lasso, fit_logistic, fit_ols, fold_assignment, Learner};
use causal_workbench::mc::{run_scenario, EstimatorCall, NamedEstimator, ScenarioConfig};
use causal_workbench::rng::derive_seed;
use causal_workbench::scm::{oracle_effects, simulate, Heterogeneity, ScmSpec};
use causal_workbench::stats::{design, mean};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 48, ..ProptestConfig::default() }
}

prop_compose! {
    fn spec_strategy()(
        gamma0 in -0.5..0.5f64,
        gx in -1.0..1.0f64,
        gz in 0.2..2.0f64,
        gu in -1.0..1.0f64,
        bd in -2.0..2.0f64,
        bx in -1.0..1.0f64,
        bu in -1.0..1.0f64,
    ) -> ScmSpec {
        ScmSpec {
            gamma0,
            gamma_x: vec![gx],
            gamma_z: vec![gz],
            gamma_u: gu,
            beta_d: bd,
            beta_x: vec![bx],
            beta_u: bu,
            ..ScmSpec::default()
        }
    }
}

fn table(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    design(&refs, cols[0].len(), false)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn csv_round_trip(values in prop::collection::vec(-1e6..1e6f64, 3..40), seed in any::<u64>()) {
        let n = values.len();
        let d: Vec<f64> = (0..n).map(|i| f64::from(u8::from(derive_seed(seed, i as u64) % 2 == 0))).collect();
        let y: Vec<f64> = values.iter().map(|v| (v * 1e6).round() / 1e6).collect();
        let roles = RoleMap::new().treatment("d").outcome("y");
        let ds = Dataset::new(vec![("d".into(), d), ("y".into(), y)], roles.clone()).unwrap();
        let text = ds.to_csv_string();
        let back = parse_csv(&text, &roles).unwrap();
        prop_assert_eq!(back.to_csv_string(), text);
        prop_assert_eq!(back.outcome().unwrap(), ds.outcome().unwrap());
        prop_assert!(validate_roles(&back).passed());
    }

    #[test]
    fn simulation_is_pure_monotone_and_consistent(spec in spec_strategy(), seed in any::<u64>()) {
        let a = simulate(&spec, 200, seed).unwrap();
        prop_assert_eq!(a.to_csv_string(), simulate(&spec, 200, seed).unwrap().to_csv_string());
        let (d, d0, d1) = (a.column("d").unwrap(), a.column("d0").unwrap(), a.column("d1").unwrap());
        let (y, y0, y1) = (a.column("y").unwrap(), a.column("y0").unwrap(), a.column("y1").unwrap());
        for i in 0..200 {
            prop_assert!(d1[i] >= d0[i]);
            prop_assert_eq!(y[i], d[i] * y1[i] + (1.0 - d[i]) * y0[i]);
        }
    }

    #[test]
    fn wald_equals_just_identified_tsls(spec in spec_strategy(), seed in any::<u64>()) {
        let ds = simulate(&spec, 150, seed).unwrap();
        if let (Ok(w), Ok(t)) = (wald(&ds, "z1"), iv_linear(&ds, &IvOptions::tsls().covariates(Vec::<String>::new()))) {
            prop_assert!((w.estimate - t.estimate).abs() < 1e-10 * (1.0 + w.estimate.abs()));
        }
    }

    #[test]
    fn dml_linear_full_sample_is_ols(spec in spec_strategy(), seed in any::<u64>()) {
        let ds = simulate(&spec, 150, seed).unwrap();
        let a = dml_estimate(&ds, &DmlOptions::new(DmlMode::Plm, Learner::Ols).folds(1)).unwrap().estimate;
        let b = ols_adjust(&ds, &["x1".into()]).unwrap().estimate;
        prop_assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
    }

    #[test]
    fn constant_propensity_iptw_is_diff(spec in spec_strategy(), seed in any::<u64>(), p in 0.05..0.95f64) {
        let ds = simulate(&spec, 120, seed).unwrap();
        let ds = ds.with_column("p", vec![p; 120]).unwrap();
        let opts = IptwOptions { propensity: PropensitySpec::Known("p".into()), ..IptwOptions::default() };
        let a = iptw(&ds, &opts).unwrap().estimate;
        let b = diff_in_means(&ds).unwrap().estimate;
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        let s = iptw(&ds, &IptwOptions { stabilize: true, ..opts }).unwrap().estimate;
        prop_assert!((s - a).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn sargan_is_affine_invariant(seed in any::<u64>(), scale in 0.2..5.0f64, shift in -3.0..3.0f64) {
        let spec = ScmSpec { j_instruments: 2, gamma_z: vec![1.0, 0.7], delta_z_to_y: vec![0.2, 0.0], ..ScmSpec::default() };
        let ds = simulate(&spec, 200, seed).unwrap();
        let z2: Vec<f64> = ds.column("z2").unwrap().iter().map(|z| scale * z + shift).collect();
        let moved = ds.with_column("z2", z2).unwrap();
        let x = vec!["x1".to_string()];
        let z = vec!["z1".to_string(), "z2".to_string()];
        let a = sargan_j(&ds, &x, &z).unwrap().j;
        let b = sargan_j(&moved, &x, &z).unwrap().j;
        prop_assert!((a - b).abs() < 1e-8 * (1.0 + a.abs()));
    }

    #[test]
    fn smd_ignores_group_labels(seed in any::<u64>()) {
        let ds = simulate(&ScmSpec::default(), 100, seed).unwrap();
        let flipped: Vec<f64> = ds.column("z1").unwrap().iter().map(|z| 1.0 - z).collect();
        let other = ds.with_column("z1", flipped).unwrap();
        let cols = vec!["x1".to_string(), "d".to_string()];
        let a = smd_table(&ds, "z1", &cols).unwrap();
        let b = smd_table(&other, "z1", &cols).unwrap();
        for (r, s) in a.rows.iter().zip(&b.rows) {
            prop_assert_eq!(r.smd, s.smd);
        }
    }

    #[test]
    fn lasso_at_zero_is_ols(cols in prop::collection::vec(prop::collection::vec(-2.0..2.0f64, 40), 1..4),
                            noise in prop::collection::vec(-1.0..1.0f64, 40)) {
        let x = table(&cols);
        let y: Vec<f64> = (0..40).map(|i| 0.5 + cols.iter().enumerate().map(|(j, c)| (j as f64 + 1.0) * c[i]).sum::<f64>() + noise[i]).collect();
        if let Ok(o) = fit_ols(&x, &y, true) {
            if o.rank == cols.len() + 1 {
                let l = fit_lasso(&x, &y, 0.0).unwrap();
                for (a, b) in o.coefficients.iter().zip(&l.coefficients) {
                    prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
                }
            }
        }
    }

    #[test]
    fn logistic_score_equation(x in prop::collection::vec(-2.0..2.0f64, 60), u in prop::collection::vec(0.0..1.0f64, 60)) {
        let y: Vec<f64> = x.iter().zip(&u).map(|(x, u)| f64::from(u8::from(*u < 1.0 / (1.0 + (-x).exp())))).collect();
        let s: f64 = y.iter().sum();
        prop_assume!(s >= 5.0 && s <= 55.0);
        let m = table(&[x]);
        if let Ok(fit) = fit_logistic(&m, &y, true) {
            prop_assert!((mean(&fit.predict(&m)) - mean(&y)).abs() < 1e-8);
        }
    }

    #[test]
    fn cross_fit_follows_rows(seed in any::<u64>(), rot in 1usize..59) {
        let ds = simulate(&ScmSpec::default(), 60, seed).unwrap();
        let x = table(&[ds.column("x1").unwrap().to_vec()]);
        let y = ds.outcome().unwrap().to_vec();
        let folds = fold_assignment(60, 5, seed).unwrap();
        let base = cross_fit_with_folds(&Learner::Ols, &x, &y, &folds, 5, 1).unwrap();
        let perm: Vec<usize> = (0..60).map(|i| (i + rot) % 60).collect();
        let xp = x.select_rows(perm.iter());
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let fp: Vec<usize> = perm.iter().map(|&i| folds[i]).collect();
        let moved = cross_fit_with_folds(&Learner::Ols, &xp, &yp, &fp, 5, 1).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((moved[k] - base[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn pooling_identical_results(est in -5.0..5.0f64, se in 0.01..3.0f64, m in 2usize..8) {
        let r = EstimateResult::new(Estimand::Ate, "ols", est, se, 50);
        let p = pool_rubin(&vec![r; m]).unwrap();
        prop_assert!((p.estimate - est).abs() < 1e-12);
        prop_assert!((p.std_err - se).abs() < 1e-12);
    }
}

#[test]
fn advisor_is_total() {
    for input in all_inputs() {
        let r = advise(&input).unwrap();
        assert!([CONFOUNDER, IV_STRONG, IV_FLEXIBLE].contains(&r.recommendation.as_str()));
        assert!(!r.path.is_empty());
    }
}

#[test]
fn att_differs_from_ate_under_confounded_heterogeneity() {
    let spec = ScmSpec {
        gamma_u: 1.0,
        hetero: Some(Heterogeneity { scale: 1.0, g_x: vec![0.0], g_u: 1.0 }),
        ..ScmSpec::default()
    };
    let ds = simulate(&spec, 20_000, 3).unwrap();
    let o = oracle_effects(&ds, Some("z1")).unwrap();
    assert!((o.att - o.ate).abs() > 0.3, "att {} ate {}", o.att, o.ate);
}

#[test]
fn precision_variable_shrinks_standard_errors() {
    // x1 predicts y but not d.
    let spec = ScmSpec { gamma_x: vec![0.0], beta_x: vec![2.0], gamma_u: 0.0, ..ScmSpec::default() };
    let s = run_scenario(&ScenarioConfig::new(
        spec,
        400,
        200,
        21,
        vec![
            NamedEstimator::new("plain", EstimatorCall::Ols { covariates: Some(vec![]) }),
            NamedEstimator::new("with_x", EstimatorCall::Ols { covariates: Some(vec!["x1".into()]) }),
        ],
    ))
    .unwrap();
    let (a, b) = (s.row("plain").unwrap(), s.row("with_x").unwrap());
    assert!(b.mean_std_err < a.mean_std_err);
    assert!(a.mean_bias.abs() < 3.0 * a.mcse && b.mean_bias.abs() < 3.0 * b.mcse);
}

#[test]
fn residualized_wald_difference_is_bias_tsls() {
    use causal_workbench::diagnostics::bias_ratio;
    // u enters the outcome with coefficient 0.5 and is related to z1.
    let spec = ScmSpec { rho_z_u: vec![0.3], gamma_u: 0.5, beta_u: 0.5, ..ScmSpec::default() };
    for r in 0..20 {
        let ds = simulate(&spec, 500, derive_seed(22, r)).unwrap();
        let y_r: Vec<f64> = ds.outcome().unwrap().iter().zip(ds.column("u").unwrap()).map(|(y, u)| y - 0.5 * u).collect();
        let resid = ds
            .with_column("y_r", y_r)
            .unwrap()
            .with_roles(RoleMap::new().treatment("d").outcome("y_r").instruments(["z1"]))
            .unwrap();
        let gap = wald(&ds, "z1").unwrap().estimate - wald(&resid, "z1").unwrap().estimate;
        let b = bias_ratio(&ds, "u", "z1", 0.5).unwrap().bias_tsls;
        assert!((gap - b).abs() < 1e-9, "{gap} vs {b}");
    }
}
