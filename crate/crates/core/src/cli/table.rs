//! Fixed-width text tables with three-decimal numbers.

use crate::diagnostics::DiagnosticsReport;
use crate::error::Error;
use crate::estimators::EstimateResult;
use crate::mc::{McSummary, TheoryRow};

pub fn num(x: f64) -> String {
    if x.is_nan() {
        return "NA".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

/// Left-aligned first column, right-aligned others.
pub fn render(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (c, cell) in r.iter().enumerate().take(cols) {
            width[c] = width[c].max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (c, cell) in cells.iter().enumerate() {
            if c > 0 {
                s.push_str("  ");
            }
            let pad = width[c] - cell.chars().count();
            if c == 0 {
                s.push_str(cell);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str(&" ".repeat(pad));
                s.push_str(cell);
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

/// Estimates by method, one row per method; failures show their message.
pub fn estimates(rows: &[(String, Result<EstimateResult, Error>)]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(label, r)| match r {
            Ok(r) => vec![
                label.clone(),
                r.estimand.to_string(),
                num(r.estimate),
                num(r.std_err),
                format!("({}, {})", num(r.ci_low), num(r.ci_high)),
                r.n_used.to_string(),
            ],
            Err(e) => vec![label.clone(), "-".into(), "-".into(), "-".into(), format!("error: {e}"), "-".into()],
        })
        .collect();
    render(&["Method", "Estimand", "Estimate", "Std. Error", "95% CI", "n"], &body)
}

pub fn diagnostics(d: &DiagnosticsReport) -> String {
    let mut out = String::new();
    if let Some(b) = &d.balance {
        out.push_str(&format!("Balance by {}\n", b.group));
        let body: Vec<Vec<String>> = b
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.covariate.clone(),
                    num(r.mean0),
                    num(r.mean1),
                    num(r.pooled_sd),
                    num(r.smd),
                    if r.zero_variance { "zero variance".into() } else { String::new() },
                ]
            })
            .collect();
        out.push_str(&render(&["Covariate", "Mean (0)", "Mean (1)", "Pooled SD", "SMD", "Flag"], &body));
        out.push('\n');
    }
    if let Some(f) = &d.first_stage {
        let kind = if f.robust { "robust F" } else { "F" };
        let flag = if f.perfect_fit { "  [perfect fit]" } else if f.f < 10.0 { "  [below 10]" } else { "" };
        out.push_str(&format!(
            "First stage: {kind} = {} on ({}, {}) df, p = {}{flag}\n",
            num(f.f),
            f.df1,
            f.df2,
            num(f.p)
        ));
    }
    if let Some(s) = &d.sargan {
        match s.p {
            Some(p) => out.push_str(&format!("Sargan J = {} on {} df, p = {}\n", num(s.j), s.df, num(p))),
            None => out.push_str("Sargan J: not applicable (just identified)\n"),
        }
    }
    if let Some(o) = &d.overlap {
        out.push_str(&format!(
            "Overlap: propensity range [{}, {}]; <0.01: {}, <0.05: {}, >0.95: {}, >0.99: {}; weights > 10: {}\n",
            num(o.min),
            num(o.max),
            o.below_01,
            o.below_05,
            o.above_95,
            o.above_99,
            o.extreme_weights
        ));
    }
    if let Some(b) = &d.bias_ratio {
        let ratio = b.ratio.map(num).unwrap_or_else(|| "absent".into());
        let flag = if b.tsls_more_sensitive { "  [2SLS more sensitive]" } else { "" };
        out.push_str(&format!(
            "Bias ratio: OLS bias = {}, 2SLS bias = {}, ratio = {ratio}{flag}\n",
            num(b.bias_ols),
            num(b.bias_tsls)
        ));
    }
    out
}

pub fn mc(s: &McSummary, theory: Option<&[TheoryRow]>) -> String {
    let mut out = format!(
        "n = {}, reps = {}, seed = {}; oracle ATE = {}, ATT = {}, LATE = {}\n",
        s.n,
        s.reps,
        s.seed,
        num(s.oracle.ate),
        num(s.oracle.att),
        s.oracle.late.map(num).unwrap_or_else(|| "NA".into())
    );
    let body: Vec<Vec<String>> = s
        .rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                num(r.mean_estimate),
                num(r.mean_bias),
                num(r.sd),
                num(r.mean_std_err),
                num(r.rmse),
                num(r.coverage),
                num(r.rejection_rate),
                r.n_failed.to_string(),
            ]
        })
        .collect();
    out.push_str(&render(&["Estimator", "Mean", "Bias", "SD", "Mean SE", "RMSE", "Coverage", "Reject", "Failed"], &body));
    if let Some(rows) = theory {
        out.push('\n');
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![r.label.clone(), r.quantity.clone(), num(r.empirical_bias), num(r.predicted), num(r.mcse), num(r.z)])
            .collect();
        out.push_str(&render(&["Estimator", "Quantity", "Empirical", "Predicted", "MCSE", "z"], &body));
    }
    out
}
