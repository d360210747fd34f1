//! Closed-form bias predictions evaluated on a probe sample.
//!
//! The omitted-confounder OLS bias is `β_U·Cov(D̃,U)/Var(D̃)` (plus the
//! analogous term for any direct instrument effect), where `D̃` is the
//! treatment after partialling out `(1, X)`. The 2SLS inconsistency is the
//! treatment coefficient of a 2SLS fit of the structural error
//! `φ = β_U U + δ·Z + ε` on the first stage, which for one instrument and no
//! covariates reduces to `Cov(Z, φ)/Cov(Z, D)`.
//!
//! Second moments among `(1, X, Z, U)` are known in closed form from the
//! generating law, and `ε` is independent of everything else, so only the
//! moments involving `D` are estimated. Those use `P(D = 1 | X, Z, U)` in
//! place of `D`, which removes the Bernoulli noise from the probe. Both
//! predictions assume a homogeneous effect.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{InstrumentLaw, RowDraw, ScmSpec};
use crate::error::{Error, Result};

const CHUNK: usize = 1 << 15;
const IRRELEVANT: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryPrediction {
    pub ols_bias: f64,
    pub tsls_inconsistency: Option<f64>,
    pub irrelevant_instrument: bool,
    pub mediator_total_effect: Option<f64>,
    pub n_probe: usize,
}

/// Column order: `1, X…, Z…, U, D, φ`.
struct Layout {
    k: usize,
    j: usize,
}

impl Layout {
    fn exo(&self) -> usize {
        self.k + self.j + 2
    }
    fn u(&self) -> usize {
        1 + self.k + self.j
    }
    fn d(&self) -> usize {
        self.exo()
    }
    fn phi(&self) -> usize {
        self.exo() + 1
    }
    fn controls(&self) -> Vec<usize> {
        (0..=self.k).collect()
    }
    fn first_stage(&self) -> Vec<usize> {
        (0..1 + self.k + self.j).collect()
    }
    fn second_stage(&self) -> Vec<usize> {
        self.controls().into_iter().chain([self.d()]).collect()
    }
}

fn sub(g: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| g[(rows[a], cols[b])])
}

fn solve(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.lu().solve(&b).ok_or_else(|| Error::Numeric("singular probe moment matrix".into()))
}

/// `G_ab − G_aC G_CC⁻¹ G_Cb`.
fn partial(g: &DMatrix<f64>, a: usize, b: usize, c: &[usize]) -> Result<f64> {
    let gcc = sub(g, c, c);
    let gcb = sub(g, c, &[b]);
    let gac = sub(g, &[a], c);
    Ok(g[(a, b)] - (gac * solve(gcc, gcb)?)[(0, 0)])
}

/// Population second moments of `(1, X, Z, U)`.
fn exogenous_moments(spec: &ScmSpec, lay: &Layout) -> DMatrix<f64> {
    let e = lay.exo();
    let mut g = DMatrix::<f64>::zeros(e, e);
    g[(0, 0)] = 1.0;
    for a in 0..lay.k {
        g[(1 + a, 1 + a)] = 1.0;
    }
    let zi = |jj: usize| 1 + lay.k + jj;
    let binary = spec.instrument_law == InstrumentLaw::BinaryBalanced;
    for a in 0..lay.j {
        let ra = spec.rho(a);
        let (mean, ezu) = if binary { (0.5, ra / (2.0 * PI).sqrt()) } else { (0.0, ra) };
        g[(0, zi(a))] = mean;
        g[(zi(a), 0)] = mean;
        g[(zi(a), lay.u())] = ezu;
        g[(lay.u(), zi(a))] = ezu;
        for b in 0..lay.j {
            let r = if a == b { 1.0 } else { ra * spec.rho(b) };
            let m = if binary { 0.25 + r.asin() / (2.0 * PI) } else { r };
            g[(zi(a), zi(b))] = m;
        }
    }
    g[(lay.u(), lay.u())] = 1.0;
    g
}

/// `E[π·w]` over the exogenous vector `w`, with `π = P(D = 1 | X, Z, U)`.
fn treatment_moments(spec: &ScmSpec, n: usize, seed: u64, lay: &Layout) -> DVector<f64> {
    let e = lay.exo();
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<DVector<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut m = DVector::<f64>::zeros(e);
            let mut r = RowDraw::default();
            let mut w = DVector::<f64>::zeros(e);
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                spec.draw_row(seed, i as u64, &mut r);
                w[0] = 1.0;
                for (a, v) in r.x.iter().enumerate() {
                    w[1 + a] = *v;
                }
                for (a, v) in r.z.iter().enumerate() {
                    w[1 + lay.k + a] = *v;
                }
                w[lay.u()] = r.u;
                m.axpy(r.pd, &w, 1.0);
            }
            m
        })
        .collect();
    let mut m = DVector::<f64>::zeros(e);
    for p in parts {
        m += p;
    }
    m / n as f64
}

/// Predicted OLS bias and 2SLS inconsistency for `spec`.
pub fn predicted_biases(spec: &ScmSpec, n_probe: usize, seed: u64) -> Result<TheoryPrediction> {
    spec.validate()?;
    if n_probe < 1000 {
        return Err(Error::Invalid(format!("n_probe must be at least 1000, got {n_probe}")));
    }
    let lay = Layout { k: spec.k_covariates, j: spec.j_instruments };
    let e = lay.exo();
    let gx = exogenous_moments(spec, &lay);
    let md = treatment_moments(spec, n_probe, seed, &lay);
    // φ as a combination of the exogenous columns.
    let mut c = DVector::<f64>::zeros(e);
    c[lay.u()] = spec.beta_u;
    for jj in 0..lay.j {
        c[1 + lay.k + jj] = spec.delta(jj);
    }
    let gphi = &gx * &c;
    let mut g = DMatrix::<f64>::zeros(e + 2, e + 2);
    g.view_mut((0, 0), (e, e)).copy_from(&gx);
    for a in 0..e {
        g[(a, lay.d())] = md[a];
        g[(lay.d(), a)] = md[a];
        g[(a, lay.phi())] = gphi[a];
        g[(lay.phi(), a)] = gphi[a];
    }
    g[(lay.d(), lay.d())] = md[0];
    g[(lay.d(), lay.phi())] = md.dot(&c);
    g[(lay.phi(), lay.d())] = md.dot(&c);
    g[(lay.phi(), lay.phi())] = c.dot(&gphi);
    let controls = lay.controls();

    let var_d = partial(&g, lay.d(), lay.d(), &controls)?;
    if var_d <= 1e-12 {
        return Err(Error::Numeric("treatment has no variation in the probe sample".into()));
    }
    let ols_bias = partial(&g, lay.d(), lay.phi(), &controls)? / var_d;

    let (mut tsls_inconsistency, mut irrelevant_instrument) = (None, false);
    if lay.j > 0 {
        let f = lay.first_stage();
        let disconnected = spec.gamma_z.iter().all(|&v| v == 0.0) && (0..lay.j).all(|jj| spec.rho(jj) == 0.0);
        let strength = var_d - partial(&g, lay.d(), lay.d(), &f)?;
        if disconnected || strength.abs() < IRRELEVANT {
            irrelevant_instrument = true;
        } else {
            let s = lay.second_stage();
            let gsf = sub(&g, &s, &f);
            let ff_inv_fs = solve(sub(&g, &f, &f), sub(&g, &f, &s))?;
            let ff_inv_fphi = solve(sub(&g, &f, &f), sub(&g, &f, &[lay.phi()]))?;
            let a = &gsf * ff_inv_fs;
            let b = &gsf * ff_inv_fphi;
            let coef = solve(a, b)?;
            tsls_inconsistency = Some(coef[(s.len() - 1, 0)]);
        }
    }

    Ok(TheoryPrediction {
        ols_bias,
        tsls_inconsistency,
        irrelevant_instrument,
        mediator_total_effect: spec.mediator.as_ref().map(|m| m.total_effect()),
        n_probe,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{simulate, InstrumentLaw, Mediator};
    use crate::stats::{cov, normal_cdf, var};

    #[test]
    fn unconfounded_has_no_ols_bias() {
        let spec = ScmSpec { gamma_u: 0.0, ..Default::default() };
        let t = predicted_biases(&spec, 20_000, 1).unwrap();
        // Cov(D,U) is zero in population; probe noise only.
        assert!(t.ols_bias.abs() < 0.02, "{}", t.ols_bias);
    }

    #[test]
    fn valid_instrument_has_no_inconsistency() {
        let spec = ScmSpec::default();
        let t = predicted_biases(&spec, 20_000, 2).unwrap();
        assert!(t.tsls_inconsistency.unwrap().abs() < 1e-12);
        assert!(t.mediator_total_effect.is_none());
    }

    /// Gaussian latent index `L = γ0 + γz Z + γu U + τv`, no covariates:
    /// `Cov(W, D) = Cov(W, L)/s · ϕ(γ0/s)` for jointly normal `W`, with
    /// `s = sd(L)`, and `Var(D) = Φ(γ0/s)(1 − Φ(γ0/s))`.
    #[test]
    fn gaussian_closed_form() {
        let spec = ScmSpec {
            k_covariates: 0,
            gamma_x: vec![],
            beta_x: vec![],
            gamma0: 0.3,
            delta_z_to_y: vec![0.2],
            instrument_law: InstrumentLaw::StandardGaussian,
            ..Default::default()
        };
        let (g0, gz, gu, tau) = (spec.gamma0, spec.gamma_z[0], spec.gamma_u, spec.tau_sd);
        let s = (gz * gz + gu * gu + tau * tau).sqrt();
        let dens = (-(g0 / s).powi(2) / 2.0).exp() / (2.0 * PI).sqrt();
        let (czd, cud) = (gz / s * dens, gu / s * dens);
        let p = normal_cdf(g0 / s);
        let ols = (spec.beta_u * cud + 0.2 * czd) / (p * (1.0 - p));
        let iv = 0.2 / czd;
        let t = predicted_biases(&spec, 2_000_000, 3).unwrap();
        assert!((t.ols_bias - ols).abs() < 2e-3, "{} vs {ols}", t.ols_bias);
        assert!((t.tsls_inconsistency.unwrap() - iv).abs() < 2e-3 * iv.abs());
    }

    #[test]
    fn agrees_with_materialized_sample() {
        let spec = ScmSpec { delta_z_to_y: vec![0.3], rho_z_u: vec![0.2], k_covariates: 0, gamma_x: vec![], beta_x: vec![], ..Default::default() };
        let n = 200_000;
        let t = predicted_biases(&spec, n, 4).unwrap();
        let ds = simulate(&spec, n, 5).unwrap();
        let d = ds.treatment().unwrap();
        let u = ds.column("u").unwrap();
        let z = ds.column("z1").unwrap();
        let phi: Vec<f64> = (0..n).map(|i| spec.beta_u * u[i] + 0.3 * z[i]).collect();
        assert!((t.tsls_inconsistency.unwrap() - cov(z, &phi) / cov(z, d)).abs() < 0.05);
        assert!((t.ols_bias - cov(d, &phi) / var(d)).abs() < 0.02);
    }

    #[test]
    fn irrelevant_instrument_flag() {
        let spec = ScmSpec { gamma_z: vec![0.0], ..Default::default() };
        let t = predicted_biases(&spec, 5000, 1).unwrap();
        assert!(t.irrelevant_instrument && t.tsls_inconsistency.is_none());
        let spec = ScmSpec {
            gamma_z: vec![0.0],
            gamma_x: vec![0.0],
            gamma_u: 0.0,
            tau_sd: 0.0,
            gamma0: 1.0,
            ..Default::default()
        };
        assert!(predicted_biases(&spec, 5000, 1).is_err());
    }

    #[test]
    fn mediator_total() {
        let spec = ScmSpec {
            mediator: Some(Mediator { b1: 0.5, b2: 0.4, b3: 1.0, noise_sd: 0.0 }),
            ..Default::default()
        };
        let t = predicted_biases(&spec, 2000, 1).unwrap();
        assert!((t.mediator_total_effect.unwrap() - 1.2).abs() < 1e-15);
        assert!(predicted_biases(&spec, 999, 1).is_err());
    }
}
