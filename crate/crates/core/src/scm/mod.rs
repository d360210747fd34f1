//! Linear structural causal model simulator.
//!
//! Per row, with every exogenous draw standardized (mean 0, variance 1):
//!
//! ```text
//! X_k ~ N(0,1), U ~ N(0,1)
//! Z*_j = ρ_j U + √(1−ρ_j²) e_j,   Z_j = 1{Z*_j > 0} (binary) or Z*_j (gaussian)
//! index = γ0 + γ_x·X + γ_z·Z + γ_u U
//! D     = 1{index + τ v > 0}                  (latent threshold, v ~ N(0,1))
//!       = 1{v < clip(index, 0.01, 0.99)}      (linear probability, v ~ U(0,1))
//! β_i   = β_d + h (g_x·X + g_u U)
//! W(d)  = b1 d + σ_w m                        (mediator, optional)
//! Y(d)  = β0 + (β_i + b3) d + b2 W(d) + β_x·X + β_u U + δ·Z + σ_ε ε
//! Y     = Y(D)
//! ```
//!
//! Potential treatments D(0), D(1) switch only the first instrument, which
//! must be binary. Every row draws from its own stream keyed by
//! `(seed, row)`.

mod oracle;
mod theory;

pub use oracle::{oracle_effects, OracleReport, Strata};
pub use theory::{predicted_biases, TheoryPrediction};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, Role, RoleMap, MIN_ROWS};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::stats::normal_cdf;

/// Probability bounds for the linear-probability mechanism.
pub const LPM_CLIP: (f64, f64) = (0.01, 0.99);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreatmentMechanism {
    LatentThreshold,
    BernoulliLpm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentLaw {
    BinaryBalanced,
    StandardGaussian,
}

/// Unit effect `β_d + scale·(g_x·X + g_u·U)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Heterogeneity {
    pub scale: f64,
    #[serde(default)]
    pub g_x: Vec<f64>,
    #[serde(default)]
    pub g_u: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mediator {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub noise_sd: f64,
}

impl Mediator {
    pub fn total_effect(&self) -> f64 {
        self.b1 * self.b2 + self.b3
    }
}

/// Full parameterization of the structural equations.
///
/// `delta_z_to_y` and `rho_z_u` may be left empty, meaning all zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScmSpec {
    pub k_covariates: usize,
    pub j_instruments: usize,
    pub gamma0: f64,
    pub gamma_x: Vec<f64>,
    pub gamma_z: Vec<f64>,
    pub gamma_u: f64,
    pub tau_sd: f64,
    pub beta0: f64,
    pub beta_d: f64,
    pub beta_x: Vec<f64>,
    pub beta_u: f64,
    pub epsilon_sd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hetero: Option<Heterogeneity>,
    #[serde(default)]
    pub delta_z_to_y: Vec<f64>,
    #[serde(default)]
    pub rho_z_u: Vec<f64>,
    pub treatment_mechanism: TreatmentMechanism,
    pub instrument_law: InstrumentLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mediator: Option<Mediator>,
}

impl Default for ScmSpec {
    /// One covariate, one binary instrument, moderate confounding.
    fn default() -> Self {
        ScmSpec {
            k_covariates: 1,
            j_instruments: 1,
            gamma0: 0.0,
            gamma_x: vec![0.5],
            gamma_z: vec![1.0],
            gamma_u: 0.5,
            tau_sd: 1.0,
            beta0: 0.0,
            beta_d: 1.0,
            beta_x: vec![0.5],
            beta_u: 0.8,
            epsilon_sd: 1.0,
            hetero: None,
            delta_z_to_y: Vec::new(),
            rho_z_u: Vec::new(),
            treatment_mechanism: TreatmentMechanism::LatentThreshold,
            instrument_law: InstrumentLaw::BinaryBalanced,
            mediator: None,
        }
    }
}

impl ScmSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ScmSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("spec serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn delta(&self, j: usize) -> f64 {
        self.delta_z_to_y.get(j).copied().unwrap_or(0.0)
    }

    pub fn rho(&self, j: usize) -> f64 {
        self.rho_z_u.get(j).copied().unwrap_or(0.0)
    }

    /// Average treatment effect implied by the parameters (covariates and
    /// confounder have mean zero).
    pub fn average_effect(&self) -> f64 {
        self.beta_d + self.mediator.as_ref().map_or(0.0, Mediator::total_effect)
    }

    /// Whether D(0)/D(1) are generated.
    pub fn has_potential_treatments(&self) -> bool {
        self.j_instruments >= 1 && self.instrument_law == InstrumentLaw::BinaryBalanced
    }

    /// Copy with every first-stage instrument coefficient multiplied by `s`.
    pub fn scale_instruments(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.gamma_z.iter_mut().for_each(|g| *g *= s);
        out
    }

    pub fn validate(&self) -> Result<()> {
        let (k, j) = (self.k_covariates, self.j_instruments);
        let len = |name: &str, v: &[f64], want: usize, allow_empty: bool| -> Result<()> {
            if v.len() == want || (allow_empty && v.is_empty()) {
                Ok(())
            } else {
                Err(Error::Invalid(format!("{name} has length {}, expected {want}", v.len())))
            }
        };
        len("gamma_x", &self.gamma_x, k, false)?;
        len("beta_x", &self.beta_x, k, false)?;
        len("gamma_z", &self.gamma_z, j, false)?;
        len("delta_z_to_y", &self.delta_z_to_y, j, true)?;
        len("rho_z_u", &self.rho_z_u, j, true)?;
        if let Some(h) = &self.hetero {
            len("hetero.g_x", &h.g_x, k, true)?;
        }
        let mut all: Vec<f64> = vec![
            self.gamma0,
            self.gamma_u,
            self.tau_sd,
            self.beta0,
            self.beta_d,
            self.beta_u,
            self.epsilon_sd,
        ];
        all.extend(&self.gamma_x);
        all.extend(&self.gamma_z);
        all.extend(&self.beta_x);
        all.extend(&self.delta_z_to_y);
        all.extend(&self.rho_z_u);
        if let Some(h) = &self.hetero {
            all.push(h.scale);
            all.push(h.g_u);
            all.extend(&h.g_x);
        }
        if let Some(m) = &self.mediator {
            all.extend([m.b1, m.b2, m.b3, m.noise_sd]);
        }
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite parameter".into()));
        }
        if self.tau_sd < 0.0 || self.epsilon_sd < 0.0 {
            return Err(Error::Invalid("noise scales must be nonnegative".into()));
        }
        if self.mediator.as_ref().is_some_and(|m| m.noise_sd < 0.0) {
            return Err(Error::Invalid("mediator noise_sd must be nonnegative".into()));
        }
        if self.rho_z_u.iter().any(|r| r.abs() >= 1.0) {
            return Err(Error::Invalid("rho_z_u entries must lie strictly inside (-1, 1)".into()));
        }
        Ok(())
    }
}

/// Everything drawn or derived for one row.
#[derive(Clone, Debug, Default)]
pub(crate) struct RowDraw {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub u: f64,
    /// Structural outcome noise `σ_ε ε + b2 σ_w m`.
    pub noise: f64,
    pub d: f64,
    pub d0: f64,
    pub d1: f64,
    pub w: f64,
    pub y0: f64,
    pub y1: f64,
    pub y: f64,
    pub effect: f64,
    pub ps: Option<f64>,
    /// `P(D = 1 | X, Z, U)`.
    pub pd: f64,
}

impl ScmSpec {
    fn treat(&self, index: f64, v: f64) -> f64 {
        let on = match self.treatment_mechanism {
            TreatmentMechanism::LatentThreshold => index + self.tau_sd * v > 0.0,
            TreatmentMechanism::BernoulliLpm => v < index.clamp(LPM_CLIP.0, LPM_CLIP.1),
        };
        if on {
            1.0
        } else {
            0.0
        }
    }

    fn treat_prob(&self, index: f64) -> f64 {
        match self.treatment_mechanism {
            TreatmentMechanism::LatentThreshold if self.tau_sd > 0.0 => normal_cdf(index / self.tau_sd),
            TreatmentMechanism::LatentThreshold => f64::from(u8::from(index > 0.0)),
            TreatmentMechanism::BernoulliLpm => index.clamp(LPM_CLIP.0, LPM_CLIP.1),
        }
    }

    /// Draws row `i` into `r`, reusing its buffers.
    pub(crate) fn draw_row(&self, seed: u64, i: u64, r: &mut RowDraw) {
        let mut rng = stream(seed, i);
        let (k, j) = (self.k_covariates, self.j_instruments);
        r.x.clear();
        r.z.clear();
        for _ in 0..k {
            r.x.push(rng.sample(StandardNormal));
        }
        let u: f64 = rng.sample(StandardNormal);
        for jj in 0..j {
            let e: f64 = rng.sample(StandardNormal);
            let rho = self.rho(jj);
            let latent = rho * u + (1.0 - rho * rho).sqrt() * e;
            r.z.push(match self.instrument_law {
                InstrumentLaw::BinaryBalanced => f64::from(u8::from(latent > 0.0)),
                InstrumentLaw::StandardGaussian => latent,
            });
        }
        let v: f64 = match self.treatment_mechanism {
            TreatmentMechanism::LatentThreshold => rng.sample(StandardNormal),
            TreatmentMechanism::BernoulliLpm => rng.random::<f64>(),
        };
        let eps: f64 = rng.sample(StandardNormal);
        let m: f64 = if self.mediator.is_some() { rng.sample(StandardNormal) } else { 0.0 };

        let xz: f64 = self.gamma0
            + self.gamma_x.iter().zip(&r.x).map(|(a, b)| a * b).sum::<f64>()
            + (1..j).map(|jj| self.gamma_z[jj] * r.z[jj]).sum::<f64>();
        let index_at = |z0: f64| -> f64 {
            let lead = if j > 0 { self.gamma_z[0] * z0 } else { 0.0 };
            xz + lead + self.gamma_u * u
        };
        let z_first = r.z.first().copied().unwrap_or(0.0);
        r.pd = self.treat_prob(index_at(z_first));
        if self.has_potential_treatments() {
            r.d0 = self.treat(index_at(0.0), v);
            r.d1 = self.treat(index_at(1.0), v);
            r.d = if z_first == 1.0 { r.d1 } else { r.d0 };
        } else {
            r.d = self.treat(index_at(z_first), v);
            r.d0 = f64::NAN;
            r.d1 = f64::NAN;
        }

        r.ps = None;
        if self.rho_z_u.iter().all(|&p| p == 0.0) {
            let idx = xz + if j > 0 { self.gamma_z[0] * z_first } else { 0.0 };
            r.ps = match self.treatment_mechanism {
                TreatmentMechanism::LatentThreshold => {
                    let s = self.gamma_u.hypot(self.tau_sd);
                    Some(if s > 0.0 { normal_cdf(idx / s) } else { f64::from(u8::from(idx > 0.0)) })
                }
                TreatmentMechanism::BernoulliLpm if self.gamma_u == 0.0 => {
                    Some(idx.clamp(LPM_CLIP.0, LPM_CLIP.1))
                }
                TreatmentMechanism::BernoulliLpm => None,
            };
        }

        let mut effect = self.beta_d;
        if let Some(h) = &self.hetero {
            let g = h.g_x.iter().zip(&r.x).map(|(a, b)| a * b).sum::<f64>() + h.g_u * u;
            effect += h.scale * g;
        }
        let base = self.beta0
            + self.beta_x.iter().zip(&r.x).map(|(a, b)| a * b).sum::<f64>()
            + self.beta_u * u
            + (0..j).map(|jj| self.delta(jj) * r.z[jj]).sum::<f64>()
            + self.epsilon_sd * eps;
        r.noise = self.epsilon_sd * eps;
        match &self.mediator {
            Some(md) => {
                let w0 = md.noise_sd * m;
                let w1 = md.b1 + md.noise_sd * m;
                r.y0 = base + md.b2 * w0;
                r.y1 = base + effect + md.b3 + md.b2 * w1;
                r.w = if r.d == 1.0 { w1 } else { w0 };
                r.noise += md.b2 * md.noise_sd * m;
                effect += md.total_effect();
            }
            None => {
                r.y0 = base;
                r.y1 = base + effect;
                r.w = f64::NAN;
            }
        }
        r.u = u;
        r.effect = effect;
        r.y = if r.d == 1.0 { r.y1 } else { r.y0 };
    }
}

/// Column holding each row's individual treatment effect (no role).
pub const UNIT_EFFECT: &str = "unit_effect";
/// Column holding P(D=1 | X, Z) when it has a closed form (no role).
pub const TRUE_PROPENSITY: &str = "ps_true";

/// Draws `n` rows from `spec`. Bit-identical for identical arguments.
pub fn simulate(spec: &ScmSpec, n: usize, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    if n < MIN_ROWS {
        return Err(Error::Invalid(format!("n must be at least {MIN_ROWS}, got {n}")));
    }
    let (k, j) = (spec.k_covariates, spec.j_instruments);
    let mut xs = vec![Vec::with_capacity(n); k];
    let mut zs = vec![Vec::with_capacity(n); j];
    let mut cols: [Vec<f64>; 9] = Default::default();
    let [u, d, y, y0, y1, d0, d1, w, effect] = &mut cols;
    let mut ps = Vec::with_capacity(n);
    let mut ps_ok = true;
    let mut r = RowDraw::default();
    for i in 0..n {
        spec.draw_row(seed, i as u64, &mut r);
        for (c, v) in xs.iter_mut().zip(&r.x) {
            c.push(*v);
        }
        for (c, v) in zs.iter_mut().zip(&r.z) {
            c.push(*v);
        }
        u.push(r.u);
        d.push(r.d);
        y.push(r.y);
        y0.push(r.y0);
        y1.push(r.y1);
        d0.push(r.d0);
        d1.push(r.d1);
        w.push(r.w);
        effect.push(r.effect);
        match r.ps {
            Some(p) => ps.push(p),
            None => ps_ok = false,
        }
    }

    let x_names: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
    let z_names: Vec<String> = (1..=j).map(|i| format!("z{i}")).collect();
    let mut roles = RoleMap::new()
        .outcome("y")
        .treatment("d")
        .covariates(x_names.clone())
        .instruments(z_names.clone())
        .with(Role::HiddenConfounder, "u")
        .with(Role::PotentialOutcomeY0, "y0")
        .with(Role::PotentialOutcomeY1, "y1");
    let mut columns: Vec<(String, Vec<f64>)> = x_names.into_iter().zip(xs).collect();
    columns.extend(z_names.into_iter().zip(zs));
    let [u, d, y, y0, y1, d0, d1, w, effect] = cols;
    columns.extend([("u".into(), u), ("d".into(), d), ("y".into(), y), ("y0".into(), y0), ("y1".into(), y1)]);
    if spec.has_potential_treatments() {
        columns.push(("d0".into(), d0));
        columns.push(("d1".into(), d1));
        roles = roles.with(Role::PotentialTreatmentZ0, "d0").with(Role::PotentialTreatmentZ1, "d1");
    }
    if spec.mediator.is_some() {
        columns.push(("w".into(), w));
        roles = roles.with(Role::Mediator, "w");
    }
    columns.push((UNIT_EFFECT.into(), effect));
    if ps_ok {
        columns.push((TRUE_PROPENSITY.into(), ps));
    }
    Dataset::new(columns, roles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::validate_roles;
    use crate::stats::{cov, var};

    #[test]
    fn deterministic() {
        let spec = ScmSpec::default();
        let a = simulate(&spec, 100, 7).unwrap();
        let b = simulate(&spec, 100, 7).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        assert_ne!(a, simulate(&spec, 100, 8).unwrap());
        // Row draws do not depend on n.
        let c = simulate(&spec, 50, 7).unwrap();
        assert_eq!(&a.outcome().unwrap()[..50], c.outcome().unwrap());
        assert!(validate_roles(&a).passed());
    }

    #[test]
    fn rejects_bad_input() {
        let spec = ScmSpec::default();
        assert!(simulate(&spec, 1, 0).is_err());
        let bad = ScmSpec { gamma_u: f64::NAN, ..spec.clone() };
        assert!(simulate(&bad, 10, 0).is_err());
        let bad = ScmSpec { gamma_x: vec![], ..spec.clone() };
        assert!(bad.validate().is_err());
        let bad = ScmSpec { rho_z_u: vec![1.0], ..spec.clone() };
        assert!(bad.validate().is_err());
        let bad = ScmSpec { tau_sd: -1.0, ..spec };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn unconfounded_treatment_is_independent_of_u() {
        let spec = ScmSpec { gamma_u: 0.0, beta_u: 0.0, ..Default::default() };
        let ds = simulate(&spec, 10_000, 3).unwrap();
        let d = ds.treatment().unwrap();
        let u = ds.column("u").unwrap();
        let r = cov(d, u) / (var(d) * var(u)).sqrt();
        assert!(r.abs() < 0.05, "r = {r}");
    }

    #[test]
    fn observed_outcome_is_consistent_and_monotone() {
        for mech in [TreatmentMechanism::LatentThreshold, TreatmentMechanism::BernoulliLpm] {
            let spec = ScmSpec {
                treatment_mechanism: mech,
                gamma0: 0.3,
                gamma_z: vec![0.3],
                gamma_u: 0.1,
                gamma_x: vec![0.1],
                ..Default::default()
            };
            let ds = simulate(&spec, 2000, 1).unwrap();
            let (d, y) = (ds.treatment().unwrap(), ds.outcome().unwrap());
            let (y0, y1) = (ds.column("y0").unwrap(), ds.column("y1").unwrap());
            let (d0, d1) = (ds.column("d0").unwrap(), ds.column("d1").unwrap());
            for i in 0..ds.n_rows() {
                assert_eq!(y[i], d[i] * y1[i] + (1.0 - d[i]) * y0[i]);
                assert!(d1[i] >= d0[i]);
            }
        }
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let spec = ScmSpec {
            hetero: Some(Heterogeneity { scale: 0.5, g_x: vec![1.0], g_u: 1.0 }),
            mediator: Some(Mediator { b1: 0.5, b2: 0.4, b3: 1.0, noise_sd: 0.0 }),
            ..Default::default()
        };
        let back = ScmSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.hash(), spec.hash());
        let mut v: serde_json::Value = serde_json::from_str(&spec.to_json()).unwrap();
        v["surprise"] = serde_json::json!(1);
        assert!(ScmSpec::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn mediator_columns() {
        let spec = ScmSpec {
            mediator: Some(Mediator { b1: 0.5, b2: 0.4, b3: 1.0, noise_sd: 0.0 }),
            beta_d: 0.0,
            ..Default::default()
        };
        let ds = simulate(&spec, 20, 2).unwrap();
        let (y0, y1) = (ds.column("y0").unwrap(), ds.column("y1").unwrap());
        for i in 0..20 {
            assert!((y1[i] - y0[i] - 1.2).abs() < 1e-12);
        }
        assert_eq!(ds.names(Role::Mediator), vec!["w".to_string()]);
    }
}
