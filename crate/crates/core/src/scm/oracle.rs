use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Role};
use crate::error::{Error, Result};

/// Counts of the four principal strata defined by (D(0), D(1)).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strata {
    pub always_takers: usize,
    pub compliers: usize,
    pub defiers: usize,
    pub never_takers: usize,
}

impl Strata {
    pub fn total(&self) -> usize {
        self.always_takers + self.compliers + self.defiers + self.never_takers
    }
}

/// Exact in-sample estimands computed from potential-outcome columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub ate: f64,
    pub att: f64,
    pub late: Option<f64>,
    pub strata: Option<Strata>,
    pub complier_fraction: Option<f64>,
}

fn single_role<'a>(ds: &'a Dataset, role: Role) -> Result<&'a [f64]> {
    match ds.names(role).first() {
        Some(name) => ds.column(name),
        None => Err(Error::Roles(format!("dataset carries no {role} column"))),
    }
}

/// ATE, ATT and (with a binary instrument) LATE and strata counts.
pub fn oracle_effects(ds: &Dataset, instrument: Option<&str>) -> Result<OracleReport> {
    let y0 = single_role(ds, Role::PotentialOutcomeY0)?;
    let y1 = single_role(ds, Role::PotentialOutcomeY1)?;
    let d = ds.treatment()?;
    let n = ds.n_rows();
    let effect: Vec<f64> = y1.iter().zip(y0).map(|(a, b)| a - b).collect();
    let ate = effect.iter().sum::<f64>() / n as f64;
    let treated: Vec<f64> = effect.iter().zip(d).filter(|(_, &t)| t == 1.0).map(|(e, _)| *e).collect();
    if treated.is_empty() {
        return Err(Error::EmptyArm("no treated rows; ATT undefined".into()));
    }
    let att = treated.iter().sum::<f64>() / treated.len() as f64;

    let (mut late, mut strata, mut complier_fraction) = (None, None, None);
    if let Some(z) = instrument {
        let zc = ds.column(z)?;
        if zc.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::NonBinary { role: "instrument".into(), column: z.to_string() });
        }
        let d0 = single_role(ds, Role::PotentialTreatmentZ0)?;
        let d1 = single_role(ds, Role::PotentialTreatmentZ1)?;
        let mut s = Strata::default();
        let (mut sum, mut count) = (0.0, 0usize);
        for i in 0..n {
            match (d0[i] == 1.0, d1[i] == 1.0) {
                (true, true) => s.always_takers += 1,
                (false, true) => {
                    s.compliers += 1;
                    sum += effect[i];
                    count += 1;
                }
                (true, false) => s.defiers += 1,
                (false, false) => s.never_takers += 1,
            }
        }
        late = (count > 0).then(|| sum / count as f64);
        complier_fraction = Some(s.compliers as f64 / n as f64);
        strata = Some(s);
    }
    Ok(OracleReport { ate, att, late, strata, complier_fraction })
}
