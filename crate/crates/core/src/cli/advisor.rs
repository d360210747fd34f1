//! Method-selection flowchart.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONFOUNDER: &str = "Confounder Approach";
pub const IV_STRONG: &str = "IV Approach: 2SLS with strong IVs";
pub const IV_FLEXIBLE: &str = "IV Approach: 2SLS or ML methods with weak or strong IVs";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum YesNo {
    Yes,
    No,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SampleSize {
    Low,
    High,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Strength {
    WeakOrExtreme,
    Ok,
}

/// Answers to the flowchart questions. Only the answers on the traversed
/// path are required; later ones are ignored once a terminal is reached.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvisorInput {
    pub unobserved_confounding: Option<YesNo>,
    pub suitable_ivs: Option<YesNo>,
    pub late_useful: Option<YesNo>,
    pub sample_size: Option<SampleSize>,
    pub iv_strength_or_proportion: Option<Strength>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    pub recommendation: String,
    /// Questions asked and the answers taken, in order.
    pub path: Vec<String>,
}

fn need<T>(v: Option<T>, field: &str) -> Result<T> {
    v.ok_or_else(|| Error::Invalid(format!("incomplete input: '{field}' is required on this path")))
}

fn yn(v: YesNo) -> &'static str {
    match v {
        YesNo::Yes => "yes",
        YesNo::No => "no",
    }
}

/// Walks the flowchart. High sample size with weak IVs or an extreme
/// treatment proportion has no box of its own; it is routed to the flexible
/// IV terminal, since large samples are what make ML first stages usable
/// with weak instruments.
pub fn advise(input: &AdvisorInput) -> Result<Recommendation> {
    let mut path = Vec::new();
    let done = |rec: &str, path: Vec<String>| Ok(Recommendation { recommendation: rec.to_string(), path });

    let c = need(input.unobserved_confounding, "unobserved_confounding")?;
    path.push(format!("notable hypothesized unobserved confounding: {}", yn(c)));
    if c == YesNo::No {
        return done(CONFOUNDER, path);
    }
    let iv = need(input.suitable_ivs, "suitable_ivs")?;
    path.push(format!("suitable IVs available: {}", yn(iv)));
    if iv == YesNo::No {
        return done(CONFOUNDER, path);
    }
    let late = need(input.late_useful, "late_useful")?;
    path.push(format!("LATE useful under heterogeneity: {}", yn(late)));
    if late == YesNo::No {
        return done(CONFOUNDER, path);
    }
    let size = need(input.sample_size, "sample_size")?;
    let strength = need(input.iv_strength_or_proportion, "iv_strength_or_proportion")?;
    let (label, rec) = match (size, strength) {
        (SampleSize::Low, Strength::WeakOrExtreme) => ("low sample size + weak IVs and/or extreme proportion", CONFOUNDER),
        (SampleSize::Low, Strength::Ok) => ("low sample size + OK proportion", IV_STRONG),
        (SampleSize::High, Strength::Ok) => ("high sample size + OK proportion", IV_FLEXIBLE),
        (SampleSize::High, Strength::WeakOrExtreme) => ("high sample size + weak IVs and/or extreme proportion", IV_FLEXIBLE),
    };
    path.push(label.to_string());
    done(rec, path)
}

/// Every complete input, in a fixed order.
pub fn all_inputs() -> Vec<AdvisorInput> {
    let mut out = Vec::with_capacity(32);
    for c in [YesNo::Yes, YesNo::No] {
        for iv in [YesNo::Yes, YesNo::No] {
            for late in [YesNo::Yes, YesNo::No] {
                for size in [SampleSize::Low, SampleSize::High] {
                    for s in [Strength::WeakOrExtreme, Strength::Ok] {
                        out.push(AdvisorInput {
                            unobserved_confounding: Some(c),
                            suitable_ivs: Some(iv),
                            late_useful: Some(late),
                            sample_size: Some(size),
                            iv_strength_or_proportion: Some(s),
                        });
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_exits_ignore_later_answers() {
        let r = advise(&AdvisorInput { unobserved_confounding: Some(YesNo::No), ..Default::default() }).unwrap();
        assert_eq!(r.recommendation, CONFOUNDER);
        assert_eq!(r.path.len(), 1);
        let r = advise(&AdvisorInput {
            unobserved_confounding: Some(YesNo::Yes),
            suitable_ivs: Some(YesNo::No),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(r.recommendation, CONFOUNDER);
    }

    #[test]
    fn full_path() {
        let r = advise(&AdvisorInput {
            unobserved_confounding: Some(YesNo::Yes),
            suitable_ivs: Some(YesNo::Yes),
            late_useful: Some(YesNo::Yes),
            sample_size: Some(SampleSize::High),
            iv_strength_or_proportion: Some(Strength::Ok),
        })
        .unwrap();
        assert_eq!(r.recommendation, IV_FLEXIBLE);
        assert_eq!(r.path.len(), 4);
    }

    #[test]
    fn incomplete() {
        let e = advise(&AdvisorInput { unobserved_confounding: Some(YesNo::Yes), ..Default::default() });
        assert!(matches!(e, Err(Error::Invalid(_))));
        assert!(advise(&AdvisorInput::default()).is_err());
    }

    #[test]
    fn total_over_lattice() {
        let all = all_inputs();
        assert_eq!(all.len(), 32);
        for i in &all {
            let r = advise(i).unwrap().recommendation;
            assert!([CONFOUNDER, IV_STRONG, IV_FLEXIBLE].contains(&r.as_str()));
        }
    }
}
