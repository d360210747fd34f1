//! The method-selection flowchart over all 32 answer combinations.

use causal_workbench::cli::advisor::{advise, all_inputs};

fn main() -> causal_workbench::Result<()> {
    for input in all_inputs() {
        let r = advise(&input)?;
        println!(
            "{:?} {:?} {:?} {:?} {:?} -> {}",
            input.unobserved_confounding.unwrap(),
            input.suitable_ivs.unwrap(),
            input.late_useful.unwrap(),
            input.sample_size.unwrap(),
            input.iv_strength_or_proportion.unwrap(),
            r.recommendation
        );
    }
    Ok(())
}
