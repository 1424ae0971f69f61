//! A scripted nested-comparison scenario: one component effect reaches
//! significance, the other does not, and their difference is not
//! significant either. Significance in one comparison and not the other is
//! not evidence that the two differ.

use crate::design::{nested_scenario, subject_differences, DesignSpec, GenerativeParams, Scale};
use crate::error::Result;
use crate::inference::{nested_comparison, InteractionInput, NestedComparison};

pub const DEMO_SUBJECTS: usize = 60;
pub const DEMO_ITEMS: usize = 16;
/// Log-scale effects of the two component comparisons.
pub const DEMO_EFFECT_A: f64 = 0.05;
pub const DEMO_EFFECT_B: f64 = 0.02;
pub const DEMO_SEED: u64 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct NestedDemo {
    pub input: InteractionInput,
    pub comparison: NestedComparison,
}

/// Runs the nested scenario with the given seed and default variance
/// components, and tests per-subject log-scale differences.
pub fn nested_demo(seed: u64) -> Result<NestedDemo> {
    let design = DesignSpec::new(DEMO_SUBJECTS, DEMO_ITEMS)?;
    let params = GenerativeParams::reading_time_defaults(0.0);
    let scenario = nested_scenario(&design, &params, DEMO_EFFECT_A, DEMO_EFFECT_B, seed)?;
    let input = InteractionInput::new(
        subject_differences(&scenario.run_a, Scale::Log)?,
        subject_differences(&scenario.run_b, Scale::Log)?,
    )?;
    let comparison = nested_comparison(&input)?;
    Ok(NestedDemo { input, comparison })
}
