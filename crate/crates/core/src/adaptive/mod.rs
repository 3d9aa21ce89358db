//! Adaptive reduction: the CURE loop and SPARK shift optimization.

mod cure;
mod spark;

pub use cure::{cure_run, cure_step, perp_consistency, CureState, CureStepRecord, StepReducer, StopCriterion};
pub use spark::{
    dominant_direction, h2_error_pseudo_optimal, h2_error_pseudo_optimal_checked, pair_basis, shift_pair, spark,
    spark_initial_guess, SparkOptions, SparkResult, PARAM_FLOOR,
};
