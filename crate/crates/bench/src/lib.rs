//! Fixtures shared by the benchmarks.

use lqgvtr_core::benchmark::reference_systems;
use lqgvtr_core::{solve, SolvedSystem};

/// Every reference system, solved.
pub fn solved_references() -> Vec<(String, SolvedSystem)> {
    reference_systems()
        .into_iter()
        .map(|(name, sys, cost)| (name, solve(&sys, &cost).expect("reference systems solve")))
        .collect()
}
