//! Fixed test systems: a handful of single systems of increasing size and an
//! eight-member two-state class.

use crate::error::Result;
use crate::linalg::Mat;
use crate::lqg::{CostSpec, LqgSystem};
use crate::model_class::{SimulatorClass, ValidationConfig};

/// Index of the true system inside [`two_state_class`].
pub const TWO_STATE_TRUTH: usize = 5;

/// `A = [[a₁, 0.2], [0, a₂]]`, `B = [1; b₂]`, `C = [1, 0]` on the grid
/// `a₁ ∈ {0.5, 0.7}`, `a₂ ∈ {0.2, 0.5}`, `b₂ ∈ {0.5, 1.0}`.
pub fn two_state_candidates() -> Vec<(String, LqgSystem)> {
    let mut out = Vec::with_capacity(8);
    for &a1 in &[0.5, 0.7] {
        for &a2 in &[0.2, 0.5] {
            for &b2 in &[0.5, 1.0] {
                let sys = LqgSystem::new(
                    Mat::from_row_slice(2, 2, &[a1, 0.2, 0.0, a2]),
                    Mat::from_row_slice(2, 1, &[1.0, b2]),
                    Mat::from_row_slice(1, 2, &[1.0, 0.0]),
                )
                .expect("shapes are consistent");
                out.push((format!("a1={a1},a2={a2},b2={b2}"), sys));
            }
        }
    }
    out
}

pub fn two_state_class() -> Result<SimulatorClass> {
    SimulatorClass::from_candidates(two_state_candidates(), CostSpec::identity(1, 1), ValidationConfig::default())
}

/// Five systems used for cost-consistency checks: scalar, the benchmark
/// truth, a lightly damped oscillator, and two three-state systems.
pub fn reference_systems() -> Vec<(String, LqgSystem, CostSpec)> {
    let unit = |p, m| CostSpec::identity(p, m);
    let (_, truth) = two_state_candidates().swap_remove(TWO_STATE_TRUTH);
    vec![
        ("scalar".into(), LqgSystem::scalar(0.5, 1.0, 1.0), unit(1, 1)),
        ("two-state".into(), truth, unit(1, 1)),
        (
            "oscillator".into(),
            LqgSystem::new(
                Mat::from_row_slice(2, 2, &[0.8, 0.4, -0.4, 0.8]),
                Mat::from_row_slice(2, 1, &[0.0, 1.0]),
                Mat::from_row_slice(1, 2, &[1.0, 0.0]),
            )
            .expect("shapes"),
            unit(1, 1),
        ),
        (
            "three-state".into(),
            LqgSystem::new(
                Mat::from_row_slice(3, 3, &[0.6, 0.3, 0.0, 0.0, 0.5, 0.2, 0.1, 0.0, 0.4]),
                Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, 0.5]),
                Mat::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
            )
            .expect("shapes"),
            CostSpec::new(Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]), Mat::identity(2, 2) * 0.5).expect("pd"),
        ),
        (
            "unstable-open-loop".into(),
            LqgSystem::new(
                Mat::from_row_slice(3, 3, &[1.1, 0.2, 0.0, 0.0, 0.7, 0.3, 0.0, 0.0, 0.5]),
                Mat::from_row_slice(3, 1, &[1.0, 0.5, 1.0]),
                Mat::from_row_slice(1, 3, &[1.0, 1.0, 0.0]),
            )
            .expect("shapes"),
            unit(1, 1),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_norm;
    use crate::vtr::warmup::markov_parameters;

    #[test]
    fn benchmark_class_is_fully_valid() {
        let class = two_state_class().unwrap();
        assert_eq!(class.len(), 8, "{:?}", class.pruned.iter().map(|p| p.report.failed_check()).collect::<Vec<_>>());
        let truth = &class.members[TWO_STATE_TRUTH];
        for (i, m) in class.members.iter().enumerate() {
            let d = spectral_norm(&(markov_parameters(&m.solved, 10) - markov_parameters(&truth.solved, 10)));
            if i == TWO_STATE_TRUTH {
                assert!(d < 1e-12);
            } else {
                // every alternative is distinguishable from the truth
                assert!(d > 0.05, "{} is {d} from the truth", m.name);
            }
        }
    }

    #[test]
    fn optimistic_choice_is_not_the_truth() {
        let class = two_state_class().unwrap();
        let j: Vec<f64> = class.members.iter().map(|m| m.solved.j_star).collect();
        let best = j.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(best < j[TWO_STATE_TRUTH]);
    }
}
