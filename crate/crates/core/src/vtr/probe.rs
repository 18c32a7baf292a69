//! Measured gap between `f` on the clipped belief and on the exact filter
//! belief, as a function of the clip length.

use serde::{Deserialize, Serialize};

use crate::linalg::Vector;
use crate::lqg::{SolvedSystem, Trajectory};
use crate::stats::fit_line;

use super::function_class::{FunctionModel, OptimisticTerms};
use super::history::HistoryBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub clip_len: usize,
    pub max_gap: f64,
    /// Steps that entered the maximum (those with a full window).
    pub steps: usize,
}

/// For each `l`, `max_t |f′ − f|` over `t ≥ max(l)` where `f′` uses the
/// exact belief of `target` and `f` its clipped belief. Actions and beliefs
/// of `tilde` come from the trajectory.
pub fn clipping_error_probe(target: &SolvedSystem, tilde: &SolvedSystem, traj: &Trajectory, clip_lens: &[usize]) -> Vec<ProbeRow> {
    let l_max = clip_lens.iter().copied().max().unwrap_or(0);
    let models: Vec<FunctionModel> = clip_lens.iter().map(|&l| FunctionModel::new(target.clone(), l)).collect();
    let terms = OptimisticTerms::new(tilde);
    let (p, m) = (target.system.p(), target.system.m());
    let mut history = HistoryBuffer::new(l_max.max(1));
    let mut gaps = vec![0.0_f64; clip_lens.len()];
    let mut steps = 0;
    let mut exact: Option<Vector> = None;
    let mut tilde_belief: Option<Vector> = None;
    let ca = &target.system.c * &target.system.a;
    for (t, (y, u)) in traj.observations.iter().zip(&traj.actions).enumerate() {
        let (x, xt) = match (&exact, &tilde_belief, t) {
            (Some(x), Some(xt), t) if t > 0 => {
                let u_prev = &traj.actions[t - 1];
                (target.update(x, u_prev, y), tilde.update(xt, u_prev, y))
            }
            _ => (target.initial_belief(y), tilde.initial_belief(y)),
        };
        history.push_observation(y.clone());
        if t >= l_max && l_max > 0 {
            let (window, l_clip) = history.stacked_window(p, m);
            let b = models[0].predicted_observation_from(&x, u);
            let a = terms.drift(&xt, u);
            for (k, model) in models.iter().enumerate() {
                let xc = model.clipped_belief_stacked(&window, l_clip);
                let d = &ca * (&xc - &x);
                gaps[k] = gaps[k].max(terms.shift(&b, &a, &d).abs());
            }
            steps += 1;
        }
        history.push_action(u.clone());
        exact = Some(x);
        tilde_belief = Some(xt);
    }
    clip_lens
        .iter()
        .zip(gaps)
        .map(|(&clip_len, max_gap)| ProbeRow { clip_len, max_gap, steps })
        .collect()
}

/// Geometric decay rate `exp(slope)` of `log(max_gap)` against `l`, over
/// rows with a positive gap. `None` with fewer than two such rows.
pub fn decay_rate(rows: &[ProbeRow]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.max_gap > 0.0)
        .map(|r| (r.clip_len as f64, r.max_gap.ln()))
        .unzip();
    fit_line(&xs, &ys).map(|f| f.slope.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqg::{run_episode, solve, CertaintyEquivalent, CostSpec, LqgSystem};
    use crate::rng::{streams, Noise};

    #[test]
    fn zero_dynamics_have_no_clipping_error() {
        let s = solve(&LqgSystem::scalar(0.0, 1.0, 1.0), &CostSpec::identity(1, 1)).unwrap();
        let mut pol = CertaintyEquivalent::new(s.clone());
        let traj = run_episode(&s.system, &s.cost, &mut pol, 200, Noise::seeded(1, streams::ENVIRONMENT), 1);
        for row in clipping_error_probe(&s, &s, &traj, &[1, 2, 5]) {
            assert_eq!(row.max_gap, 0.0);
        }
    }

    #[test]
    fn gap_shrinks_with_clip_length() {
        let s = solve(&LqgSystem::scalar(0.8, 1.0, 1.0), &CostSpec::identity(1, 1)).unwrap();
        let mut pol = CertaintyEquivalent::new(s.clone());
        let traj = run_episode(&s.system, &s.cost, &mut pol, 2000, Noise::seeded(2, streams::ENVIRONMENT), 2);
        let rows = clipping_error_probe(&s, &s, &traj, &[2, 4, 8, 16]);
        for w in rows.windows(2) {
            assert!(w[1].max_gap < w[0].max_gap);
        }
        // scalar: x̂ − x̂^c = ((1 − LC)A)^l x̂_{t−l}, so the rate is exact
        let rate = (1.0 - s.l[(0, 0)]) * 0.8;
        let est = decay_rate(&rows).unwrap();
        assert!((est / rate - 1.0).abs() < 0.1, "{est} vs {rate}");
    }
}
