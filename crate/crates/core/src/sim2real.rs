//! Evaluation of policies trained on a simulator class when deployed on the
//! true system: exact cross-model costs, the minimax certainty-equivalent
//! baseline, Monte Carlo gaps and the finite/infinite horizon offset.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, Mat};
use crate::lqg::{
    finite_horizon_optimal, rollout_policy, CertaintyEquivalent, CostSpec, FiniteHorizonPolicy, Policy, SolvedSystem, ZeroPolicy,
};
use crate::model_class::SimulatorClass;
use crate::riccati::{solve_lyapunov, STABILITY_MARGIN};
use crate::stats::{fit_line, mean_se, LineFit};
use crate::vtr::learner::{run_lqg_vtr_reps, LearnerConfig};
use crate::vtr::regression::argmin_first;

/// Joint dynamics of `(x_t, x̂′_{t|t})` when the certainty-equivalent
/// controller of `ctrl` runs on `truth`: `ξ′ = M ξ + N [w; z′]`.
pub fn cross_loop(truth: &SolvedSystem, ctrl: &SolvedSystem) -> (Mat, Mat) {
    let (a, b, c) = (&truth.system.a, &truth.system.b, &truth.system.c);
    let n = truth.n();
    let n2 = ctrl.n();
    let p = truth.system.p();
    let k2 = &ctrl.k;
    let l2 = &ctrl.l;
    let inner = ctrl.i_minus_lc() * (&ctrl.system.a - &ctrl.system.b * k2);
    let mut m = Mat::zeros(n + n2, n + n2);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.view_mut((0, n), (n, n2)).copy_from(&(-(b * k2)));
    m.view_mut((n, 0), (n2, n)).copy_from(&(l2 * c * a));
    m.view_mut((n, n), (n2, n2)).copy_from(&(inner - l2 * c * b * k2));
    let mut noise = Mat::zeros(n + n2, n + p);
    noise.view_mut((0, 0), (n, n)).copy_from(&Mat::identity(n, n));
    noise.view_mut((n, 0), (n2, n)).copy_from(&(l2 * c));
    noise.view_mut((n, n), (n2, p)).copy_from(l2);
    (m, noise)
}

/// Stationary average cost of `ctrl`'s certainty-equivalent controller on
/// `truth`; `+∞` when the joint loop is not stable.
pub fn cross_policy_avg_cost(truth: &SolvedSystem, ctrl: &SolvedSystem, cost: &CostSpec) -> f64 {
    cross_policy_cost_checked(truth, ctrl, cost).unwrap_or(f64::INFINITY)
}

/// As [`cross_policy_avg_cost`], reporting an unstable loop as an error.
pub fn cross_policy_cost_checked(truth: &SolvedSystem, ctrl: &SolvedSystem, cost: &CostSpec) -> Result<f64> {
    let (m, noise) = cross_loop(truth, ctrl);
    let rho = spectral_radius(&m);
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::Unstable { spectral_radius: rho });
    }
    let x = solve_lyapunov(&m, &(&noise * noise.transpose()), 1e-12)?;
    let n = truth.n();
    let c = &truth.system.c;
    let xx = x.view((0, 0), (n, n));
    let xh = x.view((n, n), (ctrl.n(), ctrl.n()));
    let obs = (&cost.q * c * xx * c.transpose()).trace() + cost.q.trace();
    let act = (ctrl.k.transpose() * &cost.r * &ctrl.k * xh).trace();
    Ok(obs + act)
}

/// `g(Θ′, Θ) = cost of Θ′'s controller on Θ − J*(Θ)` for all pairs, and the
/// row with the smallest worst case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimaxTable {
    pub names: Vec<String>,
    /// `gaps[controller][model]`.
    pub gaps: Vec<Vec<f64>>,
    pub row_max: Vec<f64>,
    pub choice: usize,
    pub value: f64,
}

impl MinimaxTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["controller".to_string()];
        header.extend(self.names.iter().cloned());
        header.push("row_max".into());
        w.write_record(&header)?;
        for (i, row) in self.gaps.iter().enumerate() {
            let mut rec = vec![self.names[i].clone()];
            rec.extend(row.iter().map(f64::to_string));
            rec.push(self.row_max[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn minimax_static_policy(class: &SimulatorClass) -> Result<MinimaxTable> {
    let members = &class.members;
    let gaps: Vec<Vec<f64>> = members
        .par_iter()
        .map(|ctrl| {
            members
                .iter()
                .map(|model| cross_policy_avg_cost(&model.solved, &ctrl.solved, &class.cost) - model.solved.j_star)
                .collect()
        })
        .collect();
    let row_max: Vec<f64> = gaps.iter().map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    if row_max.iter().all(|v| v.is_infinite()) {
        return Err(Error::AllUnstable);
    }
    let choice = argmin_first(&row_max).unwrap_or(0);
    Ok(MinimaxTable {
        names: members.iter().map(|m| m.name.clone()).collect(),
        value: row_max[choice],
        gaps,
        row_max,
        choice,
    })
}

/// A policy to evaluate on the true system.
#[derive(Clone)]
pub enum PolicySpec {
    CertaintyEquivalent { label: String, model: SolvedSystem },
    LqgVtr { class: Arc<SimulatorClass>, config: LearnerConfig },
    /// The optimal finite-horizon policy of the true system.
    FiniteHorizonOptimal,
    Zero,
    Custom {
        label: String,
        factory: Arc<dyn Fn() -> Box<dyn Policy> + Send + Sync>,
    },
}

impl PolicySpec {
    pub fn label(&self) -> String {
        match self {
            PolicySpec::CertaintyEquivalent { label, .. } => format!("certainty_equivalent({label})"),
            PolicySpec::LqgVtr { .. } => "lqg_vtr".into(),
            PolicySpec::FiniteHorizonOptimal => "finite_horizon_optimal".into(),
            PolicySpec::Zero => "zero".into(),
            PolicySpec::Custom { label, .. } => format!("custom({label})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub policy: String,
    pub horizon: usize,
    pub reps: usize,
    pub seed: u64,
    pub v_pi: f64,
    pub v_star: f64,
    pub gap: f64,
    pub std_error: f64,
    /// `(H+1) × stationary cost` for static controllers.
    pub stationary_v_pi: Option<f64>,
    /// Mean of `Σ c_t − (H+1) J*` for the learner.
    pub mean_regret: Option<f64>,
}

impl GapReport {
    pub fn csv_header() -> [&'static str; 10] {
        ["policy", "horizon", "reps", "seed", "v_pi", "v_star", "gap", "std_error", "stationary_v_pi", "mean_regret"]
    }

    pub fn csv_record(&self) -> [String; 10] {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        [
            self.policy.clone(),
            self.horizon.to_string(),
            self.reps.to_string(),
            self.seed.to_string(),
            self.v_pi.to_string(),
            self.v_star.to_string(),
            self.gap.to_string(),
            self.std_error.to_string(),
            opt(self.stationary_v_pi),
            opt(self.mean_regret),
        ]
    }
}

pub fn write_gap_csv<W: Write>(reports: &[GapReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(GapReport::csv_header())?;
    for r in reports {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

/// `V^π(Θ⋆) − V*(Θ⋆)` over `H + 1` steps, `V^π` by Monte Carlo over `reps`
/// episodes and `V*` from the finite-horizon recursion.
pub fn evaluate_gap(policy: &PolicySpec, truth: &SolvedSystem, horizon: usize, reps: usize, seed: u64) -> Result<GapReport> {
    if reps == 0 {
        return Err(Error::InvalidInput("evaluate_gap needs at least one episode".into()));
    }
    let system = &truth.system;
    let cost = &truth.cost;
    let fh = Arc::new(finite_horizon_optimal(system, cost, horizon)?);
    let v_star = fh.v_star;
    let steps = (horizon + 1) as f64;
    let (v_pi, std_error, stationary, regret) = match policy {
        PolicySpec::LqgVtr { class, config } => {
            let runs = run_lqg_vtr_reps(class.clone(), truth, horizon, config, seed, reps)?;
            let totals: Vec<f64> = runs.iter().map(|r| r.total_cost).collect();
            let regrets: Vec<f64> = runs.iter().map(|r| r.final_regret).collect();
            let est = mean_se(&totals);
            (est.mean, est.std_error, None, Some(mean_se(&regrets).mean))
        }
        PolicySpec::CertaintyEquivalent { model, .. } => {
            let r = rollout_policy(system, cost, || CertaintyEquivalent::new(model.clone()), horizon, seed, reps);
            let stationary = steps * cross_policy_avg_cost(truth, model, cost);
            (r.mean, r.std_error, Some(stationary), None)
        }
        PolicySpec::FiniteHorizonOptimal => {
            let r = rollout_policy(system, cost, || FiniteHorizonPolicy::new(system.clone(), fh.clone()), horizon, seed, reps);
            (r.mean, r.std_error, None, None)
        }
        PolicySpec::Zero => {
            let m = system.m();
            let r = rollout_policy(system, cost, || ZeroPolicy { m }, horizon, seed, reps);
            (r.mean, r.std_error, None, None)
        }
        PolicySpec::Custom { factory, .. } => {
            let r = rollout_policy(system, cost, || factory(), horizon, seed, reps);
            (r.mean, r.std_error, None, None)
        }
    };
    Ok(GapReport {
        policy: policy.label(),
        horizon,
        reps,
        seed,
        v_pi,
        v_star,
        gap: v_pi - v_star,
        std_error,
        stationary_v_pi: stationary,
        mean_regret: regret,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionRow {
    pub horizon: usize,
    pub v_star: f64,
    /// `V*(H) − (H+1) J*`.
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionTable {
    pub rows: Vec<ReductionRow>,
    pub slope: Option<LineFit>,
    /// `max |difference|`, the measured offset constant.
    pub d_h: f64,
}

pub fn reduction_diagnostic(model: &SolvedSystem, horizons: &[usize]) -> Result<ReductionTable> {
    let rows = horizons
        .iter()
        .map(|&h| {
            let fh = finite_horizon_optimal(&model.system, &model.cost, h)?;
            Ok(ReductionRow {
                horizon: h,
                v_star: fh.v_star,
                difference: fh.v_star - (h + 1) as f64 * model.j_star,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.horizon as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.difference).collect();
    Ok(ReductionTable {
        slope: fit_line(&xs, &ys),
        d_h: ys.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqg::{average_cost, solve, LqgSystem};
    use approx::assert_relative_eq;

    fn unit() -> CostSpec {
        CostSpec::identity(1, 1)
    }

    #[test]
    fn own_controller_recovers_j_star() {
        for (_, sys, cost) in crate::benchmark::reference_systems() {
            let s = solve(&sys, &cost).unwrap();
            assert_relative_eq!(cross_policy_avg_cost(&s, &s, &cost), s.j_star, epsilon = 1e-8, max_relative = 1e-10);
        }
    }

    #[test]
    fn zero_dynamics_ignore_the_controller() {
        let truth = solve(&LqgSystem::scalar(0.0, 1.0, 1.0), &unit()).unwrap();
        let ctrl = solve(&LqgSystem::scalar(0.0, 2.0, 1.0), &unit()).unwrap();
        assert_relative_eq!(cross_policy_avg_cost(&truth, &ctrl, &unit()), 2.0, epsilon = 1e-10);
    }

    #[test]
    fn destabilizing_pair_is_infinite() {
        let truth = solve(&LqgSystem::scalar(1.2, 1.0, 1.0), &unit()).unwrap();
        // wrong sign on B: the controller pushes the state the wrong way
        let ctrl = solve(&LqgSystem::scalar(1.2, -1.0, 1.0), &unit()).unwrap();
        assert!(cross_policy_avg_cost(&truth, &ctrl, &unit()).is_infinite());
        assert!(matches!(cross_policy_cost_checked(&truth, &ctrl, &unit()), Err(Error::Unstable { .. })));
    }

    #[test]
    fn cross_cost_matches_simulation() {
        let truth = solve(&LqgSystem::scalar(0.9, 1.0, 1.0), &unit()).unwrap();
        let ctrl = solve(&LqgSystem::scalar(0.6, 0.8, 1.2), &unit()).unwrap();
        let exact = cross_policy_avg_cost(&truth, &ctrl, &unit());
        let mc = average_cost(&truth.system, &unit(), || CertaintyEquivalent::new(ctrl.clone()), 400_000, 8, 17);
        assert!((mc.mean - exact).abs() < 4.0 * mc.std_error, "{} vs {exact} ± {}", mc.mean, mc.std_error);
    }

    #[test]
    fn singleton_minimax() {
        let class = SimulatorClass::from_candidates(
            vec![("only".into(), LqgSystem::scalar(0.5, 1.0, 1.0))],
            unit(),
            Default::default(),
        )
        .unwrap();
        let t = minimax_static_policy(&class).unwrap();
        assert_eq!(t.choice, 0);
        assert!(t.value.abs() < 1e-10);
    }

    #[test]
    fn minimax_row_is_smallest() {
        let class = crate::benchmark::two_state_class().unwrap();
        let t = minimax_static_policy(&class).unwrap();
        for (i, row) in t.gaps.iter().enumerate() {
            assert!(row[i].abs() < 1e-8);
            assert!(t.row_max[t.choice] <= t.row_max[i]);
        }
    }

    #[test]
    fn reduction_offset_is_flat() {
        let s = solve(&LqgSystem::scalar(0.0, 1.0, 1.0), &unit()).unwrap();
        let t = reduction_diagnostic(&s, &[10, 20, 40]).unwrap();
        let first = t.rows[0].difference;
        for r in &t.rows {
            assert_relative_eq!(r.difference, first, epsilon = 1e-9);
        }
        let again = reduction_diagnostic(&s, &[10, 20, 40]).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn optimal_policies_have_no_gap() {
        let s = solve(&LqgSystem::scalar(0.0, 1.0, 1.0), &unit()).unwrap();
        let zero = evaluate_gap(&PolicySpec::Zero, &s, 50, 400, 3).unwrap();
        assert!(zero.gap.abs() < 3.0 * zero.std_error, "{zero:?}");
        let s = solve(&LqgSystem::scalar(0.8, 1.0, 1.0), &unit()).unwrap();
        let opt = evaluate_gap(&PolicySpec::FiniteHorizonOptimal, &s, 50, 400, 4).unwrap();
        assert!(opt.gap.abs() < 3.0 * opt.std_error, "{opt:?}");
        assert_eq!(opt, evaluate_gap(&PolicySpec::FiniteHorizonOptimal, &s, 50, 400, 4).unwrap());
    }
}
