//! LQG systems, simulation, Kalman filtering, optimal costs and rollouts.
//!
//! Dynamics: `x_{t+1} = A x_t + B u_t + w_t`, `y_t = C x_t + z_t` with
//! `w_t ~ N(0, I_n)`, `z_t ~ N(0, I_p)` and `x_0 ~ N(0, I_n)`. The per-step
//! cost is `y_tᵀQy_t + u_tᵀRu_t`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{all_finite, is_symmetric, min_sym_eigenvalue, quad_form, symmetrize, Mat, Vector};
use crate::riccati::{
    control_gain, control_riccati_step, kalman_gain, solve_dare_control, solve_dare_filter,
    SolverOptions,
};
use crate::rng::{replication_seed, streams, Noise};
use crate::stats::{batch_averages, mean_se, MeanEstimate};

#[derive(Debug, Clone, PartialEq)]
pub struct LqgSystem {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
}

impl LqgSystem {
    pub fn new(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(dim_mismatch("LqgSystem: A", "nonempty square", format!("{}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return Err(dim_mismatch("LqgSystem: B", format!("{n}xm"), format!("{}x{}", b.nrows(), b.ncols())));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(dim_mismatch("LqgSystem: C", format!("px{n}"), format!("{}x{}", c.nrows(), c.ncols())));
        }
        if !(all_finite(&a) && all_finite(&b) && all_finite(&c)) {
            return Err(Error::InvalidInput("system matrices contain non-finite entries".into()));
        }
        Ok(Self { a, b, c })
    }

    /// Scalar system `(a, b, c)`.
    pub fn scalar(a: f64, b: f64, c: f64) -> Self {
        Self {
            a: Mat::from_element(1, 1, a),
            b: Mat::from_element(1, 1, b),
            c: Mat::from_element(1, 1, c),
        }
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// The equivalent system in coordinates `x = T x'` for orthogonal `T`.
    pub fn transformed(&self, t: &Mat) -> Self {
        Self {
            a: t.transpose() * &self.a * t,
            b: t.transpose() * &self.b,
            c: &self.c * t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSpec {
    pub q: Mat,
    pub r: Mat,
}

impl CostSpec {
    pub fn new(q: Mat, r: Mat) -> Result<Self> {
        for (name, m) in [("Q", &q), ("R", &r)] {
            if !is_symmetric(m, 1e-12) {
                return Err(Error::InvalidInput(format!("{name} must be square and symmetric")));
            }
            if !all_finite(m) || min_sym_eigenvalue(m) <= 0.0 {
                return Err(Error::InvalidInput(format!("{name} must be positive definite")));
            }
        }
        Ok(Self {
            q: symmetrize(&q),
            r: symmetrize(&r),
        })
    }

    pub fn identity(p: usize, m: usize) -> Self {
        Self {
            q: Mat::identity(p, p),
            r: Mat::identity(m, m),
        }
    }

    pub fn stage_cost(&self, y: &Vector, u: &Vector) -> f64 {
        quad_form(&self.q, y) + quad_form(&self.r, u)
    }

    fn check(&self, system: &LqgSystem) -> Result<()> {
        if self.q.nrows() != system.p() {
            return Err(dim_mismatch("CostSpec: Q", format!("{0}x{0}", system.p()), format!("{0}x{0}", self.q.nrows())));
        }
        if self.r.nrows() != system.m() {
            return Err(dim_mismatch("CostSpec: R", format!("{0}x{0}", system.m()), format!("{0}x{0}", self.r.nrows())));
        }
        Ok(())
    }
}

/// A system together with its optimal controller, steady-state filter and
/// optimal average cost.
#[derive(Debug, Clone)]
pub struct SolvedSystem {
    pub system: LqgSystem,
    pub cost: CostSpec,
    pub p: Mat,
    pub k: Mat,
    pub sigma: Mat,
    pub l: Mat,
    /// Predictor gain `A L`.
    pub f: Mat,
    /// Optimal average cost per step, including the `tr(Q)` measurement floor.
    pub j_star: f64,
    /// `P − CᵀQC`, the quadratic weight of the bias function.
    pub bias_weight: Mat,
    i_minus_lc: Mat,
}

pub fn solve(system: &LqgSystem, cost: &CostSpec) -> Result<SolvedSystem> {
    solve_with(system, cost, &SolverOptions::default())
}

pub fn solve_with(system: &LqgSystem, cost: &CostSpec, opts: &SolverOptions) -> Result<SolvedSystem> {
    cost.check(system)?;
    let LqgSystem { a, b, c } = system;
    let p = solve_dare_control(a, b, c, &cost.q, &cost.r, opts)?;
    let k = control_gain(&p, a, b, &cost.r)?;
    let sigma = solve_dare_filter(a, c, opts)?;
    let l = kalman_gain(&sigma, c)?;
    let f = a * &l;
    let n = system.n();
    let state_cost = c.transpose() * &cost.q * c;
    let i_minus_lc = Mat::identity(n, n) - &l * c;
    let j_star = (&p * &l * c * &sigma).trace()
        + (&state_cost * &i_minus_lc * &sigma).trace()
        + cost.q.trace();
    let bias_weight = symmetrize(&(&p - &state_cost));
    Ok(SolvedSystem {
        system: system.clone(),
        cost: cost.clone(),
        p,
        k,
        sigma,
        l,
        f,
        j_star,
        bias_weight,
        i_minus_lc,
    })
}

impl SolvedSystem {
    pub fn n(&self) -> usize {
        self.system.n()
    }

    /// `I − L C`.
    pub fn i_minus_lc(&self) -> &Mat {
        &self.i_minus_lc
    }

    /// `x̂_{t+1|t+1} = (I − LC)(A x̂_{t|t} + B u_t) + L y_{t+1}`.
    pub fn update(&self, xhat: &Vector, u: &Vector, y_next: &Vector) -> Vector {
        let prior = &self.system.a * xhat + &self.system.b * u;
        &self.i_minus_lc * prior + &self.l * y_next
    }

    /// `x̂_{0|0} = L y_0`, from the prior mean `x̂_{0|−1} = 0`.
    pub fn initial_belief(&self, y0: &Vector) -> Vector {
        &self.l * y0
    }

    /// Optimal action `−K x̂`.
    pub fn action(&self, xhat: &Vector) -> Vector {
        -(&self.k * xhat)
    }

    /// `x̂ᵀ(P − CᵀQC)x̂ + yᵀQy`.
    pub fn bias(&self, xhat: &Vector, y: &Vector) -> f64 {
        quad_form(&self.bias_weight, xhat) + quad_form(&self.cost.q, y)
    }

    /// `A − BK`.
    pub fn closed_loop(&self) -> Mat {
        &self.system.a - &self.system.b * &self.k
    }

    /// `A − FC`, the predictor-form state matrix.
    pub fn predictor_matrix(&self) -> Mat {
        &self.system.a - &self.f * &self.system.c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefKind {
    /// `x̂_{t|t}`
    Posterior,
    /// `x̂_{t|t−1}`
    Prior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub mean: Vector,
    pub kind: BeliefKind,
    pub step: usize,
    pub model_id: usize,
}

/// Checked form of [`SolvedSystem::update`].
pub fn filter_update(solved: &SolvedSystem, belief: &BeliefState, u: &Vector, y_next: &Vector) -> Result<BeliefState> {
    let s = &solved.system;
    if belief.mean.len() != s.n() {
        return Err(dim_mismatch("filter_update: belief", s.n().to_string(), belief.mean.len().to_string()));
    }
    if u.len() != s.m() {
        return Err(dim_mismatch("filter_update: action", s.m().to_string(), u.len().to_string()));
    }
    if y_next.len() != s.p() {
        return Err(dim_mismatch("filter_update: observation", s.p().to_string(), y_next.len().to_string()));
    }
    if belief.kind != BeliefKind::Posterior {
        return Err(Error::InvalidInput("filter_update expects a posterior belief".into()));
    }
    Ok(BeliefState {
        mean: solved.update(&belief.mean, u, y_next),
        kind: BeliefKind::Posterior,
        step: belief.step + 1,
        model_id: belief.model_id,
    })
}

pub fn bias_function(solved: &SolvedSystem, xhat: &Vector, y: &Vector) -> f64 {
    solved.bias(xhat, y)
}

/// One environment transition. Draws `w` before `z`.
pub fn step_env(system: &LqgSystem, x: &Vector, u: &Vector, noise: &mut Noise) -> (Vector, Vector) {
    let w = noise.standard(system.n());
    let z = noise.standard(system.p());
    let x_next = &system.a * x + &system.b * u + w;
    let y_next = &system.c * &x_next + z;
    (x_next, y_next)
}

/// Stateful environment with a hidden state.
#[derive(Debug, Clone)]
pub struct LqgEnv {
    system: LqgSystem,
    cost: CostSpec,
    noise: Noise,
    x: Vector,
    y: Vector,
    t: usize,
}

impl LqgEnv {
    /// Draws `x_0 ~ N(0, I)` and `y_0` from `noise`.
    pub fn new(system: LqgSystem, cost: CostSpec, mut noise: Noise) -> Self {
        let x = noise.standard(system.n());
        let y = &system.c * &x + noise.standard(system.p());
        Self {
            system,
            cost,
            noise,
            x,
            y,
            t: 0,
        }
    }

    pub fn seeded(system: LqgSystem, cost: CostSpec, seed: u64) -> Self {
        Self::new(system, cost, Noise::seeded(seed, streams::ENVIRONMENT))
    }

    /// Current observation `y_t`.
    pub fn observation(&self) -> &Vector {
        &self.y
    }

    pub fn state(&self) -> &Vector {
        &self.x
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn system(&self) -> &LqgSystem {
        &self.system
    }

    /// Applies `u_t`; returns the incurred cost `c_t` and advances to `y_{t+1}`.
    pub fn step(&mut self, u: &Vector) -> f64 {
        let cost = self.cost.stage_cost(&self.y, u);
        let (x, y) = step_env(&self.system, &self.x, u, &mut self.noise);
        self.x = x;
        self.y = y;
        self.t += 1;
        cost
    }
}

/// A controller that sees only the observation history and its own actions.
pub trait Policy: Send {
    /// Start of an episode; the next `act` receives `y_0`.
    fn reset(&mut self);
    /// Action `u_t` given the current observation `y_t`.
    fn act(&mut self, y: &Vector) -> Vector;
}

impl Policy for Box<dyn Policy> {
    fn reset(&mut self) {
        (**self).reset()
    }

    fn act(&mut self, y: &Vector) -> Vector {
        (**self).act(y)
    }
}

/// Certainty-equivalent controller of a fixed model: steady-state filter and gain.
#[derive(Debug, Clone)]
pub struct CertaintyEquivalent {
    model: SolvedSystem,
    state: Option<(Vector, Vector)>,
}

impl CertaintyEquivalent {
    pub fn new(model: SolvedSystem) -> Self {
        Self { model, state: None }
    }

    pub fn belief(&self) -> Option<&Vector> {
        self.state.as_ref().map(|(x, _)| x)
    }
}

impl Policy for CertaintyEquivalent {
    fn reset(&mut self) {
        self.state = None;
    }

    fn act(&mut self, y: &Vector) -> Vector {
        let xhat = match &self.state {
            None => self.model.initial_belief(y),
            Some((x, u)) => self.model.update(x, u, y),
        };
        let u = self.model.action(&xhat);
        self.state = Some((xhat, u.clone()));
        u
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy {
    pub m: usize,
}

impl Policy for ZeroPolicy {
    fn reset(&mut self) {}

    fn act(&mut self, _y: &Vector) -> Vector {
        Vector::zeros(self.m)
    }
}

/// Time-varying optimal solution over steps `0..=H`.
#[derive(Debug, Clone)]
pub struct FiniteHorizonSolution {
    pub horizon: usize,
    /// Optimal expected total cost `E[Σ_{h=0}^{H} c_h]`, including `(H+1) tr(Q)`.
    pub v_star: f64,
    /// `P_0, …, P_H` with `P_H = CᵀQC`.
    pub p: Vec<Mat>,
    /// `K_0, …, K_H`; `K_h` uses `P_{h+1}` and `K_H = 0`.
    pub gains: Vec<Mat>,
    /// `Σ_{h|h−1}`, with `Σ_{0|−1} = I`.
    pub prior_covs: Vec<Mat>,
    /// `Σ_{h|h}`.
    pub post_covs: Vec<Mat>,
    pub filter_gains: Vec<Mat>,
}

pub fn finite_horizon_optimal(system: &LqgSystem, cost: &CostSpec, horizon: usize) -> Result<FiniteHorizonSolution> {
    cost.check(system)?;
    let LqgSystem { a, b, c } = system;
    let n = system.n();
    let state_cost = symmetrize(&(c.transpose() * &cost.q * c));

    let mut p = vec![state_cost.clone(); horizon + 1];
    let mut gains = vec![Mat::zeros(system.m(), n); horizon + 1];
    for h in (0..horizon).rev() {
        gains[h] = control_gain(&p[h + 1], a, b, &cost.r)?;
        p[h] = control_riccati_step(&p[h + 1], a, b, &state_cost, &cost.r)?;
    }

    let mut prior_covs = Vec::with_capacity(horizon + 1);
    let mut post_covs = Vec::with_capacity(horizon + 1);
    let mut filter_gains = Vec::with_capacity(horizon + 1);
    let mut prior = Mat::identity(n, n);
    for _ in 0..=horizon {
        let l = kalman_gain(&prior, c)?;
        let post = symmetrize(&((Mat::identity(n, n) - &l * c) * &prior));
        let next = symmetrize(&(a * &post * a.transpose() + Mat::identity(n, n)));
        prior_covs.push(prior);
        post_covs.push(post);
        filter_gains.push(l);
        prior = next;
    }

    let mut v_star = (horizon + 1) as f64 * cost.q.trace();
    for h in 0..=horizon {
        v_star += (&p[h] * (&prior_covs[h] - &post_covs[h])).trace();
        v_star += (&state_cost * &post_covs[h]).trace();
    }
    Ok(FiniteHorizonSolution {
        horizon,
        v_star,
        p,
        gains,
        prior_covs,
        post_covs,
        filter_gains,
    })
}

/// Optimal time-varying policy: exact Kalman filter and gains `K_h`.
#[derive(Debug, Clone)]
pub struct FiniteHorizonPolicy {
    system: LqgSystem,
    solution: std::sync::Arc<FiniteHorizonSolution>,
    h: usize,
    state: Option<(Vector, Vector)>,
}

impl FiniteHorizonPolicy {
    pub fn new(system: LqgSystem, solution: std::sync::Arc<FiniteHorizonSolution>) -> Self {
        Self {
            system,
            solution,
            h: 0,
            state: None,
        }
    }
}

impl Policy for FiniteHorizonPolicy {
    fn reset(&mut self) {
        self.h = 0;
        self.state = None;
    }

    fn act(&mut self, y: &Vector) -> Vector {
        let h = self.h.min(self.solution.horizon);
        let l = &self.solution.filter_gains[h];
        let prior = match &self.state {
            None => Vector::zeros(self.system.n()),
            Some((x, u)) => &self.system.a * x + &self.system.b * u,
        };
        let innovation = y - &self.system.c * &prior;
        let xhat = prior + l * innovation;
        let u = -(&self.solution.gains[h] * &xhat);
        self.state = Some((xhat, u.clone()));
        self.h += 1;
        u
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub actions: Vec<Vector>,
    pub observations: Vec<Vector>,
    pub costs: Vec<f64>,
    pub seed: u64,
}

impl Trajectory {
    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }
}

/// Runs one episode of `H + 1` steps (`t = 0..=H`).
pub fn run_episode(system: &LqgSystem, cost: &CostSpec, policy: &mut dyn Policy, horizon: usize, noise: Noise, seed: u64) -> Trajectory {
    let mut env = LqgEnv::new(system.clone(), cost.clone(), noise);
    policy.reset();
    let mut traj = Trajectory {
        seed,
        ..Default::default()
    };
    for _ in 0..=horizon {
        let y = env.observation().clone();
        let u = policy.act(&y);
        traj.states.push(env.state().clone());
        let c = env.step(&u);
        traj.observations.push(y);
        traj.actions.push(u);
        traj.costs.push(c);
    }
    traj
}

#[derive(Debug, Clone)]
pub struct RolloutSummary {
    pub mean: f64,
    pub std_error: f64,
    pub reps: usize,
    /// The first episode, kept for inspection.
    pub sample: Trajectory,
}

/// Monte Carlo estimate of `E[Σ_{h=0}^{H} c_h]` over `reps` episodes.
/// Episode `i` uses its own environment stream derived from `(seed, i)`.
pub fn rollout_policy<F, P>(system: &LqgSystem, cost: &CostSpec, make_policy: F, horizon: usize, seed: u64, reps: usize) -> RolloutSummary
where
    F: Fn() -> P + Sync,
    P: Policy,
{
    rollout_with_noise(system, cost, make_policy, horizon, seed, reps, false)
}

/// As [`rollout_policy`], with the deterministic zero-noise mode available.
pub fn rollout_with_noise<F, P>(
    system: &LqgSystem,
    cost: &CostSpec,
    make_policy: F,
    horizon: usize,
    seed: u64,
    reps: usize,
    zero_noise: bool,
) -> RolloutSummary
where
    F: Fn() -> P + Sync,
    P: Policy,
{
    assert!(reps > 0, "rollout_policy needs at least one episode");
    let noise_for = |i: usize| {
        let s = replication_seed(seed, i as u64);
        let noise = if zero_noise {
            Noise::Zero
        } else {
            Noise::seeded(s, streams::ENVIRONMENT)
        };
        (s, noise)
    };
    let (s0, n0) = noise_for(0);
    let mut first = make_policy();
    let sample = run_episode(system, cost, &mut first, horizon, n0, s0);
    let mut totals = vec![sample.total_cost()];
    let rest: Vec<f64> = (1..reps)
        .into_par_iter()
        .map(|i| {
            let (s, noise) = noise_for(i);
            let mut policy = make_policy();
            run_episode(system, cost, &mut policy, horizon, noise, s).total_cost()
        })
        .collect();
    totals.extend(rest);
    let est = mean_se(&totals);
    RolloutSummary {
        mean: est.mean,
        std_error: if reps > 1 { est.std_error } else { f64::NAN },
        reps,
        sample,
    }
}

/// Long-run average cost of a policy, from independent parallel chains with
/// a burn-in. The standard error uses batch means within each chain.
pub fn average_cost<F, P>(system: &LqgSystem, cost: &CostSpec, make_policy: F, steps: usize, chains: usize, seed: u64) -> MeanEstimate
where
    F: Fn() -> P + Sync,
    P: Policy,
{
    let chains = chains.max(1);
    let per_chain = steps.div_ceil(chains);
    let burn_in = 1000;
    let batches: Vec<Vec<f64>> = (0..chains)
        .into_par_iter()
        .map(|i| {
            let mut env = LqgEnv::seeded(system.clone(), cost.clone(), replication_seed(seed, i as u64));
            let mut policy = make_policy();
            policy.reset();
            let mut costs = Vec::with_capacity(per_chain);
            for t in 0..(burn_in + per_chain) {
                let u = policy.act(&env.observation().clone());
                let c = env.step(&u);
                if t >= burn_in {
                    costs.push(c);
                }
            }
            batch_averages(&costs, 25)
        })
        .collect();
    let all: Vec<f64> = batches.into_iter().flatten().collect();
    let est = mean_se(&all);
    MeanEstimate {
        mean: est.mean,
        std_error: est.std_error,
        samples: chains * per_chain,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::scalar;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn unit_cost() -> CostSpec {
        CostSpec::identity(1, 1)
    }

    #[test]
    fn solve_scalar_zero_dynamics() {
        let s = solve(&LqgSystem::scalar(0.0, 1.0, 1.0), &unit_cost()).unwrap();
        assert_relative_eq!(s.p[(0, 0)], 1.0);
        assert_eq!(s.k[(0, 0)], 0.0);
        assert_relative_eq!(s.sigma[(0, 0)], 1.0);
        assert_relative_eq!(s.l[(0, 0)], 0.5);
        assert_relative_eq!(s.j_star, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn blind_system_pays_only_noise_floor() {
        let cost = CostSpec::new(scalar(3.0), scalar(1.0)).unwrap();
        let s = solve(&LqgSystem::scalar(0.5, 1.0, 0.0), &cost).unwrap();
        assert_relative_eq!(s.j_star, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn cost_spec_rejects_indefinite() {
        assert!(CostSpec::new(scalar(0.0), scalar(1.0)).is_err());
        assert!(CostSpec::new(Mat::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]), scalar(1.0)).is_err());
    }

    #[test]
    fn step_env_zero_noise() {
        let s = LqgSystem::new(Mat::identity(2, 2), Mat::identity(2, 2), Mat::identity(2, 2)).unwrap();
        let mut noise = Noise::Zero;
        let (x, y) = step_env(&s, &Vector::zeros(2), &Vector::zeros(2), &mut noise);
        assert_eq!(x, Vector::zeros(2));
        assert_eq!(y, Vector::zeros(2));
        let e1 = Vector::from_vec(vec![1.0, 0.0]);
        let (x, _) = step_env(&s, &e1, &e1, &mut noise);
        assert_eq!(x, Vector::from_vec(vec![2.0, 0.0]));
    }

    #[test]
    fn filter_update_examples() {
        let s = solve(&LqgSystem::scalar(0.0, 1.0, 1.0), &unit_cost()).unwrap();
        let belief = BeliefState {
            mean: Vector::from_element(1, 3.0),
            kind: BeliefKind::Posterior,
            step: 0,
            model_id: 0,
        };
        let next = filter_update(&s, &belief, &Vector::from_element(1, 1.0), &Vector::from_element(1, 4.0)).unwrap();
        assert_relative_eq!(next.mean[0], 2.5, epsilon = 1e-12);
        assert_eq!(next.step, 1);

        let blind = solve(&LqgSystem::scalar(0.5, 1.0, 0.0), &unit_cost()).unwrap();
        let x = blind.update(&Vector::from_element(1, 2.0), &Vector::from_element(1, 1.0), &Vector::from_element(1, 9.0));
        assert_relative_eq!(x[0], 2.0);
        assert!(filter_update(&s, &belief, &Vector::zeros(2), &Vector::zeros(1)).is_err());
    }

    #[test]
    fn bias_examples() {
        let s0 = solve(&LqgSystem::scalar(0.0, 1.0, 1.0), &unit_cost()).unwrap();
        assert_relative_eq!(s0.bias(&Vector::from_element(1, 7.0), &Vector::from_element(1, 2.0)), 4.0, epsilon = 1e-12);
        assert_eq!(s0.bias(&Vector::zeros(1), &Vector::zeros(1)), 0.0);
        let s = solve(&LqgSystem::scalar(0.5, 1.0, 1.0), &unit_cost()).unwrap();
        let root = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
        assert_relative_eq!(s.bias(&Vector::from_element(1, 1.0), &Vector::from_element(1, 2.0)), root - 1.0 + 4.0, epsilon = 1e-9);
    }

    #[test]
    fn finite_horizon_single_step() {
        let fh = finite_horizon_optimal(&LqgSystem::scalar(0.0, 1.0, 1.0), &unit_cost(), 0).unwrap();
        assert_relative_eq!(fh.v_star, 2.0, epsilon = 1e-12);
        assert_eq!(fh.gains[0][(0, 0)], 0.0);
    }

    #[test]
    fn expensive_control_kills_gains() {
        let cost = CostSpec::new(scalar(1.0), scalar(1e9)).unwrap();
        let fh = finite_horizon_optimal(&LqgSystem::scalar(0.5, 1.0, 1.0), &cost, 50).unwrap();
        assert!(fh.gains.iter().all(|k| k.amax() < 1e-8));
    }

    #[test]
    fn finite_horizon_gains_converge_to_stationary() {
        let sys = LqgSystem::scalar(0.5, 1.0, 1.0);
        let s = solve(&sys, &unit_cost()).unwrap();
        let fh = finite_horizon_optimal(&sys, &unit_cost(), 100).unwrap();
        assert_relative_eq!(fh.gains[0][(0, 0)], s.k[(0, 0)], epsilon = 1e-10);
        assert_relative_eq!(fh.p[0][(0, 0)], s.p[(0, 0)], epsilon = 1e-10);
        assert_relative_eq!(fh.prior_covs[100][(0, 0)], s.sigma[(0, 0)], epsilon = 1e-10);
        assert_eq!(fh.gains[100][(0, 0)], 0.0);
    }

    #[test]
    fn riccati_iterates_decay_geometrically() {
        let sys = LqgSystem::new(
            Mat::from_row_slice(2, 2, &[0.6, 0.3, -0.2, 0.5]),
            Mat::from_row_slice(2, 1, &[1.0, 0.5]),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        let s = solve(&sys, &unit_cost()).unwrap();
        let fh = finite_horizon_optimal(&sys, &unit_cost(), 60).unwrap();
        let errs: Vec<f64> = fh.p.iter().rev().map(|p| crate::linalg::spectral_norm(&(p - &s.p))).collect();
        // above the solver tolerance floor the error must shrink monotonically
        let informative: Vec<f64> = errs.iter().copied().take_while(|e| *e > 1e-7).collect();
        assert!(informative.len() > 5);
        for w in informative[3..].windows(2) {
            assert!(w[1] <= w[0], "{} > {}", w[1], w[0]);
        }
        assert!(errs[40] < 1e-6 * errs[1]);
    }

    #[test]
    fn trajectory_costs_are_stage_costs() {
        let sys = LqgSystem::scalar(0.5, 1.0, 1.0);
        let cost = unit_cost();
        let s = solve(&sys, &cost).unwrap();
        let mut pol = CertaintyEquivalent::new(s);
        let traj = run_episode(&sys, &cost, &mut pol, 50, Noise::seeded(3, 0), 3);
        for t in 0..=50 {
            assert_eq!(traj.costs[t], cost.stage_cost(&traj.observations[t], &traj.actions[t]));
        }
    }

    #[test]
    fn zero_noise_rollout_is_free() {
        let sys = LqgSystem::scalar(0.5, 1.0, 1.0);
        let r = rollout_with_noise(&sys, &unit_cost(), || ZeroPolicy { m: 1 }, 20, 1, 4, true);
        assert_eq!(r.mean, 0.0);
    }

    #[test]
    fn rollouts_are_deterministic() {
        let sys = LqgSystem::scalar(0.5, 1.0, 1.0);
        let s = solve(&sys, &unit_cost()).unwrap();
        let a = rollout_policy(&sys, &unit_cost(), || CertaintyEquivalent::new(s.clone()), 30, 9, 64);
        let b = rollout_policy(&sys, &unit_cost(), || CertaintyEquivalent::new(s.clone()), 30, 9, 64);
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.sample, b.sample);
    }

    #[test]
    fn finite_horizon_value_matches_rollouts() {
        let sys = LqgSystem::scalar(0.5, 1.0, 1.0);
        let cost = unit_cost();
        let fh = Arc::new(finite_horizon_optimal(&sys, &cost, 200).unwrap());
        let r = rollout_policy(&sys, &cost, || FiniteHorizonPolicy::new(sys.clone(), fh.clone()), 200, 11, 20_000);
        assert!((r.mean - fh.v_star).abs() <= 3.0 * r.std_error, "{} vs {} (se {})", r.mean, fh.v_star, r.std_error);
    }

    #[test]
    fn average_cost_matches_j_star() {
        let sys = LqgSystem::scalar(0.5, 1.0, 1.0);
        let cost = unit_cost();
        let s = solve(&sys, &cost).unwrap();
        let est = average_cost(&sys, &cost, || CertaintyEquivalent::new(s.clone()), 400_000, 8, 5);
        assert!((est.mean - s.j_star).abs() <= 3.0 * est.std_error, "{} vs {} (se {})", est.mean, s.j_star, est.std_error);
    }

    #[test]
    fn unitary_invariance() {
        let sys = LqgSystem::new(
            Mat::from_row_slice(2, 2, &[0.6, 0.3, -0.2, 0.5]),
            Mat::from_row_slice(2, 1, &[1.0, 0.5]),
            Mat::from_row_slice(1, 2, &[1.0, 0.2]),
        )
        .unwrap();
        let th = 0.7f64;
        let t = Mat::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let a = solve(&sys, &unit_cost()).unwrap();
        let b = solve(&sys.transformed(&t), &unit_cost()).unwrap();
        assert_relative_eq!(a.j_star, b.j_star, epsilon = 1e-9);
    }
}
