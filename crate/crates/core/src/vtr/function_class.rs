//! The value-target function class: `f_Θ(τ, x̂, u; Θ̃) = E[h*_Θ̃(x̂′, y′)]`
//! where `y′` is predicted by `Θ` from the clipped history and `x̂′` is the
//! filter update of `Θ̃`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{psd_factor, quad_form, Mat, Vector};
use crate::lqg::SolvedSystem;
use crate::stats::{mean_se, MeanEstimate};

use super::history::ClippedHistory;

/// A member prepared for repeated evaluation of `f_Θ` with clip length `l`.
#[derive(Debug, Clone)]
pub struct FunctionModel {
    pub solved: SolvedSystem,
    pub clip_len: usize,
    /// Block `s` is `[Ā_c^{s−1} L, Ā_c^{s−1}(I − LC)B]` with `Ā_c = (I − LC)A`.
    w: Mat,
    /// `C A W`.
    g: Mat,
    ca: Mat,
    cb: Mat,
    /// Innovation covariance `CΣCᵀ + I`.
    pub innovation_cov: Mat,
}

impl FunctionModel {
    pub fn new(solved: SolvedSystem, clip_len: usize) -> Self {
        let s = &solved.system;
        let (n, m, p) = (s.n(), s.m(), s.p());
        let ilc = solved.i_minus_lc().clone();
        let a_c = &ilc * &s.a;
        let ilc_b = &ilc * &s.b;
        let mut w = Mat::zeros(n, clip_len * (p + m));
        let mut power = Mat::identity(n, n);
        for blk in 0..clip_len {
            let base = blk * (p + m);
            w.view_mut((0, base), (n, p)).copy_from(&(&power * &solved.l));
            w.view_mut((0, base + p), (n, m)).copy_from(&(&power * &ilc_b));
            power = &a_c * power;
        }
        let ca = &s.c * &s.a;
        let g = &ca * &w;
        let cb = &s.c * &s.b;
        let innovation_cov = &s.c * &solved.sigma * s.c.transpose() + Mat::identity(p, p);
        Self {
            solved,
            clip_len,
            w,
            g,
            ca,
            cb,
            innovation_cov,
        }
    }

    /// The stacked map `W` from a full window to the clipped belief.
    pub fn belief_map(&self) -> &Mat {
        &self.w
    }

    fn width(&self, l_clip: usize) -> usize {
        let s = &self.solved.system;
        l_clip.min(self.clip_len) * (s.p() + s.m())
    }

    /// Clipped belief `x̂^c = Σ_{s=1}^{l_clip} Ā_c^{s−1}((I−LC)B u_{t−s} + L y_{t−s+1})`.
    pub fn clipped_belief(&self, tau: &ClippedHistory) -> Vector {
        self.clipped_belief_stacked(&tau.stacked(), tau.l_clip())
    }

    pub fn clipped_belief_stacked(&self, window: &Vector, l_clip: usize) -> Vector {
        let k = self.width(l_clip);
        self.w.columns(0, k) * window.rows(0, k)
    }

    /// Predicted mean of `y_{t+1}`: `CA x̂^c + CB u`.
    pub fn predicted_observation(&self, window: &Vector, l_clip: usize, u: &Vector) -> Vector {
        let k = self.width(l_clip);
        self.g.columns(0, k) * window.rows(0, k) + &self.cb * u
    }

    /// `CA x + CB u` for an arbitrary belief `x` of this model.
    pub fn predicted_observation_from(&self, x: &Vector, u: &Vector) -> Vector {
        &self.ca * x + &self.cb * u
    }
}

/// The parts of `f` that depend only on the optimistic model `Θ̃`.
#[derive(Debug, Clone)]
pub struct OptimisticTerms {
    /// `P̃ − C̃ᵀQC̃`.
    pub z: Mat,
    pub l: Mat,
    /// `(I − L̃C̃)Ã`.
    ilc_a: Mat,
    /// `(I − L̃C̃)B̃`.
    ilc_b: Mat,
    /// `L̃ᵀ Z̃ L̃`.
    ltzl: Mat,
    pub q: Mat,
}

impl OptimisticTerms {
    pub fn new(tilde: &SolvedSystem) -> Self {
        let ilc = tilde.i_minus_lc();
        Self {
            z: tilde.bias_weight.clone(),
            l: tilde.l.clone(),
            ilc_a: ilc * &tilde.system.a,
            ilc_b: ilc * &tilde.system.b,
            ltzl: tilde.l.transpose() * &tilde.bias_weight * &tilde.l,
            q: tilde.cost.q.clone(),
        }
    }

    /// `(I − L̃C̃)(Ã x̂ + B̃ u)`, the part of `x̂′` not driven by `y′`.
    pub fn drift(&self, belief: &Vector, u: &Vector) -> Vector {
        &self.ilc_a * belief + &self.ilc_b * u
    }

    /// `tr(L̃ᵀZ̃L̃ S) + tr(Q S)` for innovation covariance `S`.
    pub fn noise_term(&self, innovation_cov: &Mat) -> f64 {
        (&self.ltzl * innovation_cov).trace() + (&self.q * innovation_cov).trace()
    }

    /// `f` from the predicted observation mean `b` and the drift `a`.
    pub fn evaluate(&self, b: &Vector, a: &Vector, noise_term: f64) -> f64 {
        let mean_next = a + &self.l * b;
        quad_form(&self.z, &mean_next) + quad_form(&self.q, b) + noise_term
    }

    /// `f′ − f` when the predicted observation mean moves from `b` to `b + d`,
    /// without forming either value.
    pub fn shift(&self, b: &Vector, a: &Vector, d: &Vector) -> f64 {
        let mean_next = a + &self.l * b;
        let ld = &self.l * d;
        let two_m = &mean_next * 2.0 + &ld;
        ld.dot(&(&self.z * two_m)) + d.dot(&(&self.q * (b * 2.0 + d)))
    }
}

/// Closed-form `f_Θ(τ, x̂, u; Θ̃)`.
pub fn f_closed_form(target: &FunctionModel, tau: &ClippedHistory, belief: &Vector, u: &Vector, tilde: &SolvedSystem) -> f64 {
    let xc = target.clipped_belief(tau);
    f_with_target_belief(target, &xc, belief, u, tilde)
}

/// As [`f_closed_form`] with the target-model belief supplied directly.
pub fn f_with_target_belief(target: &FunctionModel, target_belief: &Vector, belief: &Vector, u: &Vector, tilde: &SolvedSystem) -> f64 {
    let terms = OptimisticTerms::new(tilde);
    let b = target.predicted_observation_from(target_belief, u);
    let a = terms.drift(belief, u);
    terms.evaluate(&b, &a, terms.noise_term(&target.innovation_cov))
}

/// Sampling estimate of the same expectation: `y′ = CAx̂^c + CBu + e` with
/// `e ~ N(0, CΣCᵀ + I)`, `x̂′ = (I − L̃C̃)(Ãx̂ + B̃u) + L̃y′`, averaged `h*_Θ̃(x̂′, y′)`.
pub fn f_monte_carlo<R: Rng>(
    target: &FunctionModel,
    tau: &ClippedHistory,
    belief: &Vector,
    u: &Vector,
    tilde: &SolvedSystem,
    samples: usize,
    rng: &mut R,
) -> MeanEstimate {
    let xc = target.clipped_belief(tau);
    let mean_y = target.predicted_observation_from(&xc, u);
    let factor = psd_factor(&target.innovation_cov);
    let ilc = tilde.i_minus_lc();
    let drift = ilc * (&tilde.system.a * belief + &tilde.system.b * u);
    let p = mean_y.len();
    let values: Vec<f64> = (0..samples)
        .map(|_| {
            let e = Vector::from_fn(p, |_, _| rng.sample(StandardNormal));
            let y_next = &mean_y + &factor * e;
            let x_next = &drift + &tilde.l * &y_next;
            tilde.bias(&x_next, &y_next)
        })
        .collect();
    mean_se(&values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqg::{solve, CostSpec, LqgSystem};
    use crate::rng::{stream_rng, streams};
    use approx::assert_relative_eq;

    fn scalar_model(a: f64, l: usize) -> FunctionModel {
        FunctionModel::new(solve(&LqgSystem::scalar(a, 1.0, 1.0), &CostSpec::identity(1, 1)).unwrap(), l)
    }

    fn v(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    #[test]
    fn clipped_belief_examples() {
        let m = scalar_model(0.0, 4);
        assert_eq!(m.clipped_belief(&ClippedHistory::default())[0], 0.0);
        let tau = ClippedHistory {
            ys: vec![v(4.0)],
            us: vec![v(2.0)],
        };
        assert_relative_eq!(m.clipped_belief(&tau)[0], 3.0, epsilon = 1e-12);
        let zero = ClippedHistory {
            ys: vec![v(0.0); 3],
            us: vec![v(0.0); 3],
        };
        assert_eq!(m.clipped_belief(&zero)[0], 0.0);
    }

    #[test]
    fn f_for_zero_dynamics_is_noise_floor() {
        let m = scalar_model(0.0, 3);
        let f = f_closed_form(&m, &ClippedHistory::default(), &v(0.0), &v(0.0), &m.solved);
        assert_relative_eq!(f, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn q_terms_double_with_q_at_fixed_p() {
        let m = scalar_model(0.5, 3);
        let tau = ClippedHistory {
            ys: vec![v(1.0), v(-0.5)],
            us: vec![v(0.3), v(0.2)],
        };
        let u = v(0.7);
        let terms = OptimisticTerms::new(&m.solved);
        let mut doubled = terms.clone();
        doubled.q *= 2.0;
        let xc = m.clipped_belief(&tau);
        let b = m.predicted_observation_from(&xc, &u);
        let a = terms.drift(&v(0.4), &u);
        let s = &m.innovation_cov;
        let q_part = |t: &OptimisticTerms| quad_form(&t.q, &b) + (&t.q * s).trace();
        let base = terms.evaluate(&b, &a, terms.noise_term(s));
        let twice = doubled.evaluate(&b, &a, doubled.noise_term(s));
        assert_relative_eq!(twice - base, q_part(&terms), epsilon = 1e-12);
        assert_relative_eq!(q_part(&doubled), 2.0 * q_part(&terms), epsilon = 1e-12);
    }

    #[test]
    fn shift_matches_difference() {
        let m = scalar_model(0.5, 3);
        let terms = OptimisticTerms::new(&m.solved);
        let b = v(0.8);
        let a = v(-0.3);
        let d = v(0.01);
        let direct = terms.evaluate(&(&b + &d), &a, 0.0) - terms.evaluate(&b, &a, 0.0);
        assert_relative_eq!(terms.shift(&b, &a, &d), direct, epsilon = 1e-12);
    }

    #[test]
    fn bellman_equation_holds_at_optimal_action() {
        let sys = LqgSystem::new(
            Mat::from_row_slice(2, 2, &[0.6, 0.3, -0.2, 0.5]),
            Mat::from_row_slice(2, 1, &[1.0, 0.5]),
            Mat::from_row_slice(1, 2, &[1.0, 0.2]),
        )
        .unwrap();
        let s = solve(&sys, &CostSpec::identity(1, 1)).unwrap();
        let model = FunctionModel::new(s.clone(), 1);
        for (x0, x1, y) in [(0.3, -1.2, 0.5), (2.0, 0.1, -1.0), (0.0, 0.0, 0.0)] {
            let xhat = Vector::from_vec(vec![x0, x1]);
            let yv = v(y);
            let u = s.action(&xhat);
            let lhs = s.cost.stage_cost(&yv, &u) + f_with_target_belief(&model, &xhat, &xhat, &u, &s) - s.bias(&xhat, &yv);
            assert_relative_eq!(lhs, s.j_star, epsilon = 1e-9);
        }
    }

    #[test]
    fn closed_form_matches_sampling() {
        let target = scalar_model(0.5, 3);
        let tilde = solve(&LqgSystem::scalar(0.3, 0.8, 1.2), &CostSpec::identity(1, 1)).unwrap();
        let tau = ClippedHistory {
            ys: vec![v(1.0), v(-0.5), v(0.2)],
            us: vec![v(0.3), v(0.2), v(-1.0)],
        };
        let (belief, u) = (v(0.4), v(-0.7));
        let exact = f_closed_form(&target, &tau, &belief, &u, &tilde);
        let mut rng = stream_rng(17, streams::ORACLE);
        let mc = f_monte_carlo(&target, &tau, &belief, &u, &tilde, 200_000, &mut rng);
        assert!((mc.mean - exact).abs() <= 3.0 * mc.std_error, "{} vs {exact} (se {})", mc.mean, mc.std_error);
    }
}
