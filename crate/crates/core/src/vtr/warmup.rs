//! Model selection from random-action data: least-squares Markov parameters
//! and pruning of the class by distance in Markov-parameter space.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{min_sym_eigenvalue, spectral_norm, Mat, Vector};
use crate::lqg::{LqgEnv, SolvedSystem};
use crate::model_class::SimulatorClass;

/// `[CF, CĀF, …, CĀ^{H̃−1}F, CB, CĀB, …, CĀ^{H̃−1}B]` with `Ā = A − FC`.
pub fn markov_parameters(solved: &SolvedSystem, h_tilde: usize) -> Mat {
    let s = &solved.system;
    let (p, m) = (s.p(), s.m());
    let a_bar = solved.predictor_matrix();
    let mut out = Mat::zeros(p, h_tilde * (p + m));
    let mut c_pow = s.c.clone();
    for j in 0..h_tilde {
        out.view_mut((0, j * p), (p, p)).copy_from(&(&c_pow * &solved.f));
        out.view_mut((0, h_tilde * p + j * m), (p, m)).copy_from(&(&c_pow * &s.b));
        c_pow = &c_pow * &a_bar;
    }
    out
}

/// `φ_t = [y_{t−1}; …; y_{t−H̃}; u_{t−1}; …; u_{t−H̃}]`.
pub fn regressor(ys: &[Vector], us: &[Vector], t: usize, h_tilde: usize) -> Vector {
    let p = ys[0].len();
    let m = us[0].len();
    let mut phi = Vector::zeros(h_tilde * (p + m));
    for j in 0..h_tilde {
        phi.rows_mut(j * p, p).copy_from(&ys[t - 1 - j]);
        phi.rows_mut(h_tilde * p + j * m, m).copy_from(&us[t - 1 - j]);
    }
    phi
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkovEstimate {
    #[serde(skip)]
    pub m_hat: Mat,
    pub h_tilde: usize,
    pub samples: usize,
    /// Mean squared residual norm.
    pub residual_mse: f64,
    /// `tr(Σ̂_e) tr(Σ̂_φ⁻¹)`, the scale constant of the estimation error.
    pub c_w: f64,
    pub gram_min_eigenvalue: f64,
}

impl MarkovEstimate {
    /// `multiplier · √(C_w / N)`.
    pub fn default_radius(&self, multiplier: f64) -> f64 {
        multiplier * (self.c_w / self.samples as f64).sqrt()
    }
}

/// Least squares of `y_t` on `φ_t` for `t = H̃, …, ys.len()−1`. Requires
/// `us.len() ≥ ys.len() − 1`.
pub fn estimate_markov(ys: &[Vector], us: &[Vector], h_tilde: usize) -> Result<MarkovEstimate> {
    if h_tilde == 0 || ys.len() <= h_tilde || us.len() + 1 < ys.len() {
        return Err(Error::EmptyDataset);
    }
    let p = ys[0].len();
    let d = h_tilde * (p + us[0].len());
    let mut gram = Mat::zeros(d, d);
    let mut cross = Mat::zeros(p, d);
    let rows: Vec<usize> = (h_tilde..ys.len()).collect();
    for &t in &rows {
        let phi = regressor(ys, us, t, h_tilde);
        gram.ger(1.0, &phi, &phi, 1.0);
        cross.ger(1.0, &ys[t], &phi, 1.0);
    }
    let samples = rows.len();
    let normalized = &gram / samples as f64;
    let min_eig = min_sym_eigenvalue(&normalized);
    let scale = normalized.diagonal().max();
    if !(min_eig > 1e-10 * scale.max(1e-300)) {
        return Err(Error::RankDeficient {
            min_eigenvalue: min_eig,
        });
    }
    let chol = normalized.clone().cholesky().ok_or(Error::RankDeficient {
        min_eigenvalue: min_eig,
    })?;
    // M̂ = (Σ y φᵀ)(Σ φ φᵀ)⁻¹
    let m_hat = chol.solve(&(cross.transpose() / samples as f64)).transpose();
    let mut residual_cov = Mat::zeros(p, p);
    for &t in &rows {
        let phi = regressor(ys, us, t, h_tilde);
        let e = &ys[t] - &m_hat * phi;
        residual_cov.ger(1.0, &e, &e, 1.0);
    }
    residual_cov /= samples as f64;
    let gram_inv_trace = chol.inverse().trace();
    Ok(MarkovEstimate {
        m_hat,
        h_tilde,
        samples,
        residual_mse: residual_cov.trace(),
        c_w: residual_cov.trace() * gram_inv_trace,
        gram_min_eigenvalue: min_eig,
    })
}

/// Warm-up data: `u_t ~ N(0, I)` for `t < T_w`, observations `y_0, …, y_{T_w}`.
#[derive(Debug, Clone, Default)]
pub struct WarmupData {
    pub ys: Vec<Vector>,
    pub us: Vec<Vector>,
    pub costs: Vec<f64>,
}

/// Runs `T_w` exploratory steps on `env` and estimates the Markov parameters.
pub fn warmup_markov<R: Rng>(env: &mut LqgEnv, t_w: usize, h_tilde: usize, rng: &mut R) -> Result<(MarkovEstimate, WarmupData)> {
    let m = env.system().m();
    let mut data = WarmupData::default();
    for _ in 0..t_w {
        data.ys.push(env.observation().clone());
        let u = Vector::from_fn(m, |_, _| rng.sample(StandardNormal));
        data.costs.push(env.step(&u));
        data.us.push(u);
    }
    data.ys.push(env.observation().clone());
    let est = estimate_markov(&data.ys, &data.us, h_tilde)?;
    Ok((est, data))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneOutcome {
    /// Retained member indices, in class order.
    pub retained: Vec<usize>,
    pub distances: Vec<f64>,
    pub radius: f64,
    /// Number of radius doublings needed to keep at least one member.
    pub inflations: usize,
}

/// Keeps members with `‖M(Θ) − M̂‖₂ ≤ radius`, doubling the radius until the
/// result is non-empty.
pub fn prune_class(class: &SimulatorClass, m_hat: &Mat, h_tilde: usize, radius: f64) -> PruneOutcome {
    let distances: Vec<f64> = class
        .members
        .iter()
        .map(|mem| spectral_norm(&(markov_parameters(&mem.solved, h_tilde) - m_hat)))
        .collect();
    let mut radius = radius;
    let mut inflations = 0;
    loop {
        let retained: Vec<usize> = (0..distances.len()).filter(|&i| distances[i] <= radius).collect();
        if !retained.is_empty() || !radius.is_finite() {
            return PruneOutcome {
                retained,
                distances,
                radius,
                inflations,
            };
        }
        radius = if radius > 0.0 { radius * 2.0 } else { f64::MIN_POSITIVE };
        inflations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqg::{solve, CostSpec, LqgSystem};
    use crate::rng::{stream_rng, streams};

    #[test]
    fn markov_of_zero_dynamics() {
        let s = solve(&LqgSystem::scalar(0.0, 2.0, 1.5), &CostSpec::identity(1, 1)).unwrap();
        let m = markov_parameters(&s, 3);
        assert_eq!(m.ncols(), 6);
        for j in 0..6 {
            let expected = if j == 3 { 3.0 } else { 0.0 };
            assert!((m[(0, j)] - expected).abs() < 1e-12, "col {j}: {}", m[(0, j)]);
        }
    }

    #[test]
    fn single_step_markov() {
        let s = solve(&LqgSystem::scalar(0.5, 1.0, 1.0), &CostSpec::identity(1, 1)).unwrap();
        let m = markov_parameters(&s, 1);
        assert_eq!(m.ncols(), 2);
        assert!((m[(0, 0)] - s.f[(0, 0)]).abs() < 1e-15);
        assert_eq!(m[(0, 1)], 1.0);
    }

    #[test]
    fn least_squares_recovers_markov_parameters() {
        let sys = LqgSystem::new(
            Mat::from_row_slice(2, 2, &[0.5, 0.2, 0.0, 0.3]),
            Mat::from_row_slice(2, 1, &[1.0, 0.5]),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        let s = solve(&sys, &CostSpec::identity(1, 1)).unwrap();
        let mut env = LqgEnv::seeded(sys, CostSpec::identity(1, 1), 3);
        let mut rng = stream_rng(3, streams::EXPLORATION);
        let (est, _) = warmup_markov(&mut env, 40_000, 8, &mut rng).unwrap();
        let err = spectral_norm(&(&est.m_hat - &markov_parameters(&s, 8)));
        assert!(err < 0.05, "{err}");
        assert!(err < est.default_radius(3.0), "{err} vs {}", est.default_radius(3.0));
    }

    #[test]
    fn rank_deficient_regressors() {
        let ys = vec![Vector::zeros(1); 50];
        let us = vec![Vector::zeros(1); 50];
        assert!(matches!(estimate_markov(&ys, &us, 2), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn infinite_radius_keeps_everything() {
        let class = SimulatorClass::from_candidates(
            vec![
                ("a".into(), LqgSystem::scalar(0.5, 1.0, 1.0)),
                ("b".into(), LqgSystem::scalar(0.2, 1.0, 1.0)),
            ],
            CostSpec::identity(1, 1),
            Default::default(),
        )
        .unwrap();
        let m_hat = Mat::zeros(1, 4);
        let out = prune_class(&class, &m_hat, 2, f64::INFINITY);
        assert_eq!(out.retained, vec![0, 1]);
        let tight = prune_class(&class, &markov_parameters(&class.members[1].solved, 2), 2, 1e-12);
        assert_eq!(tight.retained, vec![1]);
        let inflated = prune_class(&class, &Mat::from_element(1, 4, 50.0), 2, 1e-3);
        assert!(inflated.inflations > 0);
        assert!(!inflated.retained.is_empty());
    }
}
