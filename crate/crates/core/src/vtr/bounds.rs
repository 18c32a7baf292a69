//! Learner constants: confidence radius, switching threshold, clip length,
//! episode cap, state guard and the function-class bound `D`.

use crate::linalg::{spectral_norm, Mat};
use crate::model_class::ClassProfile;

use super::function_class::{FunctionModel, OptimisticTerms};

/// `scale · [2D² log(2N) + 4ΔDH + 4(D + Δ) + 4D √(2 log(4H(H+1)/δ))]`
/// with `N = |𝓔|` standing in for the covering number.
pub fn compute_beta(d: f64, class_size: usize, horizon: usize, delta: f64, clip_error: f64, scale: f64) -> f64 {
    let h = horizon as f64;
    let n = class_size as f64;
    let raw = 2.0 * d * d * (2.0 * n).ln()
        + 4.0 * clip_error * d * h
        + 4.0 * (d + clip_error)
        + 4.0 * d * (2.0 * (4.0 * h * (h + 1.0) / delta).ln()).sqrt();
    scale * raw
}

/// `ψ = 4D² + 1`.
pub fn switching_threshold(d: f64) -> f64 {
    4.0 * d * d + 1.0
}

/// `⌈log(H(n+p)) / (−log(1−γ₂))⌉`, at least 1.
pub fn default_clip_len(horizon: usize, n: usize, p: usize, gamma2: f64) -> usize {
    let rate = -(1.0 - gamma2.min(1.0 - 1e-12)).ln();
    let l = ((horizon as f64 * (n + p) as f64).ln() / rate).ceil();
    (l as usize).max(1)
}

/// `⌈log(κ₂H) / (−log(1−γ₂))⌉`, clamped to `[1, cap]`.
pub fn default_markov_truncation(horizon: usize, kappa2: f64, gamma2: f64, cap: usize) -> usize {
    let rate = -(1.0 - gamma2.min(1.0 - 1e-12)).ln();
    let h = ((kappa2 * horizon as f64).ln() / rate).ceil();
    (h.max(1.0) as usize).min(cap)
}

/// `⌈log²(D H)⌉`, at least 2.
pub fn default_episode_cap(d: f64, horizon: usize) -> usize {
    let l = (d * horizon as f64).max(std::f64::consts::E).ln();
    ((l * l).ceil() as usize).max(2)
}

/// `c_x (√n + √p) log(H + e)`.
pub fn default_state_bound(c_x: f64, n: usize, p: usize, horizon: usize) -> f64 {
    c_x * ((n as f64).sqrt() + (p as f64).sqrt()) * (horizon as f64 + std::f64::consts::E).ln()
}

/// `κ₂ (1−γ₂)^l D`.
pub fn clipping_error(kappa2: f64, gamma2: f64, clip_len: usize, d: f64) -> f64 {
    kappa2 * (1.0 - gamma2).powi(clip_len as i32) * d
}

/// Box domain on which `f` and `h*` are bounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainBounds {
    /// `X̄₁`: bound on the belief the learner acts on.
    pub x1: f64,
    /// `X̄₂`: bound on the next belief inside `h*`.
    pub x2: f64,
    pub y: f64,
    pub u: f64,
}

impl DomainBounds {
    /// `Ū = N_K X̄₁`, `X̄₂ = X̄₁` and
    /// `Ȳ = N_S²(X̄₁ + Ū) + (N_S N_Σ + 1)√(n log H) + (1−γ₁)X̄₁/(4N_L)`.
    pub fn from_profile(profile: &ClassProfile, m_x: f64, n: usize, horizon: usize) -> Self {
        let e = &profile.empirical;
        let a = &profile.analytic;
        let u = e.gain_norm * m_x;
        let n_s = e.param_norm;
        let y = n_s * n_s * (m_x + u)
            + (n_s * a.n_sigma + 1.0) * (n as f64 * (horizon as f64).max(2.0).ln()).sqrt()
            + (1.0 - e.closed_loop_norm) * m_x / (4.0 * a.n_l.max(f64::MIN_POSITIVE));
        Self { x1: m_x, x2: m_x, y, u }
    }
}

/// `D₂ = (N_P + N_S² N_U) X̄₂² + N_U Ȳ²`.
pub fn bias_bound(n_p: f64, n_s: f64, n_u: f64, x2: f64, y: f64) -> f64 {
    (n_p + n_s * n_s * n_u) * x2 * x2 + n_u * y * y
}

/// Bound on `|f|` over the box: triangle and submultiplicative inequalities
/// applied to each closed-form term, maximized over (target, optimistic) pairs.
pub fn f_bound(models: &[FunctionModel], dom: &DomainBounds) -> f64 {
    let mut best: f64 = 0.0;
    for target in models {
        let s = &target.solved.system;
        let (p, m) = (s.p(), s.m());
        // ‖x̂^c‖ over windows with ‖y‖ ≤ Ȳ, ‖u‖ ≤ Ū
        let window_len = target.clip_len;
        let mut xc = 0.0;
        for blk in 0..window_len {
            let wy = target_block(target, blk, 0, p);
            let wu = target_block(target, blk, p, m);
            xc += spectral_norm(&wy) * dom.y + spectral_norm(&wu) * dom.u;
        }
        let ca = &s.c * &s.a;
        let cb = &s.c * &s.b;
        let b = spectral_norm(&ca) * xc + spectral_norm(&cb) * dom.u;
        for tilde in models {
            let terms = OptimisticTerms::new(&tilde.solved);
            let ts = &tilde.solved;
            let ilc = ts.i_minus_lc();
            let a = spectral_norm(&(ilc * &ts.system.a)) * dom.x1 + spectral_norm(&(ilc * &ts.system.b)) * dom.u;
            let mean = a + spectral_norm(&terms.l) * b;
            let value = spectral_norm(&terms.z) * mean * mean
                + spectral_norm(&terms.q) * b * b
                + terms.noise_term(&target.innovation_cov).abs();
            best = best.max(value);
        }
    }
    best
}

fn target_block(model: &FunctionModel, blk: usize, offset: usize, width: usize) -> Mat {
    let s = &model.solved.system;
    let stride = s.p() + s.m();
    model.belief_map().columns(blk * stride + offset, width).into_owned()
}

/// `max(D₁, D₂)`.
pub fn bound_d(models: &[FunctionModel], profile: &ClassProfile, dom: &DomainBounds) -> f64 {
    let d1 = f_bound(models, dom);
    let d2 = bias_bound(profile.analytic.n_p, profile.empirical.param_norm, profile.n_u, dom.x2, dom.y);
    d1.max(d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn beta_formula_instance() {
        let expected = 2.0 * 2f64.ln() + 4.0 + 4.0 * (2.0 * 8f64.ln()).sqrt();
        assert_relative_eq!(compute_beta(1.0, 1, 1, 1.0, 0.0, 1.0), expected, epsilon = 1e-12);
        assert_eq!(compute_beta(0.0, 5, 100, 0.05, 0.0, 1.0), 0.0);
    }

    #[test]
    fn beta_term_scaling_in_d() {
        let (n, h, delta) = (8usize, 1000usize, 0.05);
        let first = |d: f64| 2.0 * d * d * (2.0 * n as f64).ln();
        let last = |d: f64| 4.0 * d * (2.0 * (4.0_f64 * 1000.0 * 1001.0 / delta).ln()).sqrt();
        let b1 = compute_beta(1.0, n, h, delta, 0.0, 1.0);
        let b2 = compute_beta(2.0, n, h, delta, 0.0, 1.0);
        // middle term 4(D + Δ) doubles
        assert_relative_eq!(b2 - b1, 3.0 * first(1.0) + last(1.0) + 4.0, epsilon = 1e-9);
        assert_relative_eq!(first(2.0), 4.0 * first(1.0));
        assert_relative_eq!(last(2.0), 2.0 * last(1.0));
    }

    #[test]
    fn d2_formula_instance() {
        assert_relative_eq!(bias_bound(5.0 / 3.0, 1.0, 1.0, 2.0, 1.0), 35.0 / 3.0, epsilon = 1e-12);
        assert_eq!(bias_bound(0.0, 0.0, 0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn defaults_are_sane() {
        assert_eq!(switching_threshold(1.0), 5.0);
        assert!(default_clip_len(1000, 2, 1, 0.5) >= 11);
        assert_eq!(default_markov_truncation(1000, 1.0, 0.5, 50), 10);
        assert!(default_episode_cap(1.0, 1) >= 2);
    }
}
