//! Discrete algebraic Riccati and Lyapunov solvers, optimal gains, and
//! strong-stability certificates.
//!
//! Both DAREs are solved by iterating their Riccati difference recursions to
//! a fixed point: the control equation from `P = CᵀQC`, the filter equation
//! from `Σ = I`. The stopping rule is the fixed-point residual itself,
//! measured in Frobenius norm (an upper bound on the spectral norm), so a
//! returned solution always satisfies its defining equation to `tol`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{
    all_finite, solve_spd, spectral_norm, spectral_radius, sqrt_and_inv_sqrt, symmetrize, Mat,
};

/// Matrices with spectral radius within this distance of one are treated as unstable.
pub const STABILITY_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

fn check_square(context: &'static str, m: &Mat, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(dim_mismatch(
            context,
            format!("{n}x{n}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

fn check_shape(context: &'static str, m: &Mat, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(dim_mismatch(
            context,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

/// One step of the control Riccati difference recursion:
/// `AᵀPA + S − AᵀPB(R + BᵀPB)⁻¹BᵀPA` with `S = CᵀQC`.
pub fn control_riccati_step(p: &Mat, a: &Mat, b: &Mat, state_cost: &Mat, r: &Mat) -> Result<Mat> {
    let pa = p * a;
    let pb = p * b;
    let gram = r + b.transpose() * &pb;
    let gain = solve_spd(&gram, &(b.transpose() * &pa))?;
    let next = a.transpose() * &pa + state_cost - a.transpose() * &pb * gain;
    Ok(symmetrize(&next))
}

/// One step of the filter Riccati difference recursion (unit noise covariances):
/// `AΣAᵀ − AΣCᵀ(CΣCᵀ + I)⁻¹CΣAᵀ + I`.
pub fn filter_riccati_step(sigma: &Mat, a: &Mat, c: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let p = c.nrows();
    let sc = sigma * c.transpose();
    let innovation = c * &sc + Mat::identity(p, p);
    let gain = solve_spd(&innovation, &(sc.transpose() * a.transpose()))?;
    let next = a * sigma * a.transpose() - a * &sc * gain + Mat::identity(n, n);
    Ok(symmetrize(&next))
}

fn iterate_to_fixed_point(
    solver: &'static str,
    start: Mat,
    opts: &SolverOptions,
    mut step: impl FnMut(&Mat) -> Result<Mat>,
) -> Result<Mat> {
    let mut current = start;
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let next = step(&current)?;
        if !all_finite(&next) {
            return Err(Error::NonConvergence {
                solver,
                iterations: 0,
                residual: f64::INFINITY,
            });
        }
        residual = (&next - &current).norm();
        if residual <= opts.tol {
            return Ok(current);
        }
        current = next;
    }
    Err(Error::NonConvergence {
        solver,
        iterations: opts.max_iter,
        residual,
    })
}

/// Stabilizing solution `P` of the control DARE
/// `P = AᵀPA + CᵀQC − AᵀPB(R + BᵀPB)⁻¹BᵀPA`.
pub fn solve_dare_control(
    a: &Mat,
    b: &Mat,
    c: &Mat,
    q: &Mat,
    r: &Mat,
    opts: &SolverOptions,
) -> Result<Mat> {
    let n = a.nrows();
    check_square("solve_dare_control: A", a, n)?;
    check_shape("solve_dare_control: B", b, n, b.ncols())?;
    check_shape("solve_dare_control: C", c, c.nrows(), n)?;
    check_square("solve_dare_control: Q", q, c.nrows())?;
    check_square("solve_dare_control: R", r, b.ncols())?;
    let state_cost = symmetrize(&(c.transpose() * q * c));
    iterate_to_fixed_point("control DARE", state_cost.clone(), opts, |p| {
        control_riccati_step(p, a, b, &state_cost, r)
    })
}

/// Steady-state prediction covariance `Σ` of the Kalman filter with unit
/// process and measurement noise.
pub fn solve_dare_filter(a: &Mat, c: &Mat, opts: &SolverOptions) -> Result<Mat> {
    let n = a.nrows();
    check_square("solve_dare_filter: A", a, n)?;
    check_shape("solve_dare_filter: C", c, c.nrows(), n)?;
    iterate_to_fixed_point("filter DARE", Mat::identity(n, n), opts, |s| {
        filter_riccati_step(s, a, c)
    })
}

/// Residual `‖P − (AᵀPA + CᵀQC − AᵀPB(R+BᵀPB)⁻¹BᵀPA)‖₂`.
pub fn control_dare_residual(p: &Mat, a: &Mat, b: &Mat, c: &Mat, q: &Mat, r: &Mat) -> Result<f64> {
    let s = c.transpose() * q * c;
    Ok(spectral_norm(&(p - control_riccati_step(p, a, b, &s, r)?)))
}

pub fn filter_dare_residual(sigma: &Mat, a: &Mat, c: &Mat) -> Result<f64> {
    Ok(spectral_norm(&(sigma - filter_riccati_step(sigma, a, c)?)))
}

/// Solution `X` of the Stein equation `X = M X Mᵀ + W` (Smith doubling).
pub fn solve_lyapunov(m: &Mat, w: &Mat, tol: f64) -> Result<Mat> {
    let d = m.nrows();
    check_square("solve_lyapunov: M", m, d)?;
    check_square("solve_lyapunov: W", w, d)?;
    let rho = spectral_radius(m);
    if rho >= 1.0 - STABILITY_MARGIN {
        return Err(Error::Unstable {
            spectral_radius: rho,
        });
    }
    let mut x = w.clone();
    let mut power = m.clone();
    for _ in 0..200 {
        let increment = &power * &x * power.transpose();
        x += &increment;
        power = &power * &power;
        if increment.norm() <= f64::EPSILON * x.norm() || power.norm() == 0.0 {
            break;
        }
    }
    // One refinement sweep on the residual keeps large solutions within `tol`.
    for _ in 0..3 {
        let residual = w + m * &x * m.transpose() - &x;
        if residual.norm() <= tol {
            break;
        }
        let mut correction = residual.clone();
        let mut power = m.clone();
        for _ in 0..200 {
            let inc = &power * &correction * power.transpose();
            correction += &inc;
            power = &power * &power;
            if inc.norm() <= f64::EPSILON * correction.norm() || power.norm() == 0.0 {
                break;
            }
        }
        x += correction;
    }
    let x = symmetrize(&x);
    let residual = spectral_norm(&(w + m * &x * m.transpose() - &x));
    if residual > tol.max(1e3 * f64::EPSILON * (1.0 + x.norm())) {
        return Err(Error::NonConvergence {
            solver: "Lyapunov",
            iterations: 200,
            residual,
        });
    }
    Ok(x)
}

/// Kalman gain `L = ΣCᵀ(CΣCᵀ + I)⁻¹`.
pub fn kalman_gain(sigma: &Mat, c: &Mat) -> Result<Mat> {
    let n = sigma.nrows();
    check_square("kalman_gain: Sigma", sigma, n)?;
    check_shape("kalman_gain: C", c, c.nrows(), n)?;
    let sc = sigma * c.transpose();
    let innovation = c * &sc + Mat::identity(c.nrows(), c.nrows());
    // L = (S⁻¹ (ΣCᵀ)ᵀ)ᵀ with S symmetric
    Ok(solve_spd(&innovation, &sc.transpose())?.transpose())
}

/// Optimal control gain `K = (R + BᵀPB)⁻¹BᵀPA`.
pub fn control_gain(p: &Mat, a: &Mat, b: &Mat, r: &Mat) -> Result<Mat> {
    let n = a.nrows();
    check_square("control_gain: P", p, n)?;
    check_square("control_gain: A", a, n)?;
    check_shape("control_gain: B", b, n, b.ncols())?;
    check_square("control_gain: R", r, b.ncols())?;
    let gram = r + b.transpose() * p * b;
    solve_spd(&gram, &(b.transpose() * p * a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateMethod {
    /// `M` is normal; `G = I`.
    Normal,
    /// `G` is the (unit-column) eigenvector matrix.
    Eigendecomposition,
    /// Defective or ill-conditioned spectrum; `G = X^{-1/2}` from a
    /// Lyapunov equation. κ is typically larger than necessary.
    LyapunovFallback,
}

/// `M = G L G⁻¹` with `‖L‖₂ ≤ 1 − γ` and `‖G‖₂‖G⁻¹‖₂ ≤ κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrongStability {
    pub kappa: f64,
    pub gamma: f64,
    pub method: CertificateMethod,
}

impl StrongStability {
    /// `κ(1−γ)^τ`, the certified bound on `‖M^τ‖₂`.
    pub fn power_bound(&self, tau: u32) -> f64 {
        self.kappa * (1.0 - self.gamma).powi(tau as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityProfile {
    pub spectral_radius: f64,
    /// `‖M‖₂`.
    pub norm: f64,
    /// `sup_τ ‖M^τ‖₂ / ρ(M)^τ` over the scanned horizon.
    pub transient_bound: f64,
    /// Absent when `ρ(M) ≥ 1`.
    pub certificate: Option<StrongStability>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityOptions {
    /// Horizon over which `Φ(M)` is scanned.
    pub transient_horizon: u32,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            transient_horizon: 200,
        }
    }
}

pub fn stability_report(m: &Mat) -> StabilityProfile {
    stability_report_with(m, &StabilityOptions::default())
}

pub fn stability_report_with(m: &Mat, opts: &StabilityOptions) -> StabilityProfile {
    let rho = spectral_radius(m);
    let norm = spectral_norm(m);
    let transient_bound = transient_bound(m, rho, opts.transient_horizon);
    let certificate = if rho < 1.0 - STABILITY_MARGIN {
        Some(strong_stability(m, rho, norm))
    } else {
        None
    };
    StabilityProfile {
        spectral_radius: rho,
        norm,
        transient_bound,
        certificate,
    }
}

fn transient_bound(m: &Mat, rho: f64, horizon: u32) -> f64 {
    let d = m.nrows();
    let mut power = Mat::identity(d, d);
    let mut rho_pow = 1.0;
    let mut best: f64 = 1.0;
    for _ in 1..=horizon {
        power = &power * m;
        rho_pow *= rho;
        let pn = spectral_norm(&power);
        if pn == 0.0 {
            break;
        }
        if rho_pow < 1e-280 {
            // ρ = 0 with a nonzero power: the ratio is unbounded.
            if rho == 0.0 {
                return f64::INFINITY;
            }
            break;
        }
        best = best.max(pn / rho_pow);
        if pn < 1e-280 {
            break;
        }
    }
    best
}

fn strong_stability(m: &Mat, rho: f64, norm: f64) -> StrongStability {
    let d = m.nrows();
    let commutator = m * m.transpose() - m.transpose() * m;
    if commutator.amax() <= 1e-12 * (1.0 + norm * norm) {
        return StrongStability {
            kappa: 1.0,
            gamma: (1.0 - norm).clamp(f64::MIN_POSITIVE, 1.0),
            method: CertificateMethod::Normal,
        };
    }
    if let Some(cert) = eigen_certificate(m, rho, d) {
        return cert;
    }
    lyapunov_certificate(m, rho)
}

fn eigen_certificate(m: &Mat, rho: f64, d: usize) -> Option<StrongStability> {
    let eigenvalues = m.complex_eigenvalues();
    let scale = rho.max(1.0);
    for i in 0..d {
        for j in (i + 1)..d {
            if (eigenvalues[i] - eigenvalues[j]).norm() < 1e-6 * scale {
                return None;
            }
        }
    }
    let mc: DMatrix<Complex64> = m.map(|v| Complex64::new(v, 0.0));
    let mut g = DMatrix::<Complex64>::zeros(d, d);
    for (col, lambda) in eigenvalues.iter().enumerate() {
        let shift = lambda + Complex64::new(1e-10 * scale, 1e-10 * scale);
        let shifted = &mc - DMatrix::<Complex64>::identity(d, d) * shift;
        let lu = shifted.lu();
        let mut v = nalgebra::DVector::<Complex64>::from_fn(d, |k, _| {
            Complex64::new(1.0 + 0.1 * k as f64, 0.05 * (k as f64 + 1.0))
        });
        for _ in 0..4 {
            v = lu.solve(&v)?;
            let nrm = v.norm();
            if !nrm.is_finite() || nrm == 0.0 {
                return None;
            }
            v.unscale_mut(nrm);
        }
        g.set_column(col, &v);
    }
    let sv = g.clone().singular_values();
    let kappa = sv.max() / sv.min();
    if !kappa.is_finite() || kappa > 1e10 {
        return None;
    }
    let g_inv = g.clone().try_inverse()?;
    let core = &g_inv * &mc * &g;
    let core_norm = core.singular_values().max();
    if core_norm >= 1.0 {
        return None;
    }
    Some(StrongStability {
        kappa: kappa * (1.0 + 1e-9),
        gamma: 1.0 - core_norm * (1.0 + 1e-12),
        method: CertificateMethod::Eigendecomposition,
    })
}

fn lyapunov_certificate(m: &Mat, rho: f64) -> StrongStability {
    let d = m.nrows();
    let rate = rho + 0.5 * (1.0 - rho);
    let scaled = m.transpose() / rate;
    let fallback = StrongStability {
        kappa: f64::INFINITY,
        gamma: f64::MIN_POSITIVE,
        method: CertificateMethod::LyapunovFallback,
    };
    let Ok(x) = solve_lyapunov(&scaled, &Mat::identity(d, d), 1e-8) else {
        return fallback;
    };
    let Some((x_sqrt, x_inv_sqrt)) = sqrt_and_inv_sqrt(&x) else {
        return fallback;
    };
    let core = &x_sqrt * m * &x_inv_sqrt;
    let core_norm = spectral_norm(&core);
    let eig = symmetrize(&x).symmetric_eigenvalues();
    let kappa = (eig.max() / eig.min()).sqrt();
    StrongStability {
        kappa: kappa * (1.0 + 1e-9),
        gamma: (1.0 - core_norm * (1.0 + 1e-12)).max(f64::MIN_POSITIVE),
        method: CertificateMethod::LyapunovFallback,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{min_sym_eigenvalue, scalar};
    use approx::assert_relative_eq;

    /// Positive root of `x² = 0.25x + 1`, the scalar DARE with a = 0.5 and unit weights.
    fn scalar_root() -> f64 {
        (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0
    }

    #[test]
    fn control_dare_zero_dynamics() {
        let p = solve_dare_control(
            &scalar(0.0),
            &scalar(1.0),
            &scalar(1.0),
            &scalar(1.0),
            &scalar(1.0),
            &SolverOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(p[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn control_dare_scalar_quadratic() {
        let p = solve_dare_control(
            &scalar(0.5),
            &scalar(1.0),
            &scalar(1.0),
            &scalar(1.0),
            &scalar(1.0),
            &SolverOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(p[(0, 0)], scalar_root(), epsilon = 1e-9);
        assert_relative_eq!(p[(0, 0)], 1.13278, epsilon = 1e-5);
    }

    #[test]
    fn control_dare_zero_cost() {
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let p = solve_dare_control(
            &a,
            &Mat::from_row_slice(2, 1, &[1.0, 0.0]),
            &Mat::from_row_slice(1, 2, &[1.0, 1.0]),
            &scalar(0.0),
            &scalar(1.0),
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(p, Mat::zeros(2, 2));
    }

    #[test]
    fn filter_dare_examples() {
        let opts = SolverOptions::default();
        let s0 = solve_dare_filter(&scalar(0.0), &scalar(1.0), &opts).unwrap();
        assert_relative_eq!(s0[(0, 0)], 1.0, epsilon = 1e-12);
        let s1 = solve_dare_filter(&scalar(0.5), &scalar(1.0), &opts).unwrap();
        assert_relative_eq!(s1[(0, 0)], scalar_root(), epsilon = 1e-9);
        let s2 = solve_dare_filter(&scalar(0.5), &scalar(0.0), &opts).unwrap();
        assert_relative_eq!(s2[(0, 0)], 4.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = solve_dare_control(
            &Mat::identity(2, 2),
            &scalar(1.0),
            &scalar(1.0),
            &scalar(1.0),
            &scalar(1.0),
            &SolverOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        assert!(kalman_gain(&Mat::identity(2, 2), &scalar(1.0)).is_err());
    }

    #[test]
    fn unstable_unobservable_filter_does_not_converge() {
        let opts = SolverOptions {
            tol: 1e-10,
            max_iter: 500,
        };
        let err = solve_dare_filter(&scalar(1.5), &scalar(0.0), &opts).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn lyapunov_examples() {
        let w = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert_eq!(solve_lyapunov(&Mat::zeros(2, 2), &w, 1e-12).unwrap(), w);
        let x = solve_lyapunov(&scalar(0.5), &scalar(1.0), 1e-12).unwrap();
        assert_relative_eq!(x[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
        assert!(matches!(
            solve_lyapunov(&scalar(1.0), &scalar(1.0), 1e-12),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn lyapunov_matches_truncated_series() {
        let m = Mat::from_row_slice(3, 3, &[0.4, 0.3, -0.2, 0.1, -0.5, 0.25, 0.0, 0.2, 0.6]);
        assert!(spectral_radius(&m) < 1.0);
        let w = Mat::identity(3, 3);
        let x = solve_lyapunov(&m, &w, 1e-12).unwrap();
        // series oracle: Σ M^k W (Mᵀ)^k
        let mut series = Mat::zeros(3, 3);
        let mut power = Mat::identity(3, 3);
        for _ in 0..2000 {
            series += &power * &w * power.transpose();
            power = &power * &m;
        }
        assert!((&x - &series).amax() < 1e-9);
        assert!(min_sym_eigenvalue(&x) > 0.0);
    }

    #[test]
    fn gains_examples() {
        assert_relative_eq!(kalman_gain(&scalar(1.0), &scalar(1.0)).unwrap()[(0, 0)], 0.5);
        assert_eq!(kalman_gain(&scalar(1.0), &scalar(0.0)).unwrap()[(0, 0)], 0.0);
        let sigma = scalar_root();
        let l = kalman_gain(&scalar(sigma), &scalar(1.0)).unwrap()[(0, 0)];
        assert_relative_eq!(l, sigma / (sigma + 1.0), epsilon = 1e-14);

        let r = scalar(1.0);
        assert_eq!(control_gain(&scalar(2.0), &scalar(0.0), &scalar(1.0), &r).unwrap()[(0, 0)], 0.0);
        assert_eq!(control_gain(&scalar(2.0), &scalar(0.5), &scalar(0.0), &r).unwrap()[(0, 0)], 0.0);
        let p = scalar_root();
        let k = control_gain(&scalar(p), &scalar(0.5), &scalar(1.0), &r).unwrap()[(0, 0)];
        assert_relative_eq!(k, 0.5 * p / (1.0 + p), epsilon = 1e-14);
        assert_relative_eq!(k, 0.265564, epsilon = 1e-6);
        assert_relative_eq!(0.5 - k, 0.2344, epsilon = 1e-4);
    }

    #[test]
    fn stability_examples() {
        let m = Mat::identity(3, 3) * 0.9;
        let rep = stability_report(&m);
        assert_relative_eq!(rep.spectral_radius, 0.9, epsilon = 1e-12);
        let cert = rep.certificate.unwrap();
        assert_relative_eq!(cert.kappa, 1.0);
        assert_relative_eq!(cert.gamma, 0.1, epsilon = 1e-12);

        let rep = stability_report(&Mat::zeros(2, 2));
        assert_eq!(rep.spectral_radius, 0.0);
        assert_eq!(rep.certificate.unwrap().gamma, 1.0);

        let jordan = Mat::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.5]);
        let rep = stability_report(&jordan);
        assert_relative_eq!(rep.spectral_radius, 0.5, epsilon = 1e-6);
        // oracle: direct powering
        let mut power = Mat::identity(2, 2);
        let mut phi: f64 = 1.0;
        for tau in 1..=200 {
            power = &power * &jordan;
            phi = phi.max(spectral_norm(&power) / 0.5f64.powi(tau));
        }
        assert!(phi > 1.0);
        assert!(rep.transient_bound > 1.0);
        assert_eq!(
            rep.certificate.unwrap().method,
            CertificateMethod::LyapunovFallback
        );
    }

    #[test]
    fn unstable_matrix_has_no_certificate() {
        assert!(stability_report(&scalar(1.1)).certificate.is_none());
    }

    fn assert_certificate_bounds_powers(m: &Mat) {
        let cert = stability_report(m).certificate.expect("stable matrix");
        let mut power = Mat::identity(m.nrows(), m.nrows());
        for tau in 0..=100u32 {
            let pn = spectral_norm(&power);
            assert!(
                pn <= cert.power_bound(tau) * (1.0 + 1e-9) + 1e-300,
                "tau {tau}: {pn} > {}",
                cert.power_bound(tau)
            );
            power = &power * m;
        }
    }

    #[test]
    fn certificates_bound_matrix_powers() {
        assert_certificate_bounds_powers(&Mat::from_row_slice(
            3,
            3,
            &[0.4, 0.3, -0.2, 0.1, -0.5, 0.25, 0.0, 0.2, 0.6],
        ));
        assert_certificate_bounds_powers(&Mat::from_row_slice(2, 2, &[0.5, 1.0, 0.0, 0.5]));
        // complex pair
        assert_certificate_bounds_powers(&Mat::from_row_slice(2, 2, &[0.6, -0.5, 0.5, 0.6]));
        assert_certificate_bounds_powers(&Mat::from_row_slice(2, 2, &[0.9, 5.0, 0.0, 0.2]));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn stable_matrix(d: usize) -> impl Strategy<Value = Mat> {
            proptest::collection::vec(-1.0f64..1.0, d * d).prop_map(move |v| {
                let m = Mat::from_vec(d, d, v);
                let rho = spectral_radius(&m);
                if rho > 0.95 {
                    m * (0.95 / rho)
                } else {
                    m
                }
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn certificate_holds_for_random_stable_matrices(m in (1usize..5).prop_flat_map(stable_matrix)) {
                assert_certificate_bounds_powers(&m);
            }

            #[test]
            fn lyapunov_residual_is_small(m in (1usize..5).prop_flat_map(stable_matrix)) {
                let d = m.nrows();
                let w = Mat::identity(d, d);
                let x = solve_lyapunov(&m, &w, 1e-8).unwrap();
                let residual = spectral_norm(&(&w + &m * &x * m.transpose() - &x));
                prop_assert!(residual <= 1e-8);
                prop_assert!(min_sym_eigenvalue(&x) >= 1.0 - 1e-9);
            }
        }
    }
}
