//! Finite simulator classes: assumption validation, low-rank construction
//! and uniform class-level bounds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{controllability_matrix, observability_matrix, rank, spectral_norm, Mat};
use crate::lqg::{solve_with, CostSpec, LqgSystem, SolvedSystem};
use crate::riccati::{stability_report, SolverOptions, StabilityProfile, STABILITY_MARGIN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    /// Bound on `‖A‖₂, ‖B‖₂, ‖C‖₂`.
    pub param_norm_bound: f64,
    /// Bound on `‖K‖₂`.
    pub gain_norm_bound: f64,
    pub rank_tol: f64,
    pub solver: SolverOptions,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            param_norm_bound: 10.0,
            gain_norm_bound: 10.0,
            rank_tol: 1e-9,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    OpenLoopStable,
    ParamNorm,
    Observable,
    Controllable,
    DareSolvable,
    GainNorm,
    ClosedLoopContractive,
    PredictorStronglyStable,
}

impl Check {
    pub fn label(self) -> &'static str {
        match self {
            Check::OpenLoopStable => "open-loop stable",
            Check::ParamNorm => "parameter norm",
            Check::Observable => "observable",
            Check::Controllable => "controllable",
            Check::DareSolvable => "DARE solvable",
            Check::GainNorm => "gain norm",
            Check::ClosedLoopContractive => "closed loop contractive",
            Check::PredictorStronglyStable => "predictor strongly stable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: Check,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of the ordered assumption checks. Checks stop at the first failure,
/// so later certified values may be absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
    pub spectral_radius: f64,
    /// `Φ(A)`.
    pub transient_bound: f64,
    /// `max(‖A‖₂, ‖B‖₂, ‖C‖₂)`.
    pub param_norm: f64,
    pub gain_norm: Option<f64>,
    /// `‖A − BK‖₂`.
    pub closed_loop_norm: Option<f64>,
    /// Profile of `A − FC`.
    pub predictor: Option<StabilityProfile>,
    pub p_norm: Option<f64>,
    pub sigma_norm: Option<f64>,
    pub l_norm: Option<f64>,
    pub f_norm: Option<f64>,
    pub j_star: Option<f64>,
}

impl ValidationReport {
    pub fn failed_check(&self) -> Option<Check> {
        self.checks.iter().find(|c| !c.passed).map(|c| c.check)
    }
}

/// Validates a candidate and, on success, returns its solved form.
pub fn validate_assumptions(system: &LqgSystem, cost: &CostSpec, config: &ValidationConfig) -> (ValidationReport, Option<SolvedSystem>) {
    let a_profile = stability_report(&system.a);
    let param_norm = spectral_norm(&system.a)
        .max(spectral_norm(&system.b))
        .max(spectral_norm(&system.c));
    let mut report = ValidationReport {
        passed: false,
        checks: Vec::new(),
        spectral_radius: a_profile.spectral_radius,
        transient_bound: a_profile.transient_bound,
        param_norm,
        gain_norm: None,
        closed_loop_norm: None,
        predictor: None,
        p_norm: None,
        sigma_norm: None,
        l_norm: None,
        f_norm: None,
        j_star: None,
    };
    let record = |report: &mut ValidationReport, check, passed, detail: String| {
        report.checks.push(CheckOutcome { check, passed, detail });
        passed
    };

    let rho = a_profile.spectral_radius;
    if !record(&mut report, Check::OpenLoopStable, rho < 1.0 - STABILITY_MARGIN, format!("rho(A) = {rho:.6}")) {
        return (report, None);
    }
    if !record(
        &mut report,
        Check::ParamNorm,
        param_norm <= config.param_norm_bound,
        format!("max norm {param_norm:.6} vs bound {}", config.param_norm_bound),
    ) {
        return (report, None);
    }
    let n = system.n();
    let obs = rank(&observability_matrix(&system.a, &system.c), config.rank_tol);
    if !record(&mut report, Check::Observable, obs == n, format!("observability rank {obs} of {n}")) {
        return (report, None);
    }
    let ctrb = rank(&controllability_matrix(&system.a, &system.b), config.rank_tol);
    if !record(&mut report, Check::Controllable, ctrb == n, format!("controllability rank {ctrb} of {n}")) {
        return (report, None);
    }
    let solved = match solve_with(system, cost, &config.solver) {
        Ok(s) => s,
        Err(e) => {
            record(&mut report, Check::DareSolvable, false, e.to_string());
            return (report, None);
        }
    };
    record(&mut report, Check::DareSolvable, true, String::new());
    report.p_norm = Some(spectral_norm(&solved.p));
    report.sigma_norm = Some(spectral_norm(&solved.sigma));
    report.l_norm = Some(spectral_norm(&solved.l));
    report.f_norm = Some(spectral_norm(&solved.f));
    report.j_star = Some(solved.j_star);

    let gain_norm = spectral_norm(&solved.k);
    report.gain_norm = Some(gain_norm);
    if !record(
        &mut report,
        Check::GainNorm,
        gain_norm <= config.gain_norm_bound,
        format!("||K|| = {gain_norm:.6} vs bound {}", config.gain_norm_bound),
    ) {
        return (report, None);
    }
    let closed = spectral_norm(&solved.closed_loop());
    report.closed_loop_norm = Some(closed);
    if !record(&mut report, Check::ClosedLoopContractive, closed < 1.0, format!("||A - BK|| = {closed:.6}")) {
        return (report, None);
    }
    let predictor = stability_report(&solved.predictor_matrix());
    report.predictor = Some(predictor);
    let certified = predictor
        .certificate
        .is_some_and(|c| c.kappa.is_finite() && c.gamma > 0.0);
    if !record(
        &mut report,
        Check::PredictorStronglyStable,
        certified,
        format!("rho(A - FC) = {:.6}", predictor.spectral_radius),
    ) {
        return (report, None);
    }
    report.passed = true;
    (report, Some(solved))
}

#[derive(Debug, Clone)]
pub struct ClassMember {
    /// Position in the original candidate list.
    pub id: usize,
    pub name: String,
    pub solved: SolvedSystem,
    pub report: ValidationReport,
}

impl ClassMember {
    pub fn system(&self) -> &LqgSystem {
        &self.solved.system
    }
}

#[derive(Debug, Clone)]
pub struct PrunedCandidate {
    pub id: usize,
    pub name: String,
    pub system: LqgSystem,
    pub report: ValidationReport,
}

/// Largest certified values over the members.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalBounds {
    pub param_norm: f64,
    pub gain_norm: f64,
    pub closed_loop_norm: f64,
    pub kappa2: f64,
    /// Smallest certified `γ₂`.
    pub gamma2: f64,
    pub predictor_gain_norm: f64,
    pub p_norm: f64,
    pub sigma_norm: f64,
    pub l_norm: f64,
    pub open_loop_radius: f64,
    pub transient_bound: f64,
}

/// Uniform bounds on `‖P‖₂`, `‖Σ‖₂`, `‖L‖₂` implied by the class constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticBounds {
    pub n_p: f64,
    pub n_sigma: f64,
    pub n_l: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub members: usize,
    /// `max(‖Q‖₂, ‖R‖₂)`.
    pub n_u: f64,
    pub empirical: EmpiricalBounds,
    pub analytic: AnalyticBounds,
}

/// `N_U (N_S² + N_K²) / (2γ − γ²)`, where `γ` is the contraction margin of
/// the closed loop: `‖(A − BK)^k‖₂ ≤ (1 − γ)^k`.
pub fn n_p_bound(n_u: f64, n_s: f64, n_k: f64, gamma: f64) -> f64 {
    n_u * (n_s * n_s + n_k * n_k) / (2.0 * gamma - gamma * gamma)
}

/// `κ²(1 + κ²) / (2γ − γ²)`.
pub fn n_sigma_bound(kappa: f64, gamma: f64) -> f64 {
    kappa * kappa * (1.0 + kappa * kappa) / (2.0 * gamma - gamma * gamma)
}

pub fn class_profile(members: &[ClassMember], cost: &CostSpec) -> Result<ClassProfile> {
    if members.is_empty() {
        return Err(Error::EmptyClass);
    }
    let mut e = EmpiricalBounds {
        param_norm: 0.0,
        gain_norm: 0.0,
        closed_loop_norm: 0.0,
        kappa2: 1.0,
        gamma2: 1.0,
        predictor_gain_norm: 0.0,
        p_norm: 0.0,
        sigma_norm: 0.0,
        l_norm: 0.0,
        open_loop_radius: 0.0,
        transient_bound: 0.0,
    };
    for m in members {
        let r = &m.report;
        let cert = r
            .predictor
            .and_then(|p| p.certificate)
            .ok_or_else(|| Error::InvalidInput(format!("member {} has no stability certificate", m.id)))?;
        e.param_norm = e.param_norm.max(r.param_norm);
        e.gain_norm = e.gain_norm.max(r.gain_norm.unwrap_or(0.0));
        e.closed_loop_norm = e.closed_loop_norm.max(r.closed_loop_norm.unwrap_or(0.0));
        e.kappa2 = e.kappa2.max(cert.kappa);
        e.gamma2 = e.gamma2.min(cert.gamma);
        e.predictor_gain_norm = e.predictor_gain_norm.max(r.f_norm.unwrap_or(0.0));
        e.p_norm = e.p_norm.max(r.p_norm.unwrap_or(0.0));
        e.sigma_norm = e.sigma_norm.max(r.sigma_norm.unwrap_or(0.0));
        e.l_norm = e.l_norm.max(r.l_norm.unwrap_or(0.0));
        e.open_loop_radius = e.open_loop_radius.max(r.spectral_radius);
        e.transient_bound = e.transient_bound.max(r.transient_bound);
    }
    let n_u = spectral_norm(&cost.q).max(spectral_norm(&cost.r));
    let n_p = n_p_bound(n_u, e.param_norm, e.gain_norm, 1.0 - e.closed_loop_norm);
    // the Σ series needs ‖F‖₂ ≤ κ₂; widen κ₂ when a member's F is larger
    let kappa_sigma = e.kappa2.max(e.predictor_gain_norm);
    let n_sigma = n_sigma_bound(kappa_sigma, e.gamma2);
    Ok(ClassProfile {
        members: members.len(),
        n_u,
        empirical: e,
        analytic: AnalyticBounds {
            n_p,
            n_sigma,
            n_l: n_sigma * e.param_norm,
        },
    })
}

/// A validated finite simulator class. Member order is the candidate order
/// and is the tie-breaking order everywhere.
#[derive(Debug, Clone)]
pub struct SimulatorClass {
    pub members: Vec<ClassMember>,
    pub pruned: Vec<PrunedCandidate>,
    pub cost: CostSpec,
    pub profile: ClassProfile,
    pub config: ValidationConfig,
}

impl SimulatorClass {
    /// Validates every candidate (in parallel) and keeps those that pass.
    pub fn from_candidates(candidates: Vec<(String, LqgSystem)>, cost: CostSpec, config: ValidationConfig) -> Result<Self> {
        let results: Vec<_> = candidates
            .into_par_iter()
            .enumerate()
            .map(|(id, (name, system))| {
                let (report, solved) = validate_assumptions(&system, &cost, &config);
                (id, name, system, report, solved)
            })
            .collect();
        let mut members = Vec::new();
        let mut pruned = Vec::new();
        for (id, name, system, report, solved) in results {
            match solved {
                Some(solved) => members.push(ClassMember { id, name, solved, report }),
                None => pruned.push(PrunedCandidate { id, name, system, report }),
            }
        }
        if members.is_empty() {
            return Err(Error::EmptyClass);
        }
        let profile = class_profile(&members, &cost)?;
        Ok(Self {
            members,
            pruned,
            cost,
            profile,
            config,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Index of the member whose matrices equal `system` exactly.
    pub fn position_of(&self, system: &LqgSystem) -> Option<usize> {
        self.members.iter().position(|m| m.system() == system)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.members[0].system();
        (s.n(), s.m(), s.p())
    }
}

/// `Θ = Σᵢ tᵢ Θᵢ` with each `tᵢ` restricted to `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRankSpec {
    #[serde(skip)]
    pub bases: Vec<LqgSystem>,
    pub bounds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficients {
    /// Evenly spaced points per coordinate over the box (one point means `lo`).
    Grid(Vec<usize>),
    List(Vec<Vec<f64>>),
}

impl LowRankSpec {
    pub fn new(bases: Vec<LqgSystem>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bases.is_empty() || bases.len() != bounds.len() {
            return Err(Error::InvalidInput("low-rank spec needs one bound per basis".into()));
        }
        let (n, m, p) = (bases[0].n(), bases[0].m(), bases[0].p());
        if bases.iter().any(|b| b.n() != n || b.m() != m || b.p() != p) {
            return Err(Error::InvalidInput("low-rank bases have different shapes".into()));
        }
        if bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::InvalidInput("coefficient bounds must satisfy lo <= hi".into()));
        }
        Ok(Self { bases, bounds })
    }

    pub fn combine(&self, t: &[f64]) -> Result<LqgSystem> {
        if t.len() != self.bases.len() {
            return Err(Error::InvalidInput(format!("expected {} coefficients, got {}", self.bases.len(), t.len())));
        }
        for (i, (&ti, &(lo, hi))) in t.iter().zip(&self.bounds).enumerate() {
            if !(lo..=hi).contains(&ti) {
                return Err(Error::InvalidInput(format!("coefficient t{} = {ti} outside [{lo}, {hi}]", i + 1)));
            }
        }
        let base = &self.bases[0];
        let mut a = Mat::zeros(base.n(), base.n());
        let mut b = Mat::zeros(base.n(), base.m());
        let mut c = Mat::zeros(base.p(), base.n());
        for (ti, basis) in t.iter().zip(&self.bases) {
            a += &basis.a * *ti;
            b += &basis.b * *ti;
            c += &basis.c * *ti;
        }
        Ok(LqgSystem { a, b, c })
    }

    pub fn coefficient_points(&self, coefficients: &Coefficients) -> Result<Vec<Vec<f64>>> {
        match coefficients {
            Coefficients::List(list) => Ok(list.clone()),
            Coefficients::Grid(counts) => {
                if counts.len() != self.bounds.len() || counts.contains(&0) {
                    return Err(Error::InvalidInput("grid needs a positive count per coefficient".into()));
                }
                let axes: Vec<Vec<f64>> = counts
                    .iter()
                    .zip(&self.bounds)
                    .map(|(&k, &(lo, hi))| {
                        if k == 1 {
                            vec![lo]
                        } else {
                            (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
                        }
                    })
                    .collect();
                let mut points = vec![Vec::new()];
                for axis in &axes {
                    points = points
                        .into_iter()
                        .flat_map(|prefix| {
                            axis.iter().map(move |&v| {
                                let mut next = prefix.clone();
                                next.push(v);
                                next
                            })
                        })
                        .collect();
                }
                Ok(points)
            }
        }
    }
}

pub fn instantiate_lowrank(spec: &LowRankSpec, coefficients: &Coefficients, cost: CostSpec, config: ValidationConfig) -> Result<SimulatorClass> {
    let candidates = spec
        .coefficient_points(coefficients)?
        .into_iter()
        .map(|t| {
            let name = format!(
                "t=({})",
                t.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
            );
            spec.combine(&t).map(|s| (name, s))
        })
        .collect::<Result<Vec<_>>>()?;
    SimulatorClass::from_candidates(candidates, cost, config)
}
