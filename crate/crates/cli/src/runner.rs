use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use lqgvtr_core::benchmark::{two_state_candidates, two_state_class, TWO_STATE_TRUTH};
use lqgvtr_core::io::ClassSpec;
use lqgvtr_core::linalg::{spectral_norm, to_rows};
use lqgvtr_core::lqg::{average_cost, run_episode, CertaintyEquivalent};
use lqgvtr_core::rng::{stream_rng, streams, Noise};
use lqgvtr_core::sim2real::{evaluate_gap, minimax_static_policy, reduction_diagnostic, write_gap_csv, PolicySpec};
use lqgvtr_core::stats::{log_log_slope, mean_se, median};
use lqgvtr_core::vtr::bounds::default_markov_truncation;
use lqgvtr_core::vtr::learner::run_lqg_vtr;
use lqgvtr_core::vtr::probe::{clipping_error_probe, decay_rate};
use lqgvtr_core::vtr::warmup::{markov_parameters, prune_class, warmup_markov};
use lqgvtr_core::{solve, LqgEnv, LqgSystem, SimulatorClass, SolvedSystem};

use crate::config::{ExperimentConfig, Kind};
use crate::error::CliError;
use crate::manifest::{Artifacts, Manifest};

/// The class under study and, when known, the true system.
pub struct Context {
    pub candidates: Vec<(String, LqgSystem)>,
    pub class: Arc<SimulatorClass>,
    pub truth: Option<SolvedSystem>,
}

impl Context {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        match &cfg.class {
            None => {
                let class = two_state_class()?;
                let truth = class.members[TWO_STATE_TRUTH].solved.clone();
                Ok(Self {
                    candidates: two_state_candidates(),
                    class: Arc::new(class),
                    truth: Some(truth),
                })
            }
            Some(path) => {
                let spec = ClassSpec::from_path(path)?;
                let class = spec.build()?;
                let truth = match spec.truth_system(&class)? {
                    Some(sys) => Some(solve(&sys, &class.cost)?),
                    None => None,
                };
                let candidates = if spec.members.is_empty() {
                    class.members.iter().map(|m| (m.name.clone(), m.system().clone())).collect()
                } else {
                    spec.candidates()?
                };
                Ok(Self {
                    candidates,
                    class: Arc::new(class),
                    truth,
                })
            }
        }
    }

    fn truth(&self, kind: Kind) -> Result<&SolvedSystem, CliError> {
        self.truth
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("kind {} needs a truth in the class spec", kind.name())))
    }
}

pub fn seed_list(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.seeds as u64).map(|i| cfg.seed + i).collect()
}

/// Runs the experiment, writes its artifacts and manifest into `cfg.out`.
pub fn run(cfg: &ExperimentConfig) -> Result<Manifest, CliError> {
    let ctx = Context::load(cfg)?;
    let mut art = Artifacts::default();
    match cfg.kind {
        Kind::Solve => solve_kind(cfg, &ctx, &mut art)?,
        Kind::Validate => validate_kind(&ctx, &mut art)?,
        Kind::Warmup => warmup_kind(cfg, &ctx, &mut art)?,
        Kind::VtrRun => vtr_kind(cfg, &ctx, &mut art)?,
        Kind::RegretSweep => regret_kind(cfg, &ctx, &mut art)?,
        Kind::Gap => gap_kind(cfg, &ctx, &mut art)?,
        Kind::Minimax => minimax_kind(&ctx, &mut art)?,
        Kind::Reduction => reduction_kind(cfg, &ctx, &mut art)?,
        Kind::ClipProbe => probe_kind(cfg, &ctx, &mut art)?,
    }
    let manifest = Manifest::new(cfg, seed_list(cfg), &art);
    write_all(&cfg.out, &art, &manifest)?;
    Ok(manifest)
}

fn write_all(out: &Path, art: &Artifacts, manifest: &Manifest) -> Result<(), CliError> {
    std::fs::create_dir_all(out)?;
    for (name, bytes) in &art.files {
        std::fs::write(out.join(name), bytes)?;
    }
    std::fs::write(out.join("manifest.json"), serde_json::to_vec_pretty(manifest)?)?;
    Ok(())
}

fn csv_bytes<R: Serialize>(rows: &[R]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

fn solve_kind(cfg: &ExperimentConfig, ctx: &Context, art: &mut Artifacts) -> Result<(), CliError> {
    let cost = &ctx.class.cost;
    let mut out = Vec::new();
    for (name, sys) in &ctx.candidates {
        match solve(sys, cost) {
            Ok(s) => {
                let mc = cfg.mc_check.then(|| {
                    let est = average_cost(sys, cost, || CertaintyEquivalent::new(s.clone()), cfg.mc_steps, 8, cfg.seed);
                    let tolerance = (0.01 * s.j_star).max(3.0 * est.std_error);
                    json!({
                        "mean": est.mean,
                        "std_error": est.std_error,
                        "steps": est.samples,
                        "tolerance": tolerance,
                        "within_tolerance": (est.mean - s.j_star).abs() <= tolerance,
                    })
                });
                out.push(json!({
                    "name": name,
                    "j_star": s.j_star,
                    "P": to_rows(&s.p),
                    "K": to_rows(&s.k),
                    "Sigma": to_rows(&s.sigma),
                    "L": to_rows(&s.l),
                    "mc_check": mc,
                }));
            }
            Err(e) => out.push(json!({ "name": name, "error": e.to_string() })),
        }
    }
    art.json("solve.json", &out)
}

#[derive(Serialize)]
struct ValidationRow {
    id: usize,
    name: String,
    passed: bool,
    failed_check: String,
    spectral_radius: f64,
    closed_loop_norm: Option<f64>,
    j_star: Option<f64>,
}

fn validate_kind(ctx: &Context, art: &mut Artifacts) -> Result<(), CliError> {
    let class = &ctx.class;
    let mut rows: Vec<ValidationRow> = class
        .members
        .iter()
        .map(|m| (m.id, &m.name, &m.report))
        .chain(class.pruned.iter().map(|p| (p.id, &p.name, &p.report)))
        .map(|(id, name, r)| ValidationRow {
            id,
            name: name.clone(),
            passed: r.passed,
            failed_check: r.failed_check().map_or(String::new(), |c| c.label().to_string()),
            spectral_radius: r.spectral_radius,
            closed_loop_norm: r.closed_loop_norm,
            j_star: r.j_star,
        })
        .collect();
    rows.sort_by_key(|r| r.id);
    art.csv("validation.csv", csv_bytes(&rows)?);
    let reports: Vec<_> = class
        .members
        .iter()
        .map(|m| json!({"id": m.id, "name": m.name, "report": m.report}))
        .chain(class.pruned.iter().map(|p| json!({"id": p.id, "name": p.name, "report": p.report})))
        .collect();
    art.json("validation.json", &json!({ "profile": class.profile, "candidates": reports }))
}

#[derive(Serialize)]
struct WarmupRow {
    t_w: usize,
    seed: u64,
    h_tilde: usize,
    error: f64,
    radius: f64,
    c_w: f64,
    retained: usize,
    truth_retained: bool,
    inflations: usize,
}

fn warmup_kind(cfg: &ExperimentConfig, ctx: &Context, art: &mut Artifacts) -> Result<(), CliError> {
    let truth = ctx.truth(cfg.kind)?;
    let class = &ctx.class;
    let e = &class.profile.empirical;
    let longest = *cfg.horizons.last().expect("validated non-empty");
    let h_tilde = cfg
        .learner
        .h_tilde
        .resolve(|| default_markov_truncation(longest, e.kappa2, e.gamma2, cfg.learner.h_tilde_cap));
    let truth_markov = markov_parameters(truth, h_tilde);
    let truth_idx = class.position_of(&truth.system);
    let jobs: Vec<(usize, u64)> = cfg.horizons.iter().flat_map(|&t| seed_list(cfg).into_iter().map(move |s| (t, s))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(t_w, seed)| {
            let mut env = LqgEnv::seeded(truth.system.clone(), class.cost.clone(), seed);
            let mut rng = stream_rng(seed, streams::EXPLORATION);
            let (est, _) = warmup_markov(&mut env, t_w, h_tilde, &mut rng)?;
            let radius = est.default_radius(cfg.learner.prune_multiplier);
            let prune = prune_class(class, &est.m_hat, h_tilde, radius);
            Ok(WarmupRow {
                t_w,
                seed,
                h_tilde,
                error: spectral_norm(&(&est.m_hat - &truth_markov)),
                radius: prune.radius,
                c_w: est.c_w,
                retained: prune.retained.len(),
                truth_retained: truth_idx.is_some_and(|i| prune.retained.contains(&i)),
                inflations: prune.inflations,
            })
        })
        .collect::<Result<Vec<_>, lqgvtr_core::Error>>()?;
    art.csv("warmup.csv", csv_bytes(&rows)?);
    let means: Vec<f64> = cfg
        .horizons
        .iter()
        .map(|&t| mean_se(&rows.iter().filter(|r| r.t_w == t).map(|r| r.error).collect::<Vec<_>>()).mean)
        .collect();
    let xs: Vec<f64> = cfg.horizons.iter().map(|&t| t as f64).collect();
    art.json(
        "warmup.json",
        &json!({
            "h_tilde": h_tilde,
            "mean_error": means,
            "slope": log_log_slope(&xs, &means),
            "truth_retained": rows.iter().filter(|r| r.truth_retained).count(),
            "runs": rows.len(),
        }),
    )
}

fn vtr_kind(cfg: &ExperimentConfig, ctx: &Context, art: &mut Artifacts) -> Result<(), CliError> {
    let truth = ctx.truth(cfg.kind)?;
    let mut summary = Vec::new();
    for &h in &cfg.horizons {
        let runs = seed_list(cfg)
            .par_iter()
            .map(|&s| run_lqg_vtr(ctx.class.clone(), truth, h, &cfg.learner, s))
            .collect::<Result<Vec<_>, _>>()?;
        for run in runs {
            let mut trace = Vec::new();
            run.write_trace_csv(&mut trace)?;
            art.csv(&format!("trace_h{h}_s{}.csv", run.seed), trace);
            let mut episodes = Vec::new();
            run.write_episodes_csv(&mut episodes)?;
            art.csv(&format!("episodes_h{h}_s{}.csv", run.seed), episodes);
            summary.push(run);
        }
    }
    art.json("runs.json", &summary)
}

#[derive(Serialize)]
struct RegretRow {
    horizon: usize,
    seed: u64,
    final_regret: f64,
    episodes: usize,
    halted: bool,
    max_belief_norm: f64,
}

fn regret_kind(cfg: &ExperimentConfig, ctx: &Context, art: &mut Artifacts) -> Result<(), CliError> {
    let truth = ctx.truth(cfg.kind)?;
    let jobs: Vec<(usize, u64)> = cfg.horizons.iter().flat_map(|&h| seed_list(cfg).into_iter().map(move |s| (h, s))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(h, s)| {
            run_lqg_vtr(ctx.class.clone(), truth, h, &cfg.learner, s).map(|r| RegretRow {
                horizon: h,
                seed: s,
                final_regret: r.final_regret,
                episodes: r.episode_count(),
                halted: r.halted,
                max_belief_norm: r.max_belief_norm,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    art.csv("regret.csv", csv_bytes(&rows)?);
    let medians: Vec<f64> = cfg
        .horizons
        .iter()
        .map(|&h| median(&rows.iter().filter(|r| r.horizon == h).map(|r| r.final_regret).collect::<Vec<_>>()))
        .collect();
    let xs: Vec<f64> = cfg.horizons.iter().map(|&h| h as f64).collect();
    let positive = medians.iter().all(|&m| m > 0.0);
    art.json(
        "regret_summary.json",
        &json!({
            "horizons": cfg.horizons,
            "median_regret": medians,
            "slope": if positive { log_log_slope(&xs, &medians) } else { None },
        }),
    )
}

fn gap_kind(cfg: &ExperimentConfig, ctx: &Context, art: &mut Artifacts) -> Result<(), CliError> {
    let truth = ctx.truth(cfg.kind)?;
    let table = minimax_static_policy(&ctx.class)?;
    let chosen = &ctx.class.members[table.choice];
    let reduction = reduction_diagnostic(truth, &cfg.horizons)?;
    let mut reports = Vec::new();
    for &h in &cfg.horizons {
        let learner = PolicySpec::LqgVtr {
            class: ctx.class.clone(),
            config: cfg.learner.clone(),
        };
        reports.push(evaluate_gap(&learner, truth, h, cfg.reps, cfg.seed)?);
        let ce = PolicySpec::CertaintyEquivalent {
            label: chosen.name.clone(),
            model: chosen.solved.clone(),
        };
        reports.push(evaluate_gap(&ce, truth, h, cfg.reps, cfg.seed)?);
    }
    let mut bytes = Vec::new();
    write_gap_csv(&reports, &mut bytes)?;
    art.csv("gap.csv", bytes);
    art.json(
        "gap.json",
        &json!({ "reports": reports, "minimax_choice": chosen.name, "d_h": reduction.d_h }),
    )
}

fn minimax_kind(ctx: &Context, art: &mut Artifacts) -> Result<(), CliError> {
    let table = minimax_static_policy(&ctx.class)?;
    let mut bytes = Vec::new();
    table.write_csv(&mut bytes)?;
    art.csv("minimax.csv", bytes);
    // JSON has no infinity; unstable pairs become null
    art.json("minimax.json", &table)
}

#[derive(Serialize)]
struct ReductionCsvRow<'a> {
    model: &'a str,
    horizon: usize,
    v_star: f64,
    difference: f64,
}

fn reduction_kind(cfg: &ExperimentConfig, ctx: &Context, art: &mut Artifacts) -> Result<(), CliError> {
    let models: Vec<(String, &SolvedSystem)> = match &ctx.truth {
        Some(t) => vec![("truth".into(), t)],
        None => ctx.class.members.iter().map(|m| (m.name.clone(), &m.solved)).collect(),
    };
    let mut rows = Vec::new();
    let mut tables = Vec::new();
    for (name, m) in &models {
        let t = reduction_diagnostic(m, &cfg.horizons)?;
        for r in &t.rows {
            rows.push(ReductionCsvRow {
                model: name,
                horizon: r.horizon,
                v_star: r.v_star,
                difference: r.difference,
            });
        }
        tables.push(json!({ "model": name, "j_star": m.j_star, "table": t }));
    }
    art.csv("reduction.csv", csv_bytes(&rows)?);
    art.json("reduction.json", &tables)
}

#[derive(Serialize)]
struct ProbeCsvRow {
    clip_len: usize,
    max_gap: f64,
    steps: usize,
    certified_rate_pow: f64,
}

fn probe_kind(cfg: &ExperimentConfig, ctx: &Context, art: &mut Artifacts) -> Result<(), CliError> {
    let truth = ctx.truth(cfg.kind)?;
    let h = *cfg.horizons.last().expect("validated non-empty");
    let mut policy = CertaintyEquivalent::new(truth.clone());
    let traj = run_episode(&truth.system, &truth.cost, &mut policy, h, Noise::seeded(cfg.seed, streams::ENVIRONMENT), cfg.seed);
    let rows = clipping_error_probe(truth, truth, &traj, &cfg.clip_lens);
    let report = lqgvtr_core::riccati::stability_report(&truth.predictor_matrix());
    let cert = report.certificate;
    let csv_rows: Vec<ProbeCsvRow> = rows
        .iter()
        .map(|r| ProbeCsvRow {
            clip_len: r.clip_len,
            max_gap: r.max_gap,
            steps: r.steps,
            certified_rate_pow: cert.map_or(f64::NAN, |c| (1.0 - c.gamma).powi(r.clip_len as i32)),
        })
        .collect();
    art.csv("probe.csv", csv_bytes(&csv_rows)?);
    art.json(
        "probe.json",
        &json!({
            "measured_rate": decay_rate(&rows),
            "certified_rate": cert.map(|c| 1.0 - c.gamma),
            "kappa": cert.map(|c| c.kappa),
            "horizon": h,
        }),
    )
}

/// Where a run's artifacts go when replaying a manifest.
pub fn replay_dir(manifest_path: &Path, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| manifest_path.parent().unwrap_or(Path::new(".")).join("replay"))
}
