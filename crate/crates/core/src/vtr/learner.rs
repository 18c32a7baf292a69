//! The online learner: random-action warm-up, Markov pruning, then optimistic
//! certainty-equivalent control with value-target regression and
//! importance-score episode switching.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::lqg::{LqgEnv, Policy, SolvedSystem};
use crate::model_class::SimulatorClass;
use crate::rng::{replication_seed, stream_rng, streams};

use super::bounds::{
    bound_d, clipping_error, compute_beta, default_clip_len, default_episode_cap, default_markov_truncation, default_state_bound,
    switching_threshold, DomainBounds,
};
use super::function_class::{FunctionModel, OptimisticTerms};
use super::history::HistoryBuffer;
use super::regression::{argmin_first, confidence_set, RegressionSample, VtrDataset};
use super::warmup::{estimate_markov, prune_class, MarkovEstimate, PruneOutcome};

/// A knob that is either derived from the class and horizon or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Setting<T> {
    #[default]
    Auto,
    Value(T),
}

impl<T: Copy> Setting<T> {
    pub fn resolve(self, auto: impl FnOnce() -> T) -> T {
        match self {
            Setting::Auto => auto(),
            Setting::Value(v) => v,
        }
    }
}

impl<T: Serialize> Serialize for Setting<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Setting::Auto => s.serialize_str("auto"),
            Setting::Value(v) => v.serialize(s),
        }
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Setting<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<T> {
            Tag(String),
            Value(T),
        }
        match Raw::<T>::deserialize(d)? {
            Raw::Value(v) => Ok(Setting::Value(v)),
            Raw::Tag(s) if s == "auto" => Ok(Setting::Auto),
            Raw::Tag(s) => Err(serde::de::Error::custom(format!("expected \"auto\" or a value, got {s:?}"))),
        }
    }
}

/// Warm-up length rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum WarmupRule {
    /// `max(500, 20 H̃ (m + p))`.
    #[default]
    Default,
    Fixed { steps: usize },
    /// `⌈scale · ln(H)⁴⌉`, the squared episode-cap shape.
    PolyLog { scale: f64 },
}

/// How the sup-norm bound `D` on `f` and `h*` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum DRule {
    /// `factor ×` the largest `|f|` and `|h*|` seen during warm-up.
    Empirical { factor: f64 },
    /// `max(D₁, D₂)` from the class profile.
    Analytic,
    Fixed { value: f64 },
}

impl Default for DRule {
    fn default() -> Self {
        DRule::Empirical { factor: 1.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub warmup: WarmupRule,
    pub h_tilde: Setting<usize>,
    pub h_tilde_cap: usize,
    #[serde(rename = "l")]
    pub clip_len: Setting<usize>,
    pub psi: Setting<f64>,
    pub beta_scale: f64,
    pub delta: f64,
    pub k_bar: Setting<usize>,
    pub m_x: Setting<f64>,
    pub c_x: f64,
    pub d: DRule,
    /// Pruning radius is this multiple of `√(C_w / N)`.
    pub prune_multiplier: f64,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            warmup: WarmupRule::Default,
            h_tilde: Setting::Auto,
            h_tilde_cap: 50,
            clip_len: Setting::Auto,
            psi: Setting::Auto,
            beta_scale: 0.01,
            delta: 0.05,
            k_bar: Setting::Auto,
            m_x: Setting::Auto,
            c_x: 10.0,
            d: DRule::default(),
            prune_multiplier: 3.0,
            seed: 0,
        }
    }
}

/// Constants fixed before the first step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub horizon: usize,
    pub t_w: usize,
    pub h_tilde: usize,
    pub clip_len: usize,
    pub m_x: f64,
}

impl Schedule {
    pub fn new(class: &SimulatorClass, horizon: usize, config: &LearnerConfig) -> Result<Self> {
        let (n, m, p) = class.dims();
        let e = &class.profile.empirical;
        let h_tilde = config
            .h_tilde
            .resolve(|| default_markov_truncation(horizon, e.kappa2, e.gamma2, config.h_tilde_cap))
            .max(1);
        let t_w = match config.warmup {
            WarmupRule::Default => 500.max(20 * h_tilde * (m + p)),
            WarmupRule::Fixed { steps } => steps,
            WarmupRule::PolyLog { scale } => (scale * (horizon.max(2) as f64).ln().powi(4)).ceil() as usize,
        };
        if t_w <= h_tilde * (m + p) {
            return Err(Error::InvalidInput(format!(
                "warm-up of {t_w} steps is too short for {} regressors",
                h_tilde * (m + p)
            )));
        }
        if horizon <= t_w {
            return Err(Error::InvalidInput(format!("horizon {horizon} must exceed the warm-up length {t_w}")));
        }
        Ok(Self {
            horizon,
            t_w,
            h_tilde,
            clip_len: config.clip_len.resolve(|| default_clip_len(horizon, n, p, e.gamma2)).max(1),
            m_x: config.m_x.resolve(|| default_state_bound(config.c_x, n, p, horizon)),
        })
    }
}

/// Outcome of the model-selection phase at `t = T_w`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Selection {
    pub markov: MarkovEstimate,
    pub prune: PruneOutcome,
    /// Class indices of `𝓤₁`.
    pub candidates: Vec<usize>,
    pub d: f64,
    pub clip_error: f64,
    pub beta: f64,
    pub psi: f64,
    pub k_bar: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub start_step: usize,
    /// Class index of `Θ̃_k`.
    pub model: usize,
    pub j_star: f64,
    /// Regression center; `None` for the first episode.
    pub center: Option<usize>,
    /// Class indices of the confidence set (`𝓤₁` for the first episode).
    pub members: Vec<usize>,
    pub score: f64,
}

#[derive(Debug, Clone)]
struct Pending {
    step: usize,
    window: Vector,
    l_clip: usize,
    belief: Vector,
    action: Vector,
    f_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Warmup,
    Learning,
    Halted,
}

/// The learner as a [`Policy`]. It owns exact filters for every member so
/// the belief of a newly chosen model is available at switch time.
pub struct LqgVtr {
    class: Arc<SimulatorClass>,
    config: LearnerConfig,
    schedule: Schedule,
    models: Vec<FunctionModel>,
    terms: Vec<OptimisticTerms>,
    /// `noise[tilde][target]`.
    noise: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
    seed: u64,
    phase: Phase,
    t: usize,
    beliefs: Vec<Vector>,
    last_action: Option<Vector>,
    history: HistoryBuffer,
    warm_ys: Vec<Vector>,
    warm_us: Vec<Vector>,
    warm_sup: f64,
    selection: Option<Selection>,
    dataset: VtrDataset,
    tilde: usize,
    episode: usize,
    pending: Option<Pending>,
    episodes: Vec<EpisodeRecord>,
    last_score: f64,
    halt_step: Option<usize>,
    max_belief_norm: f64,
    keep_samples: bool,
}

impl LqgVtr {
    pub fn new(class: Arc<SimulatorClass>, horizon: usize, config: LearnerConfig, seed: u64) -> Result<Self> {
        let schedule = Schedule::new(&class, horizon, &config)?;
        let models: Vec<FunctionModel> = class
            .members
            .iter()
            .map(|mem| FunctionModel::new(mem.solved.clone(), schedule.clip_len))
            .collect();
        let terms: Vec<OptimisticTerms> = class.members.iter().map(|mem| OptimisticTerms::new(&mem.solved)).collect();
        let noise = terms
            .iter()
            .map(|t| models.iter().map(|m| t.noise_term(&m.innovation_cov)).collect())
            .collect();
        let n = class.members[0].solved.n();
        Ok(Self {
            beliefs: vec![Vector::zeros(n); class.len()],
            history: HistoryBuffer::new(schedule.clip_len),
            dataset: VtrDataset::new(0),
            class,
            config,
            schedule,
            models,
            terms,
            noise,
            rng: stream_rng(seed, streams::EXPLORATION),
            seed,
            phase: Phase::Warmup,
            t: 0,
            last_action: None,
            warm_ys: Vec::new(),
            warm_us: Vec::new(),
            warm_sup: 0.0,
            selection: None,
            tilde: 0,
            episode: 0,
            pending: None,
            episodes: Vec::new(),
            last_score: 0.0,
            halt_step: None,
            max_belief_norm: 0.0,
            keep_samples: false,
        })
    }

    /// Keep every regression sample (memory grows with `H`).
    pub fn keep_samples(mut self, keep: bool) -> Self {
        self.keep_samples = keep;
        self
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn selection(&self) -> Option<&Selection> {
        self.selection.as_ref()
    }

    pub fn episodes(&self) -> &[EpisodeRecord] {
        &self.episodes
    }

    /// Current episode index `k` (0 during warm-up).
    pub fn episode(&self) -> usize {
        self.episode
    }

    pub fn optimistic_model(&self) -> Option<usize> {
        (self.phase != Phase::Warmup).then_some(self.tilde)
    }

    pub fn score(&self) -> f64 {
        self.last_score
    }

    pub fn halted(&self) -> bool {
        self.phase == Phase::Halted
    }

    pub fn halt_step(&self) -> Option<usize> {
        self.halt_step
    }

    pub fn max_belief_norm(&self) -> f64 {
        self.max_belief_norm
    }

    pub fn dataset(&self) -> &VtrDataset {
        &self.dataset
    }

    /// Exact belief of class member `idx` at the current step.
    pub fn belief_of(&self, idx: usize) -> &Vector {
        &self.beliefs[idx]
    }

    fn solved(&self, idx: usize) -> &SolvedSystem {
        &self.class.members[idx].solved
    }

    /// `f` of `target` at the current window with the given belief and action
    /// of `tilde`.
    fn f_value(&self, target: usize, tilde: usize, window: &Vector, l_clip: usize, drift: &Vector, u: &Vector) -> f64 {
        let b = self.models[target].predicted_observation(window, l_clip, u);
        self.terms[tilde].evaluate(&b, drift, self.noise[tilde][target])
    }

    fn observe(&mut self, y: &Vector) {
        match &self.last_action {
            None => {
                for (i, b) in self.beliefs.iter_mut().enumerate() {
                    *b = self.class.members[i].solved.initial_belief(y);
                }
            }
            Some(u) => {
                for (i, b) in self.beliefs.iter_mut().enumerate() {
                    *b = self.class.members[i].solved.update(b, u, y);
                }
            }
        }
        self.history.push_observation(y.clone());
    }

    fn complete_sample(&mut self, y: &Vector) {
        let Some(p) = self.pending.take() else {
            return;
        };
        let next_belief = self.beliefs[self.tilde].clone();
        let target = self.solved(self.tilde).bias(&next_belief, y);
        let sample = RegressionSample {
            step: p.step,
            window: if self.keep_samples { p.window } else { Vector::zeros(0) },
            l_clip: p.l_clip,
            belief: p.belief,
            optimistic_model: self.tilde,
            action: p.action,
            next_belief,
            next_obs: y.clone(),
            f_values: p.f_values,
            target,
        };
        self.dataset.push(sample);
        let sel = self.selection.as_ref().expect("samples only after selection");
        let (psi, k_bar, beta) = (sel.psi, sel.k_bar, sel.beta);
        self.last_score = self.dataset.score(psi);
        if self.last_score >= 1.0 && self.episode + 1 < k_bar {
            self.switch(beta);
        }
    }

    fn switch(&mut self, beta: f64) {
        self.dataset.merge();
        let sel = self.selection.as_ref().expect("selection precedes switching");
        let reg = self.dataset.regress().expect("switching needs a non-empty dataset").center;
        let set = confidence_set(&self.dataset.old_pairs, reg, beta, self.episode + 1);
        let members: Vec<usize> = set.members.iter().map(|&i| sel.candidates[i]).collect();
        let j: Vec<f64> = members.iter().map(|&i| self.solved(i).j_star).collect();
        self.tilde = members[argmin_first(&j).unwrap_or(0)];
        self.episode += 1;
        self.episodes.push(EpisodeRecord {
            episode: self.episode,
            start_step: self.t,
            model: self.tilde,
            j_star: self.solved(self.tilde).j_star,
            center: Some(sel.candidates[reg]),
            members,
            score: self.last_score,
        });
    }

    fn track_warmup_sup(&mut self, u: &Vector) {
        let (window, l_clip) = self.history.stacked_window(self.solved(0).system.p(), u.len());
        let y = self.history_front();
        let mut sup = self.warm_sup;
        for tilde in 0..self.class.len() {
            let belief = &self.beliefs[tilde];
            sup = sup.max(self.solved(tilde).bias(belief, &y).abs());
            let drift = self.terms[tilde].drift(belief, u);
            for target in 0..self.class.len() {
                sup = sup.max(self.f_value(target, tilde, &window, l_clip, &drift, u).abs());
            }
        }
        self.warm_sup = sup;
    }

    fn history_front(&self) -> Vector {
        self.warm_ys.last().cloned().expect("observation recorded")
    }

    fn select(&mut self) -> Result<()> {
        let sched = self.schedule;
        let markov = estimate_markov(&self.warm_ys, &self.warm_us, sched.h_tilde)?;
        let radius = markov.default_radius(self.config.prune_multiplier);
        let prune = prune_class(&self.class, &markov.m_hat, sched.h_tilde, radius);
        let candidates = prune.retained.clone();
        let profile = &self.class.profile;
        let (n, _, _) = self.class.dims();
        let d = match self.config.d {
            DRule::Empirical { factor } => factor * self.warm_sup,
            DRule::Fixed { value } => value,
            DRule::Analytic => {
                let dom = DomainBounds::from_profile(profile, sched.m_x, n, sched.horizon);
                bound_d(&self.models, profile, &dom)
            }
        };
        let e = &profile.empirical;
        let clip_error = clipping_error(e.kappa2, e.gamma2, sched.clip_len, d);
        let beta = compute_beta(d, self.class.len(), sched.horizon, self.config.delta, clip_error, self.config.beta_scale);
        let psi = self.config.psi.resolve(|| switching_threshold(d));
        let k_bar = self.config.k_bar.resolve(|| default_episode_cap(d, sched.horizon)).max(2);
        let j: Vec<f64> = candidates.iter().map(|&i| self.solved(i).j_star).collect();
        self.tilde = candidates[argmin_first(&j).unwrap_or(0)];
        self.episode = 1;
        self.episodes.push(EpisodeRecord {
            episode: 1,
            start_step: self.t,
            model: self.tilde,
            j_star: self.solved(self.tilde).j_star,
            center: None,
            members: candidates.clone(),
            score: 0.0,
        });
        self.dataset = if self.keep_samples {
            VtrDataset::new(candidates.len())
        } else {
            VtrDataset::sums_only(candidates.len())
        };
        self.selection = Some(Selection {
            markov,
            prune,
            candidates,
            d,
            clip_error,
            beta,
            psi,
            k_bar,
        });
        self.warm_ys = Vec::new();
        self.warm_us = Vec::new();
        Ok(())
    }

    fn learn_action(&mut self) -> Vector {
        let m = self.solved(0).system.m();
        if self.phase == Phase::Halted {
            return Vector::zeros(m);
        }
        let belief = self.beliefs[self.tilde].clone();
        let norm = belief.norm();
        if norm > self.schedule.m_x {
            self.phase = Phase::Halted;
            self.halt_step = Some(self.t);
            self.pending = None;
            return Vector::zeros(m);
        }
        self.max_belief_norm = self.max_belief_norm.max(norm);
        let u = self.solved(self.tilde).action(&belief);
        let p = self.solved(0).system.p();
        let (window, l_clip) = self.history.stacked_window(p, m);
        let drift = self.terms[self.tilde].drift(&belief, &u);
        let cands = &self.selection.as_ref().expect("selected").candidates;
        let f_values = cands
            .iter()
            .map(|&c| self.f_value(c, self.tilde, &window, l_clip, &drift, &u))
            .collect();
        self.pending = Some(Pending {
            step: self.t,
            window,
            l_clip,
            belief,
            action: u.clone(),
            f_values,
        });
        u
    }

    /// One step of the algorithm; errors only if model selection fails.
    pub fn try_act(&mut self, y: &Vector) -> Result<Vector> {
        self.observe(y);
        self.complete_sample(y);
        if self.phase == Phase::Warmup {
            self.warm_ys.push(y.clone());
            if self.t < self.schedule.t_w {
                let m = self.solved(0).system.m();
                let u = Vector::from_fn(m, |_, _| self.rng.sample(StandardNormal));
                self.track_warmup_sup(&u);
                self.warm_us.push(u.clone());
                return Ok(self.finish_step(u));
            }
            self.select()?;
            self.phase = Phase::Learning;
        }
        let u = self.learn_action();
        Ok(self.finish_step(u))
    }

    fn finish_step(&mut self, u: Vector) -> Vector {
        self.history.push_action(u.clone());
        self.last_action = Some(u.clone());
        self.t += 1;
        u
    }
}

impl Policy for LqgVtr {
    fn reset(&mut self) {
        let fresh = LqgVtr::new(self.class.clone(), self.schedule.horizon, self.config.clone(), self.seed)
            .expect("schedule was valid at construction")
            .keep_samples(self.keep_samples);
        *self = fresh;
    }

    /// Panics if the warm-up regression is rank deficient; use
    /// [`LqgVtr::try_act`] to handle that case.
    fn act(&mut self, y: &Vector) -> Vector {
        self.try_act(y).expect("model selection failed")
    }
}

/// One row of the per-step trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub cost: f64,
    pub cumulative_regret: f64,
    pub episode: usize,
    pub score: f64,
    pub halted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VtrRun {
    pub seed: u64,
    pub horizon: usize,
    pub j_star_truth: f64,
    pub schedule: Schedule,
    pub selection: Selection,
    pub episodes: Vec<EpisodeRecord>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
    #[serde(skip)]
    pub actions: Vec<Vector>,
    pub halted: bool,
    pub halt_step: Option<usize>,
    pub max_belief_norm: f64,
    pub total_cost: f64,
    pub final_regret: f64,
}

impl VtrRun {
    /// Number of episodes `𝒦`.
    pub fn episode_count(&self) -> usize {
        self.episodes.len()
    }

    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.trace {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_episodes_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "start_step", "model", "j_star", "center", "members", "score"])?;
        for e in &self.episodes {
            let members: Vec<String> = e.members.iter().map(usize::to_string).collect();
            w.write_record([
                e.episode.to_string(),
                e.start_step.to_string(),
                e.model.to_string(),
                e.j_star.to_string(),
                e.center.map_or(String::new(), |c| c.to_string()),
                members.join(";"),
                e.score.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the learner for `H + 1` steps on the true system. `seed` drives both
/// the environment and the exploration stream.
pub fn run_lqg_vtr(class: Arc<SimulatorClass>, truth: &SolvedSystem, horizon: usize, config: &LearnerConfig, seed: u64) -> Result<VtrRun> {
    let mut learner = LqgVtr::new(class.clone(), horizon, config.clone(), seed)?;
    let mut env = LqgEnv::seeded(truth.system.clone(), class.cost.clone(), seed);
    let mut trace = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon + 1);
    let mut regret = 0.0;
    let mut total = 0.0;
    for step in 0..=horizon {
        let y = env.observation().clone();
        let u = learner.try_act(&y)?;
        let cost = env.step(&u);
        total += cost;
        regret += cost - truth.j_star;
        trace.push(TraceRow {
            step,
            cost,
            cumulative_regret: regret,
            episode: learner.episode(),
            score: learner.score(),
            halted: learner.halted(),
        });
        actions.push(u);
    }
    Ok(VtrRun {
        seed,
        horizon,
        j_star_truth: truth.j_star,
        schedule: learner.schedule,
        selection: learner.selection.clone().expect("horizon exceeds warm-up"),
        episodes: learner.episodes.clone(),
        trace,
        actions,
        halted: learner.halted(),
        halt_step: learner.halt_step,
        max_belief_norm: learner.max_belief_norm,
        total_cost: total,
        final_regret: regret,
    })
}

/// Independent runs with seeds `replication_seed(seed, i)`, in parallel.
pub fn run_lqg_vtr_reps(
    class: Arc<SimulatorClass>,
    truth: &SolvedSystem,
    horizon: usize,
    config: &LearnerConfig,
    seed: u64,
    reps: usize,
) -> Result<Vec<VtrRun>> {
    (0..reps)
        .into_par_iter()
        .map(|i| run_lqg_vtr(class.clone(), truth, horizon, config, replication_seed(seed, i as u64)))
        .collect()
}
