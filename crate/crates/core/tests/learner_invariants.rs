use std::sync::Arc;

use lqgvtr_core::benchmark::{two_state_class, TWO_STATE_TRUTH};
use lqgvtr_core::lqg::{filter_update, BeliefKind, BeliefState};
use lqgvtr_core::vtr::regression::{confidence_set, regress_model, PairSums, RegressionSample};
use lqgvtr_core::{LearnerConfig, LqgEnv, LqgVtr, Setting, SimulatorClass, SolvedSystem, TraceRow, Vector};

fn benchmark() -> (Arc<SimulatorClass>, SolvedSystem) {
    let class = two_state_class().unwrap();
    let truth = class.members[TWO_STATE_TRUTH].solved.clone();
    (Arc::new(class), truth)
}

/// A threshold small enough that the learner switches several times.
fn switching_config() -> LearnerConfig {
    LearnerConfig {
        psi: Setting::Value(5.0),
        beta_scale: 0.001,
        ..Default::default()
    }
}

struct Driven {
    learner: LqgVtr,
    trace: Vec<TraceRow>,
    actions: Vec<Vector>,
}

fn drive(class: &Arc<SimulatorClass>, truth: &SolvedSystem, cfg: LearnerConfig, h: usize, seed: u64) -> Driven {
    let mut learner = LqgVtr::new(class.clone(), h, cfg, seed).unwrap().keep_samples(true);
    let mut env = LqgEnv::seeded(truth.system.clone(), class.cost.clone(), seed);
    let mut trace = Vec::new();
    let mut actions = Vec::new();
    for step in 0..=h {
        let y = env.observation().clone();
        let u = learner.try_act(&y).unwrap();
        let cost = env.step(&u);
        trace.push(TraceRow {
            step,
            cost,
            cumulative_regret: 0.0,
            episode: learner.episode(),
            score: learner.score(),
            halted: learner.halted(),
        });
        actions.push(u);
    }
    Driven { learner, trace, actions }
}

fn all_samples(learner: &LqgVtr) -> Vec<RegressionSample> {
    let d = learner.dataset();
    d.old.iter().chain(&d.new).cloned().collect()
}

#[test]
fn next_belief_follows_the_filter() {
    let (class, truth) = benchmark();
    let run = drive(&class, &truth, switching_config(), 3000, 4);
    let samples = all_samples(&run.learner);
    assert!(!samples.is_empty());
    for s in &samples {
        let model = &class.members[s.optimistic_model].solved;
        let before = BeliefState {
            mean: s.belief.clone(),
            kind: BeliefKind::Posterior,
            step: s.step,
            model_id: s.optimistic_model,
        };
        let after = filter_update(model, &before, &s.action, &s.next_obs).unwrap();
        assert_eq!(after.mean, s.next_belief, "sample at step {}", s.step);
    }
}

#[test]
fn confidence_sets_match_recomputation() {
    let (class, truth) = benchmark();
    let run = drive(&class, &truth, switching_config(), 4000, 9);
    let sel = run.learner.selection().unwrap();
    let samples = all_samples(&run.learner);
    let size = sel.candidates.len();
    let switches: Vec<_> = run.learner.episodes().iter().skip(1).collect();
    assert!(switches.len() >= 2, "expected switching with a small threshold");
    for ep in switches {
        let seen: Vec<RegressionSample> = samples.iter().filter(|s| s.step < ep.start_step).cloned().collect();
        let pairs = PairSums::from_samples(size, &seen);
        let center = regress_model(&seen, size).unwrap().center;
        assert_eq!(Some(sel.candidates[center]), ep.center);
        let set = confidence_set(&pairs, center, sel.beta, ep.episode);
        let members: Vec<usize> = set.members.iter().map(|&i| sel.candidates[i]).collect();
        assert_eq!(members, ep.members, "episode {}", ep.episode);
        for (i, d) in set.distances.iter().enumerate() {
            assert_eq!(set.contains(i), *d <= sel.beta);
        }
    }
}

#[test]
fn optimistic_model_minimizes_j_star_over_its_set() {
    let (class, truth) = benchmark();
    for seed in 0..3 {
        let run = drive(&class, &truth, switching_config(), 3000, seed);
        for ep in run.learner.episodes() {
            assert!(ep.members.contains(&ep.model));
            for &i in &ep.members {
                assert!(ep.j_star <= class.members[i].solved.j_star);
            }
        }
    }
}

#[test]
fn switches_happen_exactly_when_the_score_crosses_one() {
    let (class, truth) = benchmark();
    for (seed, k_bar) in [(1, Setting::Auto), (2, Setting::Value(3))] {
        let cfg = LearnerConfig {
            k_bar,
            ..switching_config()
        };
        let run = drive(&class, &truth, cfg, 3000, seed);
        let cap = run.learner.selection().unwrap().k_bar;
        for w in run.trace.windows(2) {
            let (prev, row) = (&w[0], &w[1]);
            if row.episode > prev.episode && prev.episode > 0 {
                assert_eq!(row.episode, prev.episode + 1);
                assert!(row.score >= 1.0, "switch at step {} with score {}", row.step, row.score);
            } else if prev.episode > 0 {
                assert!(row.score < 1.0 || row.episode + 1 >= cap, "missed switch at step {}", row.step);
            }
        }
        assert!(run.learner.episodes().len() < cap.max(2) + 1);
    }
}

#[test]
fn episode_count_stays_below_cap_under_default_threshold() {
    let (class, truth) = benchmark();
    for seed in 0..5 {
        let run = drive(&class, &truth, LearnerConfig::default(), 4000, seed);
        assert!(run.learner.episodes().len() < run.learner.selection().unwrap().k_bar);
    }
}

#[test]
fn halting_zeroes_every_later_action() {
    let (class, truth) = benchmark();
    let cfg = LearnerConfig {
        m_x: Setting::Value(0.5),
        ..Default::default()
    };
    let run = drive(&class, &truth, cfg, 1500, 3);
    let halt = run.learner.halt_step().expect("a tiny state bound forces a halt");
    assert!(halt >= run.learner.schedule().t_w);
    assert!(run.actions[halt..].iter().all(|u| u.iter().all(|&v| v == 0.0)));
    assert!(run.trace[halt..].iter().all(|r| r.halted));
    assert!(run.trace[..halt].iter().all(|r| !r.halted));
}

#[test]
fn beliefs_stay_bounded_on_the_benchmark() {
    let (class, truth) = benchmark();
    let mut ok = 0;
    for seed in 0..20 {
        let run = drive(&class, &truth, LearnerConfig::default(), 8000, seed);
        let m_x = run.learner.schedule().m_x;
        if !run.learner.halted() && run.learner.max_belief_norm() <= m_x {
            ok += 1;
        }
    }
    assert!(ok >= 18, "{ok}/20 runs stayed bounded");
}
