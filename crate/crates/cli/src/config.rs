use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use lqgvtr_core::LearnerConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Solve,
    Validate,
    Warmup,
    VtrRun,
    Gap,
    Minimax,
    Reduction,
    ClipProbe,
    RegretSweep,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Solve => "solve",
            Kind::Validate => "validate",
            Kind::Warmup => "warmup",
            Kind::VtrRun => "vtr-run",
            Kind::Gap => "gap",
            Kind::Minimax => "minimax",
            Kind::Reduction => "reduction",
            Kind::ClipProbe => "clip-probe",
            Kind::RegretSweep => "regret-sweep",
        }
    }
}

/// Everything an experiment needs. Loaded from a JSON or TOML file, then
/// overridden by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    /// Class spec (JSON). `None` selects the built-in two-state benchmark.
    pub class: Option<PathBuf>,
    /// Horizons, or warm-up lengths for `warmup`.
    pub horizons: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    /// Number of seeds; seed `i` is derived from `seed` and `i`.
    pub seeds: usize,
    pub learner: LearnerConfig,
    pub out: PathBuf,
    pub mc_check: bool,
    pub mc_steps: usize,
    pub clip_lens: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: Kind::Solve,
            class: None,
            horizons: vec![2000],
            reps: 20,
            seed: 0,
            seeds: 1,
            learner: LearnerConfig::default(),
            out: PathBuf::from("out"),
            mc_check: false,
            mc_steps: 200_000,
            clip_lens: (2..=30).collect(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Ok(toml::from_str(&text)?),
            _ => Ok(serde_json::from_str(&text)?),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.horizons.is_empty() {
            return Err(CliError::Config("horizon list is empty".into()));
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config("horizon list must be strictly increasing".into()));
        }
        if self.reps == 0 || self.seeds == 0 {
            return Err(CliError::Config("reps and seeds must be positive".into()));
        }
        if let Some(p) = &self.class {
            if !p.exists() {
                return Err(CliError::Config(format!("class spec {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

/// Flags that override the config file; unset flags leave it alone.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Experiment config (JSON or TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    /// Class spec (JSON).
    #[arg(long)]
    pub class: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    pub horizon: Option<Vec<usize>>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub mc_check: bool,
    #[arg(long)]
    pub beta_scale: Option<f64>,
}

impl Overrides {
    /// Flag, then file, then default.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_path(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(k) = self.kind {
            cfg.kind = k;
        }
        if let Some(c) = &self.class {
            cfg.class = Some(c.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.seeds {
            cfg.seeds = s;
        }
        if let Some(h) = &self.horizon {
            cfg.horizons = h.clone();
        }
        if let Some(r) = self.reps {
            cfg.reps = r;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if self.mc_check {
            cfg.mc_check = true;
        }
        if let Some(b) = self.beta_scale {
            cfg.learner.beta_scale = b;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beats_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, "kind = \"gap\"\nreps = 7\nhorizons = [100, 200]\n[learner]\nbeta_scale = 0.5\n").unwrap();
        let flags = Overrides {
            config: Some(path),
            reps: Some(3),
            ..Default::default()
        };
        let cfg = flags.resolve().unwrap();
        assert_eq!(cfg.kind, Kind::Gap);
        assert_eq!(cfg.reps, 3);
        assert_eq!(cfg.horizons, vec![100, 200]);
        assert_eq!(cfg.learner.beta_scale, 0.5);
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn horizons_must_increase() {
        let flags = Overrides {
            horizon: Some(vec![200, 100]),
            ..Default::default()
        };
        assert!(matches!(flags.resolve(), Err(CliError::Config(_))));
    }
}
