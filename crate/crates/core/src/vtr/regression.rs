//! Value-target regression over a finite class, confidence sets and the
//! importance score, all on per-sample vectors of `f` values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// `E_t = (τ_t, x̂_{t|t,Θ̃}, Θ̃, u_t, x̂_{t+1|t+1,Θ̃}, y_{t+1})` together with the
/// `f` value of every candidate and the realized target `h*_Θ̃(x̂′, y′)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    pub step: usize,
    pub window: Vector,
    pub l_clip: usize,
    pub belief: Vector,
    /// Class index of the model the belief and action came from.
    pub optimistic_model: usize,
    pub action: Vector,
    pub next_belief: Vector,
    pub next_obs: Vector,
    /// `f_Θ(E)` for each candidate, in candidate order.
    pub f_values: Vec<f64>,
    pub target: f64,
}

/// Symmetric table of `Σ (f_i − f_j)²`, stored as the upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSums {
    size: usize,
    data: Vec<f64>,
}

impl PairSums {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            data: vec![0.0; size * size.saturating_sub(1) / 2],
        }
    }

    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * (2 * self.size - i - 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.data[self.index(i, j)]
        }
    }

    pub fn add(&mut self, f: &[f64]) {
        let mut idx = 0;
        for i in 0..self.size {
            for j in i + 1..self.size {
                let d = f[i] - f[j];
                self.data[idx] += d * d;
                idx += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &PairSums) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn from_samples<'a>(size: usize, samples: impl IntoIterator<Item = &'a RegressionSample>) -> Self {
        let mut out = Self::new(size);
        for s in samples {
            out.add(&s.f_values);
        }
        out
    }
}

/// Argmin of a loss vector, first index on ties.
pub fn argmin_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if !(v < values[b]) => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub center: usize,
    pub losses: Vec<f64>,
}

/// `argmin_Θ Σ (f_Θ(E) − target)²` by enumeration.
pub fn regress_model(samples: &[RegressionSample], size: usize) -> Result<RegressionResult> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut losses = vec![0.0; size];
    for s in samples {
        for (loss, f) in losses.iter_mut().zip(&s.f_values) {
            *loss += (f - s.target).powi(2);
        }
    }
    let center = argmin_first(&losses).unwrap_or(0);
    Ok(RegressionResult { center, losses })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub center: usize,
    pub beta: f64,
    pub members: Vec<usize>,
    /// `Σ (f_Θ − f_center)²` for every candidate.
    pub distances: Vec<f64>,
    pub episode: usize,
}

impl ConfidenceSet {
    pub fn contains(&self, idx: usize) -> bool {
        self.members.contains(&idx)
    }
}

/// Members with `Σ_Z (f_Θ − f_center)² ≤ β`.
pub fn confidence_set(pairs: &PairSums, center: usize, beta: f64, episode: usize) -> ConfidenceSet {
    let distances: Vec<f64> = (0..pairs.size).map(|i| pairs.get(i, center)).collect();
    let members = (0..pairs.size).filter(|&i| distances[i] <= beta).collect();
    ConfidenceSet {
        center,
        beta,
        members,
        distances,
        episode,
    }
}

/// `max_{i≠j} new_ij / (old_ij + ψ)`; zero for a singleton or empty `Z_new`.
pub fn importance_score(old: &PairSums, new: &PairSums, psi: f64) -> f64 {
    old.data
        .iter()
        .zip(&new.data)
        .map(|(o, n)| n / (o + psi))
        .fold(0.0, f64::max)
}

/// Running regression state: `Z`, `Z_new`, their pair sums and the losses on `Z`.
#[derive(Debug, Clone)]
pub struct VtrDataset {
    size: usize,
    pub old: Vec<RegressionSample>,
    pub new: Vec<RegressionSample>,
    pub old_pairs: PairSums,
    pub new_pairs: PairSums,
    old_losses: Vec<f64>,
    new_losses: Vec<f64>,
    old_count: usize,
    new_count: usize,
    retain: bool,
}

impl VtrDataset {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            old: Vec::new(),
            new: Vec::new(),
            old_pairs: PairSums::new(size),
            new_pairs: PairSums::new(size),
            old_losses: vec![0.0; size],
            new_losses: vec![0.0; size],
            old_count: 0,
            new_count: 0,
            retain: true,
        }
    }

    /// Keeps only the running sums, not the samples themselves.
    pub fn sums_only(size: usize) -> Self {
        Self {
            retain: false,
            ..Self::new(size)
        }
    }

    /// `(|Z|, |Z_new|)`.
    pub fn counts(&self) -> (usize, usize) {
        (self.old_count, self.new_count)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn push(&mut self, sample: RegressionSample) {
        debug_assert_eq!(sample.f_values.len(), self.size);
        self.new_pairs.add(&sample.f_values);
        for (loss, f) in self.new_losses.iter_mut().zip(&sample.f_values) {
            *loss += (f - sample.target).powi(2);
        }
        self.new_count += 1;
        if self.retain {
            self.new.push(sample);
        }
    }

    pub fn score(&self, psi: f64) -> f64 {
        importance_score(&self.old_pairs, &self.new_pairs, psi)
    }

    /// `Z ← Z ∪ Z_new`, `Z_new ← ∅`.
    pub fn merge(&mut self) {
        self.old_pairs.merge(&self.new_pairs);
        self.new_pairs.clear();
        for (a, b) in self.old_losses.iter_mut().zip(self.new_losses.iter_mut()) {
            *a += *b;
            *b = 0.0;
        }
        self.old.append(&mut self.new);
        self.old_count += self.new_count;
        self.new_count = 0;
    }

    /// Regression on `Z` from the incremental loss sums.
    pub fn regress(&self) -> Result<RegressionResult> {
        if self.old_count == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(RegressionResult {
            center: argmin_first(&self.old_losses).unwrap_or(0),
            losses: self.old_losses.clone(),
        })
    }
}
