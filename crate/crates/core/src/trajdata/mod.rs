//! Trajectory data model: latent activations, episodes, checkpoints and runs.
//!
//! A [`RunRecord`] is one training run. It holds checkpoints ordered by
//! training step; each checkpoint holds the test episodes recorded with the
//! frozen policy, and each episode holds a `T x n` matrix of latent
//! activations plus per-step rewards. The on-disk layout lives in [`bundle`].

mod bundle;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::median;

pub use bundle::{read_bundle, validate_bundle, write_bundle, ValidationReport, SCHEMA_VERSION};

/// Relative tolerance for `episode_return == sum(step_rewards)`.
pub const RETURN_TOLERANCE: f64 = 1e-9;

/// A `T x n` matrix of per-timestep activations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    episode_id: String,
    n_steps: usize,
    n_units: usize,
    values: Vec<f64>,
}

impl LatentTrajectory {
    pub fn new(
        episode_id: impl Into<String>,
        n_steps: usize,
        n_units: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let episode_id = episode_id.into();
        if n_steps < 2 {
            return Err(Error::input(format!(
                "trajectory {episode_id:?} has {n_steps} timesteps; at least 2 are required"
            )));
        }
        if n_units < 2 {
            return Err(Error::input(format!(
                "trajectory {episode_id:?} has {n_units} units; at least 2 are required"
            )));
        }
        if values.len() != n_steps * n_units {
            return Err(Error::input(format!(
                "trajectory {episode_id:?}: {} values do not fill a {n_steps}x{n_units} matrix",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "trajectory {episode_id:?}: non-finite value at row {}, column {}",
                pos / n_units,
                pos % n_units
            )));
        }
        Ok(Self {
            episode_id,
            n_steps,
            n_units,
            values,
        })
    }

    /// Builds a trajectory from its columns (one `Vec` per unit, all of length `T`).
    pub fn from_columns(episode_id: impl Into<String>, columns: &[Vec<f64>]) -> Result<Self> {
        let n_units = columns.len();
        let n_steps = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_steps) {
            return Err(Error::input("columns have unequal lengths"));
        }
        let mut values = Vec::with_capacity(n_steps * n_units);
        for t in 0..n_steps {
            values.extend(columns.iter().map(|c| c[t]));
        }
        Self::new(episode_id, n_steps, n_units, values)
    }

    pub fn episode_id(&self) -> &str {
        &self.episode_id
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, t: usize, unit: usize) -> f64 {
        self.values[t * self.n_units + unit]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.n_units..(t + 1) * self.n_units]
    }

    pub fn column(&self, unit: usize) -> Vec<f64> {
        (0..self.n_steps).map(|t| self.get(t, unit)).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.n_units).map(|u| self.column(u)).collect()
    }

    /// Rows `start..end` as a new trajectory sharing the episode id.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_steps {
            return Err(Error::input(format!(
                "row range {start}..{end} is invalid for a trajectory of length {}",
                self.n_steps
            )));
        }
        Self::new(
            self.episode_id.clone(),
            end - start,
            self.n_units,
            self.values[start * self.n_units..end * self.n_units].to_vec(),
        )
    }

    /// Keeps only the listed units, in the given order.
    pub fn select_units(&self, units: &[usize]) -> Result<Self> {
        if let Some(&bad) = units.iter().find(|&&u| u >= self.n_units) {
            return Err(Error::input(format!("unit index {bad} out of range")));
        }
        let mut values = Vec::with_capacity(self.n_steps * units.len());
        for t in 0..self.n_steps {
            let row = self.row(t);
            values.extend(units.iter().map(|&u| row[u]));
        }
        Self::new(self.episode_id.clone(), self.n_steps, units.len(), values)
    }
}

/// One test episode recorded at a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub latents: LatentTrajectory,
    pub step_rewards: Vec<f64>,
    pub episode_return: f64,
    pub seed: u64,
}

impl EpisodeRecord {
    /// Builds an episode whose return is the sum of its step rewards.
    pub fn new(latents: LatentTrajectory, step_rewards: Vec<f64>, seed: u64) -> Result<Self> {
        if step_rewards.len() != latents.n_steps() {
            return Err(Error::input(format!(
                "episode {:?}: {} step rewards for {} timesteps",
                latents.episode_id(),
                step_rewards.len(),
                latents.n_steps()
            )));
        }
        let episode_return = step_rewards.iter().sum();
        Ok(Self {
            latents,
            step_rewards,
            episode_return,
            seed,
        })
    }
}

/// Episodes recorded with the policy frozen at one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord {
    pub train_step: u64,
    pub episodes: Vec<EpisodeRecord>,
    /// Median of the episode returns.
    pub checkpoint_reward: f64,
}

impl CheckpointRecord {
    pub fn new(train_step: u64, episodes: Vec<EpisodeRecord>) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::input(format!(
                "checkpoint at train_step {train_step} has no episodes"
            )));
        }
        let returns: Vec<f64> = episodes.iter().map(|e| e.episode_return).collect();
        Ok(Self {
            train_step,
            checkpoint_reward: median(&returns),
            episodes,
        })
    }
}

/// Programmed coupling and reward values of a synthetic run, one per checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub coupling: Vec<f64>,
    pub reward: Vec<f64>,
}

/// One training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub env_name: String,
    pub algorithm: String,
    pub architecture: String,
    pub n_units: usize,
    pub checkpoints: Vec<CheckpointRecord>,
    /// Present only for runs produced by the synthetic generator.
    pub ground_truth: Option<GroundTruth>,
}

impl RunRecord {
    /// Every invariant violation of the in-memory record.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.n_units < 2 {
            out.push(Violation::run(
                ViolationKind::Shape,
                format!("n_units = {} (at least 2 required)", self.n_units),
            ));
        }
        if self.checkpoints.is_empty() {
            out.push(Violation::run(ViolationKind::Shape, "run has no checkpoints"));
        }
        for (ci, pair) in self.checkpoints.windows(2).enumerate() {
            if pair[1].train_step <= pair[0].train_step {
                out.push(
                    Violation::run(
                        ViolationKind::Ordering,
                        format!(
                            "train_step {} follows {}; steps must be strictly increasing",
                            pair[1].train_step, pair[0].train_step
                        ),
                    )
                    .at_checkpoint(ci + 1),
                );
            }
        }
        for (ci, cp) in self.checkpoints.iter().enumerate() {
            if cp.episodes.is_empty() {
                out.push(
                    Violation::run(ViolationKind::Shape, "checkpoint has no episodes")
                        .at_checkpoint(ci),
                );
                continue;
            }
            let returns: Vec<f64> = cp.episodes.iter().map(|e| e.episode_return).collect();
            let expected = median(&returns);
            if cp.checkpoint_reward.to_bits() != expected.to_bits() {
                out.push(
                    Violation::run(
                        ViolationKind::RewardMismatch,
                        format!(
                            "checkpoint_reward {} is not the median of episode returns ({expected})",
                            cp.checkpoint_reward
                        ),
                    )
                    .at_checkpoint(ci),
                );
            }
            for (ei, ep) in cp.episodes.iter().enumerate() {
                let at = |v: Violation| v.at_checkpoint(ci).at_episode(ei);
                if ep.latents.n_units() != self.n_units {
                    out.push(at(Violation::run(
                        ViolationKind::Shape,
                        format!(
                            "episode has {} units, run declares {}",
                            ep.latents.n_units(),
                            self.n_units
                        ),
                    )));
                }
                if ep.step_rewards.len() != ep.latents.n_steps() {
                    out.push(at(Violation::run(
                        ViolationKind::RewardLength,
                        format!(
                            "{} step rewards for {} timesteps",
                            ep.step_rewards.len(),
                            ep.latents.n_steps()
                        ),
                    )));
                }
                if let Some(t) = ep.step_rewards.iter().position(|r| !r.is_finite()) {
                    out.push(at(Violation::run(
                        ViolationKind::NonFinite,
                        "non-finite step reward",
                    )
                    .at_cell(t, None)));
                }
                if let Some(v) = return_mismatch(ep.episode_return, &ep.step_rewards) {
                    out.push(at(v));
                }
            }
        }
        out
    }
}

pub(crate) fn return_mismatch(episode_return: f64, step_rewards: &[f64]) -> Option<Violation> {
    let sum: f64 = step_rewards.iter().sum();
    let ok = episode_return.is_finite()
        && (episode_return - sum).abs() <= RETURN_TOLERANCE * sum.abs().max(1.0);
    (!ok).then(|| {
        Violation::run(
            ViolationKind::ReturnMismatch,
            format!("episode_return {episode_return} differs from the reward sum {sum}"),
        )
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    MissingManifest,
    CorruptManifest,
    UnsupportedSchema,
    MissingFile,
    BadPath,
    Shape,
    ShapeMismatch,
    RewardLength,
    NonFinite,
    ReturnMismatch,
    RewardMismatch,
    Ordering,
}

/// One violated invariant, with as much location as applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episode: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
    pub message: String,
}

impl Violation {
    pub(crate) fn run(kind: ViolationKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            checkpoint: None,
            episode: None,
            row: None,
            column: None,
            message: message.into(),
        }
    }

    pub(crate) fn at_checkpoint(mut self, index: usize) -> Self {
        self.checkpoint = Some(index);
        self
    }

    pub(crate) fn at_episode(mut self, index: usize) -> Self {
        self.episode = Some(index);
        self
    }

    pub(crate) fn at_cell(mut self, row: usize, column: Option<usize>) -> Self {
        self.row = Some(row);
        self.column = column;
        self
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut loc = Vec::new();
        if let Some(c) = self.checkpoint {
            loc.push(format!("checkpoint {c}"));
        }
        if let Some(e) = self.episode {
            loc.push(format!("episode {e}"));
        }
        if let Some(r) = self.row {
            loc.push(format!("row {r}"));
        }
        if let Some(c) = self.column {
            loc.push(format!("column {c}"));
        }
        if loc.is_empty() {
            write!(f, "{:?}: {}", self.kind, self.message)
        } else {
            write!(f, "{:?} at {}: {}", self.kind, loc.join(", "), self.message)
        }
    }
}
