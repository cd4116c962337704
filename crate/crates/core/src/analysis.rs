//! Per-run checkpoint series: emergence and baseline metrics aggregated over
//! each checkpoint's episodes, the common input of screening, alignment and
//! prediction.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{embed_pca, random_projection_null, reward_alignment, AlignmentScores};
use crate::error::{Error, Result};
use crate::metrics::{baseline_metrics, descriptors, DescriptorVector, MetricVector, DEFAULT_FLATNESS_INTERVAL};
use crate::phiid::{emergence_trajectory, EmergenceTrajectory, DEFAULT_STRIDE, DEFAULT_WINDOW};
use crate::predict::stats::{mannwhitney_with, Alternative, TestResult};
use crate::preprocess::preprocess;
use crate::trajdata::RunRecord;
use crate::util::median;

/// Which version of the latents the baseline metrics see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BaselineInput {
    /// Latents as recorded.
    Raw,
    /// Rank-normalized and z-scored, as used for emergence.
    Preprocessed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub window: usize,
    pub stride: usize,
    pub flatness_interval: usize,
    pub baseline_input: BaselineInput,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            stride: DEFAULT_STRIDE,
            flatness_interval: DEFAULT_FLATNESS_INTERVAL,
            baseline_input: BaselineInput::Raw,
        }
    }
}

/// Emergence of every episode of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEmergence {
    pub run_id: String,
    /// `episodes[c][e]` is episode `e` of checkpoint `c`.
    pub episodes: Vec<Vec<EmergenceTrajectory>>,
    /// Per checkpoint, the median over episodes of each episode's median.
    pub phi: Vec<f64>,
    /// Per checkpoint, the elementwise median over episodes of the trajectories.
    pub profiles: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

pub fn run_emergence(run: &RunRecord, cfg: &AnalysisConfig) -> Result<RunEmergence> {
    let episodes = run
        .checkpoints
        .par_iter()
        .map(|cp| {
            cp.episodes
                .par_iter()
                .map(|ep| emergence_trajectory(ep, cfg.window, cfg.stride))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    let mut phi = Vec::with_capacity(episodes.len());
    let mut profiles = Vec::with_capacity(episodes.len());
    for (c, eps) in episodes.iter().enumerate() {
        let medians: Vec<f64> = eps.iter().map(|e| e.median).collect();
        phi.push(median(&medians));
        let len = eps.iter().map(|e| e.values.len()).min().unwrap_or(0);
        if eps.iter().any(|e| e.values.len() != len) {
            warnings.push(format!(
                "{}: checkpoint {c} episodes differ in length; profile truncated to {len} windows",
                run.run_id
            ));
        }
        profiles.push(
            (0..len)
                .map(|w| median(&eps.iter().map(|e| e.values[w]).collect::<Vec<_>>()))
                .collect(),
        );
    }
    Ok(RunEmergence {
        run_id: run.run_id.clone(),
        episodes,
        phi,
        profiles,
        warnings,
    })
}

/// Baseline metrics per checkpoint, each the median over that checkpoint's episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunBaselines {
    pub run_id: String,
    pub checkpoints: Vec<MetricVector>,
    pub warnings: Vec<String>,
}

impl RunBaselines {
    /// Checkpoint series of metric `k` in [`MetricVector::NAMES`] order.
    pub fn series(&self, k: usize) -> Vec<f64> {
        self.checkpoints.iter().map(|m| m.to_array()[k]).collect()
    }
}

pub fn run_baselines(run: &RunRecord, cfg: &AnalysisConfig) -> Result<RunBaselines> {
    let per_checkpoint = run
        .checkpoints
        .par_iter()
        .map(|cp| {
            cp.episodes
                .par_iter()
                .map(|ep| {
                    let input = match cfg.baseline_input {
                        BaselineInput::Raw => ep.latents.clone(),
                        BaselineInput::Preprocessed => preprocess(&ep.latents)?.traj,
                    };
                    baseline_metrics(&input)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    let mut checkpoints = Vec::with_capacity(per_checkpoint.len());
    for (c, eps) in per_checkpoint.iter().enumerate() {
        for (e, b) in eps.iter().enumerate() {
            if !b.constant_units.is_empty() {
                warnings.push(format!(
                    "{}: checkpoint {c}, episode {e}: constant units {:?} excluded",
                    run.run_id, b.constant_units
                ));
            }
        }
        let col = |k: usize| median(&eps.iter().map(|b| b.metrics.to_array()[k]).collect::<Vec<_>>());
        checkpoints.push(MetricVector {
            entropy: col(0),
            mutual_information: col(1),
            autocorrelation: col(2),
            effective_dimension: col(3),
            magnitude: col(4),
        });
    }
    Ok(RunBaselines {
        run_id: run.run_id.clone(),
        checkpoints,
        warnings,
    })
}

/// Everything downstream analyses need from one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSeries {
    pub run_id: String,
    pub env_name: String,
    pub train_steps: Vec<u64>,
    pub rewards: Vec<f64>,
    pub emergence: RunEmergence,
    pub baselines: RunBaselines,
}

impl RunSeries {
    pub fn n_checkpoints(&self) -> usize {
        self.rewards.len()
    }

    pub fn warnings(&self) -> impl Iterator<Item = &String> {
        self.emergence.warnings.iter().chain(&self.baselines.warnings)
    }
}

pub fn run_series(run: &RunRecord, cfg: &AnalysisConfig) -> Result<RunSeries> {
    Ok(RunSeries {
        run_id: run.run_id.clone(),
        env_name: run.env_name.clone(),
        train_steps: run.checkpoints.iter().map(|c| c.train_step).collect(),
        rewards: run.checkpoints.iter().map(|c| c.checkpoint_reward).collect(),
        emergence: run_emergence(run, cfg)?,
        baselines: run_baselines(run, cfg)?,
    })
}

/// Per-checkpoint descriptor matrix (`K x 8`) of a run's emergence profiles.
pub fn profile_descriptors(em: &RunEmergence, interval: usize) -> Result<DMatrix<f64>> {
    let rows = em
        .profiles
        .iter()
        .enumerate()
        .map(|(c, p)| {
            descriptors(p, interval).map_err(|e| {
                Error::input(format!("{}: checkpoint {c} emergence profile: {e}", em.run_id))
            })
        })
        .collect::<Result<Vec<DescriptorVector>>>()?;
    let flat: Vec<f64> = rows.iter().flat_map(|d| d.to_array()).collect();
    Ok(DMatrix::from_row_slice(rows.len(), 8, &flat))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub m: usize,
    pub residualize: bool,
    pub null_draws: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAlignment {
    pub run_id: String,
    pub env_name: String,
    pub scores: AlignmentScores,
    pub explained_variance_ratio: Vec<f64>,
    pub null_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub runs: Vec<RunAlignment>,
    pub median_global: f64,
    pub median_local: f64,
    /// Magnitudes of the run global scores against magnitudes of the pooled
    /// random-projection scores (one-sided, greater).
    pub versus_null: TestResult,
}

/// Alignment of each run's emergence-descriptor trajectory with its reward.
///
/// The random-projection null of run `i` is seeded from `(seed, i)`.
pub fn align_runs(series: &[RunSeries], cfg: &AlignConfig, interval: usize) -> Result<AlignmentReport> {
    if series.is_empty() {
        return Err(Error::input("alignment needs at least one run"));
    }
    let runs = series
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let points = profile_descriptors(&s.emergence, interval)?;
            let emb = embed_pca(&points, cfg.m)?;
            let scores = reward_alignment(&emb.points, &s.rewards, cfg.residualize)?;
            let null = random_projection_null(
                &emb.points,
                cfg.residualize,
                cfg.null_draws,
                crate::util::mix_seed(&[cfg.seed, i as u64]),
            )?;
            Ok((
                RunAlignment {
                    run_id: s.run_id.clone(),
                    env_name: s.env_name.clone(),
                    scores,
                    explained_variance_ratio: emb.explained_variance_ratio,
                    null_median: median(&null),
                },
                null,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let globals: Vec<f64> = runs.iter().map(|(r, _)| r.scores.global_alignment).collect();
    let locals: Vec<f64> = runs.iter().map(|(r, _)| r.scores.local_alignment).collect();
    let magnitudes: Vec<f64> = globals.iter().map(|g| g.abs()).collect();
    let pooled: Vec<f64> = runs.iter().flat_map(|(_, n)| n.iter().map(|v| v.abs())).collect();
    Ok(AlignmentReport {
        median_global: median(&globals),
        median_local: median(&locals),
        versus_null: mannwhitney_with(&magnitudes, &pooled, Alternative::Greater)?,
        runs: runs.into_iter().map(|(r, _)| r).collect(),
    })
}
