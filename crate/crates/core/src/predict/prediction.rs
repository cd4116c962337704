//! Cross-validated prediction of final reward from early checkpoint series.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::forest::{ForestParams, LinearModel, RandomForest};
use super::stats::{mannwhitney, spearman};
use crate::analysis::RunSeries;
use crate::error::{Error, Result};
use crate::metrics::{descriptors, MetricVector};
use crate::util::{is_constant, median, mix_seed};

pub const MIN_COHORT: usize = 10;
pub const MIN_EARLY_CHECKPOINTS: usize = 3;
pub const DEFAULT_EARLY_FRACTION: f64 = 0.2;
pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_REPEATS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Forest,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictConfig {
    pub early_fraction: f64,
    pub folds: usize,
    pub repeats: usize,
    pub model: Model,
    pub seed: u64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            early_fraction: DEFAULT_EARLY_FRACTION,
            folds: DEFAULT_FOLDS,
            repeats: DEFAULT_REPEATS,
            model: Model::Forest,
            seed: 0,
        }
    }
}

/// Number of leading checkpoints used as input: `ceil(fraction K)`, at least 3, at most `K`.
pub fn early_checkpoints(k: usize, fraction: f64) -> usize {
    ((fraction * k as f64).ceil() as usize).clamp(MIN_EARLY_CHECKPOINTS, k)
}

/// Feature matrices (one row per run) and the final-reward target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub run_ids: Vec<String>,
    /// Named feature sets in report order.
    pub feature_sets: Vec<(String, DMatrix<f64>)>,
    pub targets: Vec<f64>,
}

pub fn feature_set_names() -> Vec<String> {
    let mut names = vec!["emergence_descriptors".to_string()];
    names.extend(MetricVector::NAMES.iter().map(|n| n.to_string()));
    names.push("all_baselines".into());
    names.push("all_plus_emergence".into());
    names
}

/// Descriptors of each run's emergence and baseline checkpoint series over its
/// first `early_fraction` of checkpoints; the target is the last checkpoint reward.
pub fn build_dataset(series: &[RunSeries], early_fraction: f64, interval: usize) -> Result<Dataset> {
    if !(early_fraction > 0.0 && early_fraction < 1.0) {
        return Err(Error::input(format!(
            "early fraction must lie in (0, 1), got {early_fraction}"
        )));
    }
    let n = series.len();
    let mut blocks: Vec<Vec<[f64; 8]>> = vec![Vec::with_capacity(n); 1 + MetricVector::NAMES.len()];
    for s in series {
        let k = s.n_checkpoints();
        if k < MIN_EARLY_CHECKPOINTS {
            return Err(Error::input(format!(
                "{}: {k} checkpoints, at least {MIN_EARLY_CHECKPOINTS} required",
                s.run_id
            )));
        }
        let early = early_checkpoints(k, early_fraction);
        blocks[0].push(descriptors(&s.emergence.phi[..early], interval)?.to_array());
        for (m, block) in blocks[1..].iter_mut().enumerate() {
            block.push(descriptors(&s.baselines.series(m)[..early], interval)?.to_array());
        }
    }
    let matrix = |parts: &[usize]| {
        DMatrix::from_fn(n, 8 * parts.len(), |i, j| blocks[parts[j / 8]][i][j % 8])
    };
    let baselines: Vec<usize> = (1..=MetricVector::NAMES.len()).collect();
    let mut feature_sets = vec![("emergence_descriptors".to_string(), matrix(&[0]))];
    for (m, name) in MetricVector::NAMES.iter().enumerate() {
        feature_sets.push((name.to_string(), matrix(&[m + 1])));
    }
    feature_sets.push(("all_baselines".into(), matrix(&baselines)));
    let mut all = vec![0];
    all.extend(&baselines);
    feature_sets.push(("all_plus_emergence".into(), matrix(&all)));
    Ok(Dataset {
        run_ids: series.iter().map(|s| s.run_id.clone()).collect(),
        feature_sets,
        targets: series.iter().map(|s| *s.rewards.last().expect("checked above")).collect(),
    })
}

/// Fold index of every run for one repeat: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64, repeat: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[seed, repeat as u64])));
    let mut fold = vec![0; n];
    for (pos, &run) in order.iter().enumerate() {
        fold[run] = pos % folds;
    }
    fold
}

fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

/// Held-out predictions for every run under one fold assignment.
pub fn cross_validated_predictions(
    x: &DMatrix<f64>,
    y: &[f64],
    fold: &[usize],
    folds: usize,
    model: Model,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut pred = vec![0.0; y.len()];
    for f in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| fold[i] == f);
        if test.is_empty() {
            continue;
        }
        let xt = rows(x, &train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let xs = rows(x, &test);
        let out = match model {
            Model::Forest => RandomForest::fit(&xt, &yt, ForestParams::default(), mix_seed(&[seed, f as u64]))?
                .predict(&xs)?,
            Model::Linear => LinearModel::fit(&xt, &yt)?.predict(&xs)?,
        };
        for (&i, p) in test.iter().zip(out) {
            pred[i] = p;
        }
    }
    Ok(pred)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSetScores {
    pub feature_set: String,
    /// Pooled held-out Spearman correlation, one per repeat.
    pub rho: Vec<f64>,
    pub median_rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub u: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub model: Model,
    pub seed: u64,
    pub folds: usize,
    pub repeats: usize,
    pub n_runs: usize,
    pub run_ids: Vec<String>,
    /// `fold_assignments[r][i]`: held-out fold of run `i` in repeat `r`.
    pub fold_assignments: Vec<Vec<usize>>,
    pub feature_sets: Vec<FeatureSetScores>,
    /// Two-sided Mann-Whitney tests between the repeat scores of every pair of feature sets.
    pub comparisons: Vec<Comparison>,
    pub warnings: Vec<String>,
}

/// Repeated k-fold evaluation of every feature set in `data`.
///
/// Repeat `r` uses the same fold assignment for all feature sets, and the
/// forest of fold `f` is seeded from `(seed, r, f)`.
pub fn evaluate(data: &Dataset, cfg: &PredictConfig) -> Result<PredictionReport> {
    let n = data.targets.len();
    if n < MIN_COHORT {
        return Err(Error::input(format!(
            "prediction needs at least {MIN_COHORT} runs, got {n}"
        )));
    }
    if cfg.folds < 2 || cfg.folds > n {
        return Err(Error::input(format!(
            "folds must lie in 2..={n}, got {}",
            cfg.folds
        )));
    }
    if cfg.repeats == 0 {
        return Err(Error::input("repeats must be at least 1"));
    }
    if is_constant(&data.targets) {
        return Err(Error::input("final rewards are all equal; nothing to predict"));
    }
    let mut warnings = Vec::new();
    let fold_assignments: Vec<Vec<usize>> = (0..cfg.repeats)
        .map(|r| fold_assignment(n, cfg.folds, cfg.seed, r))
        .collect();
    let mut feature_sets = Vec::with_capacity(data.feature_sets.len());
    for (name, x) in &data.feature_sets {
        let mut rho = Vec::with_capacity(cfg.repeats);
        for (r, fold) in fold_assignments.iter().enumerate() {
            let seed = mix_seed(&[cfg.seed, r as u64]);
            let pred = cross_validated_predictions(x, &data.targets, fold, cfg.folds, cfg.model, seed)?;
            match spearman(&pred, &data.targets) {
                Ok(t) => rho.push(t.statistic),
                Err(_) => {
                    warnings.push(format!("{name}: repeat {r}: constant predictions; rho set to 0"));
                    rho.push(0.0);
                }
            }
        }
        feature_sets.push(FeatureSetScores {
            feature_set: name.clone(),
            median_rho: median(&rho),
            rho,
        });
    }
    let mut comparisons = Vec::new();
    for i in 0..feature_sets.len() {
        for j in i + 1..feature_sets.len() {
            let t = mannwhitney(&feature_sets[i].rho, &feature_sets[j].rho)?;
            comparisons.push(Comparison {
                a: feature_sets[i].feature_set.clone(),
                b: feature_sets[j].feature_set.clone(),
                u: t.statistic,
                p_value: t.p_value,
            });
        }
    }
    Ok(PredictionReport {
        model: cfg.model,
        seed: cfg.seed,
        folds: cfg.folds,
        repeats: cfg.repeats,
        n_runs: n,
        run_ids: data.run_ids.clone(),
        fold_assignments,
        feature_sets,
        comparisons,
        warnings,
    })
}

pub fn fit_predict_final_reward(
    series: &[RunSeries],
    cfg: &PredictConfig,
    interval: usize,
) -> Result<PredictionReport> {
    evaluate(&build_dataset(series, cfg.early_fraction, interval)?, cfg)
}
