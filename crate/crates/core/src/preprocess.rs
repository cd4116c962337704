//! Marginal Gaussianization and standardization of latent trajectories.
//!
//! The pipeline order is [`rank_normalize`] then [`zscore`]; [`preprocess`]
//! runs both. Each column is treated independently, so only the marginals are
//! made Gaussian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::stats::dagostino_k2;
use crate::special::normal_quantile;
use crate::trajdata::LatentTrajectory;
use crate::util::{average_ranks, is_constant, mean, sample_variance};

/// Minimum series length accepted by the normality screen.
pub const MIN_NORMALITY_LENGTH: usize = 20;

/// A transformed trajectory plus the units that were constant (and mapped to zero).
#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub traj: LatentTrajectory,
    pub constant_units: Vec<usize>,
}

impl Transformed {
    pub fn warnings(&self) -> Vec<String> {
        self.constant_units
            .iter()
            .map(|u| format!("{}: unit {u} is constant; mapped to zeros", self.traj.episode_id()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub n_units: usize,
    /// Share of units whose normality test has `p < alpha`.
    pub fraction_rejecting: f64,
    pub alpha: f64,
}

fn map_columns(
    traj: &LatentTrajectory,
    f: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<Transformed> {
    let mut columns = traj.columns();
    let mut constant_units = Vec::new();
    for (u, col) in columns.iter_mut().enumerate() {
        if is_constant(col) {
            constant_units.push(u);
            col.iter_mut().for_each(|v| *v = 0.0);
        } else {
            *col = f(col);
        }
    }
    Ok(Transformed {
        traj: LatentTrajectory::from_columns(traj.episode_id(), &columns)?,
        constant_units,
    })
}

/// Replaces each value by `Phi^-1((rank - 0.5) / T)` using average ranks for ties.
pub fn rank_normalize(traj: &LatentTrajectory) -> Result<Transformed> {
    map_columns(traj, rank_normal_column)
}

pub fn rank_normal_column(col: &[f64]) -> Vec<f64> {
    let n = col.len() as f64;
    average_ranks(col)
        .into_iter()
        .map(|r| normal_quantile((r - 0.5) / n))
        .collect()
}

/// Centers each column and scales it to unit sample standard deviation (denominator `T - 1`).
pub fn zscore(traj: &LatentTrajectory) -> Result<Transformed> {
    map_columns(traj, zscore_column)
}

pub fn zscore_column(col: &[f64]) -> Vec<f64> {
    let m = mean(col);
    let sd = sample_variance(col).sqrt();
    col.iter().map(|v| (v - m) / sd).collect()
}

/// Rank-normal transform followed by z-scoring. Constant units from either step are reported.
pub fn preprocess(traj: &LatentTrajectory) -> Result<Transformed> {
    let ranked = rank_normalize(traj)?;
    let mut scored = zscore(&ranked.traj)?;
    let mut constant = ranked.constant_units;
    constant.extend(scored.constant_units.iter().copied());
    constant.sort_unstable();
    constant.dedup();
    scored.constant_units = constant;
    Ok(scored)
}

/// Runs the D'Agostino-Pearson K² test on every unit and reports the rejecting share.
pub fn normality_fraction(traj: &LatentTrajectory, alpha: f64) -> Result<PreprocessReport> {
    if traj.n_steps() < MIN_NORMALITY_LENGTH {
        return Err(Error::input(format!(
            "normality screening needs at least {MIN_NORMALITY_LENGTH} timesteps, got {}",
            traj.n_steps()
        )));
    }
    let mut rejecting = 0usize;
    for col in traj.columns() {
        // A constant column is as far from Gaussian as it gets.
        let reject = is_constant(&col) || dagostino_k2(&col)?.p_value < alpha;
        rejecting += usize::from(reject);
    }
    Ok(PreprocessReport {
        n_units: traj.n_units(),
        fraction_rejecting: rejecting as f64 / traj.n_units() as f64,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(cols: &[Vec<f64>]) -> LatentTrajectory {
        LatentTrajectory::from_columns("t", cols).unwrap()
    }

    #[test]
    fn rank_normal_three_values() {
        let out = rank_normalize(&traj(&[vec![3.0, 1.0, 2.0], vec![1.0, 2.0, 3.0]])).unwrap();
        let col = out.traj.column(0);
        assert!((col[0] - 0.967_421_566_101_701).abs() < 1e-4);
        assert!((col[1] + 0.967_421_566_101_701).abs() < 1e-4);
        assert_eq!(col[2], 0.0);
        assert!(out.constant_units.is_empty());
    }

    #[test]
    fn rank_normal_is_idempotent_on_its_range() {
        let t = 9;
        let grid: Vec<f64> = [4, 0, 8, 2, 6, 1, 3, 7, 5]
            .iter()
            .map(|&i| normal_quantile((i as f64 + 0.5) / t as f64))
            .collect();
        let out = rank_normal_column(&grid);
        for (a, b) in out.iter().zip(&grid) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn ties_get_average_ranks() {
        let out = rank_normal_column(&[1.0, 1.0, 2.0, 0.0]);
        assert_eq!(out[0], out[1]);
        assert_eq!(out[0], 0.0);
    }

    #[test]
    fn constant_columns_map_to_zero_with_warning() {
        let out = rank_normalize(&traj(&[vec![5.0, 5.0], vec![1.0, 2.0]])).unwrap();
        assert_eq!(out.traj.column(0), vec![0.0, 0.0]);
        assert_eq!(out.constant_units, vec![0]);
        assert_eq!(out.warnings().len(), 1);

        let out = zscore(&traj(&[vec![1.0, 2.0, 3.0], vec![7.0, 7.0, 7.0]])).unwrap();
        assert_eq!(out.traj.column(0), vec![-1.0, 0.0, 1.0]);
        assert_eq!(out.traj.column(1), vec![0.0, 0.0, 0.0]);
        assert_eq!(out.constant_units, vec![1]);
    }

    #[test]
    fn zscore_is_idempotent() {
        let col = vec![0.3, -1.2, 4.4, 2.0, 0.0, 0.7];
        let once = zscore_column(&col);
        let twice = zscore_column(&once);
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normality_needs_twenty_rows() {
        let t = traj(&[(0..19).map(f64::from).collect(), (0..19).map(|i| f64::from(i * i)).collect()]);
        let err = normality_fraction(&t, 0.05).unwrap_err();
        assert!(err.to_string().contains("at least 20"));
    }

    proptest::proptest! {
        #[test]
        fn rank_normal_invariant_under_monotone_maps(
            xs in proptest::collection::vec(-50.0f64..50.0, 3..60),
        ) {
            let mapped: Vec<f64> = xs.iter().map(|x| (x / 10.0).exp() * 3.0 - 1.0).collect();
            let a = rank_normal_column(&xs);
            let b = rank_normal_column(&mapped);
            for (x, y) in a.iter().zip(&b) {
                proptest::prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
