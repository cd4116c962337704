//! Causal emergence of a multivariate trajectory.
//!
//! Pipeline: lag-1 MI matrix, spectral bisection, averaging within each side
//! to a two-part system, then the sixteen-atom decomposition of that system.
//! The emergence value is the information the whole carries about the future
//! beyond what either part carries (downward causation + causal decoupling).

mod bipartition;
mod lattice;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussinfo::lag1_mi_matrix;
use crate::preprocess::preprocess;
use crate::trajdata::{EpisodeRecord, LatentTrajectory};
use crate::util::{is_constant, median};

pub use bipartition::{fiedler_bipartition, mi_laplacian, Bipartition};
pub use lattice::{
    cumulative_values, downset_residual, mobius_invert, phiid_atoms, phiid_from_covariance, Node,
    PhiAtoms, MIN_PHIID_STEPS,
};

pub const DEFAULT_WINDOW: usize = 100;
pub const DEFAULT_STRIDE: usize = 10;

/// Per-timestep means over each side of `part`, as a `T x 2` trajectory.
pub fn coarse_grain(traj: &LatentTrajectory, part: &Bipartition) -> Result<LatentTrajectory> {
    let n = traj.n_units();
    if part.n_units() != n || part.side_a.iter().chain(&part.side_b).any(|&u| u >= n) {
        return Err(Error::input(format!(
            "bipartition over {} units does not cover a trajectory of {n} units",
            part.n_units()
        )));
    }
    let avg = |row: &[f64], side: &[usize]| side.iter().map(|&u| row[u]).sum::<f64>() / side.len() as f64;
    let mut values = Vec::with_capacity(traj.n_steps() * 2);
    for t in 0..traj.n_steps() {
        let row = traj.row(t);
        values.push(avg(row, &part.side_a));
        values.push(avg(row, &part.side_b));
    }
    LatentTrajectory::new(traj.episode_id(), traj.n_steps(), 2, values)
}

/// Every intermediate of one emergence computation.
#[derive(Debug, Clone)]
pub struct EmergenceDetail {
    /// Split over the original unit indices.
    pub partition: Bipartition,
    pub atoms: PhiAtoms,
    /// Units left out because they were constant over the trajectory.
    pub dropped_units: Vec<usize>,
}

/// Causal emergence (nats) of an already preprocessed trajectory.
pub fn causal_emergence(traj: &LatentTrajectory) -> Result<f64> {
    Ok(causal_emergence_detail(traj)?.atoms.phi_r)
}

/// As [`causal_emergence`], keeping the partition and all atoms.
///
/// Units that are constant over the trajectory carry no information and are
/// excluded before bisection.
pub fn causal_emergence_detail(traj: &LatentTrajectory) -> Result<EmergenceDetail> {
    let (live, dropped): (Vec<usize>, Vec<usize>) =
        (0..traj.n_units()).partition(|&u| !is_constant(&traj.column(u)));
    if live.len() < 2 {
        return Err(Error::input(format!(
            "{}: fewer than 2 non-constant units",
            traj.episode_id()
        )));
    }
    let active = if dropped.is_empty() {
        traj.clone()
    } else {
        traj.select_units(&live)?
    };
    let mi = lag1_mi_matrix(&active)?;
    let local = fiedler_bipartition(&mi)?;
    let pair = coarse_grain(&active, &local)?;
    let atoms = phiid_atoms(&pair)?;
    let partition = Bipartition {
        side_a: local.side_a.iter().map(|&i| live[i]).collect(),
        side_b: local.side_b.iter().map(|&i| live[i]).collect(),
        fiedler_value: local.fiedler_value,
    };
    Ok(EmergenceDetail {
        partition,
        atoms,
        dropped_units: dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmergenceTrajectory {
    pub values: Vec<f64>,
    pub window: usize,
    pub stride: usize,
    pub median: f64,
}

/// Number of windows of length `window` taken every `stride` steps from `t` steps.
pub fn window_count(t: usize, window: usize, stride: usize) -> usize {
    if t < window {
        0
    } else {
        (t - window) / stride + 1
    }
}

/// Sliding-window emergence over one episode.
///
/// The whole episode is preprocessed once, then every window is evaluated
/// independently; values are returned in window order.
pub fn emergence_trajectory(
    episode: &EpisodeRecord,
    window: usize,
    stride: usize,
) -> Result<EmergenceTrajectory> {
    let traj = &episode.latents;
    if window < MIN_PHIID_STEPS {
        return Err(Error::input(format!(
            "window {window} is below the minimum of {MIN_PHIID_STEPS} timesteps"
        )));
    }
    if stride == 0 {
        return Err(Error::input("stride must be at least 1"));
    }
    if traj.n_steps() < window {
        return Err(Error::input(format!(
            "episode {} has {} timesteps, fewer than the window of {window}; reduce the window",
            traj.episode_id(),
            traj.n_steps()
        )));
    }
    let prepared = preprocess(traj)?.traj;
    let count = window_count(traj.n_steps(), window, stride);
    let values = (0..count)
        .into_par_iter()
        .map(|k| {
            let start = k * stride;
            causal_emergence(&prepared.slice_rows(start, start + window)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EmergenceTrajectory {
        median: median(&values),
        values,
        window,
        stride,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(cols: &[Vec<f64>]) -> LatentTrajectory {
        LatentTrajectory::from_columns("t", cols).unwrap()
    }

    #[test]
    fn coarse_grain_examples() {
        let cols = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let t = traj(&cols);
        let out = coarse_grain(&t, &Bipartition::new(vec![1], vec![0]).unwrap()).unwrap();
        assert_eq!(out.columns(), vec![cols[1].clone(), cols[0].clone()]);

        let t = traj(&[vec![1.0, -2.0, 3.0], vec![-1.0, 2.0, -3.0], vec![2.0, 2.0, 2.0]]);
        let out = coarse_grain(&t, &Bipartition::new(vec![0, 1], vec![2]).unwrap()).unwrap();
        assert_eq!(out.column(0), vec![0.0, 0.0, 0.0]);
        assert_eq!(out.column(1), vec![2.0, 2.0, 2.0]);

        assert!(coarse_grain(&t, &Bipartition::new(vec![0], vec![1]).unwrap()).is_err());
    }

    #[test]
    fn window_counts() {
        assert_eq!(window_count(100, 100, 10), 1);
        assert_eq!(window_count(199, 100, 10), 10);
        assert_eq!(window_count(200, 100, 10), 11);
        assert_eq!(window_count(99, 100, 10), 0);
    }
}
