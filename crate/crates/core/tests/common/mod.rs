#![allow(dead_code)]

use nalgebra::DMatrix;
use phirl::gaussinfo::MiMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exhaustive bipartition oracle: the split minimizing the ratio cut
/// `cut(A, B) / (|A| |B|)` of the symmetrized MI graph, unit 0 on side A.
pub fn exhaustive_ratio_cut(mi: &MiMatrix) -> (Vec<usize>, Vec<usize>) {
    let n = mi.n();
    let w = |i: usize, j: usize| 0.5 * (mi.values[(i, j)] + mi.values[(j, i)]);
    let mut best: Option<(f64, u32)> = None;
    // unit 0 is fixed on side A, so masks over units 1..n enumerate each split once
    for mask in 0u32..(1 << (n - 1)) - 1 {
        let in_a = |u: usize| u == 0 || mask & (1 << (u - 1)) != 0;
        let mut cut = 0.0;
        let mut na = 0;
        for i in 0..n {
            if in_a(i) {
                na += 1;
                for j in (0..n).filter(|&j| !in_a(j)) {
                    cut += w(i, j);
                }
            }
        }
        let score = cut / (na * (n - na)) as f64;
        if best.is_none_or(|(s, _)| score < s) {
            best = Some((score, mask));
        }
    }
    let mask = best.unwrap().1;
    (0..n).partition(|&u| u == 0 || mask & (1 << (u - 1)) != 0)
}

/// A random MI matrix on 4 to 8 nodes with two planted blocks.
///
/// Within-block weights lie in `[1, 2]`; cross-block weights are at most
/// `1 / ratio`. Returns the matrix and the planted split with unit 0 on side A.
pub fn planted_mi(seed: u64, ratio: f64) -> (MiMatrix, (Vec<usize>, Vec<usize>)) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..=8);
    let size_a = rng.random_range(2..=n - 2);
    let mut units: Vec<usize> = (0..n).collect();
    units.shuffle(&mut rng);
    let block: Vec<bool> = (0..n).map(|u| units.iter().position(|&v| v == u).unwrap() < size_a).collect();
    let values = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else if block[i] == block[j] {
            rng.random_range(1.0..2.0)
        } else {
            rng.random_range(0.0..1.0 / ratio)
        }
    });
    let (mut a, mut b): (Vec<usize>, Vec<usize>) = (0..n).partition(|&u| block[u]);
    if !a.contains(&0) {
        std::mem::swap(&mut a, &mut b);
    }
    (MiMatrix { values, lag: 1 }, (a, b))
}

/// A random correlation-scaled covariance of `(X1, X2, Y1, Y2)`.
pub fn random_covariance(rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(4, 6, |_, _| rng.random_range(-1.0..1.0));
    &m * m.transpose() + DMatrix::identity(4, 4) * 0.05
}

/// A run assembled directly from its checkpoint series.
pub fn series_from(
    run_id: &str,
    phi: Vec<f64>,
    baselines: Vec<phirl::metrics::MetricVector>,
    rewards: Vec<f64>,
) -> phirl::analysis::RunSeries {
    use phirl::analysis::{RunBaselines, RunEmergence, RunSeries};
    RunSeries {
        run_id: run_id.into(),
        env_name: "hand".into(),
        train_steps: (0..phi.len() as u64).map(|k| 1000 * k).collect(),
        rewards,
        emergence: RunEmergence {
            run_id: run_id.into(),
            episodes: Vec::new(),
            phi,
            profiles: Vec::new(),
            warnings: Vec::new(),
        },
        baselines: RunBaselines {
            run_id: run_id.into(),
            checkpoints: baselines,
            warnings: Vec::new(),
        },
    }
}

pub fn noise_metrics(rng: &mut ChaCha8Rng) -> phirl::metrics::MetricVector {
    phirl::metrics::MetricVector {
        entropy: rng.random(),
        mutual_information: rng.random(),
        autocorrelation: rng.random(),
        effective_dimension: rng.random(),
        magnitude: rng.random(),
    }
}
