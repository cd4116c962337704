//! Reward alignment of a descriptor trajectory: PCA embedding, time
//! residualization, a linear reward gradient and its cosine with the path.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::mix_seed;

pub const DEFAULT_EMBED_DIM: usize = 2;
pub const DEFAULT_NULL_DRAWS: usize = 1000;
pub const MIN_NULL_DRAWS: usize = 100;

/// Norms below this make a direction undefined.
const ZERO_NORM: f64 = 1e-12;
/// Singular values below this fraction of the largest are dropped in least squares.
const SVD_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentScores {
    pub global_alignment: f64,
    pub local_alignment: f64,
    pub degenerate: bool,
    pub m: usize,
}

#[derive(Debug, Clone)]
pub struct Embedding {
    /// `K x m` coordinates.
    pub points: DMatrix<f64>,
    /// Fraction of standardized variance carried by each retained direction.
    pub explained_variance_ratio: Vec<f64>,
}

/// Z-scores each column of `points` (constant columns become zero) and projects
/// onto the top `m` principal directions.
pub fn embed_pca(points: &DMatrix<f64>, m: usize) -> Result<Embedding> {
    let (k, d) = points.shape();
    if m == 0 || m > d {
        return Err(Error::input(format!("embedding dimension {m} must be in 1..={d}")));
    }
    if k <= m {
        return Err(Error::input(format!(
            "PCA to {m} dimensions needs more than {m} points, got {k}"
        )));
    }
    let mut z = points.clone();
    for mut col in z.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (k - 1) as f64).sqrt();
        if sd > 0.0 {
            col /= sd;
        } else {
            col.fill(0.0);
        }
    }
    let cov = z.transpose() * &z / (k - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();

    let mut basis = DMatrix::zeros(d, m);
    let mut explained = Vec::with_capacity(m);
    for (j, &idx) in order[..m].iter().enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let lead = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            v.neg_mut();
        }
        basis.set_column(j, &v);
        explained.push(if total > 0.0 { eig.eigenvalues[idx].max(0.0) / total } else { 0.0 });
    }
    Ok(Embedding {
        points: z * basis,
        explained_variance_ratio: explained,
    })
}

/// Replaces each column by its least-squares residual against the row index.
pub fn residualize_time(series: &DMatrix<f64>) -> DMatrix<f64> {
    let k = series.nrows();
    let t_mean = (k as f64 - 1.0) / 2.0;
    let sxx: f64 = (0..k).map(|t| (t as f64 - t_mean).powi(2)).sum();
    let mut out = series.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        let sxy: f64 = col.iter().enumerate().map(|(t, y)| (t as f64 - t_mean) * (y - mean)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        for (t, y) in col.iter_mut().enumerate() {
            *y -= mean + slope * (t as f64 - t_mean);
        }
    }
    out
}

fn cosine(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a.dot(b) / (a.norm() * b.norm())).clamp(-1.0, 1.0)
}

/// Minimum-norm least squares with a relative singular-value cutoff.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = x.clone().svd(true, true);
    let largest = svd.singular_values.max();
    svd.solve(y, SVD_CUTOFF * largest)
        .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))
}

fn prepare(embedding: &DMatrix<f64>, residualize: bool) -> DMatrix<f64> {
    if residualize {
        residualize_time(embedding)
    } else {
        embedding.clone()
    }
}

fn path_direction(e: &DMatrix<f64>) -> DVector<f64> {
    (e.row(e.nrows() - 1) - e.row(0)).transpose()
}

pub fn reward_alignment(
    embedding: &DMatrix<f64>,
    reward: &[f64],
    residualize: bool,
) -> Result<AlignmentScores> {
    let (k, m) = embedding.shape();
    if reward.len() != k {
        return Err(Error::input(format!(
            "embedding has {k} points but reward has {} values",
            reward.len()
        )));
    }
    if k <= m + 1 {
        return Err(Error::input(format!(
            "alignment in {m} dimensions needs at least {} points, got {k}",
            m + 2
        )));
    }
    let e = prepare(embedding, residualize);
    let r = prepare(&DMatrix::from_column_slice(k, 1, reward), residualize);
    let mut centered = e.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let r = r.column(0).add_scalar(-r.mean());
    let w = least_squares(&centered, &r)?;
    let path = path_direction(&e);
    let degenerate = AlignmentScores {
        global_alignment: 0.0,
        local_alignment: 0.0,
        degenerate: true,
        m,
    };
    if w.norm() < ZERO_NORM || path.norm() < ZERO_NORM {
        return Ok(degenerate);
    }
    let steps: Vec<f64> = (0..k - 1)
        .filter_map(|t| {
            let step = (e.row(t + 1) - e.row(t)).transpose();
            (step.norm() >= ZERO_NORM).then(|| cosine(&w, &step))
        })
        .collect();
    let local = if steps.is_empty() {
        0.0
    } else {
        steps.iter().sum::<f64>() / steps.len() as f64
    };
    Ok(AlignmentScores {
        global_alignment: cosine(&w, &path),
        local_alignment: local,
        degenerate: false,
        m,
    })
}

/// Global alignment of the path against `n_draws` uniformly random unit directions.
///
/// Draw `i` uses its own generator seeded from `(seed, i)`, so the result does
/// not depend on scheduling.
pub fn random_projection_null(
    embedding: &DMatrix<f64>,
    residualize: bool,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_draws < MIN_NULL_DRAWS {
        return Err(Error::input(format!(
            "random-projection null needs at least {MIN_NULL_DRAWS} draws, got {n_draws}"
        )));
    }
    let (k, m) = embedding.shape();
    if k < 2 || m == 0 {
        return Err(Error::input("random-projection null needs at least 2 points"));
    }
    let path = path_direction(&prepare(embedding, residualize));
    if path.norm() < ZERO_NORM {
        return Ok(vec![0.0; n_draws]);
    }
    Ok((0..n_draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, i as u64]));
            loop {
                let u = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
                if u.norm() > ZERO_NORM {
                    return cosine(&u, &path);
                }
            }
        })
        .collect())
}
