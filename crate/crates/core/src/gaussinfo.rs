//! Closed-form information measures for jointly Gaussian variables, in nats.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::trajdata::LatentTrajectory;

/// Upper clip on `rho^2` so that `|rho| = 1` yields a large but finite MI.
pub const RHO2_CLIP: f64 = 1.0 - 1e-12;
/// Ridge added to covariance diagonals before taking determinants.
pub const COV_RIDGE: f64 = 1e-8;
const SYMMETRY_TOL: f64 = 1e-10;

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::input(format!(
            "pearson needs two equal-length series of length >= 2 (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    let (sx, sy) = (centered(x), centered(y));
    let (vx, vy) = (dot(&sx, &sx), dot(&sy, &sy));
    if vx == 0.0 {
        return Err(Error::input("pearson: series x is constant"));
    }
    if vy == 0.0 {
        return Err(Error::input("pearson: series y is constant"));
    }
    Ok((dot(&sx, &sy) / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

fn centered(x: &[f64]) -> Vec<f64> {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - m).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `-0.5 * ln(1 - rho^2)`, with `rho^2` clipped at [`RHO2_CLIP`].
pub fn gaussian_mi_bivariate(rho: f64) -> f64 {
    let r2 = (rho * rho).min(RHO2_CLIP);
    -0.5 * (-r2).ln_1p()
}

/// Differential entropy of a univariate Gaussian with variance `var`.
pub fn gaussian_entropy(var: f64) -> f64 {
    0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * var).ln()
}

/// Mutual information between the first `p` variables and the rest of a joint covariance.
///
/// `0.5 * ln(det(S_AA) det(S_BB) / det(S))`, computed after adding [`COV_RIDGE`]
/// to the diagonal.
pub fn gaussian_mi_blocks(cov: &DMatrix<f64>, p: usize) -> Result<f64> {
    let d = cov.nrows();
    if cov.ncols() != d {
        return Err(Error::input("covariance must be square"));
    }
    if p == 0 || p >= d {
        return Err(Error::input(format!(
            "block split p = {p} must leave both blocks non-empty (dimension {d})"
        )));
    }
    check_symmetric(cov)?;
    let mut reg = cov.clone();
    for i in 0..d {
        reg[(i, i)] += COV_RIDGE;
    }
    let q = d - p;
    let a = reg.view((0, 0), (p, p)).into_owned();
    let b = reg.view((p, p), (q, q)).into_owned();
    let mi = 0.5 * (log_det_spd(&a)? + log_det_spd(&b)? - log_det_spd(&reg)?);
    Ok(mi.max(0.0))
}

/// MI between two index sets of a joint covariance (sets must be disjoint).
pub fn gaussian_mi_subsets(cov: &DMatrix<f64>, a: &[usize], b: &[usize]) -> Result<f64> {
    let idx: Vec<usize> = a.iter().chain(b).copied().collect();
    gaussian_mi_blocks(&submatrix(cov, &idx), a.len())
}

pub fn submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(Error::input(format!(
                    "covariance is not symmetric at ({i}, {j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// Log-determinant of a symmetric positive-definite matrix via Cholesky.
pub fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// Rescales a covariance to a correlation matrix. Zero-variance entries stay zero.
pub fn covariance_to_correlation(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let sd: Vec<f64> = cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
    DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| {
        if i == j {
            if sd[i] > 0.0 {
                1.0
            } else {
                0.0
            }
        } else if sd[i] > 0.0 && sd[j] > 0.0 {
            cov[(i, j)] / (sd[i] * sd[j])
        } else {
            0.0
        }
    })
}

/// Sample covariance (denominator `len - 1`) of equal-length columns.
pub fn sample_covariance(columns: &[Vec<f64>]) -> DMatrix<f64> {
    let c: Vec<Vec<f64>> = columns.iter().map(|x| centered(x)).collect();
    let denom = columns[0].len() as f64 - 1.0;
    let d = columns.len();
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let v = dot(&c[i], &c[j]) / denom;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Pairwise time-lagged Gaussian MI: entry `(i, j)` is `I(X_i(t); X_j(t + lag))`.
#[derive(Debug, Clone, PartialEq)]
pub struct MiMatrix {
    pub values: DMatrix<f64>,
    pub lag: usize,
}

impl MiMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

pub fn lag1_mi_matrix(traj: &LatentTrajectory) -> Result<MiMatrix> {
    lagged_mi_matrix(traj, 1)
}

/// Lagged MI matrix. Pairs involving a constant (lag-truncated) column are 0.
pub fn lagged_mi_matrix(traj: &LatentTrajectory, lag: usize) -> Result<MiMatrix> {
    let t = traj.n_steps();
    if lag == 0 || t < lag + 2 {
        return Err(Error::input(format!(
            "lag-{lag} MI matrix needs at least {} timesteps, got {t}",
            (lag + 2).max(3)
        )));
    }
    let columns = traj.columns();
    // Normalized, centered past and future segments; None when constant.
    let unit = |x: &[f64]| -> Option<Vec<f64>> {
        let c = centered(x);
        let norm = dot(&c, &c).sqrt();
        (norm > 0.0).then(|| c.into_iter().map(|v| v / norm).collect())
    };
    let past: Vec<Option<Vec<f64>>> = columns.iter().map(|c| unit(&c[..t - lag])).collect();
    let future: Vec<Option<Vec<f64>>> = columns.iter().map(|c| unit(&c[lag..])).collect();
    let n = traj.n_units();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| match (&past[i], &future[j]) {
                    (Some(x), Some(y)) => gaussian_mi_bivariate(dot(x, y).clamp(-1.0, 1.0)),
                    _ => 0.0,
                })
                .collect()
        })
        .collect();
    Ok(MiMatrix {
        values: DMatrix::from_fn(n, n, |i, j| rows[i][j]),
        lag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
        let err = pearson(&[1.0, 2.0], &[4.0, 4.0]).unwrap_err();
        assert!(err.to_string().contains("series y"));
    }

    #[test]
    fn bivariate_closed_form() {
        assert_eq!(gaussian_mi_bivariate(0.0), 0.0);
        assert!((gaussian_mi_bivariate(0.5) - 0.143_841_036_225_890_3).abs() < 1e-12);
        assert!((gaussian_mi_bivariate(0.8) - 0.510_825_623_765_990_7).abs() < 1e-12);
        assert!(gaussian_mi_bivariate(1.0).is_finite());
        assert_eq!(gaussian_mi_bivariate(-0.37), gaussian_mi_bivariate(0.37));
    }

    #[test]
    fn block_mi_examples() {
        let id = DMatrix::<f64>::identity(2, 2);
        assert!(gaussian_mi_blocks(&id, 1).unwrap().abs() < 1e-15);
        let c = dmatrix![1.0, 0.5; 0.5, 1.0];
        assert!((gaussian_mi_blocks(&c, 1).unwrap() - gaussian_mi_bivariate(0.5)).abs() < 1e-6);
        let block = dmatrix![
            2.0, 0.3, 0.0, 0.0;
            0.3, 1.0, 0.0, 0.0;
            0.0, 0.0, 1.5, -0.4;
            0.0, 0.0, -0.4, 0.7
        ];
        assert!(gaussian_mi_blocks(&block, 2).unwrap() <= 1e-6);
        let asym = dmatrix![1.0, 0.5; 0.4, 1.0];
        assert!(gaussian_mi_blocks(&asym, 1).is_err());
    }

    #[test]
    fn lag1_requires_three_steps() {
        let t = LatentTrajectory::new("x", 2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(lag1_mi_matrix(&t).is_err());
    }

    #[test]
    fn lag1_constant_pairs_are_zero() {
        let t = LatentTrajectory::from_columns(
            "x",
            &[vec![1.0, 2.0, 4.0, 3.0, 5.0], vec![2.0, 2.0, 2.0, 2.0, 2.0]],
        )
        .unwrap();
        let m = lag1_mi_matrix(&t).unwrap();
        assert_eq!(m.values[(0, 1)], 0.0);
        assert_eq!(m.values[(1, 1)], 0.0);
        let expected = gaussian_mi_bivariate(pearson(&[1.0, 2.0, 4.0, 3.0], &[2.0, 4.0, 3.0, 5.0]).unwrap());
        assert!((m.values[(0, 0)] - expected).abs() < 1e-14);
    }

    fn psd(dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-1.0f64..1.0, dim * dim).prop_map(move |v| {
            let b = DMatrix::from_vec(dim, dim, v);
            &b * b.transpose() + DMatrix::identity(dim, dim) * 0.05
        })
    }

    proptest! {
        #[test]
        fn block_swap_symmetry(cov in psd(5)) {
            let forward = gaussian_mi_blocks(&cov, 2).unwrap();
            let swapped = gaussian_mi_subsets(&cov, &[2, 3, 4], &[0, 1]).unwrap();
            prop_assert!((forward - swapped).abs() < 1e-10);
        }

        #[test]
        fn adding_a_source_never_decreases_mi(cov in psd(5)) {
            let base = gaussian_mi_subsets(&cov, &[0], &[3, 4]).unwrap();
            let grown = gaussian_mi_subsets(&cov, &[0, 1], &[3, 4]).unwrap();
            prop_assert!(grown >= base - 1e-12);
        }
    }
}
