//! Spectral bisection of the lag-1 MI graph.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussinfo::MiMatrix;

/// Components with magnitude at or below this are treated as zero (assigned to side A).
const ZERO_COMPONENT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bipartition {
    pub side_a: Vec<usize>,
    pub side_b: Vec<usize>,
    /// Eigenvalue whose eigenvector produced the split.
    pub fiedler_value: f64,
}

impl Bipartition {
    /// A split given directly by its sides; both must be non-empty and disjoint.
    pub fn new(mut side_a: Vec<usize>, mut side_b: Vec<usize>) -> Result<Self> {
        side_a.sort_unstable();
        side_b.sort_unstable();
        if side_a.is_empty() || side_b.is_empty() {
            return Err(Error::input("both sides of a bipartition must be non-empty"));
        }
        if side_a.iter().any(|u| side_b.binary_search(u).is_ok()) {
            return Err(Error::input("bipartition sides overlap"));
        }
        Ok(Self {
            side_a,
            side_b,
            fiedler_value: f64::NAN,
        })
    }

    pub fn n_units(&self) -> usize {
        self.side_a.len() + self.side_b.len()
    }

    /// Same split with the sides exchanged if needed so that unit 0 is on side A.
    pub fn canonical(&self) -> (Vec<usize>, Vec<usize>) {
        if self.side_a.contains(&0) {
            (self.side_a.clone(), self.side_b.clone())
        } else {
            (self.side_b.clone(), self.side_a.clone())
        }
    }
}

/// Graph Laplacian `D - W` of the symmetrized MI matrix with zeroed diagonal.
pub fn mi_laplacian(mi: &MiMatrix) -> DMatrix<f64> {
    let m = &mi.values;
    let n = m.nrows();
    let mut w = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            0.5 * (m[(i, j)] + m[(j, i)])
        }
    });
    for i in 0..n {
        let degree: f64 = w.row(i).sum();
        w.row_mut(i).neg_mut();
        w[(i, i)] = degree;
    }
    w
}

/// Splits units by the sign pattern of the Laplacian's Fiedler vector.
///
/// The eigenvector sign is fixed so that its lowest-indexed nonzero component
/// is positive; positive and zero components form side A. When the sign
/// pattern leaves a side empty, units are split at the component median.
pub fn fiedler_bipartition(mi: &MiMatrix) -> Result<Bipartition> {
    let n = mi.n();
    if n < 2 {
        return Err(Error::input("bipartition needs at least 2 units"));
    }
    let lap = mi_laplacian(mi);
    if lap.iter().all(|&v| v == 0.0) {
        return Err(Error::input(
            "MI matrix has no off-diagonal weight; the graph cannot be bisected",
        ));
    }
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let largest = eig.eigenvalues[order[n - 1]];
    let tol = 1e-9 * largest.abs().max(f64::MIN_POSITIVE);
    let pick = order
        .iter()
        .copied()
        .find(|&k| eig.eigenvalues[k] > tol)
        .ok_or_else(|| Error::Numerical("Laplacian has no positive eigenvalue".into()))?;

    let mut v: Vec<f64> = eig.eigenvectors.column(pick).iter().copied().collect();
    if let Some(first) = v.iter().find(|x| x.abs() > ZERO_COMPONENT) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let (mut side_a, mut side_b): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|&i| v[i] >= -ZERO_COMPONENT);
    if side_a.is_empty() || side_b.is_empty() {
        let mut by_component: Vec<usize> = (0..n).collect();
        by_component.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
        let half = n.div_ceil(2);
        side_a = by_component[..half].to_vec();
        side_b = by_component[half..].to_vec();
        side_a.sort_unstable();
        side_b.sort_unstable();
    }
    Ok(Bipartition {
        side_a,
        side_b,
        fiedler_value: eig.eigenvalues[pick],
    })
}
