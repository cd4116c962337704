//! Sixteen-atom integrated information decomposition of a two-part system
//! under minimum-mutual-information redundancy on both sides.
//!
//! Source and target lattices are both the four-element diamond
//! `{1}{2} < {1}, {2} < {12}`. Each node `(a, b)` of their product gets a
//! cumulative value `V(a, b)`; the atoms are obtained by Möbius inversion of
//! `V` over the product order.

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gaussinfo::{covariance_to_correlation, gaussian_mi_subsets, sample_covariance};
use crate::trajdata::LatentTrajectory;
use crate::util::is_constant;

/// Shortest pair trajectory accepted by [`phiid_atoms`].
pub const MIN_PHIID_STEPS: usize = 32;

/// A node of the single-sided redundancy lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    /// `{1}{2}`: shared by both parts.
    Redundant,
    /// `{1}`
    First,
    /// `{2}`
    Second,
    /// `{12}`: only the whole.
    Synergy,
}

impl Node {
    pub const ALL: [Node; 4] = [Node::Redundant, Node::First, Node::Second, Node::Synergy];

    fn index(self) -> usize {
        self as usize
    }

    fn letter(self) -> char {
        match self {
            Node::Redundant => 'r',
            Node::First => 'x',
            Node::Second => 'y',
            Node::Synergy => 's',
        }
    }

    pub fn leq(self, other: Node) -> bool {
        self == other || self == Node::Redundant || other == Node::Synergy
    }

    /// Möbius function `mu(self, other)` of the diamond; zero unless `self <= other`.
    fn mobius(self, other: Node) -> f64 {
        use Node::*;
        match (self, other) {
            (a, b) if a == b => 1.0,
            (Redundant, First | Second) | (First | Second, Synergy) => -1.0,
            (Redundant, Synergy) => 1.0,
            _ => 0.0,
        }
    }

    /// Variable indices (0 = part 1, 1 = part 2) of a non-redundant node.
    fn parts(self) -> &'static [usize] {
        match self {
            Node::First => &[0],
            Node::Second => &[1],
            Node::Synergy => &[0, 1],
            Node::Redundant => &[],
        }
    }
}

/// The sixteen atoms `(source -> target)` plus the emergence quantities derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiAtoms {
    atoms: [[f64; 4]; 4],
    /// Downward causation plus causal decoupling.
    pub phi_r: f64,
    /// Atoms `{12} -> {1}`, `{12} -> {2}`, `{12} -> {1}{2}`.
    pub downward_causation: f64,
    /// Atom `{12} -> {12}`.
    pub causal_decoupling: f64,
    /// Largest violation of the sixteen downset-sum constraints.
    pub residual: f64,
    /// `I(X1 X2; Y1 Y2)`, the time-delayed MI being decomposed.
    pub total: f64,
}

impl PhiAtoms {
    pub fn atom(&self, source: Node, target: Node) -> f64 {
        self.atoms[source.index()][target.index()]
    }

    /// Atoms keyed by two-letter codes such as `"rtr"` or `"sts"` (source, `t`, target).
    pub fn named(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for a in Node::ALL {
            for b in Node::ALL {
                out.insert(format!("{}t{}", a.letter(), b.letter()), self.atom(a, b));
            }
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.atoms.iter().flatten().sum()
    }
}

/// Cumulative lattice values from the nine source/target MIs.
///
/// `mi[a][b]` holds `I(X_a; Y_b)` for `a, b` in `{First, Second, Synergy}`.
pub fn cumulative_values(mi: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut v = [[0.0; 4]; 4];
    for a in Node::ALL {
        for b in Node::ALL {
            v[a.index()][b.index()] = lattice_value(mi, a, b);
        }
    }
    v
}

fn lattice_value(mi: &[[f64; 4]; 4], a: Node, b: Node) -> f64 {
    match (a, b) {
        (Node::Redundant, _) => {
            lattice_value(mi, Node::First, b).min(lattice_value(mi, Node::Second, b))
        }
        (_, Node::Redundant) => {
            lattice_value(mi, a, Node::First).min(lattice_value(mi, a, Node::Second))
        }
        _ => mi[a.index()][b.index()],
    }
}

/// Möbius inversion over the product order.
pub fn mobius_invert(values: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut atoms = [[0.0; 4]; 4];
    for a in Node::ALL {
        for b in Node::ALL {
            let mut acc = 0.0;
            for a2 in Node::ALL.into_iter().filter(|n| n.leq(a)) {
                for b2 in Node::ALL.into_iter().filter(|n| n.leq(b)) {
                    acc += a2.mobius(a) * b2.mobius(b) * values[a2.index()][b2.index()];
                }
            }
            atoms[a.index()][b.index()] = acc;
        }
    }
    atoms
}

/// Largest absolute gap between each node's downset sum and its cumulative value.
pub fn downset_residual(atoms: &[[f64; 4]; 4], values: &[[f64; 4]; 4]) -> f64 {
    let mut worst: f64 = 0.0;
    for a in Node::ALL {
        for b in Node::ALL {
            let mut sum = 0.0;
            for a2 in Node::ALL.into_iter().filter(|n| n.leq(a)) {
                for b2 in Node::ALL.into_iter().filter(|n| n.leq(b)) {
                    sum += atoms[a2.index()][b2.index()];
                }
            }
            worst = worst.max((sum - values[a.index()][b.index()]).abs());
        }
    }
    worst
}

/// Decomposes a 4x4 covariance of `(X1(t), X2(t), X1(t+1), X2(t+1))`.
///
/// The covariance is rescaled to a correlation matrix first, so results depend
/// only on correlations.
pub fn phiid_from_covariance(cov: &DMatrix<f64>) -> Result<PhiAtoms> {
    if cov.nrows() != 4 || cov.ncols() != 4 {
        return Err(Error::input(format!(
            "expected a 4x4 covariance of two sources and two targets, got {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if cov.diagonal().iter().any(|&v| !v.is_finite() || v <= 0.0) {
        return Err(Error::input("covariance has a non-positive variance"));
    }
    let corr = covariance_to_correlation(cov);
    let mut mi = [[0.0; 4]; 4];
    for a in [Node::First, Node::Second, Node::Synergy] {
        for b in [Node::First, Node::Second, Node::Synergy] {
            let targets: Vec<usize> = b.parts().iter().map(|p| p + 2).collect();
            mi[a.index()][b.index()] = gaussian_mi_subsets(&corr, a.parts(), &targets)?;
        }
    }
    let values = cumulative_values(&mi);
    let atoms = mobius_invert(&values);
    let residual = downset_residual(&atoms, &values);

    let s = Node::Synergy.index();
    let downward = atoms[s][Node::Redundant.index()]
        + atoms[s][Node::First.index()]
        + atoms[s][Node::Second.index()];
    let decoupling = atoms[s][s];
    Ok(PhiAtoms {
        atoms,
        phi_r: downward + decoupling,
        downward_causation: downward,
        causal_decoupling: decoupling,
        residual,
        total: mi[s][s],
    })
}

/// Estimates the lag-1 joint covariance of a two-column trajectory and decomposes it.
pub fn phiid_atoms(pair: &LatentTrajectory) -> Result<PhiAtoms> {
    if pair.n_units() != 2 {
        return Err(Error::input(format!(
            "phiid_atoms expects a two-part trajectory, got {} units",
            pair.n_units()
        )));
    }
    let t = pair.n_steps();
    if t < MIN_PHIID_STEPS {
        return Err(Error::input(format!(
            "phiid_atoms needs at least {MIN_PHIID_STEPS} timesteps, got {t}"
        )));
    }
    let (x1, x2) = (pair.column(0), pair.column(1));
    for (name, col) in [("part 1", &x1), ("part 2", &x2)] {
        if is_constant(col) {
            return Err(Error::input(format!(
                "{}: {name} is constant; information decomposition is undefined",
                pair.episode_id()
            )));
        }
    }
    let lagged = [
        x1[..t - 1].to_vec(),
        x2[..t - 1].to_vec(),
        x1[1..].to_vec(),
        x2[1..].to_vec(),
    ];
    phiid_from_covariance(&sample_covariance(&lagged))
}
