//! Random-forest and least-squares regressors.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::util::mix_seed;

/// Frozen forest hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(d / 3)`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            min_leaf: 2,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone)]
enum TreeNode {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf(v) => return v,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

struct Builder<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    params: ForestParams,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn build(&mut self, idx: &mut [usize]) -> usize {
        let id = self.nodes.len();
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(TreeNode::Leaf(mean));
        let pure = idx.iter().all(|&i| self.y[i] == self.y[idx[0]]);
        if idx.len() < 2 * self.params.min_leaf || pure {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(idx) else {
            return id;
        };
        let mut split = 0;
        for k in 0..idx.len() {
            if self.x[(idx[k], feature)] <= threshold {
                idx.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.build(l);
        let right = self.build(r);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    /// Split maximizing the reduction in squared error over a random feature subset.
    ///
    /// Features are drawn in random order; past the first `mtry`, drawing
    /// continues only until some feature admits a split.
    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64)> {
        let d = self.x.ncols();
        let candidates = sample(&mut self.rng, d, d).into_vec();
        let n = idx.len();
        let min_leaf = self.params.min_leaf;
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for (drawn, feature) in candidates.into_iter().enumerate() {
            if drawn >= self.mtry && best.is_some() {
                break;
            }
            order.sort_by(|&a, &b| self.x[(a, feature)].total_cmp(&self.x[(b, feature)]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.y[order[k]];
                let (lo, hi) = (self.x[(order[k], feature)], self.x[(order[k + 1], feature)]);
                let n_left = k + 1;
                if lo == hi || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                // maximizing this is equivalent to minimizing the children's SSE
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / (n - n_left) as f64;
                if best.is_none_or(|(s, _, _)| score > s) {
                    best = Some((score, feature, lo + (hi - lo) / 2.0));
                }
            }
        }
        let parent = total * total / n as f64;
        best.filter(|(s, _, _)| *s > parent * (1.0 + 1e-12) + 1e-300)
            .map(|(_, f, t)| (f, t))
    }
}

/// Bagged regression trees with per-split feature subsampling.
#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<Tree>,
    n_features: usize,
}

impl RandomForest {
    /// Fits `params.n_trees` trees; tree `i` is seeded from `(seed, i)`.
    pub fn fit(x: &DMatrix<f64>, y: &[f64], params: ForestParams, seed: u64) -> Result<Self> {
        let (n, d) = x.shape();
        check_training_data(n, d, y)?;
        if params.n_trees == 0 || params.min_leaf == 0 {
            return Err(Error::input("forest needs at least one tree and a leaf size of at least 1"));
        }
        let mtry = params.max_features.unwrap_or(d.div_ceil(3)).clamp(1, d);
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, t as u64]));
                let mut idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let mut b = Builder {
                    x,
                    y,
                    params,
                    mtry,
                    rng,
                    nodes: Vec::new(),
                };
                b.build(&mut idx);
                Tree { nodes: b.nodes }
            })
            .collect();
        Ok(Self {
            trees,
            n_features: d,
        })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_width(x, self.n_features)?;
        Ok((0..x.nrows())
            .map(|i| {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                self.trees.iter().map(|t| t.predict(&row)).sum::<f64>() / self.trees.len() as f64
            })
            .collect())
    }
}

/// Ordinary least squares with an intercept on standardized features.
///
/// Uses the minimum-norm solution, so collinear or constant features are harmless.
#[derive(Debug, Clone)]
pub struct LinearModel {
    center: Vec<f64>,
    scale: Vec<f64>,
    coef: DVector<f64>,
    intercept: f64,
}

impl LinearModel {
    pub fn fit(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let (n, d) = x.shape();
        check_training_data(n, d, y)?;
        let mut z = x.clone();
        let mut center = Vec::with_capacity(d);
        let mut scale = Vec::with_capacity(d);
        for mut col in z.column_iter_mut() {
            let m = col.mean();
            col.add_scalar_mut(-m);
            let sd = (col.norm_squared() / n as f64).sqrt();
            let s = if sd > 0.0 { sd } else { 1.0 };
            col /= s;
            center.push(m);
            scale.push(s);
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let svd = z.svd(true, true);
        let cutoff = 1e-10 * svd.singular_values.max();
        let coef = svd
            .solve(&yc, cutoff)
            .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))?;
        Ok(Self {
            center,
            scale,
            coef,
            intercept: y_mean,
        })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_width(x, self.center.len())?;
        Ok((0..x.nrows())
            .map(|i| {
                self.intercept
                    + (0..self.center.len())
                        .map(|j| (x[(i, j)] - self.center[j]) / self.scale[j] * self.coef[j])
                        .sum::<f64>()
            })
            .collect())
    }
}

fn check_training_data(n: usize, d: usize, y: &[f64]) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::input("training data is empty"));
    }
    if y.len() != n {
        return Err(Error::input(format!("{n} feature rows but {} targets", y.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite training target"));
    }
    Ok(())
}

fn check_width(x: &DMatrix<f64>, d: usize) -> Result<()> {
    if x.ncols() != d {
        return Err(Error::input(format!(
            "model was fit on {d} features, got {}",
            x.ncols()
        )));
    }
    Ok(())
}
