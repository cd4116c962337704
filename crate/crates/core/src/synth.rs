//! Synthetic linear-Gaussian systems with closed-form information oracles, and
//! scripted training runs built from them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phiid::{phiid_from_covariance, PhiAtoms};
use crate::trajdata::{CheckpointRecord, EpisodeRecord, GroundTruth, LatentTrajectory, RunRecord};
use crate::util::mix_seed;

const LYAPUNOV_TOL: f64 = 1e-12;
const LYAPUNOV_MAX_ITER: usize = 1_000_000;

/// `x(t+1) = A x(t) + e(t)`, `e ~ N(0, noise_cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Var1System {
    a: DMatrix<f64>,
    noise_cov: DMatrix<f64>,
    spectral_radius: f64,
}

impl Var1System {
    pub fn new(a: DMatrix<f64>, noise_cov: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n || noise_cov.shape() != (n, n) {
            return Err(Error::input(format!(
                "transition {}x{} and noise {}x{} must be square and the same size",
                a.nrows(),
                a.ncols(),
                noise_cov.nrows(),
                noise_cov.ncols()
            )));
        }
        if (&noise_cov - noise_cov.transpose()).amax() > 1e-12 {
            return Err(Error::input("noise covariance is not symmetric"));
        }
        if SymmetricEigen::new(noise_cov.clone()).eigenvalues.min() < -1e-12 {
            return Err(Error::input("noise covariance is not positive semidefinite"));
        }
        let spectral_radius = a
            .clone()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if spectral_radius >= 1.0 {
            return Err(Error::input(format!(
                "spectral radius {spectral_radius} is not below 1; the process is not stationary"
            )));
        }
        Ok(Self {
            a,
            noise_cov,
            spectral_radius,
        })
    }

    /// Every unit driven by the population mean: `A = self_coupling I + (coupling / n) 11'`, unit noise.
    pub fn global_mode(n: usize, self_coupling: f64, coupling: f64) -> Result<Self> {
        let a = DMatrix::from_fn(n, n, |i, j| {
            coupling / n as f64 + if i == j { self_coupling } else { 0.0 }
        });
        Self::new(a, DMatrix::identity(n, n))
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }
}

/// Stationary covariance `S` and lag-one covariance `Cov(x(t), x(t+1)) = S A'`.
pub fn stationary_cov_var1(sys: &Var1System) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let a = &sys.a;
    let at = a.transpose();
    let mut sigma = sys.noise_cov.clone();
    for _ in 0..LYAPUNOV_MAX_ITER {
        let next = a * &sigma * &at + &sys.noise_cov;
        let change = (&next - &sigma).amax();
        sigma = next;
        if change <= LYAPUNOV_TOL * sigma.amax().max(1.0) {
            let lag1 = &sigma * &at;
            return Ok((sigma, lag1));
        }
    }
    Err(Error::Numerical(format!(
        "Lyapunov iteration did not converge in {LYAPUNOV_MAX_ITER} steps"
    )))
}

/// Joint covariance of `(x(t), x(t+1))`.
pub fn lagged_joint_covariance(sys: &Var1System) -> Result<DMatrix<f64>> {
    let n = sys.n();
    let (sigma, lag1) = stationary_cov_var1(sys)?;
    let mut joint = DMatrix::zeros(2 * n, 2 * n);
    joint.view_mut((0, 0), (n, n)).copy_from(&sigma);
    joint.view_mut((n, n), (n, n)).copy_from(&sigma);
    joint.view_mut((0, n), (n, n)).copy_from(&lag1);
    joint.view_mut((n, 0), (n, n)).copy_from(&lag1.transpose());
    Ok(joint)
}

/// Exact atoms of a two-unit system from its stationary statistics.
pub fn analytic_atoms(sys: &Var1System) -> Result<PhiAtoms> {
    if sys.n() != 2 {
        return Err(Error::input(format!(
            "analytic atoms need a two-unit system, got {} units",
            sys.n()
        )));
    }
    phiid_from_covariance(&lagged_joint_covariance(sys)?)
}

/// Symmetric square-root factor `L` with `L L' = m`, valid for singular PSD matrices.
fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut l = eig.eigenvectors.clone();
    for (j, mut col) in l.column_iter_mut().enumerate() {
        col *= eig.eigenvalues[j].max(0.0).sqrt();
    }
    l
}

fn standard_normal(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Samples `t` steps, starting from the stationary distribution.
pub fn gen_var1(sys: &Var1System, t: usize, seed: u64) -> Result<LatentTrajectory> {
    let n = sys.n();
    if t < 2 || n < 2 {
        return Err(Error::input(format!(
            "trajectories need at least 2 steps and 2 units, got {t} and {n}"
        )));
    }
    let (sigma, _) = stationary_cov_var1(sys)?;
    let start = psd_factor(&sigma);
    let noise = psd_factor(&sys.noise_cov);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = &start * standard_normal(&mut rng, n);
    let mut values = Vec::with_capacity(t * n);
    values.extend(x.iter());
    for _ in 1..t {
        x = &sys.a * &x + &noise * standard_normal(&mut rng, n);
        values.extend(x.iter());
    }
    LatentTrajectory::new(format!("var1-{seed}"), t, n, values)
}

/// A scalar schedule over training progress `u` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Curve {
    Constant { value: f64 },
    Linear { from: f64, to: f64 },
    /// Logistic step from `from` to `to` centred at `midpoint`.
    Sigmoid {
        from: f64,
        to: f64,
        midpoint: f64,
        steepness: f64,
    },
    /// `from + (to - from) (exp(rate u) - 1) / (exp(rate) - 1)`.
    Exponential { from: f64, to: f64, rate: f64 },
}

impl Curve {
    fn endpoints(&self) -> (f64, f64) {
        match *self {
            Curve::Constant { value } => (value, value),
            Curve::Linear { from, to }
            | Curve::Sigmoid { from, to, .. }
            | Curve::Exponential { from, to, .. } => (from, to),
        }
    }

    /// Fraction of the way from start to end at progress `u`.
    fn shape(&self, u: f64) -> f64 {
        match *self {
            Curve::Constant { .. } => 0.0,
            Curve::Linear { .. } => u,
            Curve::Sigmoid {
                midpoint, steepness, ..
            } => {
                let s = |v: f64| 1.0 / (1.0 + (-steepness * (v - midpoint)).exp());
                (s(u) - s(0.0)) / (s(1.0) - s(0.0))
            }
            Curve::Exponential { rate, .. } => {
                if rate.abs() < 1e-12 {
                    u
                } else {
                    (rate * u).exp_m1() / rate.exp_m1()
                }
            }
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.eval_scaled(u, 1.0)
    }

    /// Value with the rise from the starting value multiplied by `scale`.
    pub fn eval_scaled(&self, u: f64, scale: f64) -> f64 {
        let (from, to) = self.endpoints();
        from + scale * (to - from) * self.shape(u)
    }
}

fn default_interval() -> u64 {
    1000
}

fn default_env() -> String {
    "synthetic".into()
}

fn default_runs() -> usize {
    1
}

fn default_skill() -> [f64; 2] {
    [1.0, 1.0]
}

/// Script for one synthetic run, or a cohort of runs differing by a "skill" factor.
///
/// At checkpoint `k` of `K`, progress is `u = k / (K - 1)`. Each run draws a
/// skill `s` uniformly from `skill_range`; both curves rise from their starting
/// value by `s` times their programmed rise, so runs with faster-rising
/// coupling also end with higher reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunProfile {
    pub n_checkpoints: usize,
    pub episodes_per_checkpoint: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub n_units: usize,
    pub coupling_curve: Curve,
    pub reward_curve: Curve,
    #[serde(default)]
    pub self_coupling: f64,
    /// Standard deviation of the per-episode return noise; 5% of the programmed reward range if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_noise: Option<f64>,
    #[serde(default = "default_interval")]
    pub checkpoint_interval: u64,
    #[serde(default = "default_env")]
    pub env_name: String,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default = "default_skill")]
    pub skill_range: [f64; 2],
}

impl RunProfile {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_checkpoints", self.n_checkpoints),
            ("episodes_per_checkpoint", self.episodes_per_checkpoint),
            ("n_runs", self.n_runs),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::input(format!("profile field {name} must be at least 1")));
        }
        if self.t < 2 || self.n_units < 2 {
            return Err(Error::input("profile needs T >= 2 and n_units >= 2"));
        }
        if self.checkpoint_interval == 0 {
            return Err(Error::input("checkpoint_interval must be at least 1"));
        }
        if self.skill_range[0] > self.skill_range[1] {
            return Err(Error::input("skill_range must be [low, high] with low <= high"));
        }
        if self.reward_noise.is_some_and(|s| !s.is_finite() || s < 0.0) {
            return Err(Error::input("reward_noise must be a finite non-negative number"));
        }
        Ok(())
    }

    fn progress(&self, k: usize) -> f64 {
        if self.n_checkpoints == 1 {
            0.0
        } else {
            k as f64 / (self.n_checkpoints - 1) as f64
        }
    }
}

fn run_with_skill(profile: &RunProfile, run_id: String, skill: f64, seed: u64) -> Result<RunRecord> {
    let k_count = profile.n_checkpoints;
    let coupling: Vec<f64> = (0..k_count)
        .map(|k| profile.coupling_curve.eval_scaled(profile.progress(k), skill))
        .collect();
    let reward: Vec<f64> = (0..k_count)
        .map(|k| profile.reward_curve.eval_scaled(profile.progress(k), skill))
        .collect();
    let noise = profile.reward_noise.unwrap_or_else(|| {
        let hi = reward.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = reward.iter().copied().fold(f64::INFINITY, f64::min);
        0.05 * (hi - lo)
    });
    let systems = coupling
        .iter()
        .map(|&c| Var1System::global_mode(profile.n_units, profile.self_coupling, c))
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..k_count)
        .flat_map(|k| (0..profile.episodes_per_checkpoint).map(move |e| (k, e)))
        .collect();
    let episodes = jobs
        .par_iter()
        .map(|&(k, e)| {
            let ep_seed = mix_seed(&[seed, k as u64, e as u64]);
            let raw = gen_var1(&systems[k], profile.t, ep_seed)?;
            // stored bundles hold f32 latents; round now so records survive a round trip
            let values = raw.values().iter().map(|&v| f64::from(v as f32)).collect();
            let latents =
                LatentTrajectory::new(format!("{k}_{e}"), profile.t, profile.n_units, values)?;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[ep_seed, 1]));
            let z: f64 = StandardNormal.sample(&mut rng);
            let target = reward[k] + noise * z;
            let rewards = vec![target / profile.t as f64; profile.t];
            EpisodeRecord::new(latents, rewards, ep_seed)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut episodes = episodes.into_iter();
    let checkpoints = (0..k_count)
        .map(|k| {
            let eps = episodes.by_ref().take(profile.episodes_per_checkpoint).collect();
            CheckpointRecord::new(k as u64 * profile.checkpoint_interval, eps)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunRecord {
        run_id,
        env_name: profile.env_name.clone(),
        algorithm: "synthetic".into(),
        architecture: "var1".into(),
        n_units: profile.n_units,
        checkpoints,
        ground_truth: Some(GroundTruth { coupling, reward }),
    })
}

fn skill_for(profile: &RunProfile, seed: u64) -> f64 {
    let [lo, hi] = profile.skill_range;
    if lo == hi {
        return lo;
    }
    ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 2])).random_range(lo..hi)
}

/// A single run; `n_runs` in the profile is ignored.
pub fn gen_synthetic_run(profile: &RunProfile, seed: u64) -> Result<RunRecord> {
    profile.validate()?;
    run_with_skill(
        profile,
        format!("{}-{seed}", profile.env_name),
        skill_for(profile, seed),
        seed,
    )
}

/// `profile.n_runs` runs, run `i` seeded from `(seed, i)`.
pub fn gen_synthetic_cohort(profile: &RunProfile, seed: u64) -> Result<Vec<RunRecord>> {
    profile.validate()?;
    (0..profile.n_runs)
        .map(|i| {
            let run_seed = mix_seed(&[seed, i as u64]);
            run_with_skill(
                profile,
                format!("{}-{i:03}", profile.env_name),
                skill_for(profile, run_seed),
                run_seed,
            )
        })
        .collect()
}
