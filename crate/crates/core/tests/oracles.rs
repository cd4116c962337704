mod common;

use nalgebra::{dmatrix, DMatrix};
use phirl::analysis::RunSeries;
use phirl::gaussinfo::{gaussian_mi_bivariate, lag1_mi_matrix, sample_covariance};
use phirl::metrics::baseline_metrics;
use phirl::phiid::{
    causal_emergence, causal_emergence_detail, emergence_trajectory, phiid_from_covariance, Bipartition,
};
use phirl::predict::stats::{dagostino_k2, mannwhitney, mannwhitney_with, Alternative};
use phirl::predict::{build_dataset, evaluate, screen_correlations, Model, PredictConfig};
use phirl::preprocess::{normality_fraction, preprocess, zscore};
use phirl::synth::{gen_var1, lagged_joint_covariance, stationary_cov_var1, Var1System};
use phirl::trajdata::{EpisodeRecord, LatentTrajectory};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

fn noise(t: usize, n: usize, seed: u64) -> LatentTrajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..t * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    LatentTrajectory::new("noise", t, n, values).unwrap()
}

fn system(a: DMatrix<f64>, noise_cov: DMatrix<f64>) -> Var1System {
    Var1System::new(a, noise_cov).unwrap()
}

fn episode(traj: LatentTrajectory) -> EpisodeRecord {
    let t = traj.n_steps();
    EpisodeRecord::new(traj, vec![0.0; t], 0).unwrap()
}

/// Exact atoms of the two-part average of `sys` over `part`.
fn coarse_analytic_phi(sys: &Var1System, part: &Bipartition) -> f64 {
    let n = sys.n();
    let joint = lagged_joint_covariance(sys).unwrap();
    let mut c = DMatrix::zeros(4, 2 * n);
    for (row, side) in [&part.side_a, &part.side_b].into_iter().enumerate() {
        for &u in side {
            let w = 1.0 / side.len() as f64;
            c[(row, u)] = w;
            c[(row + 2, u + n)] = w;
        }
    }
    phiid_from_covariance(&(&c * joint * c.transpose())).unwrap().phi_r
}

#[test]
fn white_noise_has_no_lagged_information() {
    let mi = lag1_mi_matrix(&noise(100_000, 4, 1)).unwrap();
    assert!(mi.values.amax() < 5e-4, "{}", mi.values);
}

#[test]
fn copy_system_concentrates_information_on_one_edge() {
    let sys = system(dmatrix![0.0, 0.0; 1.0, 0.0], dmatrix![1.0, 0.0; 0.0, 1e-4]);
    let mi = lag1_mi_matrix(&gen_var1(&sys, 100_000, 2).unwrap()).unwrap();
    assert!(mi.values[(0, 1)] > 2.0, "{}", mi.values);
    for (i, j) in [(0, 0), (1, 0), (1, 1)] {
        assert!(mi.values[(i, j)] < 0.05, "{}", mi.values);
    }
}

#[test]
fn noisy_swap_matches_stationary_mi() {
    let sys = system(dmatrix![0.0, 0.9; 0.9, 0.0], DMatrix::identity(2, 2));
    let (sigma, lag1) = stationary_cov_var1(&sys).unwrap();
    let mi = lag1_mi_matrix(&gen_var1(&sys, 100_000, 3).unwrap()).unwrap();
    for i in 0..2 {
        for j in 0..2 {
            let rho = lag1[(i, j)] / (sigma[(i, i)] * sigma[(j, j)]).sqrt();
            let exact = gaussian_mi_bivariate(rho);
            assert!((mi.values[(i, j)] - exact).abs() < 0.01, "({i},{j}) {} vs {exact}", mi.values[(i, j)]);
        }
    }
}

#[test]
fn scalar_and_sampled_stationary_covariance() {
    let sys = system(dmatrix![0.5, 0.2; -0.1, 0.3], DMatrix::identity(2, 2));
    let (sigma, lag1) = stationary_cov_var1(&sys).unwrap();
    let traj = gen_var1(&sys, 1_000_000, 4).unwrap();
    let cols = traj.columns();
    let t = traj.n_steps();
    let lagged: Vec<Vec<f64>> = vec![
        cols[0][..t - 1].to_vec(),
        cols[1][..t - 1].to_vec(),
        cols[0][1..].to_vec(),
        cols[1][1..].to_vec(),
    ];
    let s = sample_covariance(&lagged);
    for i in 0..2 {
        for j in 0..2 {
            assert!((s[(i, j)] - sigma[(i, j)]).abs() < 0.01);
            assert!((s[(i, j + 2)] - lag1[(i, j)]).abs() < 0.01);
        }
    }
}

#[test]
fn diagonal_system_autocorrelation() {
    let sys = system(DMatrix::identity(3, 3) * 0.9, DMatrix::identity(3, 3));
    let traj = gen_var1(&sys, 100_000, 5).unwrap();
    for c in traj.columns() {
        let r = phirl::gaussinfo::pearson(&c[..c.len() - 1], &c[1..]).unwrap();
        assert!((r - 0.9).abs() < 0.01, "{r}");
    }
}

#[test]
fn global_mode_emergence_matches_analytic_value() {
    let sys = Var1System::global_mode(4, 0.0, 0.9).unwrap();
    let traj = preprocess(&gen_var1(&sys, 200_000, 6).unwrap()).unwrap().traj;
    let detail = causal_emergence_detail(&traj).unwrap();
    let exact = coarse_analytic_phi(&sys, &detail.partition);
    assert!(exact > 0.05, "{exact}");
    assert!((detail.atoms.phi_r - exact).abs() < 0.02, "{} vs {exact}", detail.atoms.phi_r);
}

#[test]
fn iid_noise_has_negligible_emergence() {
    let phi = causal_emergence(&zscore(&noise(10_000, 8, 7)).unwrap().traj).unwrap();
    assert!(phi <= 0.02, "{phi}");
}

#[test]
fn shuffling_time_destroys_emergence() {
    let sys = Var1System::global_mode(8, 0.0, 0.9).unwrap();
    let traj = preprocess(&gen_var1(&sys, 2000, 8).unwrap()).unwrap().traj;
    let mut rows: Vec<usize> = (0..traj.n_steps()).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(8));
    let values = rows.iter().flat_map(|&r| traj.row(r).to_vec()).collect();
    let shuffled = LatentTrajectory::new("shuffled", traj.n_steps(), 8, values).unwrap();
    let (a, b) = (causal_emergence(&traj).unwrap(), causal_emergence(&shuffled).unwrap());
    assert!(a > b, "{a} vs {b}");
}

#[test]
fn stationary_windows_scatter_around_the_full_value() {
    let sys = Var1System::global_mode(6, 0.2, 0.6).unwrap();
    let ep = episode(gen_var1(&sys, 20_000, 9).unwrap());
    let full = causal_emergence(&preprocess(&ep.latents).unwrap().traj).unwrap();
    let tr = emergence_trajectory(&ep, 1000, 250).unwrap();
    let mean = tr.values.iter().sum::<f64>() / tr.values.len() as f64;
    let sd = (tr.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (tr.values.len() - 1) as f64).sqrt();
    let inside = tr.values.iter().filter(|v| (*v - full).abs() <= 3.0 * sd).count();
    assert!(inside as f64 >= 0.97 * tr.values.len() as f64, "{inside}/{}", tr.values.len());
}

#[test]
fn switching_coupling_on_raises_window_values() {
    let off = gen_var1(&Var1System::global_mode(8, 0.0, 0.0).unwrap(), 1000, 10).unwrap();
    let on = gen_var1(&Var1System::global_mode(8, 0.0, 0.9).unwrap(), 1000, 11).unwrap();
    let values = [off.values(), on.values()].concat();
    let ep = episode(LatentTrajectory::new("switch", 2000, 8, values).unwrap());
    let (window, stride) = (100, 10);
    let tr = emergence_trajectory(&ep, window, stride).unwrap();
    let starts = |k: usize| k * stride;
    let before: Vec<f64> = (0..tr.values.len()).filter(|&k| starts(k) + window <= 1000).map(|k| tr.values[k]).collect();
    let after: Vec<f64> = (0..tr.values.len()).filter(|&k| starts(k) >= 1000).map(|k| tr.values[k]).collect();
    let test = mannwhitney_with(&after, &before, Alternative::Greater).unwrap();
    assert!(test.p_value < 0.01, "{}", test.p_value);
}

#[test]
fn zscored_noise_baselines() {
    let traj = zscore(&noise(10_000, 4, 12)).unwrap().traj;
    let m = baseline_metrics(&traj).unwrap().metrics;
    assert!((m.entropy - 1.4189).abs() < 1e-3, "{}", m.entropy);
    assert!(m.mutual_information < 1e-3);
    assert!((m.effective_dimension - 4.0).abs() < 0.05);
}

#[test]
fn normal_columns_reject_at_the_nominal_rate() {
    let mean: f64 = (0..100)
        .map(|r| normality_fraction(&noise(1000, 64, 100 + r), 0.05).unwrap().fraction_rejecting)
        .sum::<f64>()
        / 100.0;
    assert!((mean - 0.05).abs() < 0.03, "{mean}");
}

#[test]
fn skewed_samples_reject_normality() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x: Vec<f64> = (0..1000).map(|_| Exp1.sample(&mut rng)).collect();
    assert!(dagostino_k2(&x).unwrap().p_value < 1e-4);
}

#[test]
fn shifted_gaussians_separate() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let a: Vec<f64> = (0..100).map(|_| StandardNormal.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..100).map(|_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        1.0 + z
    }).collect();
    assert!(mannwhitney(&a, &b).unwrap().p_value < 1e-6);
}

#[test]
fn independent_cohort_screens_at_alpha() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let runs: Vec<RunSeries> = (0..100)
        .map(|i| {
            let phi = (0..20).map(|_| rng.random()).collect();
            let base = (0..20).map(|_| common::noise_metrics(&mut rng)).collect();
            common::series_from(&format!("r{i}"), phi, base, vec![0.0; 20])
        })
        .collect();
    let report = screen_correlations(&runs, 0.05).unwrap();
    for m in &report.metrics {
        assert!((m.fraction_significant - 0.05).abs() <= 0.05, "{} {}", m.metric, m.fraction_significant);
    }
}

/// Runs whose early emergence trend is a planted per-run slope.
fn trend_cohort(n: usize, seed: u64, target: impl Fn(f64) -> f64) -> Vec<RunSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let slope: f64 = rng.random_range(0.0..1.0);
            let phi = (0..20).map(|k| 0.1 + slope * k as f64 + 0.01 * rng.random::<f64>()).collect();
            let base = (0..20).map(|_| common::noise_metrics(&mut rng)).collect();
            let mut rewards = vec![0.0; 20];
            rewards[19] = target(slope);
            common::series_from(&format!("r{i:02}"), phi, base, rewards)
        })
        .collect()
}

fn cfg(model: Model) -> PredictConfig {
    PredictConfig {
        early_fraction: 0.2,
        folds: 5,
        repeats: 10,
        model,
        seed: 21,
    }
}

fn emergence_rho(report: &phirl::predict::PredictionReport) -> f64 {
    report.feature_sets.iter().find(|f| f.feature_set == "emergence_descriptors").unwrap().median_rho
}

#[test]
fn planted_trend_predicts_final_reward() {
    let data = build_dataset(&trend_cohort(50, 16, |s| (3.0 * s).exp()), 0.2, 100).unwrap();
    let report = evaluate(&data, &cfg(Model::Forest)).unwrap();
    assert!(emergence_rho(&report) >= 0.95, "{}", emergence_rho(&report));

    let mut permuted = data.clone();
    let n = permuted.targets.len();
    permuted.targets = (0..n).map(|i| data.targets[(i * 17 + 5) % n]).collect();
    let null = evaluate(&permuted, &cfg(Model::Forest)).unwrap();
    assert!(emergence_rho(&null).abs() <= 0.2, "{}", emergence_rho(&null));
}

#[test]
fn linear_and_forest_agree_on_a_linear_truth() {
    let data = build_dataset(&trend_cohort(50, 17, |s| 2.0 + 5.0 * s), 0.2, 100).unwrap();
    for model in [Model::Forest, Model::Linear] {
        let rho = emergence_rho(&evaluate(&data, &cfg(model)).unwrap());
        assert!(rho >= 0.9, "{model:?} {rho}");
    }
}
