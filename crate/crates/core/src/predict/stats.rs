//! Rank statistics and normality testing.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::gaussinfo::pearson;
use crate::util::{average_ranks, is_constant, tie_groups};

/// Largest combined sample size for which Mann-Whitney p-values are exact.
pub const MW_EXACT_MAX: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Sample size(s) behind the statistic.
    pub n: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    /// First sample tends to be larger.
    Greater,
    /// First sample tends to be smaller.
    Less,
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Spearman rank correlation with a t-approximation p-value (`n - 2` df).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::input(format!(
            "spearman needs equal-length sequences of length >= 3 (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    if is_constant(x) || is_constant(y) {
        return Err(Error::input("spearman: constant sequence"));
    }
    let rho = pearson(&average_ranks(x), &average_ranks(y))?;
    let n = x.len();
    let df = (n - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok(TestResult {
        statistic: rho,
        p_value,
        n: vec![n],
    })
}

/// Kendall's tau-b.
///
/// When exactly one side is fully tied the numerator vanishes and tau is 0;
/// when both are, the coefficient is undefined.
pub fn kendall(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::input(format!(
            "kendall needs equal-length sequences of length >= 2 (got {} and {})",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    let mut score = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            let s = (x[j] - x[i]).signum() * (y[j] - y[i]).signum();
            if x[j] != x[i] && y[j] != y[i] {
                score += s as i64;
            }
        }
    }
    let pairs = |groups: Vec<usize>| groups.iter().map(|&t| (t * (t - 1) / 2) as f64).sum::<f64>();
    let n0 = (n * (n - 1) / 2) as f64;
    let untied_x = n0 - pairs(tie_groups(x));
    let untied_y = n0 - pairs(tie_groups(y));
    if untied_x == 0.0 && untied_y == 0.0 {
        return Err(Error::input("kendall: both sequences are fully tied"));
    }
    if untied_x == 0.0 || untied_y == 0.0 {
        return Ok(0.0);
    }
    Ok((score as f64 / (untied_x * untied_y).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided Mann-Whitney U test. The statistic is U of the first sample.
pub fn mannwhitney(a: &[f64], b: &[f64]) -> Result<TestResult> {
    mannwhitney_with(a, b, Alternative::TwoSided)
}

/// Mann-Whitney U test. Exact when `|a| + |b| <= 20` and there are no ties,
/// otherwise the tie-corrected normal approximation with continuity correction.
pub fn mannwhitney_with(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::input("mannwhitney: both samples must be non-empty"));
    }
    let (na, nb) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let rank_sum_a: f64 = ranks[..na].iter().sum();
    let u = rank_sum_a - (na * (na + 1)) as f64 / 2.0;
    let groups = tie_groups(&pooled);
    let has_ties = groups.iter().any(|&g| g > 1);
    let p_value = if na + nb <= MW_EXACT_MAX && !has_ties {
        exact_u_pvalue(u.round() as usize, na, nb, alternative)
    } else {
        normal_u_pvalue(u, na, nb, &groups, alternative)
    };
    Ok(TestResult {
        statistic: u,
        p_value: p_value.clamp(0.0, 1.0),
        n: vec![na, nb],
    })
}

/// Number of arrangements of `na` + `nb` distinct values giving each U = 0..=na*nb.
pub fn u_distribution(na: usize, nb: usize) -> Vec<f64> {
    // counts[m][k] for growing prefixes; recurrence f(m, k, u) = f(m-1, k, u-k) + f(m, k-1, u)
    let max_u = na * nb;
    let mut table = vec![vec![vec![0.0f64; max_u + 1]; nb + 1]; na + 1];
    for row in &mut table[0] {
        row[0] = 1.0;
    }
    for m in 1..=na {
        table[m][0][0] = 1.0;
        for k in 1..=nb {
            for u in 0..=m * k {
                let with_top_in_a = if u >= k { table[m - 1][k][u - k] } else { 0.0 };
                table[m][k][u] = with_top_in_a + table[m][k - 1][u];
            }
        }
    }
    table[na][nb].clone()
}

fn exact_u_pvalue(u: usize, na: usize, nb: usize, alternative: Alternative) -> f64 {
    let counts = u_distribution(na, nb);
    let total: f64 = counts.iter().sum();
    let lower: f64 = counts[..=u].iter().sum::<f64>() / total;
    let upper: f64 = counts[u..].iter().sum::<f64>() / total;
    match alternative {
        Alternative::TwoSided => (2.0 * lower.min(upper)).min(1.0),
        Alternative::Greater => upper,
        Alternative::Less => lower,
    }
}

fn normal_u_pvalue(u: f64, na: usize, nb: usize, groups: &[usize], alternative: Alternative) -> f64 {
    let (na, nb) = (na as f64, nb as f64);
    let n = na + nb;
    let mu = na * nb / 2.0;
    let tie_term: f64 = groups.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let sd = var.sqrt();
    let normal = std_normal();
    match alternative {
        Alternative::TwoSided => {
            let z = ((u - mu).abs() - 0.5).max(0.0) / sd;
            (2.0 * normal.sf(z)).min(1.0)
        }
        Alternative::Greater => normal.sf((u - mu - 0.5) / sd),
        Alternative::Less => normal.cdf((u - mu + 0.5) / sd),
    }
}

/// D'Agostino-Pearson K² omnibus normality test; `p = exp(-K²/2)`.
pub fn dagostino_k2(x: &[f64]) -> Result<TestResult> {
    let n = x.len();
    if n < 20 {
        return Err(Error::input(format!(
            "D'Agostino K² needs at least 20 observations, got {n}"
        )));
    }
    if is_constant(x) {
        return Err(Error::input("D'Agostino K²: constant sample"));
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let moment = |k: i32| x.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / nf;
    let (m2, m3, m4) = (moment(2), moment(3), moment(4));
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let k2 = k2_statistic(skew_z(skew, nf), kurtosis_z(kurt, nf));
    Ok(TestResult {
        statistic: k2,
        p_value: k2_pvalue(k2),
        n: vec![n],
    })
}

fn k2_statistic(zs: f64, zk: f64) -> f64 {
    zs * zs + zk * zk
}

/// Survival function of chi-squared with 2 degrees of freedom.
pub fn k2_pvalue(k2: f64) -> f64 {
    (-k2 / 2.0).exp().min(1.0)
}

fn skew_z(b1: f64, n: f64) -> f64 {
    let y = b1 * ((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0))).sqrt();
    let beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0)
        / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    let y = if y == 0.0 { 1.0 } else { y };
    let r = y / alpha;
    delta * (r + (r * r + 1.0).sqrt()).ln()
}

fn kurtosis_z(b2: f64, n: f64) -> f64 {
    let expected = 3.0 * (n - 1.0) / (n + 1.0);
    let var = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0).powi(2) * (n + 3.0) * (n + 5.0));
    let x = (b2 - expected) / var.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    (term1 - term2) / (2.0 / (9.0 * a)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        let r = spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((r.statistic + 1.0).abs() < 1e-12);
        assert_eq!(r.p_value, 0.0);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r.statistic - 0.8).abs() < 1e-12);
        // t = 0.8 * sqrt(2 / 0.36) on 2 df
        assert!((r.p_value - 0.2).abs() < 1e-9);
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r.statistic - 0.866_025_403_784_438_6).abs() < 1e-3);
        assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn kendall_examples() {
        let t = [0.0, 1.0, 2.0];
        assert_eq!(kendall(&t, &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert!((kendall(&t, &[1.0, 3.0, 2.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(kendall(&t, &[5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert!(kendall(&[1.0, 1.0], &[2.0, 2.0]).is_err());
    }

    #[test]
    fn kendall_tau_b_with_ties_matches_reference() {
        // scipy.stats.kendalltau([1,2,2,3,4], [2,1,3,3,5]) -> 0.6666666666666666
        let tau = kendall(&[1.0, 2.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 3.0, 3.0, 5.0]).unwrap();
        assert!((tau - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mannwhitney_small_exact() {
        let r = mannwhitney(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0 / 3.0).abs() < 1e-15);
        let less = mannwhitney_with(&[1.0, 2.0], &[3.0, 4.0], Alternative::Less).unwrap();
        assert!((less.p_value - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn mannwhitney_identical_samples() {
        let a = [0.3, 1.2, -0.5, 2.2, 0.9];
        assert!(mannwhitney(&a, &a).unwrap().p_value >= 0.99);
        assert_eq!(mannwhitney(&[1.0; 4], &[1.0; 6]).unwrap().p_value, 1.0);
    }

    #[test]
    fn mannwhitney_normal_approx_matches_reference() {
        // scipy.stats.mannwhitneyu(a, b, method="asymptotic") with use_continuity=True
        let a: Vec<f64> = (0..15).map(|i| f64::from(i) * 1.5).collect();
        let b: Vec<f64> = (0..12).map(|i| f64::from(i) * 1.1 + 4.0).collect();
        let r = mannwhitney(&a, &b).unwrap();
        assert_eq!(r.statistic, 93.5);
        assert!((r.p_value - 0.883_599_818_984_277_5).abs() < 1e-9, "{}", r.p_value);
    }

    #[test]
    fn u_distribution_sums_to_binomial() {
        let d = u_distribution(4, 6);
        assert_eq!(d.iter().sum::<f64>(), 210.0);
        assert_eq!(d.len(), 25);
        assert_eq!(d[0], 1.0);
        assert_eq!(d[24], 1.0);
    }

    #[test]
    fn dagostino_requires_twenty() {
        assert!(dagostino_k2(&[1.0; 19]).is_err());
        assert_eq!(k2_pvalue(0.0), 1.0);
    }

    #[test]
    fn dagostino_matches_reference() {
        // scipy.stats.normaltest(x) for x_i = (i * 0.37) mod 1.9 ** 1.3, i = 0..40
        let x: Vec<f64> = (0..40).map(|i| (f64::from(i) * 0.37 % 1.9).powf(1.3)).collect();
        let r = dagostino_k2(&x).unwrap();
        assert!((r.statistic - REF_K2).abs() < 1e-8, "{}", r.statistic);
        assert!((r.p_value - REF_P).abs() < 1e-9, "{}", r.p_value);
    }

    const REF_K2: f64 = 6.972_677_558_384_515;
    const REF_P: f64 = 0.030_612_747_273_822_33;
}
