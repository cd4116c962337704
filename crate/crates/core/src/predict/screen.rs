//! Per-run rank correlation of each baseline metric with emergence over checkpoints.

use serde::{Deserialize, Serialize};

use super::stats::spearman;
use crate::analysis::RunSeries;
use crate::error::{Error, Result};
use crate::metrics::MetricVector;

pub const MIN_SCREEN_CHECKPOINTS: usize = 5;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCorrelation {
    pub run_id: String,
    /// `None` when either series is constant.
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScreen {
    pub metric: String,
    pub fraction_significant: f64,
    pub runs: Vec<RunCorrelation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub alpha: f64,
    pub n_runs: usize,
    pub metrics: Vec<MetricScreen>,
    pub skipped_runs: Vec<String>,
    pub warnings: Vec<String>,
}

/// Spearman correlation of every baseline series with the emergence series, run by run.
///
/// Runs with fewer than [`MIN_SCREEN_CHECKPOINTS`] checkpoints are skipped.
/// A constant series makes its correlation undefined; it counts as not significant.
pub fn screen_correlations(series: &[RunSeries], alpha: f64) -> Result<ScreenReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::input(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut warnings = Vec::new();
    let mut skipped_runs = Vec::new();
    let mut used = Vec::new();
    for s in series {
        if s.n_checkpoints() < MIN_SCREEN_CHECKPOINTS {
            warnings.push(format!(
                "{}: {} checkpoints, fewer than {MIN_SCREEN_CHECKPOINTS}; run skipped",
                s.run_id,
                s.n_checkpoints()
            ));
            skipped_runs.push(s.run_id.clone());
        } else {
            used.push(s);
        }
    }
    if used.is_empty() {
        return Err(Error::input(format!(
            "no run has at least {MIN_SCREEN_CHECKPOINTS} checkpoints"
        )));
    }
    let metrics = MetricVector::NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let runs: Vec<RunCorrelation> = used
                .iter()
                .map(|s| match spearman(&s.baselines.series(k), &s.emergence.phi) {
                    Ok(t) => RunCorrelation {
                        run_id: s.run_id.clone(),
                        rho: Some(t.statistic),
                        p_value: Some(t.p_value),
                        significant: t.p_value < alpha,
                    },
                    Err(e) => {
                        warnings.push(format!("{}: {name}: {e}; counted as not significant", s.run_id));
                        RunCorrelation {
                            run_id: s.run_id.clone(),
                            rho: None,
                            p_value: None,
                            significant: false,
                        }
                    }
                })
                .collect();
            let hits = runs.iter().filter(|r| r.significant).count();
            MetricScreen {
                metric: (*name).to_string(),
                fraction_significant: hits as f64 / runs.len() as f64,
                runs,
            }
        })
        .collect();
    Ok(ScreenReport {
        alpha,
        n_runs: used.len(),
        metrics,
        skipped_runs,
        warnings,
    })
}
