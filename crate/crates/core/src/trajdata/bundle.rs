//! On-disk bundle format.
//!
//! ```text
//! <bundle>/manifest.json
//! <bundle>/data/<train_step>_<episode_index>.lat   little-endian f32, row-major T x n
//! <bundle>/data/<train_step>_<episode_index>.rew   little-endian f64, length T
//! ```
//!
//! Shapes live only in the manifest; data files are headerless.

use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    return_mismatch, CheckpointRecord, EpisodeRecord, GroundTruth, LatentTrajectory, RunRecord,
    Violation, ViolationKind,
};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

const MANIFEST: &str = "manifest.json";
const DATA_DIR: &str = "data";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    schema_version: u32,
    run_id: String,
    env_name: String,
    algorithm: String,
    architecture: String,
    n_units: usize,
    checkpoints: Vec<ManifestCheckpoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<GroundTruth>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestCheckpoint {
    train_step: u64,
    episodes: Vec<ManifestEpisode>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEpisode {
    latents_file: String,
    rewards_file: String,
    #[serde(rename = "T")]
    n_steps: usize,
    seed: u64,
    episode_return: f64,
}

/// Every invariant violation found in a bundle; empty iff [`read_bundle`] succeeds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Writes `run` to `dir`, creating the directory if needed.
///
/// Latents are narrowed to f32; values that are not exactly representable as f32
/// will not survive a round trip bit-for-bit.
pub fn write_bundle(run: &RunRecord, dir: &Path) -> Result<()> {
    let violations = run.violations();
    if !violations.is_empty() {
        return Err(Error::InvalidBundle(violations));
    }
    let data_dir = dir.join(DATA_DIR);
    fs::create_dir_all(&data_dir).map_err(|e| Error::io(&data_dir, e))?;

    let mut checkpoints = Vec::with_capacity(run.checkpoints.len());
    for cp in &run.checkpoints {
        let mut episodes = Vec::with_capacity(cp.episodes.len());
        for (ei, ep) in cp.episodes.iter().enumerate() {
            let stem = format!("{}_{}", cp.train_step, ei);
            let latents_file = format!("{DATA_DIR}/{stem}.lat");
            let rewards_file = format!("{DATA_DIR}/{stem}.rew");

            let lat: Vec<u8> = ep
                .latents
                .values()
                .iter()
                .flat_map(|&v| (v as f32).to_le_bytes())
                .collect();
            let rew: Vec<u8> = ep.step_rewards.iter().flat_map(|v| v.to_le_bytes()).collect();
            write_file(&dir.join(&latents_file), &lat)?;
            write_file(&dir.join(&rewards_file), &rew)?;

            episodes.push(ManifestEpisode {
                latents_file,
                rewards_file,
                n_steps: ep.latents.n_steps(),
                seed: ep.seed,
                episode_return: ep.episode_return,
            });
        }
        checkpoints.push(ManifestCheckpoint {
            train_step: cp.train_step,
            episodes,
        });
    }

    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        run_id: run.run_id.clone(),
        env_name: run.env_name.clone(),
        algorithm: run.algorithm.clone(),
        architecture: run.architecture.clone(),
        n_units: run.n_units,
        checkpoints,
        ground_truth: run.ground_truth.clone(),
    };
    let path = dir.join(MANIFEST);
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    write_file(&path, &json)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads and fully validates a bundle.
pub fn read_bundle(dir: &Path) -> Result<RunRecord> {
    let (run, violations) = load(dir);
    match run {
        Some(run) if violations.is_empty() => Ok(run),
        _ => Err(Error::InvalidBundle(violations)),
    }
}

pub fn validate_bundle(dir: &Path) -> ValidationReport {
    ValidationReport {
        violations: load(dir).1,
    }
}

fn load(dir: &Path) -> (Option<RunRecord>, Vec<Violation>) {
    let mut violations = Vec::new();
    let manifest_path = dir.join(MANIFEST);
    let bytes = match fs::read(&manifest_path) {
        Ok(b) => b,
        Err(e) => {
            violations.push(Violation::run(
                ViolationKind::MissingManifest,
                format!("cannot read {}: {e}", manifest_path.display()),
            ));
            return (None, violations);
        }
    };
    // Check the version before the full schema so old/new layouts get a precise error.
    match serde_json::from_slice::<serde_json::Value>(&bytes) {
        Ok(value) => {
            let version = value.get("schema_version").and_then(serde_json::Value::as_u64);
            if version != Some(u64::from(SCHEMA_VERSION)) {
                violations.push(Violation::run(
                    ViolationKind::UnsupportedSchema,
                    format!("schema_version {version:?} is not supported (expected {SCHEMA_VERSION})"),
                ));
                return (None, violations);
            }
        }
        Err(e) => {
            violations.push(Violation::run(
                ViolationKind::CorruptManifest,
                format!("manifest is not valid JSON: {e}"),
            ));
            return (None, violations);
        }
    }
    let manifest: Manifest = match serde_json::from_slice(&bytes) {
        Ok(m) => m,
        Err(e) => {
            violations.push(Violation::run(
                ViolationKind::CorruptManifest,
                format!("manifest does not match the schema: {e}"),
            ));
            return (None, violations);
        }
    };

    if manifest.n_units < 2 {
        violations.push(Violation::run(
            ViolationKind::Shape,
            format!("n_units = {} (at least 2 required)", manifest.n_units),
        ));
    }
    if manifest.checkpoints.is_empty() {
        violations.push(Violation::run(ViolationKind::Shape, "run has no checkpoints"));
    }
    for (ci, pair) in manifest.checkpoints.windows(2).enumerate() {
        if pair[1].train_step <= pair[0].train_step {
            violations.push(
                Violation::run(
                    ViolationKind::Ordering,
                    format!(
                        "train_step {} follows {}; steps must be strictly increasing",
                        pair[1].train_step, pair[0].train_step
                    ),
                )
                .at_checkpoint(ci + 1),
            );
        }
    }

    let mut checkpoints = Vec::with_capacity(manifest.checkpoints.len());
    for (ci, mcp) in manifest.checkpoints.iter().enumerate() {
        if mcp.episodes.is_empty() {
            violations.push(
                Violation::run(ViolationKind::Shape, "checkpoint has no episodes").at_checkpoint(ci),
            );
        }
        let mut episodes = Vec::with_capacity(mcp.episodes.len());
        for (ei, mep) in mcp.episodes.iter().enumerate() {
            let before = violations.len();
            let episode = load_episode(dir, &manifest, mcp.train_step, ei, mep, &mut |v| {
                violations.push(v.at_checkpoint(ci).at_episode(ei))
            });
            if let Some(ep) = episode.filter(|_| violations.len() == before) {
                episodes.push(ep);
            }
        }
        if episodes.len() == mcp.episodes.len() && !episodes.is_empty() {
            if let Ok(cp) = CheckpointRecord::new(mcp.train_step, episodes) {
                checkpoints.push(cp);
            }
        }
    }

    if !violations.is_empty() {
        return (None, violations);
    }
    let run = RunRecord {
        run_id: manifest.run_id,
        env_name: manifest.env_name,
        algorithm: manifest.algorithm,
        architecture: manifest.architecture,
        n_units: manifest.n_units,
        checkpoints,
        ground_truth: manifest.ground_truth,
    };
    (Some(run), violations)
}

fn load_episode(
    dir: &Path,
    manifest: &Manifest,
    train_step: u64,
    index: usize,
    mep: &ManifestEpisode,
    report: &mut dyn FnMut(Violation),
) -> Option<EpisodeRecord> {
    let n = manifest.n_units;
    let t = mep.n_steps;
    if t < 2 {
        report(Violation::run(
            ViolationKind::Shape,
            format!("T = {t} (at least 2 required)"),
        ));
    }
    let lat_bytes = read_data_file(dir, &mep.latents_file, report);
    let rew_bytes = read_data_file(dir, &mep.rewards_file, report);

    let mut ok = t >= 2 && n >= 2;
    let latents = lat_bytes.and_then(|bytes| {
        if bytes.len() != 4 * t * n {
            report(Violation::run(
                ViolationKind::ShapeMismatch,
                format!(
                    "{} holds {} bytes; manifest shape {t}x{n} requires {}",
                    mep.latents_file,
                    bytes.len(),
                    4 * t * n
                ),
            ));
            return None;
        }
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        let mut finite = true;
        for (pos, v) in values.iter().enumerate() {
            if !v.is_finite() {
                finite = false;
                report(
                    Violation::run(
                        ViolationKind::NonFinite,
                        format!("non-finite latent value in {}", mep.latents_file),
                    )
                    .at_cell(pos / n, Some(pos % n)),
                );
            }
        }
        finite.then_some(values)
    });
    let rewards = rew_bytes.and_then(|bytes| {
        if bytes.len() != 8 * t {
            report(Violation::run(
                ViolationKind::RewardLength,
                format!(
                    "{} holds {} rewards; manifest T = {t}",
                    mep.rewards_file,
                    bytes.len() as f64 / 8.0
                ),
            ));
            return None;
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        if let Some(row) = values.iter().position(|r| !r.is_finite()) {
            report(
                Violation::run(
                    ViolationKind::NonFinite,
                    format!("non-finite reward in {}", mep.rewards_file),
                )
                .at_cell(row, None),
            );
            return None;
        }
        Some(values)
    });
    let (Some(latents), Some(rewards)) = (latents, rewards) else {
        return None;
    };
    if let Some(v) = return_mismatch(mep.episode_return, &rewards) {
        report(v);
        ok = false;
    }
    if !ok {
        return None;
    }
    let episode_id = format!("{train_step}_{index}");
    let latents = LatentTrajectory::new(episode_id, t, n, latents).ok()?;
    Some(EpisodeRecord {
        latents,
        step_rewards: rewards,
        episode_return: mep.episode_return,
        seed: mep.seed,
    })
}

fn read_data_file(dir: &Path, rel: &str, report: &mut dyn FnMut(Violation)) -> Option<Vec<u8>> {
    let rel_path = PathBuf::from(rel);
    let relative = rel_path
        .components()
        .all(|c| matches!(c, Component::Normal(_) | Component::CurDir));
    if !relative {
        report(Violation::run(
            ViolationKind::BadPath,
            format!("{rel:?} must be a relative path inside the bundle"),
        ));
        return None;
    }
    match fs::read(dir.join(&rel_path)) {
        Ok(bytes) => Some(bytes),
        Err(e) => {
            report(Violation::run(
                ViolationKind::MissingFile,
                format!("cannot read {rel}: {e}"),
            ));
            None
        }
    }
}
