//! Run orchestration: configuration, training and evaluation artifacts,
//! comparisons between reward modes and plot exports.
//!
//! A run directory looks like:
//!
//! ```text
//! <output_dir>/config.toml
//! <output_dir>/manifest.json
//! <output_dir>/runs/<mode>/seed-<n>/train_log.csv
//! <output_dir>/runs/<mode>/seed-<n>/checkpoints/episode-<k>.{bin,json}
//! <output_dir>/eval/{episodes.csv,report.json}
//! <output_dir>/compare/{report.json,curves.csv}
//! <output_dir>/plots/{episode_trace.csv,gate_steps.csv,reward_curves.csv,plot_rewards.py}
//! ```

pub mod compare;
pub mod config;
pub mod eval;
pub mod export;
pub mod quality;
pub mod train;

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::RewardMode;

pub use compare::{cmd_compare, CompareReport};
pub use config::RunConfig;
pub use eval::{cmd_eval, EvalOptions, EvalReport, EvalRow};
pub use export::{cmd_export_plots, ExportSummary};
pub use quality::{parse_contact_file, quality_reports, QualityReport};
pub use train::{cmd_train, RunFilter};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    /// Hex-encoded 32-byte ChaCha seed.
    pub seed: String,
    pub stream: u64,
    /// Word position as a decimal string (it does not fit in 64 bits).
    pub word_pos: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub config_hash: String,
    pub mode: RewardMode,
    pub seed: u64,
    pub episode: usize,
    pub total_steps: u64,
    pub critic_updates: u64,
    pub actor_updates: u64,
    pub rng: RngState,
    /// Path of the network bundle, relative to the run directory.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: RewardMode,
    pub seed: u64,
    pub episodes: usize,
    pub train_log: String,
    pub checkpoints: Vec<CheckpointRecord>,
}

impl RunRecord {
    pub fn final_checkpoint(&self) -> Option<&CheckpointRecord> {
        self.checkpoints.iter().max_by_key(|c| c.episode)
    }

    pub fn checkpoint_at(&self, episode: usize) -> Option<&CheckpointRecord> {
        self.checkpoints.iter().find(|c| c.episode == episode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub runs: Vec<RunRecord>,
}

impl Manifest {
    pub fn load(run_dir: &Path) -> Result<Self> {
        read_json(&run_dir.join(MANIFEST_FILE))
    }

    pub fn modes(&self) -> Vec<RewardMode> {
        let mut m: Vec<RewardMode> = self.runs.iter().map(|r| r.mode).collect();
        m.sort_unstable();
        m.dedup();
        m
    }
}

pub fn run_subdir(mode: RewardMode, seed: u64) -> PathBuf {
    PathBuf::from("runs").join(mode.name()).join(format!("seed-{seed}"))
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize to JSON");
    text.push('\n');
    write_file(path, text)
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("{}: {e}", path.display())))
}

/// Loads the run's config and manifest and checks they belong together.
pub fn open_run(run_dir: &Path) -> Result<(RunConfig, Manifest)> {
    let config = RunConfig::load(&run_dir.join(CONFIG_FILE))?;
    let manifest = Manifest::load(run_dir)?;
    if manifest.config_hash != config.hash() {
        return Err(Error::Protocol(format!(
            "{} was written for config {} but config.toml hashes to {}",
            MANIFEST_FILE,
            manifest.config_hash,
            config.hash()
        )));
    }
    Ok((config, manifest))
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation; 0 for fewer than two values.
pub(crate) fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
