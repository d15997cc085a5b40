use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Shape, TaskSpec, ACTION_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::neural::Network;
use crate::reward::RewardMode;
use crate::task::{EpisodeMetrics, GraspTask};
use crate::td3::train::EVAL_EPISODE_OFFSET;
use crate::td3::{unbundle_networks, Environment};

use super::{mean, open_run, read_text, write_file, write_json, CheckpointRecord, RunConfig, RunFilter};

pub const EVAL_SCALES: [f64; 3] = [0.9, 1.0, 1.1];
pub const EVAL_DIR: &str = "eval";
pub const EVAL_ROWS_FILE: &str = "eval/episodes.csv";
pub const EVAL_REPORT_FILE: &str = "eval/report.json";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub filter: RunFilter,
    pub shapes: Vec<Shape>,
    pub scales: Vec<f64>,
    /// Overrides `eval_episodes` from the config.
    pub episodes: Option<usize>,
    /// Checkpoint episode to load; the final checkpoint when `None`.
    pub checkpoint: Option<usize>,
    /// Worker threads; `eval_workers` from the config when `None`.
    pub workers: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            filter: RunFilter::default(),
            shapes: Shape::ALL.to_vec(),
            scales: EVAL_SCALES.to_vec(),
            episodes: None,
            checkpoint: None,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub mode: RewardMode,
    pub seed: u64,
    pub checkpoint: usize,
    pub shape: Shape,
    pub scale: f64,
    pub episode: usize,
    pub success: bool,
    pub height_error: f64,
    pub dist_obj_hand: f64,
    pub q_vev: f64,
    pub total_reward: f64,
}

impl EvalRow {
    pub const CSV_HEADER: &'static str =
        "mode,seed,checkpoint,shape,scale,episode,success,height_error,dist_obj_hand,q_vev,total_reward";

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.mode.name(),
            self.seed,
            self.checkpoint,
            self.shape.name(),
            self.scale,
            self.episode,
            u8::from(self.success),
            self.height_error,
            self.dist_obj_hand,
            self.q_vev,
            self.total_reward
        )
    }
}

pub fn rows_to_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from(EvalRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

pub fn parse_eval_rows(text: &str) -> Result<Vec<EvalRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == EvalRow::CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                reason: "unexpected evaluation header".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let err = |reason: String| Error::Parse { line: i + 1, reason };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 11 {
                return Err(err(format!("expected 11 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("`{s}`: {e}")));
            let int = |s: &str| s.parse::<u64>().map_err(|e| err(format!("`{s}`: {e}")));
            Ok(EvalRow {
                mode: f[0].parse().map_err(|e: Error| err(e.to_string()))?,
                seed: int(f[1])?,
                checkpoint: int(f[2])? as usize,
                shape: f[3].parse().map_err(|e: Error| err(e.to_string()))?,
                scale: num(f[4])?,
                episode: int(f[5])? as usize,
                success: f[6] == "1",
                height_error: num(f[7])?,
                dist_obj_hand: num(f[8])?,
                q_vev: num(f[9])?,
                total_reward: num(f[10])?,
            })
        })
        .collect()
}

pub fn load_eval_rows(run_dir: &Path) -> Result<Vec<EvalRow>> {
    let path = run_dir.join(EVAL_ROWS_FILE);
    if !path.exists() {
        return Err(Error::Protocol(format!(
            "{} not found; run the eval command first",
            path.display()
        )));
    }
    parse_eval_rows(&read_text(&path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_height_error: f64,
    pub mean_dist_obj_hand: f64,
    pub mean_q_vev: f64,
}

impl MetricSummary {
    pub fn from_rows(rows: &[&EvalRow]) -> Self {
        let successes = rows.iter().filter(|r| r.success).count();
        let col = |f: fn(&EvalRow) -> f64| mean(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
        MetricSummary {
            episodes: rows.len(),
            success_rate: if rows.is_empty() {
                0.0
            } else {
                100.0 * successes as f64 / rows.len() as f64
            },
            mean_height_error: col(|r| r.height_error),
            mean_dist_obj_hand: col(|r| r.dist_obj_hand),
            mean_q_vev: col(|r| r.q_vev),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub shape: Shape,
    pub scale: f64,
    pub mode: RewardMode,
    #[serde(flatten)]
    pub metrics: MetricSummary,
    pub per_seed: Vec<SeedSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub cells: Vec<EvalCell>,
}

fn scale_key(s: f64) -> u64 {
    s.to_bits()
}

impl EvalReport {
    /// Aggregates per-episode rows; the report is a pure function of them.
    pub fn from_rows(config_hash: &str, rows: &[EvalRow]) -> Self {
        let mut cells: BTreeMap<(Shape, u64, RewardMode), Vec<&EvalRow>> = BTreeMap::new();
        for r in rows {
            cells.entry((r.shape, scale_key(r.scale), r.mode)).or_default().push(r);
        }
        let cells = cells
            .into_iter()
            .map(|((shape, scale, mode), rows)| {
                let mut by_seed: BTreeMap<u64, Vec<&EvalRow>> = BTreeMap::new();
                for r in &rows {
                    by_seed.entry(r.seed).or_default().push(r);
                }
                EvalCell {
                    shape,
                    scale: f64::from_bits(scale),
                    mode,
                    metrics: MetricSummary::from_rows(&rows),
                    per_seed: by_seed
                        .into_iter()
                        .map(|(seed, rs)| SeedSummary {
                            seed,
                            metrics: MetricSummary::from_rows(&rs),
                        })
                        .collect(),
                }
            })
            .collect();
        EvalReport {
            config_hash: config_hash.to_string(),
            cells,
        }
    }
}

/// Expected actor layer widths for a config.
pub fn actor_dims(config: &RunConfig) -> Vec<usize> {
    let mut d = vec![OBS_DIM];
    d.extend(&config.td3.hidden);
    d.push(ACTION_DIM);
    d
}

pub fn load_actor(run_dir: &Path, checkpoint: &CheckpointRecord, config: &RunConfig) -> Result<Network> {
    if checkpoint.config_hash != config.hash() {
        return Err(Error::Checkpoint(format!(
            "checkpoint {} was written for config {}, not {}",
            checkpoint.file,
            checkpoint.config_hash,
            config.hash()
        )));
    }
    let path = run_dir.join(&checkpoint.file);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let actor = unbundle_networks(&bytes)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::Checkpoint(format!("{} holds no networks", path.display())))?;
    let expected = actor_dims(config);
    if actor.dims() != expected {
        return Err(Error::Checkpoint(format!(
            "{} has actor layers {:?} but the config expects {:?}",
            path.display(),
            actor.dims(),
            expected
        )));
    }
    Ok(actor)
}

/// One deterministic episode of `actor` on `spec`.
pub fn run_policy_episode(
    actor: &Network,
    spec: TaskSpec,
    mode: RewardMode,
    config: &RunConfig,
    index: u64,
    trace: bool,
) -> Result<(EpisodeMetrics, GraspTask)> {
    let mut task = GraspTask::new(spec, config.reward_for(mode))?.with_trace(trace);
    let mut obs = task.reset(index)?;
    for _ in 0..task.max_steps() {
        let mut a = actor.predict(&obs)?;
        a.iter_mut().for_each(|x| *x = x.clamp(-1.0, 1.0));
        obs = task.step(&a)?.observation;
    }
    Ok((task.metrics()?, task))
}

/// Evaluates the selected checkpoints of every run on each (shape, scale)
/// cell with the deterministic policy and writes per-episode rows and the
/// aggregate report under `<run_dir>/eval`.
pub fn cmd_eval(run_dir: &Path, options: &EvalOptions) -> Result<EvalReport> {
    let (config, manifest) = open_run(run_dir)?;
    let episodes = options.episodes.unwrap_or(config.eval_episodes);
    if episodes == 0 {
        return Err(Error::config("eval_episodes", "must be at least 1"));
    }
    for &s in &options.scales {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::config("scale", format!("must be positive, got {s}")));
        }
    }
    let runs: Vec<_> = manifest
        .runs
        .iter()
        .filter(|r| options.filter.seed.is_none_or(|s| s == r.seed))
        .filter(|r| options.filter.mode.is_none_or(|m| m == r.mode))
        .collect();
    if runs.is_empty() {
        return Err(Error::Protocol("no training runs match the selection".into()));
    }

    let mut actors = Vec::new();
    for run in &runs {
        let ckpt = match options.checkpoint {
            Some(ep) => run.checkpoint_at(ep),
            None => run.final_checkpoint(),
        }
        .ok_or_else(|| {
            Error::Protocol(format!(
                "run {} seed {} has no checkpoint{}",
                run.mode,
                run.seed,
                options
                    .checkpoint
                    .map(|e| format!(" at episode {e}"))
                    .unwrap_or_default()
            ))
        })?;
        actors.push((run.mode, run.seed, ckpt.episode, load_actor(run_dir, ckpt, &config)?));
    }

    let mut jobs = Vec::new();
    for (i, _) in actors.iter().enumerate() {
        for &shape in &options.shapes {
            for &scale in &options.scales {
                for k in 0..episodes {
                    jobs.push((i, shape, scale, k));
                }
            }
        }
    }
    let workers = options.workers.unwrap_or(config.eval_workers).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Protocol(format!("cannot start evaluation workers: {e}")))?;
    let rows: Vec<EvalRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, shape, scale, k)| {
                let (mode, seed, checkpoint, actor) = &actors[i];
                let spec = TaskSpec {
                    object_shape: shape,
                    object_scale: scale,
                    ..config.task_for(*seed)
                };
                let (m, _) = run_policy_episode(actor, spec, *mode, &config, EVAL_EPISODE_OFFSET + k as u64, false)?;
                Ok(EvalRow {
                    mode: *mode,
                    seed: *seed,
                    checkpoint: *checkpoint,
                    shape,
                    scale,
                    episode: k,
                    success: m.success,
                    height_error: m.height_error,
                    dist_obj_hand: m.dist_obj_hand,
                    q_vev: m.q_vev,
                    total_reward: m.total_reward,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let report = EvalReport::from_rows(&manifest.config_hash, &rows);
    std::fs::create_dir_all(run_dir.join(EVAL_DIR)).map_err(|e| Error::io(run_dir.join(EVAL_DIR), e))?;
    write_file(&run_dir.join(EVAL_ROWS_FILE), rows_to_csv(&rows))?;
    write_json(&run_dir.join(EVAL_REPORT_FILE), &report)?;
    Ok(report)
}
