use std::path::Path;

use crate::env::{ACTION_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::reward::RewardMode;
use crate::task::GraspTask;
use crate::td3::train::{train, TrainLog, TrainOptions};
use crate::td3::{ReplayBuffer, Td3Agent};

use super::{
    read_text, run_subdir, write_file, write_json, CheckpointRecord, Manifest, RngState, RunConfig, RunRecord,
    CONFIG_FILE, MANIFEST_FILE,
};

/// Restricts `cmd_train` to one seed and/or one mode, so runs can be split
/// across processes writing to the same directory.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunFilter {
    pub seed: Option<u64>,
    pub mode: Option<RewardMode>,
}

impl RunFilter {
    pub fn seeds(&self, config: &RunConfig) -> Vec<u64> {
        match self.seed {
            Some(s) => vec![s],
            None => config.seeds.clone(),
        }
    }

    pub fn modes(&self, config: &RunConfig) -> Vec<RewardMode> {
        match self.mode {
            Some(m) => vec![m],
            None => config.modes.clone(),
        }
    }
}

/// One parsed row of `train_log.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub episode: usize,
    pub total_reward: f64,
    pub steps: usize,
    pub success: bool,
    pub first_lambda: Option<usize>,
    pub first_mu: Option<usize>,
    pub first_v: Option<usize>,
    pub gate_chain_ok: bool,
}

pub fn parse_train_log(text: &str) -> Result<Vec<LogRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == TrainLog::CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                reason: "unexpected train log header".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let err = |reason: String| Error::Parse { line: i + 1, reason };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 10 {
                return Err(err(format!("expected 10 fields, found {}", f.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| err(format!("`{s}`: {e}")));
            let opt = |s: &str| if s.is_empty() { Ok(None) } else { int(s).map(Some) };
            Ok(LogRow {
                episode: int(f[0])?,
                total_reward: f[1].parse().map_err(|e| err(format!("`{}`: {e}", f[1])))?,
                steps: int(f[2])?,
                success: f[3] == "1",
                first_lambda: opt(f[4])?,
                first_mu: opt(f[5])?,
                first_v: opt(f[6])?,
                gate_chain_ok: f[7] == "1",
            })
        })
        .collect()
}

pub fn load_train_log(run_dir: &Path, run: &RunRecord) -> Result<Vec<LogRow>> {
    let path = run_dir.join(&run.train_log);
    parse_train_log(&read_text(&path)?).map_err(|e| match e {
        Error::Parse { line, reason } => Error::Protocol(format!("{} line {line}: {reason}", path.display())),
        other => other,
    })
}

fn rng_state(agent: &Td3Agent) -> RngState {
    RngState {
        seed: agent.rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
        stream: agent.rng.get_stream(),
        word_pos: agent.rng.get_word_pos().to_string(),
    }
}

/// Trains one (mode, seed) pair and writes its log and checkpoints under
/// `run_dir`.
pub fn train_run(config: &RunConfig, mode: RewardMode, seed: u64, run_dir: &Path) -> Result<(RunRecord, TrainLog)> {
    let sub = run_subdir(mode, seed);
    let dir = run_dir.join(&sub);
    let hash = config.hash();
    let mut env = GraspTask::new(config.task_for(seed), config.reward_for(mode))?;
    let td3 = config.td3_for(seed);
    let mut buffer = ReplayBuffer::new(td3.buffer_capacity, OBS_DIM, ACTION_DIM)?;
    let mut agent = Td3Agent::new(OBS_DIM, ACTION_DIM, td3)?;
    let mut checkpoints = Vec::new();
    let episodes = config.episodes;
    let every = config.checkpoint_every;

    let log = train(
        &mut env,
        &mut agent,
        &mut buffer,
        &TrainOptions::episodes(episodes),
        |rec, agent| {
            let done = rec.episode + 1;
            if done % every != 0 && done != episodes {
                return Ok(());
            }
            let stem = format!("checkpoints/episode-{done}");
            let file = sub.join(format!("{stem}.bin"));
            write_file(&run_dir.join(&file), agent.checkpoint_bytes())?;
            let record = CheckpointRecord {
                config_hash: hash.clone(),
                mode,
                seed,
                episode: done,
                total_steps: rec.total_steps,
                critic_updates: agent.critic_updates,
                actor_updates: agent.actor_updates,
                rng: rng_state(agent),
                file: file.to_string_lossy().into_owned(),
            };
            write_json(&dir.join(format!("{stem}.json")), &record)?;
            checkpoints.push(record);
            Ok(())
        },
    )?;

    let train_log = sub.join("train_log.csv");
    write_file(&run_dir.join(&train_log), log.to_csv())?;
    let record = RunRecord {
        mode,
        seed,
        episodes,
        train_log: train_log.to_string_lossy().into_owned(),
        checkpoints,
    };
    Ok((record, log))
}

/// Trains every configured (mode, seed) pair, or the subset selected by
/// `filter`, into `config.output_dir`, then merges the results into the
/// directory's manifest.
pub fn cmd_train(config: &RunConfig, filter: RunFilter) -> Result<Manifest> {
    config.validate()?;
    let out = config.output_dir.as_path();
    let hash = config.hash();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let config_path = out.join(CONFIG_FILE);
    if config_path.exists() {
        let existing = RunConfig::load(&config_path)?;
        if existing.hash() != hash {
            return Err(Error::Protocol(format!(
                "{} already holds artifacts for config {}; refusing to mix in config {hash}",
                out.display(),
                existing.hash()
            )));
        }
    }
    write_file(&config_path, config.to_toml_string())?;

    let manifest_path = out.join(MANIFEST_FILE);
    let mut manifest = if manifest_path.exists() {
        let m = Manifest::load(out)?;
        if m.config_hash != hash {
            return Err(Error::Protocol(format!(
                "{} belongs to config {}; refusing to mix in config {hash}",
                manifest_path.display(),
                m.config_hash
            )));
        }
        m
    } else {
        Manifest {
            config_hash: hash.clone(),
            runs: Vec::new(),
        }
    };

    for mode in filter.modes(config) {
        for seed in filter.seeds(config) {
            let (record, _) = train_run(config, mode, seed, out)?;
            manifest.runs.retain(|r| !(r.mode == mode && r.seed == seed));
            manifest.runs.push(record);
            manifest.runs.sort_by_key(|r| (r.mode, r.seed));
            // written after every run so an interrupted sweep keeps its progress
            write_json(&manifest_path, &manifest)?;
        }
    }
    Ok(manifest)
}
