use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::env::TaskSpec;
use crate::error::{Error, Result};
use crate::reward::{RewardConfig, RewardMode};
use crate::td3::Td3Config;

/// Keys a config file must set explicitly; everything else has a default.
pub const REQUIRED_KEYS: [&str; 5] = [
    "task.object_shape",
    "task.target_height",
    "task.max_steps",
    "episodes",
    "output_dir",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: TaskSpec,
    /// `reward.mode` is ignored; each run uses one entry of `modes`.
    pub reward: RewardConfig,
    pub td3: Td3Config,
    pub episodes: usize,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub modes: Vec<RewardMode>,
    pub checkpoint_every: usize,
    pub eval_workers: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: TaskSpec::default(),
            reward: RewardConfig::default(),
            td3: Td3Config::default(),
            episodes: 1000,
            eval_episodes: 50,
            seeds: vec![0, 1, 2, 3, 4],
            modes: RewardMode::ALL.to_vec(),
            checkpoint_every: 100,
            eval_workers: 1,
            output_dir: PathBuf::from("runs"),
        }
    }
}

fn lookup<'a>(table: &'a Table, dotted: &str) -> Option<&'a Value> {
    let mut parts = dotted.split('.');
    let mut cur = table.get(parts.next()?)?;
    for p in parts {
        cur = cur.as_table()?.get(p)?;
    }
    Some(cur)
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

// Overlays `user` onto `base`, rejecting unknown keys and type mismatches
// with the dotted path of the offending key. Integers are accepted where
// floats are expected.
fn overlay(base: &mut Table, user: &Table, prefix: &str) -> Result<()> {
    for (key, value) in user {
        let path = join(prefix, key);
        let slot = base
            .get_mut(key)
            .ok_or_else(|| Error::config(path.clone(), "unknown key"))?;
        match (&mut *slot, value) {
            (Value::Table(b), Value::Table(u)) => overlay(b, u, &path)?,
            (Value::Float(_), Value::Integer(i)) => *slot = Value::Float(*i as f64),
            (Value::Array(b), Value::Array(u)) => {
                let proto = b.first().cloned();
                let mut items = Vec::with_capacity(u.len());
                for (i, item) in u.iter().enumerate() {
                    let item = match (&proto, item) {
                        (Some(Value::Float(_)), Value::Integer(v)) => Value::Float(*v as f64),
                        (Some(p), it) if p.type_str() != it.type_str() => {
                            return Err(Error::config(
                                format!("{path}[{i}]"),
                                format!("expected {}, found {}", p.type_str(), it.type_str()),
                            ))
                        }
                        (_, it) => it.clone(),
                    };
                    items.push(item);
                }
                *slot = Value::Array(items);
            }
            (b, u) if b.type_str() == u.type_str() => *slot = u.clone(),
            (b, u) => {
                return Err(Error::config(
                    path,
                    format!("expected {}, found {}", b.type_str(), u.type_str()),
                ))
            }
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.to_string().trim().to_string()))?;
        for key in REQUIRED_KEYS {
            if lookup(&user, key).is_none() {
                return Err(Error::config(key, "required key is missing"));
            }
        }
        let mut base = match Value::try_from(RunConfig::default()) {
            Ok(Value::Table(t)) => t,
            _ => unreachable!("default config serializes to a table"),
        };
        overlay(&mut base, &user, "")?;
        let cfg: RunConfig = Value::Table(base)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.to_string().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.reward.validate()?;
        self.td3.validate()?;
        if self.episodes == 0 {
            return Err(Error::config("episodes", "must be at least 1"));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("eval_episodes", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "needs at least one seed"));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        if self.modes.is_empty() {
            return Err(Error::config("modes", "needs at least one reward mode"));
        }
        let mut modes = self.modes.clone();
        modes.sort_unstable();
        modes.dedup();
        if modes.len() != self.modes.len() {
            return Err(Error::config("modes", "modes must be distinct"));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::config("checkpoint_every", "must be at least 1"));
        }
        if self.eval_workers == 0 {
            return Err(Error::config("eval_workers", "must be at least 1"));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of every setting that affects
    /// results; `output_dir` and `eval_workers` are excluded.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            output_dir: PathBuf::new(),
            eval_workers: 1,
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("run config serializes to JSON");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Reward settings for one run.
    pub fn reward_for(&self, mode: RewardMode) -> RewardConfig {
        RewardConfig {
            mode,
            ..self.reward.clone()
        }
    }

    /// Task settings for one seed.
    pub fn task_for(&self, seed: u64) -> TaskSpec {
        TaskSpec {
            seed,
            ..self.task.clone()
        }
    }

    pub fn td3_for(&self, seed: u64) -> Td3Config {
        Td3Config {
            seed,
            ..self.td3.clone()
        }
    }
}
