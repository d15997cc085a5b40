use std::fmt::Write as _;

use rand::RngExt;

use super::{ReplayBuffer, Td3Agent, Transition};
use crate::error::{Error, Result};
use crate::neural::Network;

/// Episode indices at or above this value are reserved for evaluation so
/// evaluation resets never reuse a training episode's initial state.
pub const EVAL_EPISODE_OFFSET: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// True terminal. Time-limit cutoffs are handled by the caller.
    pub terminal: bool,
}

/// Summary an environment reports once an episode has ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    pub success: bool,
    pub first_lambda: Option<usize>,
    pub first_mu: Option<usize>,
    pub first_v: Option<usize>,
    /// `v <= mu <= lambda` held on every step of the episode.
    pub gate_chain_ok: bool,
}

impl Default for EpisodeStats {
    fn default() -> Self {
        EpisodeStats {
            success: false,
            first_lambda: None,
            first_mu: None,
            first_v: None,
            gate_chain_ok: true,
        }
    }
}

pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn max_steps(&self) -> usize;
    /// Starts episode `episode`; the initial state must be a pure function
    /// of the environment's seed and this index.
    fn reset(&mut self, episode: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
    fn episode_stats(&self) -> EpisodeStats {
        EpisodeStats::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub total_reward: f64,
    pub steps: usize,
    pub stats: EpisodeStats,
    pub critic_updates: u64,
    pub actor_updates: u64,
    pub buffer_len: usize,
    /// Environment steps taken since training started.
    pub total_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSnapshot {
    pub episode: usize,
    pub mean_return: f64,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub episodes: Vec<EpisodeRecord>,
    pub evaluations: Vec<EvalSnapshot>,
    pub total_steps: u64,
}

fn opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainLog {
    pub const CSV_HEADER: &'static str =
        "episode,total_reward,steps,success,first_lambda,first_mu,first_v,gate_chain_ok,critic_updates,actor_updates";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.episodes {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.episode,
                r.total_reward,
                r.steps,
                u8::from(r.stats.success),
                opt(r.stats.first_lambda),
                opt(r.stats.first_mu),
                opt(r.stats.first_v),
                u8::from(r.stats.gate_chain_ok),
                r.critic_updates,
                r.actor_updates,
            );
        }
        out
    }

    pub fn returns(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.total_reward).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub episodes: usize,
    /// Run a deterministic evaluation after every `eval_every` episodes;
    /// 0 disables it.
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl TrainOptions {
    pub fn episodes(episodes: usize) -> Self {
        TrainOptions {
            episodes,
            eval_every: 0,
            eval_episodes: 0,
        }
    }
}

/// Runs `episodes` deterministic (noise-free) episodes starting at reset
/// index `first_index` and returns their total rewards.
pub fn evaluate_policy<E: Environment + ?Sized>(
    env: &mut E,
    actor: &Network,
    episodes: usize,
    first_index: u64,
) -> Result<Vec<f64>> {
    (0..episodes)
        .map(|k| {
            let mut obs = env.reset(first_index + k as u64)?;
            let mut total = 0.0;
            for _ in 0..env.max_steps() {
                let mut a = actor.predict(&obs)?;
                a.iter_mut().for_each(|x| *x = x.clamp(-1.0, 1.0));
                let s = env.step(&a)?;
                total += s.reward;
                obs = s.observation;
                if s.terminal {
                    break;
                }
            }
            Ok(total)
        })
        .collect()
}

/// Trains `agent` on `env`. Uniform random actions are used until
/// `warmup_steps` environment steps have been taken, then noisy policy
/// actions; after warmup every environment step triggers one update.
/// `on_episode` runs after each episode (checkpointing hooks in here).
pub fn train<E, F>(
    env: &mut E,
    agent: &mut Td3Agent,
    buffer: &mut ReplayBuffer,
    options: &TrainOptions,
    mut on_episode: F,
) -> Result<TrainLog>
where
    E: Environment + ?Sized,
    F: FnMut(&EpisodeRecord, &Td3Agent) -> Result<()>,
{
    if env.obs_dim() != agent.obs_dim() || env.action_dim() != agent.action_dim() {
        return Err(Error::invalid("environment and agent dimensions differ"));
    }
    let mut log = TrainLog::default();
    let warmup = agent.config.warmup_steps as u64;
    let noise = agent.config.exploration_noise_std;
    let adim = env.action_dim();

    for episode in 0..options.episodes {
        let mut obs = env.reset(episode as u64)?;
        let mut total = 0.0;
        let mut steps = 0;
        while steps < env.max_steps() {
            let action: Vec<f64> = if log.total_steps < warmup {
                (0..adim).map(|_| agent.rng.random_range(-1.0..=1.0)).collect()
            } else {
                agent.act(&obs, noise)?
            };
            let s = env.step(&action)?;
            if !s.reward.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite reward {} at episode {episode} step {steps}",
                    s.reward
                )));
            }
            buffer.push(Transition {
                state: obs,
                action,
                reward: s.reward,
                next_state: s.observation.clone(),
                done: s.terminal,
            })?;
            total += s.reward;
            steps += 1;
            log.total_steps += 1;
            obs = s.observation;
            if log.total_steps > warmup && buffer.len() >= agent.config.batch_size {
                agent.update(buffer).map_err(|e| match e {
                    Error::Numerical(m) => Error::Numerical(format!("episode {episode} step {steps}: {m}")),
                    other => other,
                })?;
            }
            if s.terminal {
                break;
            }
        }
        let record = EpisodeRecord {
            episode,
            total_reward: total,
            steps,
            stats: env.episode_stats(),
            critic_updates: agent.critic_updates,
            actor_updates: agent.actor_updates,
            buffer_len: buffer.len(),
            total_steps: log.total_steps,
        };
        on_episode(&record, agent)?;
        log.episodes.push(record);

        if options.eval_every > 0 && (episode + 1) % options.eval_every == 0 {
            let returns = evaluate_policy(env, &agent.actor, options.eval_episodes, EVAL_EPISODE_OFFSET)?;
            let mean_return = returns.iter().sum::<f64>() / returns.len().max(1) as f64;
            log.evaluations.push(EvalSnapshot {
                episode: episode + 1,
                mean_return,
                returns,
            });
        }
    }
    Ok(log)
}
