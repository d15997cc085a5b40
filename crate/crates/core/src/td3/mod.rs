//! Twin Delayed Deep Deterministic policy gradient.
//!
//! Twin critics with a clipped double-Q target, target-policy smoothing,
//! and actor/target updates every `policy_delay` critic updates.

pub mod replay;
pub mod toy;
pub mod train;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{adam_step, Activation, AdamState, Gradients, Network};

pub use replay::{Batch, ReplayBuffer, Transition};
pub use train::{train, Environment, EpisodeRecord, EpisodeStats, StepResult, TrainLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Td3Config {
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub tau: f64,
    pub learning_rate: f64,
    pub policy_delay: usize,
    pub exploration_noise_std: f64,
    pub target_noise_std: f64,
    pub target_noise_clip: f64,
    pub warmup_steps: usize,
    pub seed: u64,
    /// Hidden layer widths shared by the actor and both critics.
    pub hidden: Vec<usize>,
}

impl Default for Td3Config {
    fn default() -> Self {
        Td3Config {
            gamma: 0.99,
            batch_size: 256,
            buffer_capacity: 1_000_000,
            tau: 0.005,
            learning_rate: 0.001,
            policy_delay: 2,
            exploration_noise_std: 0.1,
            target_noise_std: 0.2,
            target_noise_clip: 0.5,
            warmup_steps: 1000,
            seed: 0,
            hidden: vec![256, 256],
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        let f = |name: &str, reason: &str| Err(Error::config(format!("td3.{name}"), reason.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return f("gamma", "must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return f("tau", "must lie in (0, 1]");
        }
        if self.policy_delay == 0 {
            return f("policy_delay", "must be at least 1");
        }
        if self.batch_size == 0 {
            return f("batch_size", "must be positive");
        }
        if self.buffer_capacity < self.batch_size {
            return f("buffer_capacity", "must hold at least one batch");
        }
        if !(self.learning_rate > 0.0) {
            return f("learning_rate", "must be positive");
        }
        for (name, v) in [
            ("exploration_noise_std", self.exploration_noise_std),
            ("target_noise_std", self.target_noise_std),
            ("target_noise_clip", self.target_noise_clip),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return f(name, "must be a nonnegative number");
            }
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return f("hidden", "needs at least one positive width");
        }
        Ok(())
    }
}

/// `r + gamma * (1 - done) * min(q1, q2)`.
pub fn clipped_double_q_target(reward: f64, done: bool, q1_next: f64, q2_next: f64, gamma: f64) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * q1_next.min(q2_next)
    }
}

/// `target <- tau * source + (1 - tau) * target`.
pub fn polyak_update(target: &mut Network, source: &Network, tau: f64) -> Result<()> {
    target.polyak_from(source, tau)
}

fn stack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    m.rows_mut(0, top.nrows()).copy_from(top);
    m.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    m
}

/// Deterministic actor output plus clamped Gaussian exploration noise.
pub fn select_action<R: Rng + ?Sized>(
    actor: &Network,
    observation: &[f64],
    noise_std: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut a = actor.predict(observation)?;
    if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).map_err(|e| Error::invalid(e.to_string()))?;
        for x in a.iter_mut() {
            *x += normal.sample(rng);
        }
    }
    for x in a.iter_mut() {
        *x = x.clamp(-1.0, 1.0);
    }
    Ok(a)
}

#[derive(Debug, Clone)]
pub struct TargetStats {
    pub q1_next: DVector<f64>,
    pub q2_next: DVector<f64>,
    pub targets: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticReport {
    pub loss1: f64,
    pub loss2: f64,
    pub mean_target: f64,
}

#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub config: Td3Config,
    pub actor: Network,
    pub critic1: Network,
    pub critic2: Network,
    pub actor_target: Network,
    pub critic1_target: Network,
    pub critic2_target: Network,
    actor_opt: AdamState,
    critic1_opt: AdamState,
    critic2_opt: AdamState,
    pub critic_updates: u64,
    pub actor_updates: u64,
    pub rng: ChaCha8Rng,
    obs_dim: usize,
    action_dim: usize,
}

impl Td3Agent {
    pub fn new(obs_dim: usize, action_dim: usize, config: Td3Config) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let n_hidden = config.hidden.len();

        let mut actor_dims = vec![obs_dim];
        actor_dims.extend(&config.hidden);
        actor_dims.push(action_dim);
        let mut actor_acts = vec![Activation::Relu; n_hidden];
        actor_acts.push(Activation::Tanh);
        let actor = Network::new(&actor_dims, &actor_acts, 0.1, &mut rng)?;

        let mut critic_dims = vec![obs_dim + action_dim];
        critic_dims.extend(&config.hidden);
        critic_dims.push(1);
        let mut critic_acts = vec![Activation::Relu; n_hidden];
        critic_acts.push(Activation::Identity);
        let critic1 = Network::new(&critic_dims, &critic_acts, 1.0, &mut rng)?;
        let critic2 = Network::new(&critic_dims, &critic_acts, 1.0, &mut rng)?;

        Ok(Td3Agent {
            actor_opt: AdamState::new(&actor),
            critic1_opt: AdamState::new(&critic1),
            critic2_opt: AdamState::new(&critic2),
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            config,
            critic_updates: 0,
            actor_updates: 0,
            rng,
            obs_dim,
            action_dim,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn act(&mut self, observation: &[f64], noise_std: f64) -> Result<Vec<f64>> {
        select_action(&self.actor, observation, noise_std, &mut self.rng)
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.states.nrows() != self.obs_dim || batch.actions.nrows() != self.action_dim {
            return Err(Error::invalid("batch dimensions do not match the agent"));
        }
        Ok(())
    }

    /// Smoothed target actions and clipped double-Q regression targets.
    pub fn compute_targets(&mut self, batch: &Batch) -> Result<TargetStats> {
        self.check_batch(batch)?;
        let mut next_actions = self.actor_target.predict_batch(&batch.next_states)?;
        if self.config.target_noise_std > 0.0 {
            let normal = Normal::new(0.0, self.config.target_noise_std).map_err(|e| Error::invalid(e.to_string()))?;
            let clip = self.config.target_noise_clip;
            for a in next_actions.iter_mut() {
                *a += normal.sample(&mut self.rng).clamp(-clip, clip);
            }
        }
        next_actions.apply(|a| *a = a.clamp(-1.0, 1.0));
        let input = stack(&batch.next_states, &next_actions);
        let q1 = self.critic1_target.predict_batch(&input)?.row(0).transpose();
        let q2 = self.critic2_target.predict_batch(&input)?.row(0).transpose();
        let targets = DVector::from_fn(batch.len(), |j, _| {
            clipped_double_q_target(batch.rewards[j], batch.dones[j] > 0.5, q1[j], q2[j], self.config.gamma)
        });
        Ok(TargetStats {
            q1_next: q1,
            q2_next: q2,
            targets,
        })
    }

    fn regress(
        critic: &mut Network,
        opt: &mut AdamState,
        input: &DMatrix<f64>,
        y: &DVector<f64>,
        lr: f64,
    ) -> Result<f64> {
        let (q, cache) = critic.forward_batch(input)?;
        let n = y.len() as f64;
        let diff = DMatrix::from_fn(1, y.len(), |_, j| q[(0, j)] - y[j]);
        let loss = diff.norm_squared() / n;
        let grad = &diff * (2.0 / n);
        let (g, _) = critic.backward(&cache, &grad)?;
        adam_step(critic, &g, opt, lr)?;
        Ok(loss)
    }

    /// One Adam step on each critic toward the clipped double-Q targets.
    pub fn critic_update(&mut self, batch: &Batch) -> Result<CriticReport> {
        let stats = self.compute_targets(batch)?;
        let input = stack(&batch.states, &batch.actions);
        let lr = self.config.learning_rate;
        let loss1 = Self::regress(&mut self.critic1, &mut self.critic1_opt, &input, &stats.targets, lr)?;
        let loss2 = Self::regress(&mut self.critic2, &mut self.critic2_opt, &input, &stats.targets, lr)?;
        if !loss1.is_finite() || !loss2.is_finite() {
            return Err(Error::Numerical(format!(
                "critic loss became non-finite ({loss1}, {loss2})"
            )));
        }
        self.critic_updates += 1;
        Ok(CriticReport {
            loss1,
            loss2,
            mean_target: stats.targets.mean(),
        })
    }

    /// Actor loss `-mean Q1(s, actor(s))` and its gradient with respect to
    /// the actor parameters.
    pub fn actor_loss_gradient(&self, states: &DMatrix<f64>) -> Result<(f64, Gradients)> {
        actor_loss_gradient(&self.actor, &self.critic1, states)
    }

    pub fn actor_update_due(&self) -> bool {
        let delay = self.config.policy_delay as u64;
        self.critic_updates.is_multiple_of(delay) && self.actor_updates < self.critic_updates / delay
    }

    /// Delayed policy step followed by Polyak updates of all targets. Must
    /// be called exactly once after every `policy_delay`-th critic update.
    pub fn actor_update(&mut self, batch: &Batch) -> Result<f64> {
        if !self.actor_update_due() {
            return Err(Error::Protocol(format!(
                "actor update requested after {} critic updates with {} actor updates (delay {})",
                self.critic_updates, self.actor_updates, self.config.policy_delay
            )));
        }
        self.check_batch(batch)?;
        let (loss, grads) = self.actor_loss_gradient(&batch.states)?;
        adam_step(&mut self.actor, &grads, &mut self.actor_opt, self.config.learning_rate)?;
        let tau = self.config.tau;
        polyak_update(&mut self.actor_target, &self.actor, tau)?;
        polyak_update(&mut self.critic1_target, &self.critic1, tau)?;
        polyak_update(&mut self.critic2_target, &self.critic2, tau)?;
        self.actor_updates += 1;
        Ok(loss)
    }

    /// Samples a batch and runs the critic step, then the actor step when
    /// it is due. Returns the critic report and the actor loss if updated.
    pub fn update(&mut self, buffer: &ReplayBuffer) -> Result<(CriticReport, Option<f64>)> {
        if buffer.len() < self.config.batch_size {
            return Err(Error::Protocol(format!(
                "buffer holds {} transitions, batch needs {}",
                buffer.len(),
                self.config.batch_size
            )));
        }
        let batch = buffer.sample(self.config.batch_size, &mut self.rng)?;
        let report = self.critic_update(&batch)?;
        let actor_loss = if self.actor_update_due() {
            Some(self.actor_update(&batch)?)
        } else {
            None
        };
        Ok((report, actor_loss))
    }

    pub fn networks(&self) -> [&Network; 6] {
        [
            &self.actor,
            &self.critic1,
            &self.critic2,
            &self.actor_target,
            &self.critic1_target,
            &self.critic2_target,
        ]
    }
}

pub fn actor_loss_gradient(actor: &Network, critic: &Network, states: &DMatrix<f64>) -> Result<(f64, Gradients)> {
    let n = states.ncols() as f64;
    let (actions, actor_cache) = actor.forward_batch(states)?;
    let input = stack(states, &actions);
    let (q, critic_cache) = critic.forward_batch(&input)?;
    let loss = -q.sum() / n;
    let dq = DMatrix::from_element(1, states.ncols(), -1.0 / n);
    let (_, dinput) = critic.backward(&critic_cache, &dq)?;
    let daction = dinput.rows(states.nrows(), actions.nrows()).into_owned();
    let (grads, _) = actor.backward(&actor_cache, &daction)?;
    Ok((loss, grads))
}

pub const AGENT_MAGIC: &[u8; 8] = b"HGRASPAG";
pub const AGENT_VERSION: u32 = 1;

/// Bundles networks as: magic, version (u32), count (u32), then each
/// network as a u64 length prefix followed by its network checkpoint bytes.
pub fn bundle_networks(nets: &[&Network]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(AGENT_MAGIC);
    out.extend_from_slice(&AGENT_VERSION.to_le_bytes());
    out.extend_from_slice(&(nets.len() as u32).to_le_bytes());
    for n in nets {
        let b = n.to_bytes();
        out.extend_from_slice(&(b.len() as u64).to_le_bytes());
        out.extend_from_slice(&b);
    }
    out
}

pub fn unbundle_networks(bytes: &[u8]) -> Result<Vec<Network>> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != AGENT_MAGIC {
        return Err(bad("not an agent checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != AGENT_VERSION {
        return Err(bad("unsupported agent checkpoint version"));
    }
    let count = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let mut rest = &bytes[16..];
    let mut nets = Vec::with_capacity(count);
    for _ in 0..count {
        if rest.len() < 8 {
            return Err(bad("truncated agent checkpoint"));
        }
        let len = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
        rest = &rest[8..];
        if rest.len() < len {
            return Err(bad("truncated network in agent checkpoint"));
        }
        nets.push(Network::from_bytes(&rest[..len])?);
        rest = &rest[len..];
    }
    if !rest.is_empty() {
        return Err(bad("trailing bytes in agent checkpoint"));
    }
    Ok(nets)
}

impl Td3Agent {
    /// Actor, critics and their targets, in that order.
    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        bundle_networks(&self.networks())
    }
}
