//! One-dimensional reach task used as a learning sanity check.
//!
//! The state is `(x, goal)`. Each step moves `x += 0.1 a` with `a` in
//! `[-1, 1]` and `x` clamped to `[-1, 1]`; the reward is
//! `max(0, 1 - 2 |x - goal|)`. Episodes start at `x = 0` with the goal drawn
//! from `+-[0.3, 0.6]` and last 50 steps.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::train::{train, Environment, StepResult, TrainLog, TrainOptions};
use super::{ReplayBuffer, Td3Agent, Td3Config};
use crate::env::episode_seed;
use crate::error::{Error, Result};

pub const TOY_STEPS: usize = 50;
pub const TOY_STEP_GAIN: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct ReachToy {
    seed: u64,
    x: f64,
    goal: f64,
    t: usize,
}

impl ReachToy {
    pub fn new(seed: u64) -> Self {
        ReachToy {
            seed,
            x: 0.0,
            goal: 0.0,
            t: TOY_STEPS,
        }
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.x, self.goal]
    }
}

impl Environment for ReachToy {
    fn obs_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn max_steps(&self) -> usize {
        TOY_STEPS
    }

    fn reset(&mut self, episode: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(self.seed, episode));
        let magnitude = rng.random_range(0.3..0.6);
        self.goal = if rng.random_bool(0.5) { magnitude } else { -magnitude };
        self.x = 0.0;
        self.t = 0;
        Ok(self.obs())
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.t >= TOY_STEPS {
            return Err(Error::Protocol("reach toy episode already finished".into()));
        }
        let a = action.first().copied().unwrap_or(0.0).clamp(-1.0, 1.0);
        self.x = (self.x + TOY_STEP_GAIN * a).clamp(-1.0, 1.0);
        self.t += 1;
        Ok(StepResult {
            observation: self.obs(),
            reward: (1.0 - 2.0 * (self.x - self.goal).abs()).max(0.0),
            terminal: false,
        })
    }
}

/// Agent settings for the toy: 64-wide hidden layers and batch 64;
/// everything else, including the 1000-step warmup, at the defaults.
pub fn toy_config(seed: u64) -> Td3Config {
    Td3Config {
        batch_size: 64,
        buffer_capacity: 100_000,
        hidden: vec![64, 64],
        seed,
        ..Td3Config::default()
    }
}

#[derive(Debug, Clone)]
pub struct ToyOutcome {
    pub log: TrainLog,
    /// Mean deterministic evaluation return over the first and last 20
    /// training episodes.
    pub early_eval: f64,
    pub late_eval: f64,
}

impl ToyOutcome {
    pub fn improvement(&self) -> f64 {
        self.late_eval / self.early_eval
    }
}

/// Trains on the toy for `episodes` episodes, evaluating the deterministic
/// policy on 5 fixed goals after every episode.
pub fn run_reach_toy(seed: u64, episodes: usize) -> Result<ToyOutcome> {
    let mut env = ReachToy::new(seed);
    let cfg = toy_config(seed);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, 2, 1)?;
    let mut agent = Td3Agent::new(2, 1, cfg)?;
    let options = TrainOptions {
        episodes,
        eval_every: 1,
        eval_episodes: 5,
    };
    let log = train(&mut env, &mut agent, &mut buffer, &options, |_, _| Ok(()))?;
    let window = 20.min(log.evaluations.len());
    let mean = |s: &[super::train::EvalSnapshot]| s.iter().map(|e| e.mean_return).sum::<f64>() / s.len().max(1) as f64;
    let n = log.evaluations.len();
    Ok(ToyOutcome {
        early_eval: mean(&log.evaluations[..window]),
        late_eval: mean(&log.evaluations[n - window..]),
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_peaks_at_goal() {
        let mut env = ReachToy::new(1);
        env.reset(0).unwrap();
        let g = env.goal;
        env.x = g - 0.1 * g.signum();
        let s = env.step(&[g.signum()]).unwrap();
        assert!((s.reward - 1.0).abs() < 1e-12);
    }

    #[test]
    fn episode_length_is_enforced() {
        let mut env = ReachToy::new(1);
        env.reset(3).unwrap();
        for _ in 0..TOY_STEPS {
            env.step(&[0.0]).unwrap();
        }
        assert!(matches!(env.step(&[0.0]), Err(Error::Protocol(_))));
    }

    #[test]
    fn resets_are_reproducible() {
        let mut a = ReachToy::new(9);
        let mut b = ReachToy::new(9);
        for ep in 0..10 {
            assert_eq!(a.reset(ep).unwrap(), b.reset(ep).unwrap());
        }
    }
}
