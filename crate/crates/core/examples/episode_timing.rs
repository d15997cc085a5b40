//! Times grasp-task training episodes for a given hidden width.
//!
//! `cargo run --release --example episode_timing -- [hidden] [episodes]`

use std::time::Instant;

use hgrasp_core::env::{TaskSpec, ACTION_DIM, OBS_DIM};
use hgrasp_core::reward::RewardConfig;
use hgrasp_core::task::GraspTask;
use hgrasp_core::td3::train::TrainOptions;
use hgrasp_core::td3::{train, ReplayBuffer, Td3Agent, Td3Config};

fn arg(i: usize, default: usize) -> usize {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> hgrasp_core::Result<()> {
    let hidden = arg(1, 256);
    let cfg = Td3Config {
        hidden: vec![hidden, hidden],
        ..Td3Config::default()
    };
    let mut env = GraspTask::new(TaskSpec::default(), RewardConfig::default())?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, OBS_DIM, ACTION_DIM)?;
    let mut agent = Td3Agent::new(OBS_DIM, ACTION_DIM, cfg)?;
    let start = Instant::now();
    let log = train(
        &mut env,
        &mut agent,
        &mut buffer,
        &TrainOptions::episodes(arg(2, 6)),
        |r, _| {
            println!(
                "episode {} reward {:.2} after {:.1?}",
                r.episode,
                r.total_reward,
                start.elapsed()
            );
            Ok(())
        },
    )?;
    println!("{} steps in {:.1?}", log.total_steps, start.elapsed());
    Ok(())
}
