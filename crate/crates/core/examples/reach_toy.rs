//! Trains TD3 on the 1-D reach toy for three seeds and prints the early and
//! late evaluation returns.

use std::time::Instant;

use hgrasp_core::td3::toy::run_reach_toy;

fn main() -> hgrasp_core::Result<()> {
    for seed in 0..3 {
        let start = Instant::now();
        let out = run_reach_toy(seed, 200)?;
        println!(
            "seed {seed}: first 20 evals {:.3}, last 20 {:.3} (x{:.2}) in {:.1?}",
            out.early_eval,
            out.late_eval,
            out.improvement(),
            start.elapsed()
        );
    }
    Ok(())
}
