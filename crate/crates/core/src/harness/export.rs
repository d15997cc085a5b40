use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::RewardMode;
use crate::td3::train::EVAL_EPISODE_OFFSET;

use super::compare::{curves_csv, reward_curves};
use super::eval::{load_actor, run_policy_episode};
use super::{open_run, write_file, MANIFEST_FILE};

pub const PLOTS_DIR: &str = "plots";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSteps {
    pub mode: RewardMode,
    pub seed: u64,
    pub checkpoint: usize,
    pub cond1: Option<usize>,
    pub cond2: Option<usize>,
    pub cond3: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub trace_csv: PathBuf,
    pub gate_steps_csv: PathBuf,
    pub curves_csv: PathBuf,
    pub plot_script: PathBuf,
    pub gate_steps: GateSteps,
    pub curve_rows: usize,
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Renders the single-episode reward trace and the per-mode reward curves.

Usage: python3 plot_rewards.py  (run from this directory; needs matplotlib)
"""
import csv

import matplotlib.pyplot as plt


def read(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def episode_trace(ax):
    rows = read("episode_trace.csv")
    steps = [int(r["step"]) for r in rows]
    for key, label in [
        ("p_target", "approach penalty"),
        ("r_dist", "distance bonus"),
        ("r_graspable", "graspable"),
        ("r_vev_term", "grasp quality"),
        ("r_obj_height", "height"),
        ("total", "total"),
    ]:
        ax.plot(steps, [float(r[key]) for r in rows], label=label)
    for r in read("gate_steps.csv"):
        if r["step"]:
            ax.axvline(int(r["step"]), linestyle="--", color="grey")
            ax.text(int(r["step"]), ax.get_ylim()[1], r["condition"], rotation=90, va="top")
    ax.set_xlabel("step")
    ax.set_ylabel("reward")
    ax.set_title("reward terms in one episode")
    ax.legend(fontsize="small")


def reward_curves(ax):
    rows = read("reward_curves.csv")
    episodes = [int(r["episode"]) for r in rows]
    modes = [k[: -len("_mean")] for k in rows[0] if k.endswith("_mean")]
    for m in modes:
        mean = [float(r[m + "_mean"]) for r in rows]
        std = [float(r[m + "_std"]) for r in rows]
        ax.plot(episodes, mean, label=m)
        ax.fill_between(
            episodes,
            [a - b for a, b in zip(mean, std)],
            [a + b for a, b in zip(mean, std)],
            alpha=0.25,
        )
    ax.set_xlabel("episode")
    ax.set_ylabel("total reward")
    ax.set_title("total reward, mean and std across seeds")
    ax.legend()


if __name__ == "__main__":
    fig, axes = plt.subplots(1, 2, figsize=(13, 4.5))
    episode_trace(axes[0])
    reward_curves(axes[1])
    fig.tight_layout()
    fig.savefig("rewards.png", dpi=150)
    print("wrote rewards.png")
"#;

/// Writes the reward-curve CSV, a single-episode reward trace of the final
/// hierarchical policy (or the first mode present) with its gate steps, and
/// a plotting script, all under `<run_dir>/plots`.
pub fn cmd_export_plots(run_dir: &Path) -> Result<ExportSummary> {
    if !run_dir.join(MANIFEST_FILE).exists() {
        return Err(Error::Protocol(format!(
            "no training logs found in {} (missing {MANIFEST_FILE})",
            run_dir.display()
        )));
    }
    let (config, manifest) = open_run(run_dir)?;
    let run = manifest
        .runs
        .iter()
        .find(|r| r.mode == RewardMode::Hierarchical)
        .or_else(|| manifest.runs.first())
        .ok_or_else(|| Error::Protocol("the manifest lists no runs".into()))?;
    let ckpt = run
        .final_checkpoint()
        .ok_or_else(|| Error::Protocol(format!("run {} seed {} has no checkpoint", run.mode, run.seed)))?;
    let actor = load_actor(run_dir, ckpt, &config)?;
    let (_, task) = run_policy_episode(
        &actor,
        config.task_for(run.seed),
        run.mode,
        &config,
        EVAL_EPISODE_OFFSET,
        true,
    )?;

    // first step at which each gate of the chain opens
    let first =
        |f: fn(&crate::reward::GateState) -> u8| task.trace().iter().find(|t| f(&t.hierarchy()) == 1).map(|t| t.step);
    let gate_steps = GateSteps {
        mode: run.mode,
        seed: run.seed,
        checkpoint: ckpt.episode,
        cond1: first(|g| g.lambda),
        cond2: first(|g| g.mu),
        cond3: first(|g| g.v),
    };
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    let gates_text = format!(
        "condition,step\ncond1,{}\ncond2,{}\ncond3,{}\n",
        opt(gate_steps.cond1),
        opt(gate_steps.cond2),
        opt(gate_steps.cond3)
    );

    let curves = reward_curves(run_dir, &manifest)?;
    let plots = run_dir.join(PLOTS_DIR);
    let summary = ExportSummary {
        trace_csv: plots.join("episode_trace.csv"),
        gate_steps_csv: plots.join("gate_steps.csv"),
        curves_csv: plots.join("reward_curves.csv"),
        plot_script: plots.join("plot_rewards.py"),
        curve_rows: curves.first().map_or(0, |c| c.mean.len()),
        gate_steps,
    };
    write_file(&summary.trace_csv, task.trace_csv())?;
    write_file(&summary.gate_steps_csv, gates_text)?;
    write_file(&summary.curves_csv, curves_csv(&curves))?;
    write_file(&summary.plot_script, PLOT_SCRIPT)?;
    Ok(summary)
}
