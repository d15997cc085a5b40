use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hgrasp_core::env::Shape;
use hgrasp_core::harness::{self, EvalOptions, RunConfig, RunFilter};
use hgrasp_core::reward::RewardMode;
use hgrasp_core::Error;

/// Physics-guided hierarchical-reward grasp learning.
#[derive(Debug, Parser)]
#[command(name = "hgrasp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one agent per configured seed and reward mode.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Train only this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Train only this reward mode.
        #[arg(long)]
        mode: Option<RewardMode>,
        /// Override `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate trained checkpoints on every shape and scale.
    Eval {
        /// Run directory written by `train`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Config whose output directory and hash to use.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<RewardMode>,
        #[arg(long)]
        shape: Option<Shape>,
        #[arg(long)]
        scale: Option<f64>,
        /// Episodes per (shape, scale) cell.
        #[arg(long)]
        episodes: Option<usize>,
        /// Checkpoint episode to evaluate (default: the last).
        #[arg(long)]
        checkpoint: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Compare reward modes: learning efficiency and significance tests.
    Compare {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Print grasp-quality metrics for the contact sets in a file.
    Quality {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write reward-trace and reward-curve CSVs plus a plotting script.
    ExportPlots {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidInput(_) | Error::Parse { .. } => 1,
        _ => 2,
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("reports serialize to JSON")
    );
}

fn resolve_run_dir(out: Option<PathBuf>, config: Option<&Path>) -> Result<PathBuf, Error> {
    match (out, config) {
        (Some(o), Some(c)) => {
            let cfg = RunConfig::load(c)?;
            let (run_cfg, _) = harness::open_run(&o)?;
            if run_cfg.hash() != cfg.hash() {
                return Err(Error::Protocol(format!(
                    "{} was produced by a different config than {}",
                    o.display(),
                    c.display()
                )));
            }
            Ok(o)
        }
        (Some(o), None) => Ok(o),
        (None, Some(c)) => Ok(RunConfig::load(c)?.output_dir),
        (None, None) => Err(Error::invalid("pass --out or --config")),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train {
            config,
            seed,
            mode,
            out,
            json,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let manifest = harness::cmd_train(&cfg, RunFilter { seed, mode })?;
            if json {
                print_json(&manifest);
            } else {
                println!("config {}", manifest.config_hash);
                for r in &manifest.runs {
                    println!(
                        "{:<14} seed {:<4} {} episodes, {} checkpoints, log {}",
                        r.mode.name(),
                        r.seed,
                        r.episodes,
                        r.checkpoints.len(),
                        r.train_log
                    );
                }
            }
        }
        Command::Eval {
            out,
            config,
            seed,
            mode,
            shape,
            scale,
            episodes,
            checkpoint,
            workers,
            json,
        } => {
            let dir = resolve_run_dir(out, config.as_deref())?;
            let defaults = EvalOptions::default();
            let options = EvalOptions {
                filter: RunFilter { seed, mode },
                shapes: shape.map(|s| vec![s]).unwrap_or(defaults.shapes),
                scales: scale.map(|s| vec![s]).unwrap_or(defaults.scales),
                episodes,
                checkpoint,
                workers,
            };
            let report = harness::cmd_eval(&dir, &options)?;
            if json {
                print_json(&report);
            } else {
                println!(
                    "{:<11} {:>5} {:<14} {:>8} {:>9} {:>12} {:>12} {:>12}",
                    "shape", "scale", "mode", "episodes", "success%", "height_err", "dist_center", "q_vev"
                );
                for c in &report.cells {
                    let m = &c.metrics;
                    println!(
                        "{:<11} {:>5} {:<14} {:>8} {:>9.1} {:>12.5} {:>12.5} {:>12.4e}",
                        c.shape.name(),
                        c.scale,
                        c.mode.name(),
                        m.episodes,
                        m.success_rate,
                        m.mean_height_error,
                        m.mean_dist_obj_hand,
                        m.mean_q_vev
                    );
                }
            }
        }
        Command::Compare { out, json } => {
            let report = harness::cmd_compare(&out)?;
            if json {
                print_json(&report);
            } else {
                println!("fraction of own maximum reward (window {}):", report.smoothing_window);
                for e in &report.efficiency {
                    let pts: Vec<String> = e
                        .points
                        .iter()
                        .map(|p| format!("ep {}: {:.2}%", p.episode, 100.0 * p.fraction_of_max))
                        .collect();
                    println!("  {:<14} {}", e.mode.name(), pts.join(", "));
                }
                for c in &report.cells {
                    println!("{} x{}:", c.shape.name(), c.scale);
                    for p in &c.chi_square {
                        println!(
                            "  chi2 {} vs {}: {}/{} successes, p = {:.4e}",
                            p.first.name(),
                            p.second.name(),
                            p.first_successes,
                            p.second_successes,
                            p.result.p_value
                        );
                    }
                    for a in &c.anova {
                        println!(
                            "  anova {}: F = {:.4}, p = {:.4e}",
                            a.category, a.result.f_statistic, a.result.p_value
                        );
                    }
                }
            }
        }
        Command::Quality { file, json } => {
            let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
            let parsed = harness::parse_contact_file(&text)?;
            let reports = harness::quality_reports(&parsed)?;
            if json {
                print_json(&reports);
            } else {
                for r in &reports {
                    println!("{}", r.name);
                    println!("  contacts          {}", r.num_contacts);
                    println!("  G                 {} x {}", r.g_rows, r.g_cols);
                    println!("  nullity           {}", r.nullity);
                    println!("  graspable reward  {}", r.graspable_reward);
                    println!("  singular values   {:?}", r.singular_values);
                    println!("  q_vev             {:e}", r.q_vev);
                    println!("  r_vev             {}", r.r_vev);
                }
            }
        }
        Command::ExportPlots { out, json } => {
            let summary = harness::cmd_export_plots(&out)?;
            if json {
                print_json(&summary);
            } else {
                println!("wrote {}", summary.trace_csv.display());
                println!("wrote {}", summary.gate_steps_csv.display());
                println!("wrote {} ({} rows)", summary.curves_csv.display(), summary.curve_rows);
                println!("wrote {}", summary.plot_script.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
