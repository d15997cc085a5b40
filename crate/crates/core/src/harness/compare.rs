use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::Shape;
use crate::error::{Error, Result};
use crate::reward::RewardMode;
use crate::stats::{n1_chi_square, one_way_anova_lsd, AnovaResult, BinomialOutcome, ChiSquareResult, SampleGroup};

use super::eval::{load_eval_rows, EvalRow};
use super::train::load_train_log;
use super::{mean, open_run, sample_std, write_file, write_json, Manifest};

pub const SMOOTHING_WINDOW: usize = 20;
pub const CHECKPOINT_EPISODES: [usize; 3] = [200, 600, 1000];
pub const COMPARE_REPORT_FILE: &str = "compare/report.json";
pub const COMPARE_CURVES_FILE: &str = "compare/curves.csv";

/// Per-episode mean and sample standard deviation of total reward across
/// the seeds of one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardCurve {
    pub mode: RewardMode,
    pub seeds: Vec<u64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Trailing moving average; early entries average what is available.
pub fn smooth(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            mean(&xs[lo..=i])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `s / max s`, used when every smoothed value is nonnegative.
    Ratio,
    /// `(s - min s) / (max s - min s)`, used when rewards go negative.
    MinMax,
}

/// Smoothed curve divided by its own maximum, and the normalization used.
pub fn fraction_of_max(curve: &[f64], window: usize) -> (Vec<f64>, Normalization) {
    let s = smooth(curve, window);
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    if s.is_empty() {
        return (s, Normalization::Ratio);
    }
    if min >= 0.0 && max > 0.0 {
        (s.iter().map(|v| v / max).collect(), Normalization::Ratio)
    } else if max > min {
        (
            s.iter().map(|v| (v - min) / (max - min)).collect(),
            Normalization::MinMax,
        )
    } else {
        (vec![1.0; s.len()], Normalization::MinMax)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub episode: usize,
    pub fraction_of_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEfficiency {
    pub mode: RewardMode,
    pub normalization: Normalization,
    pub best_episode: usize,
    pub points: Vec<EfficiencyPoint>,
    pub training_success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquarePair {
    pub first: RewardMode,
    pub second: RewardMode,
    pub first_successes: u64,
    pub second_successes: u64,
    pub trials: u64,
    #[serde(flatten)]
    pub result: ChiSquareResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaCategory {
    pub category: String,
    #[serde(flatten)]
    pub result: AnovaResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellComparison {
    pub shape: Shape,
    pub scale: f64,
    pub chi_square: Vec<ChiSquarePair>,
    pub anova: Vec<AnovaCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub config_hash: String,
    pub episodes: usize,
    pub smoothing_window: usize,
    pub efficiency: Vec<ModeEfficiency>,
    pub cells: Vec<CellComparison>,
}

/// Episode budget shared by every run; differing budgets are refused.
pub fn common_budget(manifest: &Manifest) -> Result<usize> {
    let first = manifest
        .runs
        .first()
        .ok_or_else(|| Error::Protocol("the manifest lists no runs".into()))?
        .episodes;
    if let Some(r) = manifest.runs.iter().find(|r| r.episodes != first) {
        return Err(Error::Protocol(format!(
            "mismatched episode budgets: {} seed {} ran {} episodes, others ran {first}",
            r.mode, r.seed, r.episodes
        )));
    }
    Ok(first)
}

pub fn reward_curves(run_dir: &Path, manifest: &Manifest) -> Result<Vec<RewardCurve>> {
    let episodes = common_budget(manifest)?;
    let mut curves = Vec::new();
    for mode in manifest.modes() {
        let mut per_seed = Vec::new();
        let mut seeds = Vec::new();
        for run in manifest.runs.iter().filter(|r| r.mode == mode) {
            let rows = load_train_log(run_dir, run)?;
            if rows.len() != episodes {
                return Err(Error::Protocol(format!(
                    "{} holds {} episodes, the manifest says {episodes}",
                    run.train_log,
                    rows.len()
                )));
            }
            per_seed.push(rows.iter().map(|r| r.total_reward).collect::<Vec<_>>());
            seeds.push(run.seed);
        }
        let (mut m, mut s) = (Vec::with_capacity(episodes), Vec::with_capacity(episodes));
        for e in 0..episodes {
            let xs: Vec<f64> = per_seed.iter().map(|c| c[e]).collect();
            m.push(mean(&xs));
            s.push(sample_std(&xs));
        }
        curves.push(RewardCurve {
            mode,
            seeds,
            mean: m,
            std: s,
        });
    }
    Ok(curves)
}

pub fn curves_csv(curves: &[RewardCurve]) -> String {
    let mut out = String::from("episode");
    for c in curves {
        let _ = write!(out, ",{0}_mean,{0}_std", c.mode.name());
    }
    out.push('\n');
    let n = curves.first().map_or(0, |c| c.mean.len());
    for e in 0..n {
        let _ = write!(out, "{}", e + 1);
        for c in curves {
            let _ = write!(out, ",{},{}", c.mean[e], c.std[e]);
        }
        out.push('\n');
    }
    out
}

pub fn efficiency(curve: &RewardCurve, training_success_rate: f64) -> ModeEfficiency {
    let (frac, normalization) = fraction_of_max(&curve.mean, SMOOTHING_WINDOW);
    let n = frac.len();
    let mut marks: Vec<usize> = CHECKPOINT_EPISODES.iter().copied().filter(|&e| e <= n).collect();
    if marks.last() != Some(&n) && n > 0 {
        marks.push(n);
    }
    let best_episode = frac
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
        )
        .0
        + 1;
    ModeEfficiency {
        mode: curve.mode,
        normalization,
        best_episode,
        points: marks
            .into_iter()
            .map(|e| EfficiencyPoint {
                episode: e,
                fraction_of_max: frac[e - 1],
            })
            .collect(),
        training_success_rate,
    }
}

pub const ANOVA_CATEGORIES: [&str; 3] = ["height_error", "dist_obj_hand", "grasp_quality"];

/// Pairwise N-1 chi-square on success counts and one ANOVA per metric,
/// for every (shape, scale) cell present in `rows`.
pub fn compare_cells(rows: &[EvalRow]) -> Result<Vec<CellComparison>> {
    let mut cells: BTreeMap<(Shape, u64), BTreeMap<RewardMode, Vec<&EvalRow>>> = BTreeMap::new();
    for r in rows {
        cells
            .entry((r.shape, r.scale.to_bits()))
            .or_default()
            .entry(r.mode)
            .or_default()
            .push(r);
    }
    let mut out = Vec::new();
    for ((shape, scale), by_mode) in cells {
        let modes: Vec<(&RewardMode, &Vec<&EvalRow>)> = by_mode.iter().collect();
        let mut chi = Vec::new();
        for i in 0..modes.len() {
            for j in i + 1..modes.len() {
                let outcome = |rs: &[&EvalRow]| {
                    BinomialOutcome::new(rs.iter().filter(|r| r.success).count() as u64, rs.len() as u64)
                };
                let (a, b) = (outcome(modes[i].1)?, outcome(modes[j].1)?);
                chi.push(ChiSquarePair {
                    first: *modes[i].0,
                    second: *modes[j].0,
                    first_successes: a.successes,
                    second_successes: b.successes,
                    trials: a.trials + b.trials,
                    result: n1_chi_square(a, b)?,
                });
            }
        }
        let mut anova = Vec::new();
        if modes.len() >= 2 && modes.iter().all(|(_, rs)| rs.len() >= 2) {
            let metrics: [fn(&EvalRow) -> f64; 3] = [|r| r.height_error, |r| r.dist_obj_hand, |r| r.q_vev];
            for (name, metric) in ANOVA_CATEGORIES.iter().zip(metrics) {
                let groups: Vec<SampleGroup> = modes
                    .iter()
                    .map(|(m, rs)| SampleGroup::new(m.name(), rs.iter().map(|r| metric(r)).collect()))
                    .collect();
                anova.push(AnovaCategory {
                    category: name.to_string(),
                    result: one_way_anova_lsd(&groups)?,
                });
            }
        }
        out.push(CellComparison {
            shape,
            scale: f64::from_bits(scale),
            chi_square: chi,
            anova,
        });
    }
    Ok(out)
}

/// Learning-efficiency summary from the training logs plus significance
/// tests on the evaluation rows. Writes `compare/report.json` and
/// `compare/curves.csv`.
pub fn cmd_compare(run_dir: &Path) -> Result<CompareReport> {
    let (_, manifest) = open_run(run_dir)?;
    let modes = manifest.modes();
    if modes.len() < 2 {
        return Err(Error::Protocol(format!(
            "comparison needs runs for at least two reward modes, found {}",
            modes.len()
        )));
    }
    let episodes = common_budget(&manifest)?;
    let curves = reward_curves(run_dir, &manifest)?;
    let mut eff = Vec::new();
    for c in &curves {
        let mut successes = 0usize;
        let mut total = 0usize;
        for run in manifest.runs.iter().filter(|r| r.mode == c.mode) {
            let rows = load_train_log(run_dir, run)?;
            successes += rows.iter().filter(|r| r.success).count();
            total += rows.len();
        }
        eff.push(efficiency(c, 100.0 * successes as f64 / total.max(1) as f64));
    }
    let rows = load_eval_rows(run_dir)?;
    let report = CompareReport {
        config_hash: manifest.config_hash.clone(),
        episodes,
        smoothing_window: SMOOTHING_WINDOW,
        efficiency: eff,
        cells: compare_cells(&rows)?,
    };
    write_json(&run_dir.join(COMPARE_REPORT_FILE), &report)?;
    write_file(&run_dir.join(COMPARE_CURVES_FILE), curves_csv(&curves))?;
    Ok(report)
}
