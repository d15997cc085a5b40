//! Per-step rewards: the gated three-stage hierarchical reward and the two
//! baselines (task-only and linear-summed).
//!
//! Stages: approaching (distance penalty and finger-constraint penalties),
//! grasping (distance bonus, graspable bonus and ellipsoid quality, each
//! gated by the conditions above it) and lifting (height reward).

use serde::{Deserialize, Serialize};

use crate::env::EnvState;
use crate::error::{Error, Result};
use crate::grasp_math::{QualityResult, GRASPABLE_REWARD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    Hierarchical,
    #[serde(alias = "task-only")]
    TaskOnly,
    #[serde(alias = "linear-summed")]
    LinearSummed,
}

impl RewardMode {
    pub const ALL: [RewardMode; 3] = [RewardMode::Hierarchical, RewardMode::TaskOnly, RewardMode::LinearSummed];

    /// Command-line spelling.
    pub fn name(self) -> &'static str {
        match self {
            RewardMode::Hierarchical => "hierarchical",
            RewardMode::TaskOnly => "task-only",
            RewardMode::LinearSummed => "linear-summed",
        }
    }
}

impl std::fmt::Display for RewardMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for RewardMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hierarchical" => Ok(RewardMode::Hierarchical),
            "task-only" | "task_only" => Ok(RewardMode::TaskOnly),
            "linear-summed" | "linear_summed" => Ok(RewardMode::LinearSummed),
            other => Err(Error::config("reward.mode", format!("unknown reward mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub graspable_weight: f64,
    pub pregrasp_distance: f64,
    pub close_penalty: f64,
    pub finger_contact_penalty: f64,
    pub dist_clamp_min: f64,
    pub mode: RewardMode,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            epsilon: 10.0,
            alpha: 30.0,
            beta: 0.05,
            graspable_weight: GRASPABLE_REWARD,
            pregrasp_distance: 0.05,
            close_penalty: -0.1,
            finger_contact_penalty: -0.1,
            dist_clamp_min: 0.01,
            mode: RewardMode::Hierarchical,
        }
    }
}

impl RewardConfig {
    pub fn with_mode(mode: RewardMode) -> Self {
        RewardConfig {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("pregrasp_distance", self.pregrasp_distance),
            ("dist_clamp_min", self.dist_clamp_min),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(
                    format!("reward.{name}"),
                    format!("must be positive, got {v}"),
                ));
            }
        }
        for (name, v) in [
            ("close_penalty", self.close_penalty),
            ("finger_contact_penalty", self.finger_contact_penalty),
        ] {
            if !(v <= 0.0) {
                return Err(Error::config(
                    format!("reward.{name}"),
                    format!("must be <= 0, got {v}"),
                ));
            }
        }
        if !(self.graspable_weight >= 0.0) {
            return Err(Error::config("reward.graspable_weight", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Approach penalty `-epsilon * dist`.
pub fn p_target(dist_obj_hand: f64, epsilon: f64) -> f64 {
    -(epsilon * dist_obj_hand)
}

/// `exp(0.1 / d)` normalized by its value at the clamp distance, with the
/// distance clamped from below; lies in `(0, 1]`.
pub fn r_dist(dist_obj_hand: f64, dist_clamp_min: f64) -> f64 {
    let d = dist_obj_hand.max(dist_clamp_min);
    (0.1 / d - 0.1 / dist_clamp_min).exp()
}

/// `alpha * |beta - min(error, beta)|` with `error = |target - lift|`.
pub fn r_obj_height(lift_height: f64, target_height: f64, alpha: f64, beta: f64) -> f64 {
    let error = (target_height - lift_height).abs().min(beta);
    alpha * (beta - error).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GateState {
    pub lambda: u8,
    pub mu: u8,
    pub v: u8,
    pub cond1_pregrasp: bool,
    pub cond2_graspable: bool,
    pub cond3_contact_forces: bool,
}

impl GateState {
    /// Chains the conditions: `lambda = c1`, `mu = lambda * c2`,
    /// `v = lambda * mu * c3`.
    pub fn from_conditions(c1: bool, c2: bool, c3: bool) -> Self {
        let lambda = u8::from(c1);
        let mu = lambda * u8::from(c2);
        let v = lambda * mu * u8::from(c3);
        GateState {
            lambda,
            mu,
            v,
            cond1_pregrasp: c1,
            cond2_graspable: c2,
            cond3_contact_forces: c3,
        }
    }

    fn all_open(self) -> Self {
        GateState {
            lambda: 1,
            mu: 1,
            v: 1,
            ..self
        }
    }
}

pub fn evaluate_gates(state: &EnvState, quality: &QualityResult, cfg: &RewardConfig) -> GateState {
    let c1 = state.dist_obj_hand < cfg.pregrasp_distance;
    let c2 = quality.nullity > 0 && state.contacts.len() >= 2;
    let c3 = quality.r_vev > 0.0;
    GateState::from_conditions(c1, c2, c3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub p_target: f64,
    pub p_close: f64,
    pub p_finger_contact: f64,
    pub r_dist: f64,
    pub r_graspable: f64,
    pub r_vev: f64,
    pub r_obj_height: f64,
    pub gates: GateState,
    pub total: f64,
}

impl RewardBreakdown {
    /// Recomputes the total from the stored components under `mode`.
    pub fn recompose(&self, mode: RewardMode, cfg: &RewardConfig) -> f64 {
        let g = &self.gates;
        match mode {
            RewardMode::Hierarchical => {
                self.p_target
                    + self.p_close
                    + self.p_finger_contact
                    + f64::from(g.lambda) * self.r_dist
                    + f64::from(g.mu) * cfg.graspable_weight
                    + f64::from(g.v) * self.r_vev
                    + self.r_obj_height
            }
            RewardMode::TaskOnly => self.p_target + self.r_obj_height,
            RewardMode::LinearSummed => {
                self.p_target
                    + self.p_close
                    + self.p_finger_contact
                    + self.r_dist
                    + self.r_graspable
                    + self.r_vev
                    + self.r_obj_height
            }
        }
    }
}

pub fn step_reward(
    state: &EnvState,
    quality: &QualityResult,
    target_height: f64,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let gates = evaluate_gates(state, quality, cfg);
    let closing = state.last_finger_command.iter().any(|c| *c > 0.0);
    let mut b = RewardBreakdown {
        p_target: p_target(state.dist_obj_hand, cfg.epsilon),
        p_close: if closing && state.dist_obj_hand >= cfg.pregrasp_distance {
            cfg.close_penalty
        } else {
            0.0
        },
        p_finger_contact: if state.inter_finger_contact {
            cfg.finger_contact_penalty
        } else {
            0.0
        },
        r_dist: r_dist(state.dist_obj_hand, cfg.dist_clamp_min),
        r_graspable: quality.graspable_reward,
        r_vev: quality.r_vev,
        r_obj_height: r_obj_height(state.lift_height(), target_height, cfg.alpha, cfg.beta),
        gates,
        total: 0.0,
    };
    if cfg.mode == RewardMode::LinearSummed {
        b.gates = gates.all_open();
    }
    b.total = b.recompose(cfg.mode, cfg);
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn approach_penalty() {
        assert_eq!(p_target(0.0, 10.0), 0.0);
        assert_eq!(p_target(0.1, 10.0), -1.0);
        assert_eq!(p_target(0.5, 10.0), -5.0);
    }

    #[test]
    fn distance_bonus() {
        assert_eq!(r_dist(0.0, 0.01), 1.0);
        assert_eq!(r_dist(0.005, 0.01), 1.0);
        assert_eq!(r_dist(0.01, 0.01), 1.0);
        let expected = (-5.0f64).exp();
        assert!((r_dist(0.02, 0.01) - expected).abs() < 1e-15);
        assert!((r_dist(0.02, 0.01) - 6.7379e-3).abs() < 1e-7);
        assert!(r_dist(0.03, 0.01) <= r_dist(0.02, 0.01));
    }

    #[test]
    fn height_reward() {
        assert_eq!(r_obj_height(0.0, 0.05, 30.0, 0.05), 0.0);
        assert!((r_obj_height(0.05, 0.05, 30.0, 0.05) - 1.5).abs() < 1e-15);
        assert!((r_obj_height(0.025, 0.05, 30.0, 0.05) - 0.75).abs() < 1e-12);
        // overshoot is symmetric and capped
        assert!((r_obj_height(0.075, 0.05, 30.0, 0.05) - 0.75).abs() < 1e-12);
        assert_eq!(r_obj_height(0.3, 0.05, 30.0, 0.05), 0.0);
    }

    #[test]
    fn gate_chain() {
        for c2 in [false, true] {
            for c3 in [false, true] {
                let g = GateState::from_conditions(false, c2, c3);
                assert_eq!((g.lambda, g.mu, g.v), (0, 0, 0));
            }
        }
        let g = GateState::from_conditions(true, false, true);
        assert_eq!((g.lambda, g.mu, g.v), (1, 0, 0));
        let g = GateState::from_conditions(true, true, true);
        assert_eq!((g.lambda, g.mu, g.v), (1, 1, 1));
    }

    #[test]
    fn mode_names_round_trip() {
        for m in RewardMode::ALL {
            assert_eq!(m.name().parse::<RewardMode>().unwrap(), m);
        }
        assert!("both".parse::<RewardMode>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(RewardConfig::default().validate().is_ok());
        let bad = RewardConfig {
            close_penalty: 0.5,
            ..RewardConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "reward.close_penalty"));
    }
}
