//! The grasp-and-lift task as a learning environment: the quasi-static
//! simulator, per-step grasp quality and the configured reward mode.

use serde::{Deserialize, Serialize};

use crate::env::{self, episode_seed, is_success, Action, EnvState, TaskSpec, ACTION_DIM, OBS_DIM};
use crate::error::{Error, Result};
use crate::grasp_math::{evaluate, QualityResult};
use crate::reward::{step_reward, GateState, RewardBreakdown, RewardConfig};
use crate::td3::{Environment, EpisodeStats, StepResult};

/// One row of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    pub arm: [f64; 6],
    pub fingers: [f64; 3],
    pub object_center: [f64; 3],
    pub attached: bool,
    pub contacts: usize,
    pub lift_height: f64,
    pub height_error: f64,
    pub dist_obj_hand: f64,
    pub q_vev: f64,
    pub r_vev: f64,
    pub nullity: usize,
    pub reward: RewardBreakdown,
}

impl StepTrace {
    pub const CSV_HEADER: &'static str = "step,arm0,arm1,arm2,arm3,arm4,arm5,finger0,finger1,finger2,\
obj_x,obj_y,obj_z,attached,contacts,lift_height,height_error,dist_obj_hand,q_vev,r_vev,nullity,\
lambda,mu,v,cond1,cond2,cond3,p_target,p_close,p_finger_contact,r_dist,r_graspable,r_vev_term,r_obj_height,total";

    pub fn csv_row(&self) -> String {
        let r = &self.reward;
        let g = &r.gates;
        let mut fields: Vec<String> = vec![self.step.to_string()];
        fields.extend(self.arm.iter().map(f64::to_string));
        fields.extend(self.fingers.iter().map(f64::to_string));
        fields.extend(self.object_center.iter().map(f64::to_string));
        fields.push(u8::from(self.attached).to_string());
        fields.push(self.contacts.to_string());
        for v in [
            self.lift_height,
            self.height_error,
            self.dist_obj_hand,
            self.q_vev,
            self.r_vev,
        ] {
            fields.push(v.to_string());
        }
        fields.push(self.nullity.to_string());
        for v in [g.lambda, g.mu, g.v] {
            fields.push(v.to_string());
        }
        for c in [g.cond1_pregrasp, g.cond2_graspable, g.cond3_contact_forces] {
            fields.push(u8::from(c).to_string());
        }
        for v in [
            r.p_target,
            r.p_close,
            r.p_finger_contact,
            r.r_dist,
            r.r_graspable,
            r.r_vev,
            r.r_obj_height,
            r.total,
        ] {
            fields.push(v.to_string());
        }
        fields.join(",")
    }

    /// Gate chain implied by the conditions, independent of reward mode.
    pub fn hierarchy(&self) -> GateState {
        let g = &self.reward.gates;
        GateState::from_conditions(g.cond1_pregrasp, g.cond2_graspable, g.cond3_contact_forces)
    }
}

/// End-of-episode evaluation metrics, taken at the final step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub success: bool,
    pub height_error: f64,
    pub dist_obj_hand: f64,
    pub q_vev: f64,
    pub total_reward: f64,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct GraspTask {
    spec: TaskSpec,
    reward: RewardConfig,
    object_radius: f64,
    state: Option<EnvState>,
    quality: QualityResult,
    keep_trace: bool,
    trace: Vec<StepTrace>,
    height_errors: Vec<f64>,
    first_gate: [Option<usize>; 3],
    gate_chain_ok: bool,
    total_reward: f64,
}

impl GraspTask {
    pub fn new(spec: TaskSpec, reward: RewardConfig) -> Result<Self> {
        spec.validate()?;
        reward.validate()?;
        let object_radius = spec.geometry()?.circumscribed_radius();
        Ok(GraspTask {
            spec,
            reward,
            object_radius,
            state: None,
            quality: QualityResult::empty(),
            keep_trace: false,
            trace: Vec::new(),
            height_errors: Vec::new(),
            first_gate: [None; 3],
            gate_chain_ok: true,
            total_reward: 0.0,
        })
    }

    /// Keep a full `StepTrace` per step (off by default during training).
    pub fn with_trace(mut self, keep: bool) -> Self {
        self.keep_trace = keep;
        self
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn reward_config(&self) -> &RewardConfig {
        &self.reward
    }

    pub fn state(&self) -> Option<&EnvState> {
        self.state.as_ref()
    }

    pub fn trace(&self) -> &[StepTrace] {
        &self.trace
    }

    pub fn metrics(&self) -> Result<EpisodeMetrics> {
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| Error::Protocol("no episode has been started".into()))?;
        Ok(EpisodeMetrics {
            success: is_success(&self.height_errors),
            height_error: state.height_error(self.spec.target_height),
            dist_obj_hand: state.dist_obj_hand,
            q_vev: self.quality.q_vev,
            total_reward: self.total_reward,
            steps: state.step_index,
        })
    }

    pub fn step_action(&mut self, action: &Action) -> Result<StepResult> {
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| Error::Protocol("step before reset".into()))?;
        let out = env::step(state, action, &self.spec)?;
        let quality = evaluate(&out.state.contacts, self.object_radius)?;
        let breakdown = step_reward(&out.state, &quality, self.spec.target_height, &self.reward);
        let s = &out.state;
        let hierarchy = GateState::from_conditions(
            breakdown.gates.cond1_pregrasp,
            breakdown.gates.cond2_graspable,
            breakdown.gates.cond3_contact_forces,
        );
        let step = s.step_index;
        for (slot, open) in self
            .first_gate
            .iter_mut()
            .zip([hierarchy.lambda, hierarchy.mu, hierarchy.v])
        {
            if open == 1 && slot.is_none() {
                *slot = Some(step);
            }
        }
        let g = breakdown.gates;
        if !(g.v <= g.mu && g.mu <= g.lambda) {
            self.gate_chain_ok = false;
        }
        self.height_errors.push(s.height_error(self.spec.target_height));
        self.total_reward += breakdown.total;
        if self.keep_trace {
            self.trace.push(StepTrace {
                step,
                arm: s.arm_joint_angles,
                fingers: s.finger_joint_angles,
                object_center: [s.object_center.x, s.object_center.y, s.object_center.z],
                attached: s.attached,
                contacts: s.contacts.len(),
                lift_height: s.lift_height(),
                height_error: s.height_error(self.spec.target_height),
                dist_obj_hand: s.dist_obj_hand,
                q_vev: quality.q_vev,
                r_vev: quality.r_vev,
                nullity: quality.nullity,
                reward: breakdown,
            });
        }
        let observation = out.observation.as_slice().to_vec();
        self.quality = quality;
        self.state = Some(out.state);
        Ok(StepResult {
            observation,
            reward: breakdown.total,
            terminal: false,
        })
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from(StepTrace::CSV_HEADER);
        out.push('\n');
        for t in &self.trace {
            out.push_str(&t.csv_row());
            out.push('\n');
        }
        out
    }
}

impl Environment for GraspTask {
    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn action_dim(&self) -> usize {
        ACTION_DIM
    }

    fn max_steps(&self) -> usize {
        self.spec.max_steps
    }

    fn reset(&mut self, episode: u64) -> Result<Vec<f64>> {
        let spec = TaskSpec {
            seed: episode_seed(self.spec.seed, episode),
            ..self.spec.clone()
        };
        let (state, obs) = env::reset(&spec)?;
        self.quality = evaluate(&state.contacts, self.object_radius)?;
        self.state = Some(state);
        self.trace.clear();
        self.height_errors.clear();
        self.first_gate = [None; 3];
        self.gate_chain_ok = true;
        self.total_reward = 0.0;
        Ok(obs.as_slice().to_vec())
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if action.len() != ACTION_DIM {
            return Err(Error::invalid(format!(
                "action must have {ACTION_DIM} entries, got {}",
                action.len()
            )));
        }
        self.step_action(&Action::from_slice(action)?)
    }

    fn episode_stats(&self) -> EpisodeStats {
        EpisodeStats {
            success: is_success(&self.height_errors),
            first_lambda: self.first_gate[0],
            first_mu: self.first_gate[1],
            first_v: self.first_gate[2],
            gate_chain_ok: self.gate_chain_ok,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::scripted::ScriptedGrasp;
    use crate::reward::RewardMode;

    fn scripted_episode(mode: RewardMode) -> GraspTask {
        let mut task = GraspTask::new(TaskSpec::default(), RewardConfig::with_mode(mode))
            .unwrap()
            .with_trace(true);
        task.reset(0).unwrap();
        let mut ctrl = ScriptedGrasp::new(&task.spec().clone());
        for _ in 0..task.max_steps() {
            let a = ctrl.act(task.state().unwrap());
            task.step_action(&a).unwrap();
        }
        task
    }

    #[test]
    fn scripted_grasp_opens_gates_in_order() {
        let task = scripted_episode(RewardMode::Hierarchical);
        let stats = task.episode_stats();
        let (a, b, c) = (
            stats.first_lambda.unwrap(),
            stats.first_mu.unwrap(),
            stats.first_v.unwrap(),
        );
        assert!(a <= b && b <= c, "{a} {b} {c}");
        assert!(stats.gate_chain_ok);
        assert!(stats.success);
        let m = task.metrics().unwrap();
        assert!(m.height_error <= 0.01);
        assert!(m.q_vev > 0.0);
        assert_eq!(task.trace().len(), 300);
    }

    #[test]
    fn trace_rows_match_header() {
        let task = scripted_episode(RewardMode::LinearSummed);
        let cols = StepTrace::CSV_HEADER.split(',').count();
        for t in task.trace() {
            assert_eq!(t.csv_row().split(',').count(), cols);
            let g = t.reward.gates;
            assert_eq!((g.lambda, g.mu, g.v), (1, 1, 1));
        }
    }

    #[test]
    fn totals_sum_step_rewards() {
        let task = scripted_episode(RewardMode::Hierarchical);
        let sum: f64 = task.trace().iter().map(|t| t.reward.total).sum();
        assert_eq!(sum, task.metrics().unwrap().total_reward);
    }

    #[test]
    fn step_before_reset_is_a_protocol_error() {
        let mut task = GraspTask::new(TaskSpec::default(), RewardConfig::default()).unwrap();
        assert!(matches!(task.step(&[0.0; 9]), Err(Error::Protocol(_))));
        task.reset(0).unwrap();
        assert!(task.step(&[0.0; 3]).is_err());
    }
}
