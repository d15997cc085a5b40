//! Scripted approach-close-lift controller.
//!
//! Resolved-rate control on a finite-difference arm Jacobian, driving the
//! hand to waypoints above and around the object while keeping the hand
//! frame aligned with the world. Used as a reference policy in tests and
//! for tracing episodes.

use nalgebra::{Matrix6, Rotation3, UnitQuaternion, Vector3, Vector6};

use super::kinematics::{arm_transform, FINGER_LENGTH};
use super::{Action, EnvState, TaskSpec, ARM_MAX_SPEED, FINGER_MAX_SPEED};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Approach,
    Descend,
    Close,
    Lift,
    Hold,
}

#[derive(Debug, Clone)]
pub struct ScriptedGrasp {
    pub phase: Phase,
    /// Finger angle at which the fingers stop closing.
    pub close_limit: f64,
    target_height: f64,
    sample_time: f64,
    lift_origin: Option<Vector3<f64>>,
}

const POSITION_TOL: f64 = 0.003;
const HOVER: f64 = 0.10;
const GAIN: f64 = 0.8;
const DAMPING: f64 = 1e-3;

fn pose_error(state: &EnvState, target: &Vector3<f64>) -> Vector6<f64> {
    let hand = arm_transform(&state.arm_joint_angles);
    let dp = target - hand.translation.vector;
    let dr = (UnitQuaternion::identity() * hand.rotation.inverse()).scaled_axis();
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

fn jacobian(arm: &[f64; 6]) -> Matrix6<f64> {
    let h = 1e-6;
    let base = arm_transform(arm);
    let mut j = Matrix6::zeros();
    for c in 0..6 {
        let mut q = *arm;
        q[c] += h;
        let moved = arm_transform(&q);
        let dp = (moved.translation.vector - base.translation.vector) / h;
        let dr = Rotation3::from(moved.rotation * base.rotation.inverse()).scaled_axis() / h;
        for r in 0..3 {
            j[(r, c)] = dp[r];
            j[(r + 3, c)] = dr[r];
        }
    }
    j
}

impl ScriptedGrasp {
    pub fn new(spec: &TaskSpec) -> Self {
        ScriptedGrasp {
            phase: Phase::Approach,
            close_limit: 1.0,
            target_height: spec.target_height,
            sample_time: spec.sample_time,
            lift_origin: None,
        }
    }

    /// Hand height above the object center at which fingertips reach the
    /// object's mid-plane when partially closed.
    fn grasp_offset() -> f64 {
        FINGER_LENGTH * 0.9
    }

    fn track(&self, state: &EnvState, target: &Vector3<f64>) -> ([f64; 6], f64) {
        let err = pose_error(state, target);
        let j = jacobian(&state.arm_joint_angles);
        let jjt = j * j.transpose() + Matrix6::identity() * DAMPING;
        let dq = j.transpose() * jjt.try_inverse().unwrap_or_else(Matrix6::identity) * err * GAIN;
        let scale = 1.0 / (ARM_MAX_SPEED * self.sample_time);
        // uniform scaling keeps the joint-space direction of the step
        let peak = dq.amax() * scale;
        let shrink = if peak > 1.0 { 1.0 / peak } else { 1.0 };
        let cmd = std::array::from_fn(|i| dq[i] * scale * shrink);
        (cmd, err.fixed_rows::<3>(0).norm())
    }

    pub fn act(&mut self, state: &EnvState) -> Action {
        let obj = state.object_center;
        let open = |s: &EnvState| -> [f64; 3] {
            std::array::from_fn(|i| {
                (-s.finger_joint_angles[i] / (FINGER_MAX_SPEED * self.sample_time)).clamp(-1.0, 1.0)
            })
        };
        match self.phase {
            Phase::Approach => {
                let (arm, e) = self.track(state, &(obj + Vector3::new(0.0, 0.0, HOVER)));
                if e < POSITION_TOL {
                    self.phase = Phase::Descend;
                }
                Action {
                    arm,
                    fingers: open(state),
                }
            }
            Phase::Descend => {
                let (arm, e) = self.track(state, &(obj + Vector3::new(0.0, 0.0, Self::grasp_offset())));
                if e < POSITION_TOL {
                    self.phase = Phase::Close;
                }
                Action {
                    arm,
                    fingers: open(state),
                }
            }
            Phase::Close => {
                let (arm, _) = self.track(state, &(obj + Vector3::new(0.0, 0.0, Self::grasp_offset())));
                let closed = state.finger_joint_angles.iter().all(|q| *q >= self.close_limit);
                if state.attached && (state.contacts.len() == 3 || closed) {
                    self.phase = Phase::Lift;
                    self.lift_origin = Some(state.hand_position);
                    return Action { arm, fingers: [0.0; 3] };
                }
                let fingers = std::array::from_fn(|i| {
                    if state.finger_joint_angles[i] < self.close_limit {
                        1.0
                    } else {
                        0.0
                    }
                });
                Action { arm, fingers }
            }
            Phase::Lift | Phase::Hold => {
                let origin = self.lift_origin.unwrap_or(state.hand_position);
                let target = origin + Vector3::new(0.0, 0.0, self.target_height);
                let (arm, e) = self.track(state, &target);
                if e < POSITION_TOL * 0.3 {
                    self.phase = Phase::Hold;
                }
                Action { arm, fingers: [0.0; 3] }
            }
        }
    }
}
