//! Quasi-static grasping environment.
//!
//! The object is static on the table until the fingertips hold it: with at
//! least two contacts and a passing [`hold_check`], it attaches to the hand
//! and follows the hand's translation. When the hold fails the object drops
//! straight down to its resting pose in the same step.

pub mod geometry;
pub mod hold;
pub mod kinematics;
pub mod scripted;

use nalgebra::Vector3;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grasp_math::Contact;

pub use geometry::{detect_contacts, ObjectGeometry, Shape};
pub use hold::{hold_check, HoldResult};
pub use kinematics::{forward_kinematics, HandKinematics};

pub const ARM_MAX_SPEED: f64 = 0.5;
pub const FINGER_MAX_SPEED: f64 = 1.0;
pub const OBJECT_MASS: f64 = 0.1;
pub const GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);
/// Nominal object position on the table (x, y), directly under the hand
/// at the home configuration.
pub const OBJECT_NOMINAL_XY: [f64; 2] = [0.413, 0.0];
pub const PLACEMENT_JITTER: f64 = 0.005;

pub const SUCCESS_TOLERANCE: f64 = 0.01;
pub const SUCCESS_WINDOW: usize = 10;

pub const OBS_DIM: usize = 15;
pub const ACTION_DIM: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub object_shape: Shape,
    pub object_scale: f64,
    /// Characteristic size at scale 1 (cube side), meters.
    pub object_base_size: f64,
    /// Lift height above the resting pose, meters.
    pub target_height: f64,
    pub max_steps: usize,
    pub sample_time: f64,
    pub friction_coeff: f64,
    pub seed: u64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        TaskSpec {
            object_shape: Shape::Cube,
            object_scale: 1.0,
            object_base_size: 0.065,
            target_height: 0.05,
            max_steps: 300,
            sample_time: 0.05,
            friction_coeff: 0.5,
            seed: 0,
        }
    }
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("object_scale", self.object_scale),
            ("object_base_size", self.object_base_size),
            ("target_height", self.target_height),
            ("sample_time", self.sample_time),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::config(
                    format!("task.{name}"),
                    format!("must be positive, got {value}"),
                ));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::config("task.max_steps", "must be at least 1"));
        }
        if !(self.friction_coeff >= 0.0) {
            return Err(Error::config("task.friction_coeff", "must be nonnegative"));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<ObjectGeometry> {
        ObjectGeometry::new(self.object_shape, self.object_base_size * self.object_scale / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub arm: [f64; 6],
    pub fingers: [f64; 3],
}

impl Action {
    pub const ZERO: Action = Action {
        arm: [0.0; 6],
        fingers: [0.0; 3],
    };

    /// Components are clamped to `[-1, 1]`; non-finite entries become 0.
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() != ACTION_DIM {
            return Err(Error::invalid(format!(
                "action needs {ACTION_DIM} values, got {}",
                values.len()
            )));
        }
        let c = |v: f64| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
        Ok(Action {
            arm: std::array::from_fn(|i| c(values[i])),
            fingers: std::array::from_fn(|i| c(values[6 + i])),
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.arm.iter().chain(&self.fingers).copied().collect()
    }
}

/// `object_center (3) | finger joints (3) | hand position (3) | arm joints (6)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub arm_joint_angles: [f64; 6],
    pub finger_joint_angles: [f64; 3],
    pub hand_position: Vector3<f64>,
    pub fingertips: [Vector3<f64>; 3],
    pub object_center: Vector3<f64>,
    /// Height of the object's center above the table.
    pub object_height: f64,
    pub rest_height: f64,
    pub attached: bool,
    /// Object center minus hand position while attached.
    pub grip_offset: Vector3<f64>,
    pub step_index: usize,
    pub contacts: Vec<Contact>,
    pub inter_finger_contact: bool,
    pub dist_obj_hand: f64,
    /// Finger commands from the most recent action (after clamping).
    pub last_finger_command: [f64; 3],
}

impl EnvState {
    pub fn observation(&self) -> Observation {
        let mut o = [0.0; OBS_DIM];
        o[0..3].copy_from_slice(self.object_center.as_slice());
        o[3..6].copy_from_slice(&self.finger_joint_angles);
        o[6..9].copy_from_slice(self.hand_position.as_slice());
        o[9..15].copy_from_slice(&self.arm_joint_angles);
        Observation(o)
    }

    /// Lift of the object above its resting pose.
    pub fn lift_height(&self) -> f64 {
        self.object_height - self.rest_height
    }

    /// `|T_z - Obj_z|` with `Obj_z` measured from the resting pose.
    pub fn height_error(&self, target_height: f64) -> f64 {
        (target_height - self.lift_height()).abs()
    }
}

/// Per-episode seed stream: the jitter RNG for episode `index` of a run
/// seeded with `seed`.
pub fn episode_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.random()
}

fn refresh(state: &mut EnvState, geometry: &ObjectGeometry, friction: f64) -> Result<()> {
    let kin = forward_kinematics(&state.arm_joint_angles, &state.finger_joint_angles);
    state.hand_position = kin.hand_position();
    state.fingertips = kin.fingertips;
    rescan(state, geometry, friction)
}

fn rescan(state: &mut EnvState, geometry: &ObjectGeometry, friction: f64) -> Result<()> {
    let scan = detect_contacts(&state.fingertips, &state.object_center, geometry, friction)?;
    state.contacts = scan.contacts;
    state.inter_finger_contact = scan.inter_finger_contact;
    state.object_height = state.object_center.z;
    state.dist_obj_hand = (state.hand_position - state.object_center).norm();
    Ok(())
}

pub fn reset(spec: &TaskSpec) -> Result<(EnvState, Observation)> {
    spec.validate()?;
    let geometry = spec.geometry()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jx = rng.random_range(-PLACEMENT_JITTER..=PLACEMENT_JITTER);
    let jy = rng.random_range(-PLACEMENT_JITTER..=PLACEMENT_JITTER);
    let rest = geometry.rest_height();
    let mut state = EnvState {
        arm_joint_angles: kinematics::HOME_ARM,
        finger_joint_angles: kinematics::HOME_FINGERS,
        hand_position: Vector3::zeros(),
        fingertips: [Vector3::zeros(); 3],
        object_center: Vector3::new(OBJECT_NOMINAL_XY[0] + jx, OBJECT_NOMINAL_XY[1] + jy, rest),
        object_height: rest,
        rest_height: rest,
        attached: false,
        grip_offset: Vector3::zeros(),
        step_index: 0,
        contacts: Vec::new(),
        inter_finger_contact: false,
        dist_obj_hand: 0.0,
        last_finger_command: [0.0; 3],
    };
    refresh(&mut state, &geometry, spec.friction_coeff)?;
    let obs = state.observation();
    Ok((state, obs))
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: EnvState,
    pub observation: Observation,
    pub done: bool,
}

fn holds(state: &EnvState) -> bool {
    state.contacts.len() >= 2 && hold_check(&state.contacts, OBJECT_MASS, &GRAVITY).holds
}

pub fn step(state: &EnvState, action: &Action, spec: &TaskSpec) -> Result<StepOutcome> {
    if state.step_index >= spec.max_steps {
        return Err(Error::Protocol(format!(
            "episode finished after {} steps; call reset",
            state.step_index
        )));
    }
    let geometry = spec.geometry()?;
    let action = Action::from_slice(&action.to_vec())?;
    let dt = spec.sample_time;
    let mut next = state.clone();
    for (q, cmd) in next.arm_joint_angles.iter_mut().zip(&action.arm) {
        *q += cmd * ARM_MAX_SPEED * dt;
    }
    for (q, cmd) in next.finger_joint_angles.iter_mut().zip(&action.fingers) {
        *q += cmd * FINGER_MAX_SPEED * dt;
    }
    kinematics::clamp_arm(&mut next.arm_joint_angles);
    kinematics::clamp_fingers(&mut next.finger_joint_angles);
    next.last_finger_command = action.fingers;

    let kin = forward_kinematics(&next.arm_joint_angles, &next.finger_joint_angles);
    next.hand_position = kin.hand_position();
    next.fingertips = kin.fingertips;
    if next.attached {
        next.object_center = next.hand_position + next.grip_offset;
        if next.object_center.z < next.rest_height {
            // the table stops the object; it slides in the grip
            next.object_center.z = next.rest_height;
            next.grip_offset = next.object_center - next.hand_position;
        }
    }
    rescan(&mut next, &geometry, spec.friction_coeff)?;

    if holds(&next) {
        if !next.attached {
            next.attached = true;
            next.grip_offset = next.object_center - next.hand_position;
        }
    } else if next.attached {
        next.attached = false;
        next.grip_offset = Vector3::zeros();
        next.object_center.z = next.rest_height;
        rescan(&mut next, &geometry, spec.friction_coeff)?;
    }

    next.step_index += 1;
    let done = next.step_index >= spec.max_steps;
    let observation = next.observation();
    Ok(StepOutcome {
        state: next,
        observation,
        done,
    })
}

/// True when the lift error stayed within 1 cm over the last ten steps.
/// `height_errors` holds one entry per step of the episode.
pub fn is_success(height_errors: &[f64]) -> bool {
    height_errors.len() >= SUCCESS_WINDOW
        && height_errors[height_errors.len() - SUCCESS_WINDOW..]
            .iter()
            .all(|e| *e <= SUCCESS_TOLERANCE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic() {
        let spec = TaskSpec {
            seed: 42,
            ..TaskSpec::default()
        };
        let (a, oa) = reset(&spec).unwrap();
        let (b, ob) = reset(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(oa, ob);
        let (c, _) = reset(&TaskSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.object_center, c.object_center);
    }

    #[test]
    fn reset_places_resting_cube() {
        let (s, _) = reset(&TaskSpec::default()).unwrap();
        assert_eq!(s.object_height, 0.0325);
        assert_eq!(s.step_index, 0);
        assert!(!s.attached);
        assert!((s.object_center.x - OBJECT_NOMINAL_XY[0]).abs() <= PLACEMENT_JITTER);
        assert!((s.object_center.y - OBJECT_NOMINAL_XY[1]).abs() <= PLACEMENT_JITTER);
        assert!(s.contacts.is_empty());
    }

    #[test]
    fn scale_multiplies_dimensions() {
        let base = TaskSpec::default().geometry().unwrap();
        let big = TaskSpec {
            object_scale: 1.1,
            ..TaskSpec::default()
        }
        .geometry()
        .unwrap();
        assert!((big.size - 1.1 * base.size).abs() < 1e-15);
        assert!((big.rest_height() - 1.1 * base.rest_height()).abs() < 1e-15);
        let (s, _) = reset(&TaskSpec {
            object_scale: 1.1,
            ..TaskSpec::default()
        })
        .unwrap();
        assert!((s.object_height - 0.0325 * 1.1).abs() < 1e-15);
    }

    #[test]
    fn zero_action_changes_only_step_index() {
        let spec = TaskSpec::default();
        let (s, _) = reset(&spec).unwrap();
        let out = step(&s, &Action::ZERO, &spec).unwrap();
        assert_eq!(out.state.arm_joint_angles, s.arm_joint_angles);
        assert_eq!(out.state.finger_joint_angles, s.finger_joint_angles);
        assert_eq!(out.state.object_center, s.object_center);
        assert_eq!(out.state.step_index, 1);
        assert!(!out.done);
    }

    #[test]
    fn stepping_past_the_end_is_a_protocol_error() {
        let spec = TaskSpec {
            max_steps: 2,
            ..TaskSpec::default()
        };
        let (mut s, _) = reset(&spec).unwrap();
        for i in 0..2 {
            let out = step(&s, &Action::ZERO, &spec).unwrap();
            assert_eq!(out.done, i == 1);
            s = out.state;
        }
        assert!(matches!(step(&s, &Action::ZERO, &spec), Err(Error::Protocol(_))));
    }

    #[test]
    fn actions_are_clamped_and_joint_limits_hold() {
        let spec = TaskSpec::default();
        let (mut s, _) = reset(&spec).unwrap();
        let wild = Action::from_slice(&[5.0, -5.0, 5.0, -5.0, 5.0, -5.0, 9.0, 9.0, -9.0]).unwrap();
        assert_eq!(wild.arm[0], 1.0);
        assert_eq!(wild.fingers[2], -1.0);
        for _ in 0..200 {
            s = step(&s, &wild, &spec).unwrap().state;
            for (q, j) in s.arm_joint_angles.iter().zip(&kinematics::ARM_JOINTS) {
                assert!(*q >= j.limits.0 && *q <= j.limits.1);
            }
            for q in s.finger_joint_angles {
                assert!((kinematics::FINGER_LIMITS.0..=kinematics::FINGER_LIMITS.1).contains(&q));
            }
            assert!(s.object_height >= s.rest_height);
        }
    }

    #[test]
    fn observation_layout() {
        let (s, o) = reset(&TaskSpec::default()).unwrap();
        assert_eq!(o.as_slice().len(), OBS_DIM);
        assert_eq!(&o.0[0..3], s.object_center.as_slice());
        assert_eq!(&o.0[3..6], &s.finger_joint_angles);
        assert_eq!(&o.0[6..9], s.hand_position.as_slice());
        assert_eq!(&o.0[9..15], &s.arm_joint_angles);
    }

    #[test]
    fn success_needs_ten_steps_in_band() {
        let mut errs = vec![0.05; 290];
        errs.extend(vec![0.005; 10]);
        assert!(is_success(&errs));
        errs[295] = 0.02;
        assert!(!is_success(&errs));
        assert!(!is_success(&[0.0; 9]));
    }
}
