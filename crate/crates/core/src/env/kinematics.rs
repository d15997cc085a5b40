//! Simplified six-joint arm with a three-finger gripper.
//!
//! Link table, version 1. Each arm joint applies `Rot(axis, q)` followed by
//! a translation along its link vector, both in the joint's local frame:
//!
//! | joint | axis | link vector (m)      | limits (rad)  |
//! |-------|------|----------------------|---------------|
//! | 1     | z    | (0, 0, 0.29)         | [-pi, pi]     |
//! | 2     | y    | (0, 0, 0.123)        | [-1.5, 1.5]   |
//! | 3     | y    | (0.29, 0, 0)         | [-2.5, 2.5]   |
//! | 4     | x    | (0.123, 0, 0)        | [-pi, pi]     |
//! | 5     | y    | (0, 0, -0.074)       | [-2.5, 2.5]   |
//! | 6     | z    | (0, 0, -0.074)       | [-pi, pi]     |
//!
//! The frame after joint 6 is the hand frame; its origin is the hand
//! position and its `-z` axis is the approach direction. Finger `i` is
//! mounted on the hand plane at radius 0.06 m and azimuth `120 i` degrees,
//! rotates about the hand-plane tangent at its base, and carries a 0.04 m
//! link ending in a 0.01 m fingertip sphere. At finger angle 0 the link
//! points along the approach direction; positive angles close it inward.

use std::f64::consts::PI;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};

pub const LINK_TABLE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Vector3<f64> {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => Vector3::z(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct JointSpec {
    pub axis: Axis,
    pub link: [f64; 3],
    pub limits: (f64, f64),
}

pub const ARM_JOINTS: [JointSpec; 6] = [
    JointSpec {
        axis: Axis::Z,
        link: [0.0, 0.0, 0.29],
        limits: (-PI, PI),
    },
    JointSpec {
        axis: Axis::Y,
        link: [0.0, 0.0, 0.123],
        limits: (-1.5, 1.5),
    },
    JointSpec {
        axis: Axis::Y,
        link: [0.29, 0.0, 0.0],
        limits: (-2.5, 2.5),
    },
    JointSpec {
        axis: Axis::X,
        link: [0.123, 0.0, 0.0],
        limits: (-PI, PI),
    },
    JointSpec {
        axis: Axis::Y,
        link: [0.0, 0.0, -0.074],
        limits: (-2.5, 2.5),
    },
    JointSpec {
        axis: Axis::Z,
        link: [0.0, 0.0, -0.074],
        limits: (-PI, PI),
    },
];

pub const FINGER_BASE_RADIUS: f64 = 0.06;
pub const FINGER_LENGTH: f64 = 0.04;
pub const FINGERTIP_RADIUS: f64 = 0.01;
pub const FINGER_LIMITS: (f64, f64) = (-0.3, 1.2);

/// Hand position with every joint at zero (hand-multiplied chain:
/// x = 0.29 + 0.123, z = 0.29 + 0.123 - 0.074 - 0.074).
pub const ZERO_POSE_HAND_POSITION: [f64; 3] = [0.413, 0.0, 0.265];

/// Arm configuration used by `reset`.
pub const HOME_ARM: [f64; 6] = [0.0; 6];
pub const HOME_FINGERS: [f64; 3] = [0.0; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct HandKinematics {
    pub hand: Isometry3<f64>,
    pub fingertips: [Vector3<f64>; 3],
}

impl HandKinematics {
    pub fn hand_position(&self) -> Vector3<f64> {
        self.hand.translation.vector
    }

    pub fn approach(&self) -> Vector3<f64> {
        self.hand.rotation * -Vector3::z()
    }
}

pub fn finger_azimuth(i: usize) -> f64 {
    2.0 * PI * i as f64 / 3.0
}

/// Mount pose of finger `i` in the hand frame, before its joint rotation.
fn finger_mount(i: usize) -> (Vector3<f64>, Vector3<f64>) {
    let phi = finger_azimuth(i);
    let radial = Vector3::new(phi.cos(), phi.sin(), 0.0);
    let axis = Vector3::z().cross(&radial);
    (radial * FINGER_BASE_RADIUS, axis)
}

pub fn arm_transform(arm: &[f64; 6]) -> Isometry3<f64> {
    ARM_JOINTS
        .iter()
        .zip(arm)
        .fold(Isometry3::identity(), |acc, (joint, &q)| {
            let rot = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_unchecked(joint.axis.unit()), q);
            let link = Translation3::new(joint.link[0], joint.link[1], joint.link[2]);
            acc * Isometry3::from_parts(Translation3::identity(), rot)
                * Isometry3::from_parts(link, UnitQuaternion::identity())
        })
}

pub fn forward_kinematics(arm: &[f64; 6], fingers: &[f64; 3]) -> HandKinematics {
    let hand = arm_transform(arm);
    let fingertips = std::array::from_fn(|i| {
        let (base, axis) = finger_mount(i);
        let rot = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), fingers[i]);
        let tip_local = base + rot * Vector3::new(0.0, 0.0, -FINGER_LENGTH);
        hand * nalgebra::Point3::from(tip_local)
    })
    .map(|p: nalgebra::Point3<f64>| p.coords);
    HandKinematics { hand, fingertips }
}

pub fn clamp_arm(arm: &mut [f64; 6]) {
    for (q, joint) in arm.iter_mut().zip(&ARM_JOINTS) {
        *q = q.clamp(joint.limits.0, joint.limits.1);
    }
}

pub fn clamp_fingers(fingers: &mut [f64; 3]) {
    for q in fingers.iter_mut() {
        *q = q.clamp(FINGER_LIMITS.0, FINGER_LIMITS.1);
    }
}
