//! Grasp matrix construction and the two grasp-quality rewards.
//!
//! Contacts use the hard-finger model: each contact transmits a 3-D force
//! and no moment, so `m` contacts give a `6 x 3m` grasp matrix whose column
//! for frame direction `d` at position `p` is `[d; p x d]`.
//!
//! Two quantities are derived from the matrix:
//! * the graspable reward, `0.1` when the matrix has a nontrivial null space
//!   (internal squeezing forces exist) and `0` otherwise;
//! * the volume-of-ellipsoid quality, the product of the nonzero singular
//!   values (a pseudo-determinant, so two-contact grasps score above zero),
//!   together with its normalized form in `[0, 1]`.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Singular values below `RANK_TOL * sigma_max` count as zero.
pub const RANK_TOL: f64 = 1e-9;

/// Reward granted to a grasp whose matrix has internal forces.
pub const GRASPABLE_REWARD: f64 = 0.1;

/// Number of fingers on the gripper; the normalizer never assumes fewer
/// contacts than this.
pub const HAND_CONTACTS: usize = 3;

const FRAME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    /// Object frame, relative to the center of mass.
    pub position: Vector3<f64>,
    /// Unit, pointing into the object.
    pub normal: Vector3<f64>,
    pub tangent1: Vector3<f64>,
    pub tangent2: Vector3<f64>,
    pub friction_coeff: f64,
}

impl Contact {
    /// Builds a contact with the deterministic tangent frame from
    /// [`contact_frame`].
    pub fn new(position: Vector3<f64>, normal: Vector3<f64>, friction_coeff: f64) -> Result<Self> {
        let n = normal
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("zero contact normal"))?;
        let (tangent1, tangent2) = contact_frame(&n);
        let c = Contact {
            position,
            normal: n,
            tangent1,
            tangent2,
            friction_coeff,
        };
        c.validate()?;
        Ok(c)
    }

    /// Builds a contact with an explicit first tangent; the second tangent
    /// is `tangent1 x normal`.
    pub fn with_tangent(
        position: Vector3<f64>,
        normal: Vector3<f64>,
        tangent1: Vector3<f64>,
        friction_coeff: f64,
    ) -> Result<Self> {
        let c = Contact {
            position,
            normal,
            tangent1,
            tangent2: tangent1.cross(&normal),
            friction_coeff,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.position, self.normal, self.tangent1, self.tangent2];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) || !self.friction_coeff.is_finite() {
            return Err(Error::invalid("contact has non-finite entries"));
        }
        if self.friction_coeff < 0.0 {
            return Err(Error::invalid(format!(
                "friction coefficient {} is negative",
                self.friction_coeff
            )));
        }
        let frame = [self.normal, self.tangent1, self.tangent2];
        for (i, a) in frame.iter().enumerate() {
            if (a.norm() - 1.0).abs() > FRAME_TOL {
                return Err(Error::invalid(format!("contact frame axis {i} is not unit length")));
            }
            for b in &frame[i + 1..] {
                if a.dot(b).abs() > FRAME_TOL {
                    return Err(Error::invalid("contact frame axes are not orthogonal"));
                }
            }
        }
        Ok(())
    }

    /// Frame directions in column order: normal, tangent1, tangent2.
    pub fn frame(&self) -> [Vector3<f64>; 3] {
        [self.normal, self.tangent1, self.tangent2]
    }

    /// Same contact with every vector rotated by `rot`.
    pub fn rotated(&self, rot: &nalgebra::Rotation3<f64>) -> Contact {
        Contact {
            position: rot * self.position,
            normal: rot * self.normal,
            tangent1: rot * self.tangent1,
            tangent2: rot * self.tangent2,
            friction_coeff: self.friction_coeff,
        }
    }
}

/// Tangent pair for a unit normal: `tangent1` is the object x-axis projected
/// onto the tangent plane (y-axis when the normal is within 1e-6 of +-x) and
/// `tangent2 = tangent1 x normal`.
pub fn contact_frame(normal: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let axis = if 1.0 - normal.x.abs() < 1e-6 {
        Vector3::y()
    } else {
        Vector3::x()
    };
    let t1 = (axis - normal * normal.dot(&axis)).normalize();
    let t2 = t1.cross(normal);
    (t1, t2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspMatrix {
    entries: DMatrix<f64>,
    num_contacts: usize,
}

impl GraspMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn num_contacts(&self) -> usize {
        self.num_contacts
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }

    /// Copy with the moment rows divided by `length`, making every entry
    /// dimensionless.
    pub fn nondimensional(&self, length: f64) -> GraspMatrix {
        let mut entries = self.entries.clone();
        for r in 3..6 {
            for c in 0..entries.ncols() {
                entries[(r, c)] /= length;
            }
        }
        GraspMatrix {
            entries,
            num_contacts: self.num_contacts,
        }
    }

    /// Singular values sorted in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        if self.entries.ncols() == 0 {
            return Vec::new();
        }
        let svd = self.entries.clone().svd(false, false);
        let mut sv: Vec<f64> = svd.singular_values.iter().map(|s| s.max(0.0)).collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }
}

pub fn build_grasp_matrix(contacts: &[Contact]) -> Result<GraspMatrix> {
    let mut entries = DMatrix::zeros(6, 3 * contacts.len());
    for (i, c) in contacts.iter().enumerate() {
        c.validate()?;
        for (j, d) in c.frame().iter().enumerate() {
            let moment = c.position.cross(d);
            let col = 3 * i + j;
            for k in 0..3 {
                entries[(k, col)] = d[k];
                entries[(k + 3, col)] = moment[k];
            }
        }
    }
    Ok(GraspMatrix {
        entries,
        num_contacts: contacts.len(),
    })
}

fn rank_of(sv: &[f64], tol: f64) -> usize {
    match sv.first() {
        Some(&max) if max > 0.0 => sv.iter().filter(|&&s| s > tol * max).count(),
        _ => 0,
    }
}

/// Returns `(reward, nullity)`; reward is exactly 0.1 when internal forces
/// exist and exactly 0 otherwise.
pub fn graspable_reward(g: &GraspMatrix, tol: f64) -> Result<(f64, usize)> {
    if !(tol > 0.0) {
        return Err(Error::invalid("rank tolerance must be positive"));
    }
    if g.entries.nrows() != 6 || g.entries.ncols() != 3 * g.num_contacts {
        return Err(Error::invalid("grasp matrix must be 6 x 3m"));
    }
    if g.ncols() == 0 {
        return Ok((0.0, 0));
    }
    let sv = g.singular_values();
    let nullity = g.ncols() - rank_of(&sv, tol);
    let reward = if nullity > 0 { GRASPABLE_REWARD } else { 0.0 };
    Ok((reward, nullity))
}

/// Product of the singular values above `tol * sigma_max`; equals
/// `sqrt(det(G G^T))` when `G` has full row rank.
pub fn quality_vev(g: &GraspMatrix, tol: f64) -> (f64, Vec<f64>) {
    let sv = g.singular_values();
    let rank = rank_of(&sv, tol);
    let q = if rank == 0 { 0.0 } else { sv[..rank].iter().product() };
    (q, sv)
}

/// Upper bound on the quality of any `m`-contact grasp whose contacts lie
/// within `max_moment_arm` of the center of mass. Every column block has
/// Frobenius norm at most `sqrt(1 + r^2)`, so each singular value is at most
/// `sqrt(m (1 + r^2))`, and at most `min(6, 3m)` of them are nonzero.
pub fn quality_upper_bound(num_contacts: usize, max_moment_arm: f64) -> f64 {
    let k = (3 * num_contacts).min(6) as i32;
    let sigma_max = (num_contacts as f64 * (1.0 + max_moment_arm * max_moment_arm)).sqrt();
    sigma_max.powi(k)
}

pub fn normalize_vev(q_vev: f64, num_contacts: usize, max_moment_arm: f64) -> f64 {
    if num_contacts == 0 || !(q_vev > 0.0) {
        return 0.0;
    }
    (q_vev / quality_upper_bound(num_contacts, max_moment_arm)).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityResult {
    pub num_contacts: usize,
    pub graspable_reward: f64,
    pub q_vev: f64,
    pub r_vev: f64,
    pub nullity: usize,
    pub singular_values: Vec<f64>,
}

impl QualityResult {
    pub fn empty() -> Self {
        QualityResult {
            num_contacts: 0,
            graspable_reward: 0.0,
            q_vev: 0.0,
            r_vev: 0.0,
            nullity: 0,
            singular_values: Vec::new(),
        }
    }
}

/// Full quality evaluation for a contact set on an object of circumscribed
/// radius `object_radius`.
///
/// `q_vev` is reported in SI units. `r_vev` is computed from the
/// dimensionless matrix (moments divided by the radius) and normalized
/// against a grasp with at least as many contacts as the hand has fingers,
/// so grasps with different contact counts share one scale.
pub fn evaluate(contacts: &[Contact], object_radius: f64) -> Result<QualityResult> {
    if !(object_radius > 0.0) {
        return Err(Error::invalid("object radius must be positive"));
    }
    if contacts.is_empty() {
        return Ok(QualityResult::empty());
    }
    let g = build_grasp_matrix(contacts)?;
    let (graspable_reward, nullity) = graspable_reward(&g, RANK_TOL)?;
    let (q_vev, singular_values) = quality_vev(&g, RANK_TOL);
    let (q_scaled, _) = quality_vev(&g.nondimensional(object_radius), RANK_TOL);
    let r_vev = normalize_vev(q_scaled, contacts.len().max(HAND_CONTACTS), 1.0);
    Ok(QualityResult {
        num_contacts: contacts.len(),
        graspable_reward,
        q_vev,
        r_vev,
        nullity,
        singular_values,
    })
}

/// Named contact set on a shared object, used to compare grasp layouts.
#[derive(Debug, Clone)]
pub struct NamedGrasp {
    pub name: String,
    pub contacts: Vec<Contact>,
}

/// Radius and height of the cylinder the reference grasps are placed on.
pub const REFERENCE_CYLINDER_RADIUS: f64 = 0.0325;
pub const REFERENCE_CYLINDER_HEIGHT: f64 = 0.065;

pub fn reference_object_radius() -> f64 {
    REFERENCE_CYLINDER_RADIUS.hypot(REFERENCE_CYLINDER_HEIGHT / 2.0)
}

fn side_contact(angle: f64, height: f64, mu: f64) -> Contact {
    let radial = Vector3::new(angle.cos(), angle.sin(), 0.0);
    let pos = radial * REFERENCE_CYLINDER_RADIUS + Vector3::new(0.0, 0.0, height);
    Contact::new(pos, -radial, mu).expect("side contact frame is orthonormal")
}

/// Three grasps on the reference cylinder, in increasing quality: a skewed
/// two-contact grasp (fingers 90 degrees apart, one high on the side), an
/// antipodal two-contact grasp and a symmetric three-contact grasp.
pub fn reference_grasps() -> [NamedGrasp; 3] {
    use std::f64::consts::{FRAC_PI_2, PI};
    let mu = 0.5;
    let h = REFERENCE_CYLINDER_HEIGHT / 2.0;
    [
        NamedGrasp {
            name: "skewed".into(),
            contacts: vec![side_contact(0.0, 0.0, mu), side_contact(FRAC_PI_2, 0.75 * h, mu)],
        },
        NamedGrasp {
            name: "antipodal".into(),
            contacts: vec![side_contact(0.0, 0.0, mu), side_contact(PI, 0.0, mu)],
        },
        NamedGrasp {
            name: "three-finger".into(),
            contacts: (0..3)
                .map(|i| side_contact(2.0 * PI * i as f64 / 3.0, 0.0, mu))
                .collect(),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    fn single() -> Contact {
        Contact::with_tangent(v(0.0, 0.0, 0.1), v(0.0, 0.0, -1.0), v(1.0, 0.0, 0.0), 0.5).unwrap()
    }

    fn antipodal_cube() -> Vec<Contact> {
        vec![
            Contact::new(v(0.0325, 0.0, 0.0), v(-1.0, 0.0, 0.0), 0.5).unwrap(),
            Contact::new(v(-0.0325, 0.0, 0.0), v(1.0, 0.0, 0.0), 0.5).unwrap(),
        ]
    }

    #[test]
    fn empty_contact_set_gives_empty_matrix() {
        let g = build_grasp_matrix(&[]).unwrap();
        assert_eq!(g.entries().shape(), (6, 0));
        assert_eq!(g.num_contacts(), 0);
        assert_eq!(graspable_reward(&g, RANK_TOL).unwrap(), (0.0, 0));
        assert_eq!(quality_vev(&g, RANK_TOL).0, 0.0);
    }

    #[test]
    fn single_contact_columns() {
        let c = single();
        assert_eq!(c.tangent2, v(0.0, 1.0, 0.0));
        let g = build_grasp_matrix(&[c]).unwrap();
        let expected = [
            [0.0, 0.0, -1.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0, 0.1, 0.0],
            [0.0, 1.0, 0.0, -0.1, 0.0, 0.0],
        ];
        for (col, exp) in expected.iter().enumerate() {
            for (row, e) in exp.iter().enumerate() {
                assert!((g.entries()[(row, col)] - e).abs() < 1e-15, "({row},{col})");
            }
        }
    }

    #[test]
    fn single_contact_quality() {
        let g = build_grasp_matrix(&[single()]).unwrap();
        let (q, sv) = quality_vev(&g, RANK_TOL);
        assert!((q - 1.01).abs() < 1e-12);
        assert!((sv[0] - 1.01f64.sqrt()).abs() < 1e-12);
        assert!((sv[1] - 1.01f64.sqrt()).abs() < 1e-12);
        assert!((sv[2] - 1.0).abs() < 1e-12);
        assert_eq!(graspable_reward(&g, RANK_TOL).unwrap(), (0.0, 0));
    }

    #[test]
    fn antipodal_squeeze_is_internal_force() {
        let g = build_grasp_matrix(&antipodal_cube()).unwrap();
        assert_eq!(g.entries().shape(), (6, 6));
        // unit push along each inward normal: column 0 of each block
        let mut squeeze = nalgebra::DVector::zeros(6);
        squeeze[0] = 1.0;
        squeeze[3] = 1.0;
        let w = g.entries() * squeeze;
        assert!(w.norm() < 1e-15);
        let (reward, nullity) = graspable_reward(&g, RANK_TOL).unwrap();
        assert_eq!(nullity, 1);
        assert_eq!(reward, 0.1);
    }

    #[test]
    fn non_orthonormal_frame_rejected() {
        let bad = Contact {
            position: v(0.0, 0.0, 0.0),
            normal: v(0.0, 0.0, 1.0),
            tangent1: v(1.0, 0.1, 0.0),
            tangent2: v(0.0, 1.0, 0.0),
            friction_coeff: 0.5,
        };
        assert!(build_grasp_matrix(&[bad]).is_err());
        let neg = Contact {
            friction_coeff: -0.1,
            ..single()
        };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn frame_falls_back_near_x_axis() {
        let (t1, t2) = contact_frame(&v(-1.0, 0.0, 0.0));
        assert_eq!(t1, v(0.0, 1.0, 0.0));
        assert!(t2.dot(&v(-1.0, 0.0, 0.0)).abs() < 1e-15);
        let (t1, _) = contact_frame(&v(0.0, 0.0, 1.0));
        assert_eq!(t1, v(1.0, 0.0, 0.0));
    }

    #[test]
    fn normalization_fixed_points() {
        assert_eq!(normalize_vev(0.0, 2, 0.05), 0.0);
        assert_eq!(normalize_vev(1.0, 0, 0.05), 0.0);
        let qmax = quality_upper_bound(2, 0.05);
        assert_eq!(normalize_vev(qmax, 2, 0.05), 1.0);
        assert_eq!(normalize_vev(10.0 * qmax, 2, 0.05), 1.0);
        assert!(normalize_vev(0.5 * qmax, 2, 0.05) < normalize_vev(0.6 * qmax, 2, 0.05));
    }

    #[test]
    fn reference_grasps_are_ordered() {
        let r = reference_object_radius();
        let scores: Vec<f64> = reference_grasps()
            .iter()
            .map(|g| evaluate(&g.contacts, r).unwrap().r_vev)
            .collect();
        assert!(scores[0] > 0.0);
        assert!(scores[0] < scores[1], "{scores:?}");
        assert!(scores[1] < scores[2], "{scores:?}");
        assert!(scores[2] <= 1.0);
    }

    #[test]
    fn scaling_positions_raises_antipodal_quality() {
        let base = antipodal_cube();
        let (q0, _) = quality_vev(&build_grasp_matrix(&base).unwrap(), RANK_TOL);
        for s in [1.5, 2.0, 4.0] {
            let scaled: Vec<Contact> = base
                .iter()
                .map(|c| Contact {
                    position: c.position * s,
                    ..*c
                })
                .collect();
            let (q, _) = quality_vev(&build_grasp_matrix(&scaled).unwrap(), RANK_TOL);
            assert!(q >= q0);
        }
    }
}
