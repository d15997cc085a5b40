//! Quasi-static hold test: can the contacts balance gravity with forces
//! inside their (linearized) friction cones?

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::grasp_math::{build_grasp_matrix, Contact};
use crate::nnls::nnls;

pub const PYRAMID_EDGES: usize = 8;
/// Upper bound on each contact's normal force, newtons.
pub const CONTACT_FORCE_CAP: f64 = 10.0;
pub const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct HoldResult {
    pub holds: bool,
    /// Wrench-balance residual relative to the gravity wrench norm.
    pub relative_residual: f64,
    /// Edge coefficients, `PYRAMID_EDGES` per contact.
    pub edge_forces: DVector<f64>,
}

/// Maps pyramid edge coefficients to stacked contact-frame force
/// components `(normal, tangent1, tangent2)` per contact (`3m x 8m`).
pub fn pyramid_edges(contacts: &[Contact]) -> DMatrix<f64> {
    let m = contacts.len();
    let mut e = DMatrix::zeros(3 * m, PYRAMID_EDGES * m);
    for (i, c) in contacts.iter().enumerate() {
        for k in 0..PYRAMID_EDGES {
            let ang = 2.0 * PI * k as f64 / PYRAMID_EDGES as f64;
            let col = PYRAMID_EDGES * i + k;
            e[(3 * i, col)] = 1.0;
            e[(3 * i + 1, col)] = c.friction_coeff * ang.cos();
            e[(3 * i + 2, col)] = c.friction_coeff * ang.sin();
        }
    }
    e
}

/// `gravity` is the acceleration vector in the object frame. Feasibility is
/// solved as one nonnegative least-squares problem over edge coefficients
/// plus one slack per contact enforcing the normal-force cap.
pub fn hold_check(contacts: &[Contact], object_mass: f64, gravity: &Vector3<f64>) -> HoldResult {
    let m = contacts.len();
    let weight = gravity * object_mass;
    let w_norm = weight.norm();
    let grasp = match build_grasp_matrix(contacts) {
        Ok(g) if m > 0 => g,
        _ => {
            return HoldResult {
                holds: false,
                relative_residual: f64::INFINITY,
                edge_forces: DVector::zeros(0),
            }
        }
    };
    let wrench_map = grasp.entries() * pyramid_edges(contacts);
    let n_edges = PYRAMID_EDGES * m;

    let mut a = DMatrix::zeros(6 + m, n_edges + m);
    a.view_mut((0, 0), (6, n_edges)).copy_from(&wrench_map);
    for i in 0..m {
        for k in 0..PYRAMID_EDGES {
            // every edge has unit normal component
            a[(6 + i, PYRAMID_EDGES * i + k)] = 1.0;
        }
        a[(6 + i, n_edges + i)] = 1.0;
    }
    let mut b = DVector::zeros(6 + m);
    for k in 0..3 {
        b[k] = -weight[k];
    }
    for i in 0..m {
        b[6 + i] = CONTACT_FORCE_CAP;
    }

    let sol = match nnls(&a, &b) {
        Ok(s) => s,
        Err(_) => {
            return HoldResult {
                holds: false,
                relative_residual: f64::INFINITY,
                edge_forces: DVector::zeros(n_edges),
            }
        }
    };
    let edge_forces = sol.x.rows(0, n_edges).into_owned();
    let mut net = &wrench_map * &edge_forces;
    for k in 0..3 {
        net[k] += weight[k];
    }
    let scale = if w_norm > 0.0 { w_norm } else { 1.0 };
    let relative_residual = net.norm() / scale;
    let cap_ok = (0..m).all(|i| {
        let normal: f64 = edge_forces.rows(PYRAMID_EDGES * i, PYRAMID_EDGES).sum();
        normal <= CONTACT_FORCE_CAP * (1.0 + RESIDUAL_TOL)
    });
    HoldResult {
        holds: relative_residual <= RESIDUAL_TOL && cap_ok,
        relative_residual,
        edge_forces,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);

    fn antipodal(mu: f64) -> Vec<Contact> {
        vec![
            Contact::new(Vector3::new(0.0325, 0.0, 0.0), Vector3::new(-1.0, 0.0, 0.0), mu).unwrap(),
            Contact::new(Vector3::new(-0.0325, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), mu).unwrap(),
        ]
    }

    #[test]
    fn no_contacts_cannot_hold() {
        assert!(!hold_check(&[], 0.1, &G).holds);
    }

    #[test]
    fn frictional_antipodal_grasp_holds() {
        let contacts = antipodal(0.5);
        let r = hold_check(&contacts, 0.1, &G);
        assert!(r.holds, "residual {}", r.relative_residual);

        // Oracle: an explicit feasible force set. Each contact pushes with
        // normal force 2 N and carries half the weight along +z, which is
        // within the pyramid (0.4905 <= 0.5 * 2).
        let half = 0.1 * 9.81 / 2.0;
        let mut wrench = nalgebra::Vector6::<f64>::zeros();
        for c in &contacts {
            let f = c.normal * 2.0 + Vector3::z() * half;
            let tangential = f - c.normal * f.dot(&c.normal);
            assert!(tangential.norm() <= c.friction_coeff * 2.0);
            let t = c.position.cross(&f);
            for k in 0..3 {
                wrench[k] += f[k];
                wrench[k + 3] += t[k];
            }
        }
        wrench[2] += -0.1 * 9.81;
        assert!(wrench.norm() < 1e-12);
    }

    #[test]
    fn frictionless_grasp_cannot_resist_tangential_gravity() {
        let r = hold_check(&antipodal(0.0), 0.1, &G);
        assert!(!r.holds);
        // normals are horizontal, so no vertical force can be produced and
        // the residual equals the full weight
        assert!((r.relative_residual - 1.0).abs() < 1e-9);
    }

    #[test]
    fn force_cap_limits_heavy_objects() {
        // mu = 0.5, two contacts, 10 N cap: at most 2 * 0.5 * 10 = 10 N of
        // lift, minus pyramid inscription; 2 kg (19.6 N) is out of reach
        assert!(hold_check(&antipodal(0.5), 0.9, &G).holds);
        assert!(!hold_check(&antipodal(0.5), 2.0, &G).holds);
    }

    #[test]
    fn single_contact_from_below_holds() {
        let c = Contact::new(Vector3::new(0.0, 0.0, -0.0325), Vector3::new(0.0, 0.0, 1.0), 0.5).unwrap();
        assert!(hold_check(&[c], 0.1, &G).holds);
    }
}
