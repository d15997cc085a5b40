//! Primitive objects, signed distances and fingertip contact detection.

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::env::kinematics::FINGERTIP_RADIUS;
use crate::error::{Error, Result};
use crate::grasp_math::Contact;

/// Extra slack on top of the fingertip radius when deciding contact.
pub const CONTACT_MARGIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Cube,
    Cylinder,
    Polyhedron,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Cube, Shape::Cylinder, Shape::Polyhedron];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Cube => "cube",
            Shape::Cylinder => "cylinder",
            Shape::Polyhedron => "polyhedron",
        }
    }
}

impl std::str::FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cube" => Ok(Shape::Cube),
            "cylinder" => Ok(Shape::Cylinder),
            "polyhedron" => Ok(Shape::Polyhedron),
            other => Err(Error::invalid(format!("unknown shape `{other}`"))),
        }
    }
}

/// Closest-point query result in the object frame.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceQuery {
    /// Negative inside the object.
    pub signed_distance: f64,
    pub closest: Vector3<f64>,
    /// Outward unit normal at `closest`.
    pub outward: Vector3<f64>,
}

/// Object geometry. `size` is the characteristic half-extent: cube half
/// side, cylinder radius (and half height), octahedron circumradius.
///
/// The object frame is axis-aligned with the world and centered on the
/// center of mass. The octahedron rests on a face, so its vertex frame is
/// rotated so that the face normal (-1,-1,-1)/sqrt(3) points down.
#[derive(Debug, Clone, Copy)]
pub struct ObjectGeometry {
    pub shape: Shape,
    pub size: f64,
    octa_frame: Rotation3<f64>,
}

impl ObjectGeometry {
    pub fn new(shape: Shape, size: f64) -> Result<Self> {
        if !(size > 0.0) || !size.is_finite() {
            return Err(Error::invalid(format!("object size must be positive, got {size}")));
        }
        let down = Vector3::new(-1.0, -1.0, -1.0).normalize();
        let octa_frame = Rotation3::rotation_between(&down, &-Vector3::z()).expect("not antiparallel");
        Ok(ObjectGeometry {
            shape,
            size,
            octa_frame,
        })
    }

    /// Center height above the table when resting upright.
    pub fn rest_height(&self) -> f64 {
        match self.shape {
            Shape::Cube | Shape::Cylinder => self.size,
            Shape::Polyhedron => self.size / 3f64.sqrt(),
        }
    }

    /// Largest distance from the center of mass to the surface.
    pub fn circumscribed_radius(&self) -> f64 {
        match self.shape {
            Shape::Cube => self.size * 3f64.sqrt(),
            Shape::Cylinder => self.size * 2f64.sqrt(),
            Shape::Polyhedron => self.size,
        }
    }

    pub fn query(&self, p: &Vector3<f64>) -> SurfaceQuery {
        match self.shape {
            Shape::Cube => box_query(p, self.size),
            Shape::Cylinder => cylinder_query(p, self.size, self.size),
            Shape::Polyhedron => {
                let local = self.octa_frame.inverse() * p;
                let q = octahedron_query(&local, self.size);
                SurfaceQuery {
                    signed_distance: q.signed_distance,
                    closest: self.octa_frame * q.closest,
                    outward: self.octa_frame * q.outward,
                }
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

fn box_query(p: &Vector3<f64>, half: f64) -> SurfaceQuery {
    let clamped = p.map(|v| v.clamp(-half, half));
    let outside = p - clamped;
    let d = outside.norm();
    if d > 0.0 {
        return SurfaceQuery {
            signed_distance: d,
            closest: clamped,
            outward: outside / d,
        };
    }
    // inside: push out through the nearest face
    let gaps = p.map(|v| half - v.abs());
    let axis = gaps.imin();
    let mut closest = *p;
    closest[axis] = sign(p[axis]) * half;
    let mut outward = Vector3::zeros();
    outward[axis] = sign(p[axis]);
    SurfaceQuery {
        signed_distance: -gaps[axis],
        closest,
        outward,
    }
}

fn cylinder_query(p: &Vector3<f64>, radius: f64, half_height: f64) -> SurfaceQuery {
    let rho = p.xy().norm();
    let radial = if rho > 0.0 {
        Vector3::new(p.x / rho, p.y / rho, 0.0)
    } else {
        Vector3::x()
    };
    let dr = rho - radius;
    let dz = p.z.abs() - half_height;
    if dr > 0.0 || dz > 0.0 {
        let cr = rho.min(radius);
        let cz = p.z.clamp(-half_height, half_height);
        let closest = radial * cr + Vector3::new(0.0, 0.0, cz);
        let diff = p - closest;
        let d = diff.norm();
        return SurfaceQuery {
            signed_distance: d,
            closest,
            outward: diff / d,
        };
    }
    if dr >= dz {
        SurfaceQuery {
            signed_distance: dr,
            closest: radial * radius + Vector3::new(0.0, 0.0, p.z),
            outward: radial,
        }
    } else {
        let s = sign(p.z);
        SurfaceQuery {
            signed_distance: dz,
            closest: Vector3::new(p.x, p.y, s * half_height),
            outward: Vector3::new(0.0, 0.0, s),
        }
    }
}

/// Euclidean projection onto the L1 ball `{x : |x|_1 <= r}`.
fn project_l1_ball(p: &Vector3<f64>, r: f64) -> Vector3<f64> {
    let mut mags: Vec<f64> = p.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cumsum += m;
        let t = (cumsum - r) / (k + 1) as f64;
        if m - t > 0.0 {
            theta = t;
        }
    }
    p.map(|v| sign(v) * (v.abs() - theta).max(0.0))
}

fn octahedron_query(p: &Vector3<f64>, r: f64) -> SurfaceQuery {
    let l1 = p.abs().sum();
    if l1 > r {
        let closest = project_l1_ball(p, r);
        let diff = p - closest;
        let d = diff.norm();
        return SurfaceQuery {
            signed_distance: d,
            closest,
            outward: diff / d,
        };
    }
    let outward = p.map(sign) / 3f64.sqrt();
    let depth = (r - l1) / 3f64.sqrt();
    SurfaceQuery {
        signed_distance: -depth,
        closest: p + outward * depth,
        outward,
    }
}

#[derive(Debug, Clone)]
pub struct ContactScan {
    pub contacts: Vec<Contact>,
    /// Which finger produced each contact.
    pub fingers: Vec<usize>,
    pub inter_finger_contact: bool,
}

/// Finds fingertip contacts. Fingertips are in world coordinates; contacts
/// are returned in the object frame (axis-aligned, centered at
/// `object_center`).
pub fn detect_contacts(
    fingertips: &[Vector3<f64>; 3],
    object_center: &Vector3<f64>,
    geometry: &ObjectGeometry,
    friction_coeff: f64,
) -> Result<ContactScan> {
    if !(geometry.size > 0.0) {
        return Err(Error::invalid("degenerate object geometry"));
    }
    let mut contacts = Vec::new();
    let mut fingers = Vec::new();
    for (i, tip) in fingertips.iter().enumerate() {
        let q = geometry.query(&(tip - object_center));
        if q.signed_distance <= FINGERTIP_RADIUS + CONTACT_MARGIN {
            contacts.push(Contact::new(q.closest, -q.outward, friction_coeff)?);
            fingers.push(i);
        }
    }
    let mut inter_finger_contact = false;
    for i in 0..3 {
        for j in i + 1..3 {
            if (fingertips[i] - fingertips[j]).norm() < 2.0 * FINGERTIP_RADIUS {
                inter_finger_contact = true;
            }
        }
    }
    Ok(ContactScan {
        contacts,
        fingers,
        inter_finger_contact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn far_fingertip_has_no_contact() {
        let g = ObjectGeometry::new(Shape::Cube, 0.0325).unwrap();
        let tips = [v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(0.0, 0.0, 1.0)];
        let scan = detect_contacts(&tips, &Vector3::zeros(), &g, 0.5).unwrap();
        assert!(scan.contacts.is_empty());
        assert!(!scan.inter_finger_contact);
    }

    #[test]
    fn tangent_sphere_touches_cube_face() {
        let g = ObjectGeometry::new(Shape::Cube, 0.0325).unwrap();
        let center = v(0.4, 0.0, 0.0325);
        let tips = [
            center + v(0.0325 + FINGERTIP_RADIUS, 0.004, -0.01),
            v(2.0, 0.0, 0.0),
            v(0.0, 2.0, 0.0),
        ];
        let scan = detect_contacts(&tips, &center, &g, 0.5).unwrap();
        assert_eq!(scan.contacts.len(), 1);
        let c = &scan.contacts[0];
        assert!((c.position - v(0.0325, 0.004, -0.01)).norm() < 1e-12);
        assert!((c.normal - v(-1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn coincident_fingertips_overlap() {
        let g = ObjectGeometry::new(Shape::Cube, 0.0325).unwrap();
        let p = v(1.0, 1.0, 1.0);
        let scan = detect_contacts(&[p, p, v(-1.0, 0.0, 0.0)], &Vector3::zeros(), &g, 0.5).unwrap();
        assert!(scan.inter_finger_contact);
    }

    #[test]
    fn degenerate_geometry_rejected() {
        assert!(ObjectGeometry::new(Shape::Cube, 0.0).is_err());
        assert!(ObjectGeometry::new(Shape::Cylinder, -1.0).is_err());
    }

    #[test]
    fn rest_heights() {
        assert_eq!(ObjectGeometry::new(Shape::Cube, 0.0325).unwrap().rest_height(), 0.0325);
        let octa = ObjectGeometry::new(Shape::Polyhedron, 0.0325).unwrap();
        // the lowest point of the resting octahedron sits on the table
        let q = octa.query(&v(0.0, 0.0, -1.0));
        assert!((q.closest.z + octa.rest_height()).abs() < 1e-12);
    }

    // Brute-force oracle: sample the surface densely and take the nearest
    // sample; the analytic distance must not exceed it and must be close.
    fn surface_samples(g: &ObjectGeometry) -> Vec<Vector3<f64>> {
        let n = 60;
        let mut pts = Vec::new();
        let s = g.size;
        for i in 0..=n {
            for j in 0..=n {
                let a = -1.0 + 2.0 * i as f64 / n as f64;
                let b = -1.0 + 2.0 * j as f64 / n as f64;
                match g.shape {
                    Shape::Cube => {
                        for axis in 0..3 {
                            for sgn in [-1.0, 1.0] {
                                let mut p = Vector3::zeros();
                                p[axis] = sgn * s;
                                p[(axis + 1) % 3] = a * s;
                                p[(axis + 2) % 3] = b * s;
                                pts.push(p);
                            }
                        }
                    }
                    Shape::Cylinder => {
                        let th = std::f64::consts::PI * a;
                        pts.push(v(s * th.cos(), s * th.sin(), b * s));
                        let rr = s * (b + 1.0) / 2.0;
                        pts.push(v(rr * th.cos(), rr * th.sin(), s));
                        pts.push(v(rr * th.cos(), rr * th.sin(), -s));
                    }
                    Shape::Polyhedron => {
                        // barycentric samples on each face
                        let u = (a + 1.0) / 2.0;
                        let w = (b + 1.0) / 2.0;
                        if u + w <= 1.0 {
                            for sx in [-1.0, 1.0] {
                                for sy in [-1.0, 1.0] {
                                    for sz in [-1.0, 1.0] {
                                        let p = v(sx * s * u, sy * s * w, sz * s * (1.0 - u - w));
                                        pts.push(g.octa_frame * p);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        pts
    }

    #[test]
    fn distances_agree_with_surface_sampling() {
        let probes = [
            v(0.05, 0.01, 0.0),
            v(0.04, 0.04, 0.04),
            v(0.0, 0.0, 0.06),
            v(0.01, -0.002, 0.003),
            v(-0.03, 0.02, -0.01),
            v(0.02, -0.05, 0.01),
        ];
        for shape in Shape::ALL {
            let g = ObjectGeometry::new(shape, 0.0325).unwrap();
            let samples = surface_samples(&g);
            for p in &probes {
                let q = g.query(p);
                let nearest = samples.iter().map(|s| (s - p).norm()).fold(f64::INFINITY, f64::min);
                assert!(q.signed_distance.abs() <= nearest + 1e-12, "{shape:?} {p:?}");
                assert!(nearest - q.signed_distance.abs() < 2e-3, "{shape:?} {p:?}");
                assert!(((q.closest - p).norm() - q.signed_distance.abs()).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn closest_point_lies_on_surface(p in proptest::array::uniform3(-0.1f64..0.1)) {
            let p = Vector3::from(p);
            for shape in Shape::ALL {
                let g = ObjectGeometry::new(shape, 0.0325).unwrap();
                let q = g.query(&p);
                let again = g.query(&q.closest);
                prop_assert!(again.signed_distance.abs() < 1e-12);
                prop_assert!((q.outward.norm() - 1.0).abs() < 1e-12);
            }
        }
    }
}
