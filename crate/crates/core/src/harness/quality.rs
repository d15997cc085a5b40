//! Contact-set files for the `quality` command.
//!
//! Plain text, one contact per line, in object-centered coordinates:
//!
//! ```text
//! # comment
//! radius 0.0459          # object radius used to normalize r_vev
//! grasp antipodal        # starts a new named contact set
//! px py pz nx ny nz mu
//! px py pz nx ny nz t1x t1y t1z mu
//! ```
//!
//! Normals point into the object and must be unit length when a tangent
//! is given. Without an explicit tangent the frame
//! from [`contact_frame`](crate::grasp_math::contact_frame) is used.
//! Without a `radius` line the largest contact distance from the origin is
//! used.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grasp_math::{evaluate, reference_grasps, reference_object_radius, Contact, NamedGrasp};

#[derive(Debug, Clone)]
pub struct ContactFile {
    pub radius: Option<f64>,
    pub grasps: Vec<NamedGrasp>,
}

impl ContactFile {
    pub fn effective_radius(&self) -> f64 {
        self.radius.unwrap_or_else(|| {
            let r = self
                .grasps
                .iter()
                .flat_map(|g| &g.contacts)
                .map(|c| c.position.norm())
                .fold(0.0, f64::max);
            if r > 0.0 {
                r
            } else {
                1.0
            }
        })
    }
}

pub fn parse_contact_file(text: &str) -> Result<ContactFile> {
    let mut radius = None;
    let mut grasps: Vec<NamedGrasp> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |reason: String| Error::Parse { line: line_no, reason };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut words = line.split_whitespace();
        let first = words.next().unwrap_or_default();
        match first {
            "radius" => {
                let r: f64 = words
                    .next()
                    .ok_or_else(|| err("`radius` needs a value".into()))?
                    .parse()
                    .map_err(|e| err(format!("bad radius: {e}")))?;
                if !(r > 0.0) || !r.is_finite() || words.next().is_some() {
                    return Err(err("`radius` takes one positive number".into()));
                }
                radius = Some(r);
            }
            "grasp" => {
                let name = words.collect::<Vec<_>>().join(" ");
                if name.is_empty() {
                    return Err(err("`grasp` needs a name".into()));
                }
                grasps.push(NamedGrasp {
                    name,
                    contacts: Vec::new(),
                });
            }
            _ => {
                let nums: Vec<f64> = line
                    .split_whitespace()
                    .map(|w| w.parse::<f64>().map_err(|_| err(format!("`{w}` is not a number"))))
                    .collect::<Result<_>>()?;
                let v = |k: usize| Vector3::new(nums[k], nums[k + 1], nums[k + 2]);
                let contact = match nums.len() {
                    7 => Contact::new(v(0), v(3), nums[6]),
                    10 => Contact::with_tangent(v(0), v(3), v(6), nums[9]),
                    k => return Err(err(format!("expected 7 or 10 numbers, found {k}"))),
                }
                .map_err(|e| err(e.to_string()))?;
                if grasps.is_empty() {
                    grasps.push(NamedGrasp {
                        name: "grasp".into(),
                        contacts: Vec::new(),
                    });
                }
                grasps.last_mut().expect("a grasp exists").contacts.push(contact);
            }
        }
    }
    if grasps.is_empty() {
        grasps.push(NamedGrasp {
            name: "grasp".into(),
            contacts: Vec::new(),
        });
    }
    Ok(ContactFile { radius, grasps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub name: String,
    pub num_contacts: usize,
    pub g_rows: usize,
    pub g_cols: usize,
    pub nullity: usize,
    pub graspable_reward: f64,
    pub singular_values: Vec<f64>,
    pub q_vev: f64,
    pub r_vev: f64,
}

pub fn quality_reports(file: &ContactFile) -> Result<Vec<QualityReport>> {
    let radius = file.effective_radius();
    file.grasps
        .iter()
        .map(|g| {
            let q = evaluate(&g.contacts, radius)?;
            Ok(QualityReport {
                name: g.name.clone(),
                num_contacts: q.num_contacts,
                g_rows: 6,
                g_cols: 3 * q.num_contacts,
                nullity: q.nullity,
                graspable_reward: q.graspable_reward,
                singular_values: q.singular_values,
                q_vev: q.q_vev,
                r_vev: q.r_vev,
            })
        })
        .collect()
}

pub fn format_contact_line(c: &Contact) -> String {
    let p = c.position;
    let n = c.normal;
    let t = c.tangent1;
    format!(
        "{} {} {} {} {} {} {} {} {} {}",
        p.x, p.y, p.z, n.x, n.y, n.z, t.x, t.y, t.z, c.friction_coeff
    )
}

/// The three reference grasps as a contact file.
pub fn reference_grasp_file() -> String {
    let mut out = String::from("# Reference grasps on a cylinder of radius 0.0325 m and height 0.065 m.\n");
    out.push_str("# px py pz nx ny nz t1x t1y t1z mu\n");
    out.push_str(&format!("radius {}\n", reference_object_radius()));
    for g in reference_grasps() {
        out.push_str(&format!("\ngrasp {}\n", g.name));
        for c in &g.contacts {
            out.push_str(&format_contact_line(c));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_one_empty_grasp() {
        let f = parse_contact_file("# nothing here\n\n").unwrap();
        let r = quality_reports(&f).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].num_contacts, 0);
        assert_eq!((r[0].q_vev, r[0].r_vev, r[0].graspable_reward), (0.0, 0.0, 0.0));
    }

    #[test]
    fn reference_file_round_trips() {
        let f = parse_contact_file(&reference_grasp_file()).unwrap();
        assert_eq!(f.grasps.len(), 3);
        for (parsed, built) in f.grasps.iter().zip(reference_grasps()) {
            assert_eq!(parsed.name, built.name);
            assert_eq!(parsed.contacts, built.contacts);
        }
        let r = quality_reports(&f).unwrap();
        assert!(r[0].r_vev < r[1].r_vev && r[1].r_vev < r[2].r_vev);
    }

    #[test]
    fn antipodal_pair_is_graspable() {
        let text = "grasp pair\n0.0325 0 0 -1 0 0 0.5\n-0.0325 0 0 1 0 0 0.5\n";
        let r = quality_reports(&parse_contact_file(text).unwrap()).unwrap();
        assert_eq!(r[0].graspable_reward, 0.1);
        assert_eq!((r[0].g_rows, r[0].g_cols), (6, 6));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("grasp a\n0 0 0 1 0 0\n", 2),
            ("\n\nradius -1\n", 3),
            ("0 0 0 1 0 0 x\n", 1),
            ("grasp\n", 1),
            ("0 0 0 0 0 0 0.5\n", 1),
        ];
        for (text, line) in cases {
            match parse_contact_file(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }
}
