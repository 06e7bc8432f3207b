//! Signed distance queries for the rigid collision primitives.

use nalgebra::Isometry3;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::{Mat3, Real, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Shape {
    /// `{ x : n·x <= offset }` in the body frame.
    HalfSpace { normal: Vec3, offset: Real },
    Sphere { radius: Real },
    Box { half_extents: Vec3 },
    /// Segment along the local z axis from `-half_length` to `half_length`.
    Capsule { radius: Real, half_length: Real },
}

/// A primitive attached to a rigid body, translated by `offset` in the body
/// frame. Serialized as `translation`; `offset` is taken by the half-space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidGeometry {
    #[serde(flatten)]
    pub shape: Shape,
    #[serde(default = "Vec3::zeros", rename = "translation")]
    pub offset: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdfQuery {
    /// Signed distance, negative inside.
    pub phi: Real,
    /// Outward unit normal at the witness point.
    pub normal: Vec3,
    /// Closest surface point.
    pub witness: Vec3,
}

impl RigidGeometry {
    pub fn new(shape: Shape) -> Self {
        RigidGeometry {
            shape,
            offset: Vec3::zeros(),
        }
    }

    pub fn with_offset(mut self, offset: Vec3) -> Self {
        self.offset = offset;
        self
    }

    pub(crate) fn violations(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        let positive = |v: Real| v > 0.0 && v.is_finite();
        match &self.shape {
            Shape::HalfSpace { normal, .. } => {
                if !(normal.norm() > 0.0) {
                    out.push(format!("{path}.normal: must be non-zero"));
                }
            }
            Shape::Sphere { radius } => {
                if !positive(*radius) {
                    out.push(format!("{path}.radius: must be > 0"));
                }
            }
            Shape::Box { half_extents } => {
                if !half_extents.iter().all(|&e| positive(e)) {
                    out.push(format!("{path}.half_extents: must be > 0"));
                }
            }
            Shape::Capsule { radius, half_length } => {
                if !positive(*radius) {
                    out.push(format!("{path}.radius: must be > 0"));
                }
                if !(*half_length >= 0.0) {
                    out.push(format!("{path}.half_length: must be >= 0"));
                }
            }
        }
        out
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self.shape, Shape::HalfSpace { .. })
    }

    /// Volume and inertia about the geometry's own centre for unit density.
    pub fn unit_mass_properties(&self) -> Option<(Real, Mat3)> {
        match &self.shape {
            Shape::HalfSpace { .. } => None,
            Shape::Sphere { radius: r } => {
                let v = 4.0 / 3.0 * PI * r.powi(3);
                Some((v, Mat3::from_diagonal_element(0.4 * v * r * r)))
            }
            Shape::Box { half_extents: e } => {
                let v = 8.0 * e.x * e.y * e.z;
                Some((
                    v,
                    Mat3::from_diagonal(&Vec3::new(
                        v / 3.0 * (e.y * e.y + e.z * e.z),
                        v / 3.0 * (e.x * e.x + e.z * e.z),
                        v / 3.0 * (e.x * e.x + e.y * e.y),
                    )),
                ))
            }
            Shape::Capsule { radius: r, half_length: hl } => {
                let len = 2.0 * hl;
                let mc = PI * r * r * len;
                let ms = 4.0 / 3.0 * PI * r.powi(3);
                let axial = mc * r * r / 2.0 + ms * 0.4 * r * r;
                let transverse =
                    mc * (len * len / 12.0 + r * r / 4.0) + ms * (0.4 * r * r + len * len / 4.0 + 3.0 * len * r / 8.0);
                Some((mc + ms, Mat3::from_diagonal(&Vec3::new(transverse, transverse, axial))))
            }
        }
    }

    /// Query in the geometry's local frame.
    pub fn local_query(&self, p: &Vec3) -> SdfQuery {
        let (phi, normal) = match &self.shape {
            Shape::HalfSpace { normal, offset } => {
                let n = normal.normalize();
                (n.dot(p) - offset, n)
            }
            Shape::Sphere { radius } => {
                let d = p.norm();
                let n = if d > 0.0 { p / d } else { Vec3::z() };
                (d - radius, n)
            }
            Shape::Box { half_extents } => box_query(p, half_extents),
            Shape::Capsule { radius, half_length } => {
                let c = Vec3::new(0.0, 0.0, p.z.clamp(-half_length, *half_length));
                let d = p - c;
                let dist = d.norm();
                let n = if dist > 0.0 { d / dist } else { Vec3::x() };
                (dist - radius, n)
            }
        };
        SdfQuery {
            phi,
            normal,
            witness: p - normal * phi,
        }
    }
}

/// Exact Euclidean distance outside; inside, the nearest face wins with ties
/// broken in x, y, z order.
fn box_query(p: &Vec3, e: &Vec3) -> (Real, Vec3) {
    let q = p.abs() - e;
    if q.iter().any(|&c| c > 0.0) {
        let closest = Vec3::new(p.x.clamp(-e.x, e.x), p.y.clamp(-e.y, e.y), p.z.clamp(-e.z, e.z));
        let d = p - closest;
        let dist = d.norm();
        return (dist, d / dist);
    }
    let mut axis = 0;
    for a in 1..3 {
        if -q[a] < -q[axis] {
            axis = a;
        }
    }
    let mut n = Vec3::zeros();
    n[axis] = if p[axis] < 0.0 { -1.0 } else { 1.0 };
    (q[axis], n)
}

/// Signed distance of a world point to a geometry attached to a body with
/// the given pose. Normal and witness are returned in world coordinates.
pub fn query_signed_distance(geom: &RigidGeometry, body_pose: &Isometry3<Real>, point: &Vec3) -> SdfQuery {
    let local = body_pose.inverse_transform_point(&(*point).into()).coords - geom.offset;
    let q = geom.local_query(&local);
    let normal = body_pose.rotation * q.normal;
    SdfQuery {
        phi: q.phi,
        normal,
        witness: point - normal * q.phi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Translation3, UnitQuaternion};

    fn id() -> Isometry3<Real> {
        Isometry3::identity()
    }

    #[test]
    fn half_space_below() {
        let g = RigidGeometry::new(Shape::HalfSpace {
            normal: Vec3::z(),
            offset: 0.0,
        });
        let q = query_signed_distance(&g, &id(), &Vec3::new(0.0, 0.0, -0.1));
        assert!((q.phi + 0.1).abs() < 1e-15);
        assert_eq!(q.normal, Vec3::z());
        assert!(q.witness.z.abs() < 1e-15);
    }

    #[test]
    fn sphere_inside() {
        let g = RigidGeometry::new(Shape::Sphere { radius: 1.0 });
        let q = query_signed_distance(&g, &id(), &Vec3::new(0.5, 0.0, 0.0));
        assert!((q.phi + 0.5).abs() < 1e-15);
        assert_eq!(q.normal, Vec3::x());
    }

    #[test]
    fn box_outside_corner_and_edge() {
        let g = RigidGeometry::new(Shape::Box {
            half_extents: Vec3::new(1.0, 1.0, 1.0),
        });
        let q = query_signed_distance(&g, &id(), &Vec3::new(2.0, 2.0, 0.0));
        assert!((q.phi - 2f64.sqrt()).abs() < 1e-12);
        assert!((q.witness - Vec3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn box_tie_prefers_x() {
        let g = RigidGeometry::new(Shape::Box {
            half_extents: Vec3::new(1.0, 1.0, 1.0),
        });
        let q = query_signed_distance(&g, &id(), &Vec3::new(0.5, 0.5, 0.0));
        assert_eq!(q.normal, Vec3::x());
        let q = query_signed_distance(&g, &id(), &Vec3::new(0.0, -0.5, -0.5));
        assert_eq!(q.normal, -Vec3::y());
    }

    #[test]
    fn capsule_side_and_cap() {
        let g = RigidGeometry::new(Shape::Capsule {
            radius: 0.5,
            half_length: 1.0,
        });
        let q = g.local_query(&Vec3::new(0.2, 0.0, 0.3));
        assert!((q.phi + 0.3).abs() < 1e-15);
        assert_eq!(q.normal, Vec3::x());
        let q = g.local_query(&Vec3::new(0.0, 0.0, 1.7));
        assert!((q.phi - 0.2).abs() < 1e-12);
        assert_eq!(q.normal, Vec3::z());
    }

    #[test]
    fn posed_query_transforms_normal() {
        let g = RigidGeometry::new(Shape::Box {
            half_extents: Vec3::new(0.1, 0.2, 0.3),
        })
        .with_offset(Vec3::new(0.0, 0.0, 0.1));
        let pose = Isometry3::from_parts(
            Translation3::new(1.0, 0.0, 0.0),
            UnitQuaternion::from_axis_angle(&Vec3::z_axis(), std::f64::consts::FRAC_PI_2),
        );
        // local +x face maps to world +y
        let world = pose * nalgebra::Point3::new(0.09, 0.0, 0.1);
        let q = query_signed_distance(&g, &pose, &world.coords);
        assert!((q.phi + 0.01).abs() < 1e-12);
        assert!((q.normal - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn mass_properties_of_unit_cube() {
        let g = RigidGeometry::new(Shape::Box {
            half_extents: Vec3::new(0.5, 0.5, 0.5),
        });
        let (v, i) = g.unit_mass_properties().unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert!((i[(0, 0)] - 1.0 / 6.0).abs() < 1e-15);
    }
}
