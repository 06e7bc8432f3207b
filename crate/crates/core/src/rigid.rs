//! Rigid bodies: free 6-DoF bodies driven by accumulated contact impulses and
//! kinematic bodies following prescribed keyframe trajectories.

use nalgebra::{Isometry3, Translation3, UnitQuaternion};

use crate::geometry::RigidGeometry;
use crate::{Error, Mat3, Quat, Real, Result, Vec3};

#[derive(Clone, Debug, PartialEq)]
pub struct Keyframe {
    pub time: Real,
    pub position: Vec3,
    pub orientation: Quat,
}

/// Piecewise-linear positions with spherical interpolation of orientations.
/// Poses are held constant outside the keyframe span.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    keyframes: Vec<Keyframe>,
}

impl Trajectory {
    pub fn new(keyframes: Vec<Keyframe>) -> Result<Self> {
        if keyframes.is_empty() {
            return Err(Error::InvalidInput("trajectory needs at least one keyframe".into()));
        }
        if keyframes.windows(2).any(|w| !(w[1].time > w[0].time)) {
            return Err(Error::InvalidInput("keyframe times must be strictly increasing".into()));
        }
        Ok(Trajectory { keyframes })
    }

    pub fn stationary(pose: Isometry3<Real>) -> Self {
        Trajectory {
            keyframes: vec![Keyframe {
                time: 0.0,
                position: pose.translation.vector,
                orientation: pose.rotation,
            }],
        }
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn pose_at(&self, t: Real) -> Isometry3<Real> {
        let k = &self.keyframes;
        let first = &k[0];
        let last = &k[k.len() - 1];
        let (p, q) = if t <= first.time {
            (first.position, first.orientation)
        } else if t >= last.time {
            (last.position, last.orientation)
        } else {
            let i = k.partition_point(|kf| kf.time <= t) - 1;
            let (a, b) = (&k[i], &k[i + 1]);
            let s = (t - a.time) / (b.time - a.time);
            let q = a.orientation.try_slerp(&b.orientation, s, 1e-12).unwrap_or(a.orientation);
            (a.position.lerp(&b.position, s), q)
        };
        Isometry3::from_parts(Translation3::from(p), q)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BodyMode {
    Kinematic(Trajectory),
    Free,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RigidBody {
    pub name: String,
    /// Pose of the centre of mass.
    pub pose: Isometry3<Real>,
    pub v: Vec3,
    pub omega: Vec3,
    pub mass: Real,
    /// Body-frame inertia tensor about the centre of mass.
    pub inertia: Mat3,
    pub mode: BodyMode,
    pub geometries: Vec<RigidGeometry>,
    /// Default friction coefficient against MPM materials.
    pub friction: Real,
}

impl RigidBody {
    pub fn kinematic(name: impl Into<String>, trajectory: Trajectory, geometries: Vec<RigidGeometry>, friction: Real) -> Self {
        let pose = trajectory.pose_at(0.0);
        RigidBody {
            name: name.into(),
            pose,
            v: Vec3::zeros(),
            omega: Vec3::zeros(),
            mass: 0.0,
            inertia: Mat3::zeros(),
            mode: BodyMode::Kinematic(trajectory),
            geometries,
            friction,
        }
    }

    pub fn free(
        name: impl Into<String>,
        pose: Isometry3<Real>,
        mass: Real,
        inertia: Mat3,
        geometries: Vec<RigidGeometry>,
        friction: Real,
    ) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(Error::InvalidInput(format!("free body mass must be > 0 (got {mass})")));
        }
        if inertia.cholesky().is_none() {
            return Err(Error::InvalidInput("free body inertia must be SPD".into()));
        }
        Ok(RigidBody {
            name: name.into(),
            pose,
            v: Vec3::zeros(),
            omega: Vec3::zeros(),
            mass,
            inertia,
            mode: BodyMode::Free,
            geometries,
            friction,
        })
    }

    /// Free body whose mass properties follow from a single centred geometry.
    pub fn free_from_density(
        name: impl Into<String>,
        pose: Isometry3<Real>,
        density: Real,
        geometry: RigidGeometry,
        friction: Real,
    ) -> Result<Self> {
        let (vol, inertia) = geometry
            .unit_mass_properties()
            .ok_or_else(|| Error::InvalidInput("free bodies need bounded geometry".into()))?;
        Self::free(name, pose, density * vol, inertia * density, vec![geometry], friction)
    }

    pub fn is_free(&self) -> bool {
        matches!(self.mode, BodyMode::Free)
    }

    pub fn com(&self) -> Vec3 {
        self.pose.translation.vector
    }

    /// Velocity of the body-fixed point currently at `x`.
    pub fn point_velocity(&self, x: &Vec3) -> Vec3 {
        self.v + self.omega.cross(&(x - self.com()))
    }

    pub fn world_inertia(&self) -> Mat3 {
        let r = self.pose.rotation.to_rotation_matrix().into_inner();
        r * self.inertia * r.transpose()
    }

    pub fn angular_momentum(&self) -> Vec3 {
        self.world_inertia() * self.omega
    }

    /// Sets the step velocity of a kinematic body from its trajectory: the
    /// secant over `[t, t + dt]`, so integrating it reproduces the keyframed
    /// pose exactly.
    pub fn prepare_kinematic_step(&mut self, t: Real, dt: Real) {
        if let BodyMode::Kinematic(traj) = &self.mode {
            let p0 = traj.pose_at(t);
            let p1 = traj.pose_at(t + dt);
            self.pose = p0;
            self.v = (p1.translation.vector - p0.translation.vector) / dt;
            self.omega = (p1.rotation * p0.rotation.inverse()).scaled_axis() / dt;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pose.translation.vector.iter().all(|x| x.is_finite())
            && self.pose.rotation.coords.iter().all(|x| x.is_finite())
            && self.v.iter().chain(self.omega.iter()).all(|x| x.is_finite())
    }
}

/// Advances a free body by one coupling step: linear and angular momentum
/// receive the accumulated impulses (and gravity), then the pose is
/// integrated with the updated velocities. Angular velocity is re-derived from
/// the conserved angular momentum at the new orientation.
pub fn integrate_rigid(body: &mut RigidBody, linear_impulse: &Vec3, angular_impulse: &Vec3, gravity: &Vec3, dt: Real) {
    if !body.is_free() {
        return;
    }
    body.v += linear_impulse / body.mass + gravity * dt;

    let l = body.angular_momentum() + angular_impulse;
    let omega_mid = solve_spd(&body.world_inertia(), &l);
    body.pose.translation.vector += body.v * dt;
    let q = UnitQuaternion::from_scaled_axis(omega_mid * dt) * body.pose.rotation;
    body.pose.rotation = UnitQuaternion::new_normalize(q.into_inner());
    body.omega = solve_spd(&body.world_inertia(), &l);
}

fn solve_spd(a: &Mat3, b: &Vec3) -> Vec3 {
    match a.cholesky() {
        Some(c) => c.solve(b),
        None => a.try_inverse().map(|inv| inv * b).unwrap_or_else(Vec3::zeros),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Shape;

    fn body(mass: Real) -> RigidBody {
        RigidBody::free(
            "b",
            Isometry3::identity(),
            mass,
            Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0)),
            vec![RigidGeometry::new(Shape::Sphere { radius: 0.1 })],
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn zero_impulse_no_gravity_is_identity() {
        let mut b = body(2.0);
        let before = b.clone();
        integrate_rigid(&mut b, &Vec3::zeros(), &Vec3::zeros(), &Vec3::zeros(), 1e-3);
        assert_eq!(b, before);
    }

    #[test]
    fn linear_impulse() {
        let mut b = body(2.0);
        integrate_rigid(&mut b, &Vec3::new(1.0, 0.0, 0.0), &Vec3::zeros(), &Vec3::zeros(), 1e-3);
        assert_eq!(b.v, Vec3::new(0.5, 0.0, 0.0));
    }

    #[test]
    fn projectile() {
        let mut b = body(1.0);
        b.v = Vec3::new(1.0, 0.0, 2.0);
        let g = Vec3::new(0.0, 0.0, -9.81);
        integrate_rigid(&mut b, &Vec3::zeros(), &Vec3::zeros(), &g, 0.01);
        assert_eq!(b.v, Vec3::new(1.0, 0.0, 2.0) + g * 0.01);
    }

    #[test]
    fn trajectory_interpolates_and_clamps() {
        let traj = Trajectory::new(vec![
            Keyframe {
                time: 0.0,
                position: Vec3::zeros(),
                orientation: Quat::identity(),
            },
            Keyframe {
                time: 1.0,
                position: Vec3::new(2.0, 0.0, 0.0),
                orientation: Quat::from_axis_angle(&Vec3::z_axis(), 1.0),
            },
        ])
        .unwrap();
        let mid = traj.pose_at(0.5);
        assert!((mid.translation.vector.x - 1.0).abs() < 1e-15);
        assert!((mid.rotation.angle() - 0.5).abs() < 1e-12);
        assert_eq!(traj.pose_at(5.0).translation.vector.x, 2.0);
        assert_eq!(traj.pose_at(-1.0).translation.vector.x, 0.0);
        assert!(Trajectory::new(vec![]).is_err());
    }

    #[test]
    fn kinematic_secant_velocity() {
        let traj = Trajectory::new(vec![
            Keyframe {
                time: 0.0,
                position: Vec3::zeros(),
                orientation: Quat::identity(),
            },
            Keyframe {
                time: 1.0,
                position: Vec3::new(0.0, 0.0, 1.0),
                orientation: Quat::identity(),
            },
        ])
        .unwrap();
        let mut b = RigidBody::kinematic("k", traj, vec![], 1.0);
        b.prepare_kinematic_step(0.25, 0.01);
        assert!((b.v - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }
}
