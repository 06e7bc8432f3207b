use nalgebra::{Isometry3, Translation3, UnitQuaternion};

use super::config::{BodyConfig, BodyKind, SceneConfig};
use super::sampler::sample_volume;
use crate::contact::FrictionTable;
use crate::mpm::ParticleSet;
use crate::rigid::{Keyframe, RigidBody, Trajectory};
use crate::scheduler::Simulation;
use crate::transfer::ReductionMode;
use crate::{Mat3, Real, Result};

fn pose(position: &crate::Vec3, rotation: &crate::Vec3) -> Isometry3<Real> {
    Isometry3::from_parts(Translation3::from(*position), UnitQuaternion::from_scaled_axis(*rotation))
}

pub fn build_body(b: &BodyConfig) -> Result<RigidBody> {
    let mut body = match b.kind {
        BodyKind::Kinematic => {
            let traj = if b.keyframes.is_empty() {
                Trajectory::stationary(pose(&b.position, &b.rotation))
            } else {
                Trajectory::new(
                    b.keyframes
                        .iter()
                        .map(|k| Keyframe {
                            time: k.time,
                            position: k.position,
                            orientation: UnitQuaternion::from_scaled_axis(k.rotation),
                        })
                        .collect(),
                )?
            };
            RigidBody::kinematic(b.name.clone(), traj, b.geometries.clone(), b.friction)
        }
        BodyKind::Free => {
            let p = pose(&b.position, &b.rotation);
            match (b.density, b.mass, b.inertia) {
                (Some(rho), _, _) => RigidBody::free_from_density(b.name.clone(), p, rho, b.geometries[0].clone(), b.friction)?,
                (None, Some(m), Some(i)) => {
                    RigidBody::free(b.name.clone(), p, m, Mat3::from_diagonal(&i), b.geometries.clone(), b.friction)?
                }
                _ => unreachable!("validated"),
            }
        }
    };
    if b.kind == BodyKind::Free {
        body.v = b.velocity;
        body.omega = b.angular_velocity;
    }
    Ok(body)
}

/// Validates a scene and builds the simulation state at `t = 0`.
pub fn build_simulation(cfg: &SceneConfig) -> Result<Simulation> {
    cfg.validate()?;
    let mut particles = Vec::new();
    for v in &cfg.volumes {
        let mi = cfg.material_index(&v.material).expect("validated");
        particles.extend(sample_volume(v, cfg.grid.h, cfg.materials[mi].density, mi));
    }
    let bodies = cfg.bodies.iter().map(build_body).collect::<Result<Vec<_>>>()?;
    let mut friction = FrictionTable::new();
    for f in &cfg.friction {
        friction.set(
            cfg.body_index(&f.body).expect("validated"),
            cfg.material_index(&f.material).expect("validated"),
            f.mu,
        );
    }
    let mode = if cfg.deterministic {
        ReductionMode::Deterministic
    } else {
        ReductionMode::Fast
    };
    Simulation::new(
        ParticleSet::new(particles),
        cfg.materials.clone(),
        bodies,
        cfg.grid.h,
        cfg.step,
        cfg.contact.resolve(cfg.step.dt),
        cfg.solver,
        friction,
        mode,
    )
}
