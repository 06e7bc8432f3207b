//! Shared generators for the integration tests.
#![allow(dead_code)]

use mpm_core::contact::{contact_velocity, detect_contacts, update_lagged_impulse, BiasCache, ContactParams, ContactPoint, FrictionTable};
use mpm_core::geometry::{query_signed_distance, RigidGeometry, Shape};
use mpm_core::mpm::{free_motion_substep, Material, Particle, ParticleSet, SparseGrid};
use mpm_core::rigid::RigidBody;
use mpm_core::solver::ContactProblem;
use mpm_core::transfer::{ReductionMode, SortPlan, STENCIL};
use mpm_core::{Mat3, Real, Vec3};
use nalgebra::{DMatrix, Isometry3, Translation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, scale: Real) -> Vec3 {
    Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale
}

/// Random particle cloud in `[0, side]³` with random velocities and mildly
/// deformed, non-inverted deformation gradients.
pub fn random_particles(rng: &mut ChaCha8Rng, n: usize, side: Real, speed: Real) -> ParticleSet {
    ParticleSet::new(
        (0..n)
            .map(|_| {
                let x = Vec3::new(rng.gen::<Real>(), rng.gen::<Real>(), rng.gen::<Real>()) * side;
                let mut p = Particle::at_rest(x, rng.gen_range(0.5e-3..2e-3), 1e-6, 0);
                p.v = random_vec(rng, speed);
                p.c = Mat3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
                p.f = Mat3::identity() + Mat3::from_fn(|_, _| rng.gen_range(-0.05..0.05));
                p
            })
            .collect(),
    )
}

/// One contact-problem instance: node masses, `v*`, `v^k` and contacts with
/// lagged normal impulses, produced by the real P2G and detection path.
pub struct RandomScene {
    pub mass: Vec<Real>,
    pub v_star: Vec<Vec3>,
    pub v0: Vec<Vec3>,
    pub contacts: Vec<ContactPoint>,
    pub params: ContactParams,
    pub dt: Real,
}

impl RandomScene {
    pub fn problem(&self) -> ContactProblem<'_> {
        ContactProblem::new(&self.mass, &self.v_star, &self.contacts, self.params, self.dt).unwrap()
    }
}

fn random_body(rng: &mut ChaCha8Rng, side: Real) -> RigidBody {
    let centre = Vec3::new(0.5 * side, 0.5 * side, 0.5 * side);
    let rot = UnitQuaternion::from_scaled_axis(random_vec(rng, 0.6));
    let mu = rng.gen_range(0.1..1.2);
    let (geometry, pose) = match rng.gen_range(0..3) {
        0 => (
            RigidGeometry::new(Shape::Sphere { radius: 0.35 * side }),
            Isometry3::from_parts(Translation3::from(centre + Vec3::new(0.0, 0.0, 0.7 * side)), rot),
        ),
        1 => (
            RigidGeometry::new(Shape::Box {
                half_extents: Vec3::new(0.6, 0.6, 0.3) * side,
            }),
            Isometry3::from_parts(Translation3::from(centre + Vec3::new(0.0, 0.0, 0.9 * side)), rot),
        ),
        _ => (
            RigidGeometry::new(Shape::Capsule {
                radius: 0.2 * side,
                half_length: 0.4 * side,
            }),
            Isometry3::from_parts(Translation3::from(centre + Vec3::new(0.0, 0.0, 0.75 * side)), rot),
        ),
    };
    let mut body = RigidBody::free_from_density("probe", pose, 1000.0, geometry, mu).unwrap();
    body.v = random_vec(rng, 0.5);
    body.omega = random_vec(rng, 3.0);
    body
}

/// Random scene with `1..=max_contacts` contacts against a moving rigid
/// probe and a tilted floor.
pub fn random_scene(seed: u64, max_contacts: usize) -> RandomScene {
    for attempt in 0.. {
        let mut r = rng(seed * 7919 + attempt);
        let h = 0.02;
        let side = 0.06;
        let n = r.gen_range(300..900);
        let particles = random_particles(&mut r, n, side, 0.5);
        let materials = vec![Material::new("m", r.gen_range(1e4..1e5), 0.3, 1000.0).unwrap()];
        let floor_normal = (Vec3::z() + random_vec(&mut r, 0.3)).normalize();
        let floor = RigidBody::kinematic(
            "floor",
            mpm_core::rigid::Trajectory::stationary(Isometry3::identity()),
            vec![RigidGeometry::new(Shape::HalfSpace {
                normal: floor_normal,
                offset: 0.25 * side,
            })],
            r.gen_range(0.1..1.0),
        );
        let bodies = vec![floor, random_body(&mut r, side)];
        // keep penetrations shallow, as in a running simulation
        let depth = r.gen_range(1e-4..5e-4);
        // a seeded layer just inside the floor supplies most of the contacts
        let layer = r.gen_range(20..250);
        let mut particles = particles;
        for _ in 0..layer {
            let (x, y) = (r.gen_range(0.0..side), r.gen_range(0.0..side));
            let z = (0.25 * side - floor_normal.x * x - floor_normal.y * y) / floor_normal.z;
            let mut p = Particle::at_rest(Vec3::new(x, y, z) - floor_normal * r.gen_range(0.0..depth), 1e-3, 1e-6, 0);
            p.v = random_vec(&mut r, 0.5);
            particles.particles.push(p);
        }
        let particles = ParticleSet::new(
            particles
                .particles
                .into_iter()
                .filter(|p| {
                    bodies.iter().all(|b| {
                        b.geometries
                            .iter()
                            .all(|g| query_signed_distance(g, &b.pose, &p.x).phi >= -depth)
                    })
                })
                .collect(),
        );
        let dt = 10f64.powf(r.gen_range(-5.0..-4.0));

        let mut grid = SparseGrid::new(h);
        let plan = SortPlan::build(&particles.positions(), h, 0);
        free_motion_substep(
            &particles,
            &materials,
            &mut grid,
            &plan,
            0,
            ReductionMode::Deterministic,
            &Vec3::new(0.0, 0.0, -9.81),
            dt,
        )
        .unwrap();
        let mut cache = BiasCache::new();
        let mut contacts = detect_contacts(&particles, &bodies, &grid, &FrictionTable::new(), &mut cache).unwrap();
        contacts.truncate(max_contacts);
        if contacts.is_empty() {
            continue;
        }
        let params = ContactParams {
            stiffness: 10f64.powf(r.gen_range(4.0..5.0)),
            dissipation_time: dt * r.gen_range(0.5..2.0),
            friction_regularization: 10f64.powf(r.gen_range(-4.0..-2.0)),
        };
        for c in &mut contacts {
            let vc = contact_velocity(c, &grid.velocity);
            c.gamma_lag_n = update_lagged_impulse(&vc, c.phi, &params, dt);
        }
        return RandomScene {
            mass: grid.mass.clone(),
            v_star: grid.free_velocity.clone(),
            v0: grid.velocity.clone(),
            contacts,
            params,
            dt,
        };
    }
    unreachable!()
}

/// Dense contact Jacobian over the problem's DoF nodes, assembled directly
/// from the stencils.
pub fn dense_jacobian(p: &ContactProblem) -> (Vec<usize>, DMatrix<Real>) {
    let dofs = p.dofs();
    let mut slot = vec![usize::MAX; p.num_nodes()];
    for (k, &i) in dofs.iter().enumerate() {
        slot[i] = k;
    }
    let mut j = DMatrix::zeros(3 * p.contacts.len(), 3 * dofs.len());
    for (c, cp) in p.contacts.iter().enumerate() {
        for s in 0..STENCIL {
            let k = slot[cp.stencil.nodes[s] as usize];
            if k == usize::MAX {
                continue;
            }
            for r in 0..3 {
                for q in 0..3 {
                    j[(3 * c + r, 3 * k + q)] += cp.frame[(r, q)] * cp.stencil.weights[s];
                }
            }
        }
    }
    (dofs, j)
}

/// `‖x‖_M` over DoF nodes.
pub fn mass_norm(mass: &[Real], dofs: &[usize], x: &[Vec3]) -> Real {
    dofs.iter().map(|&i| mass[i] * x[i].norm_squared()).sum::<Real>().sqrt()
}

pub mod model_checks;
pub mod scene_checks;
pub mod solver_checks;
pub mod transfer_checks;
