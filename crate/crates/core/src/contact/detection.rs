//! Per-particle contact registration against rigid geometry.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::geometry::query_signed_distance;
use crate::math::contact_frame;
use crate::mpm::{ParticleSet, SparseGrid, Stencil};
use crate::rigid::RigidBody;
use crate::transfer::STENCIL;
use crate::{Mat3, Real, Result, Vec3};

/// One particle inside one rigid geometry.
#[derive(Clone, Debug)]
pub struct ContactPoint {
    pub particle_id: usize,
    pub body_id: usize,
    pub geometry_id: usize,
    /// Signed distance, negative when penetrating.
    pub phi: Real,
    pub normal: Vec3,
    pub witness: Vec3,
    /// World to contact frame; rows are `t1`, `t2`, `n`.
    pub frame: Mat3,
    /// `b = -R · (rigid point velocity)`.
    pub bias: Vec3,
    pub mu: Real,
    pub gamma_lag_n: Real,
    pub stencil: Stencil,
}

impl ContactPoint {
    pub fn key(&self) -> (usize, usize, usize) {
        (self.particle_id, self.body_id, self.geometry_id)
    }
}

/// Friction coefficients per (body, material) pair, falling back to the
/// body's own coefficient.
#[derive(Clone, Debug, Default)]
pub struct FrictionTable {
    pairs: HashMap<(usize, usize), Real>,
}

impl FrictionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, body: usize, material: usize, mu: Real) {
        self.pairs.insert((body, material), mu);
    }

    pub fn get(&self, body: usize, material: usize, bodies: &[RigidBody]) -> Real {
        self.pairs
            .get(&(body, material))
            .copied()
            .unwrap_or_else(|| bodies[body].friction)
    }
}

/// Rigid point velocities sampled the first time a (particle, body, geometry)
/// pair is registered within a coupling step. Body velocities are frozen for
/// the whole step, so the cached value is reused by every later substep.
#[derive(Clone, Debug, Default)]
pub struct BiasCache {
    point_velocity: HashMap<(usize, usize, usize), Vec3>,
}

impl BiasCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.point_velocity.clear();
    }

    pub fn len(&self) -> usize {
        self.point_velocity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_velocity.is_empty()
    }
}

/// `b = -R · (v + ω × (x_witness - x_com))` for a body state.
pub fn bias_velocity(frame: &Mat3, body: &RigidBody, witness: &Vec3) -> Vec3 {
    -(frame * body.point_velocity(witness))
}

/// `v_c = R · Σ w_i v_i + b`, the particle velocity relative to the body in
/// the contact frame.
pub fn contact_velocity(contact: &ContactPoint, velocities: &[Vec3]) -> Vec3 {
    let mut v = Vec3::zeros();
    for s in 0..STENCIL {
        v += velocities[contact.stencil.nodes[s] as usize] * contact.stencil.weights[s];
    }
    contact.frame * v + contact.bias
}

/// Registers one contact per (particle, geometry) pair with `φ < 0`, ordered
/// by particle, then body, then geometry. Lagged impulses are left at zero.
pub fn detect_contacts(
    particles: &ParticleSet,
    bodies: &[RigidBody],
    grid: &SparseGrid,
    friction: &FrictionTable,
    cache: &mut BiasCache,
) -> Result<Vec<ContactPoint>> {
    let found: Vec<Vec<ContactPoint>> = particles
        .particles
        .par_iter()
        .enumerate()
        .map(|(pi, p)| {
            let mut out = Vec::new();
            for (bi, body) in bodies.iter().enumerate() {
                for (gi, geom) in body.geometries.iter().enumerate() {
                    let q = query_signed_distance(geom, &body.pose, &p.x);
                    if q.phi < 0.0 {
                        let frame = contact_frame(&q.normal);
                        out.push(ContactPoint {
                            particle_id: pi,
                            body_id: bi,
                            geometry_id: gi,
                            phi: q.phi,
                            normal: q.normal,
                            witness: q.witness,
                            frame,
                            bias: Vec3::zeros(),
                            mu: friction.get(bi, p.material, bodies),
                            gamma_lag_n: 0.0,
                            stencil: grid.stencil(&p.x)?,
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut contacts: Vec<ContactPoint> = found.into_iter().flatten().collect();
    for c in &mut contacts {
        let body = &bodies[c.body_id];
        let w = *cache
            .point_velocity
            .entry(c.key())
            .or_insert_with(|| body.point_velocity(&c.witness));
        c.bias = -(c.frame * w);
    }
    Ok(contacts)
}
