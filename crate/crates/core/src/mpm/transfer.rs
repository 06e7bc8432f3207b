//! MLS-MPM transfers. The internal force is fused into the particle-to-grid
//! pass; particle advection happens in [`grid_to_particle`] once the
//! post-contact grid velocities are known.

use std::sync::atomic::{AtomicU64, Ordering};

use log::warn;
use rayon::prelude::*;

use crate::mpm::kernel::inv_d;
use crate::mpm::material::{clamp_inverted, compute_stress};
use crate::mpm::{Material, ParticleSet, SparseGrid, MIN_NODE_MASS};
use crate::transfer::{scatter_reduce, NodeContributions, ReductionMode, SortPlan, STENCIL};
use crate::{Error, Mat3, Real, Result, Vec3};

#[derive(Clone, Copy, Debug, Default)]
pub struct P2gOutput {
    pub merges: usize,
}

/// Per-node payload: mass, APIC momentum, internal-force impulse.
pub const P2G_CHANNELS: usize = 7;

/// Accumulates node mass, APIC momentum and the fused internal-force impulse
/// `-dt · (4/h²) · V⁰ τ (x_i - x_p) w_ip` into an allocated grid.
pub fn particle_to_grid(
    particles: &ParticleSet,
    materials: &[Material],
    grid: &mut SparseGrid,
    plan: &SortPlan,
    epoch: u64,
    mode: ReductionMode,
    dt: Real,
) -> Result<P2gOutput> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("substep size must be positive (got {dt})")));
    }
    if plan.len() != particles.len() {
        return Err(Error::ContractViolation(format!(
            "sort plan covers {} particles, particle set has {}",
            plan.len(),
            particles.len()
        )));
    }
    let scale = inv_d(grid.spacing());

    let stress: Vec<Mat3> = particles
        .particles
        .par_iter()
        .map(|p| {
            let material = materials
                .get(p.material)
                .ok_or_else(|| Error::InvalidInput(format!("unknown material index {}", p.material)))?;
            let tau = compute_stress(&p.f, material)?;
            Ok(tau * (-dt * scale * p.volume0))
        })
        .collect::<Result<_>>()?;

    // stencils are rebuilt inside the scatter rather than stored per particle
    let missing = AtomicU64::new(u64::MAX);
    let out = scatter_reduce::<P2G_CHANNELS, _>(plan, epoch, grid.num_nodes(), mode, |pi| {
        let p = &particles.particles[pi];
        let mut c = NodeContributions::<P2G_CHANNELS>::zeroed();
        let stencil = match grid.stencil(&p.x) {
            Ok(s) => s,
            Err(_) => {
                missing.fetch_min(pi as u64, Ordering::Relaxed);
                return c;
            }
        };
        let stress_term = &stress[pi];
        let affine = p.c * p.mass;
        let momentum = p.v * p.mass;
        for s in 0..STENCIL {
            let w = stencil.weights[s];
            let dx = stencil.offsets[s];
            let mv = (momentum + affine * dx) * w;
            let fi = (stress_term * dx) * w;
            c.nodes[s] = stencil.nodes[s];
            c.values[s] = [w * p.mass, mv.x, mv.y, mv.z, fi.x, fi.y, fi.z];
        }
        c
    })?;
    let first_missing = missing.into_inner();
    if first_missing != u64::MAX {
        // report the same error a direct lookup would
        grid.stencil(&particles.particles[first_missing as usize].x)?;
    }

    for (i, v) in out.values.iter().enumerate() {
        grid.mass[i] = v[0];
        grid.momentum[i] = Vec3::new(v[1], v[2], v[3]);
        grid.force_impulse[i] = Vec3::new(v[4], v[5], v[6]);
    }
    Ok(P2gOutput { merges: out.merges })
}

/// Nodal velocities: `v^k = p/m` and the free-motion velocity
/// `v* = (p + f)/m + dt·g`. Nodes at or below [`MIN_NODE_MASS`] stay at zero.
pub fn grid_update(grid: &mut SparseGrid, gravity: &Vec3, dt: Real) {
    let SparseGrid {
        mass,
        momentum,
        force_impulse,
        velocity,
        free_velocity,
        ..
    } = grid;
    velocity
        .par_iter_mut()
        .zip(free_velocity.par_iter_mut())
        .enumerate()
        .for_each(|(i, (v, vs))| {
            let m = mass[i];
            if m > MIN_NODE_MASS {
                *v = momentum[i] / m;
                *vs = (momentum[i] + force_impulse[i]) / m + gravity * dt;
            } else {
                *v = Vec3::zeros();
                *vs = Vec3::zeros();
            }
        });
}

/// Gathers velocities back to particles, rebuilds the affine matrix, advects
/// positions and updates the deformation gradient. Returns how many
/// deformation gradients had to be repaired after inverting.
pub fn grid_to_particle(grid: &SparseGrid, velocities: &[Vec3], particles: &mut ParticleSet, dt: Real) -> Result<usize> {
    if velocities.len() != grid.num_nodes() {
        return Err(Error::ContractViolation(format!(
            "velocity field has {} nodes, grid has {}",
            velocities.len(),
            grid.num_nodes()
        )));
    }
    let scale = inv_d(grid.spacing());
    let clamped: Vec<bool> = particles
        .particles
        .par_iter_mut()
        .map(|p| {
            let stencil = grid.stencil(&p.x)?;
            let mut v = Vec3::zeros();
            let mut b = Mat3::zeros();
            for s in 0..STENCIL {
                let vi = velocities[stencil.nodes[s] as usize];
                let w = stencil.weights[s];
                v += vi * w;
                b += (vi * w) * stencil.offsets[s].transpose();
            }
            p.v = v;
            p.c = b * scale;
            p.x += v * dt;
            p.f = (Mat3::identity() + p.c * dt) * p.f;
            Ok(match clamp_inverted(&p.f) {
                Some(fixed) => {
                    p.f = fixed;
                    true
                }
                None => false,
            })
        })
        .collect::<Result<_>>()?;
    let n = clamped.iter().filter(|&&c| c).count();
    if n > 0 {
        warn!("{n} inverted deformation gradients clamped");
    }
    Ok(n)
}

/// Allocates the grid around the particles, runs P2G and the grid update.
/// Leaves `grid.velocity = v^k` and `grid.free_velocity = v*`.
#[allow(clippy::too_many_arguments)]
pub fn free_motion_substep(
    particles: &ParticleSet,
    materials: &[Material],
    grid: &mut SparseGrid,
    plan: &SortPlan,
    epoch: u64,
    mode: ReductionMode,
    gravity: &Vec3,
    dt: Real,
) -> Result<P2gOutput> {
    grid.allocate_for(particles);
    let out = particle_to_grid(particles, materials, grid, plan, epoch, mode, dt)?;
    grid_update(grid, gravity, dt);
    Ok(out)
}
