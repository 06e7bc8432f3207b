//! Serial reference for the scatter reductions.

use mpm_core::mpm::{ParticleSet, SparseGrid};
use mpm_core::transfer::{NodeContributions, STENCIL};
use mpm_core::Real;

/// Mass and momentum contributions of every particle.
pub fn contributions(ps: &ParticleSet, grid: &SparseGrid) -> Vec<NodeContributions<4>> {
    ps.particles
        .iter()
        .map(|p| {
            let s = grid.stencil(&p.x).unwrap();
            let mut c = NodeContributions::<4>::zeroed();
            for k in 0..STENCIL {
                let w = s.weights[k];
                let mv = (p.v + p.c * s.offsets[k]) * (w * p.mass);
                c.nodes[k] = s.nodes[k];
                c.values[k] = [w * p.mass, mv.x, mv.y, mv.z];
            }
            c
        })
        .collect()
}

/// Plain double loop in source order.
pub fn serial_oracle(contribs: &[NodeContributions<4>], n_nodes: usize) -> Vec<[Real; 4]> {
    let mut out = vec![[0.0; 4]; n_nodes];
    for c in contribs {
        for s in 0..STENCIL {
            for k in 0..4 {
                out[c.nodes[s] as usize][k] += c.values[s][k];
            }
        }
    }
    out
}
