use rustc_hash::FxHashMap;

use crate::mpm::kernel::stencil_weights;
use crate::mpm::ParticleSet;
use crate::transfer::STENCIL;
use crate::{Error, Real, Result, Vec3};

pub const BLOCK_DIM: i32 = 4;
pub const NODES_PER_BLOCK: usize = 64;

/// Nodes lighter than this carry no velocity.
pub const MIN_NODE_MASS: Real = 1e-12;

/// Interpolation support of one point: 27 node indices, their weights and
/// the offsets `x_i - x_p`.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    pub nodes: [u32; STENCIL],
    pub weights: [Real; STENCIL],
    pub offsets: [Vec3; STENCIL],
}

/// Block-sparse Eulerian grid. Blocks of 4×4×4 nodes are allocated on demand
/// and addressed through a hash map; node data lives in flat arrays indexed by
/// `slot * 64 + local`.
#[derive(Clone, Debug)]
pub struct SparseGrid {
    h: Real,
    lookup: FxHashMap<[i32; 3], u32>,
    blocks: Vec<[i32; 3]>,
    pub mass: Vec<Real>,
    /// APIC momentum, excluding internal forces.
    pub momentum: Vec<Vec3>,
    /// Internal-force impulse fused into P2G.
    pub force_impulse: Vec<Vec3>,
    /// Substep-start velocity `v^k`.
    pub velocity: Vec<Vec3>,
    /// Free-motion velocity `v*`.
    pub free_velocity: Vec<Vec3>,
}

impl SparseGrid {
    pub fn new(h: Real) -> Self {
        assert!(h > 0.0, "grid spacing must be positive");
        SparseGrid {
            h,
            lookup: FxHashMap::default(),
            blocks: Vec::new(),
            mass: Vec::new(),
            momentum: Vec::new(),
            force_impulse: Vec::new(),
            velocity: Vec::new(),
            free_velocity: Vec::new(),
        }
    }

    pub fn spacing(&self) -> Real {
        self.h
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.blocks.len() * NODES_PER_BLOCK
    }

    pub fn clear(&mut self) {
        self.lookup.clear();
        self.blocks.clear();
        self.resize();
    }

    fn resize(&mut self) {
        let n = self.num_nodes();
        self.mass.clear();
        self.mass.resize(n, 0.0);
        for v in [&mut self.momentum, &mut self.force_impulse, &mut self.velocity, &mut self.free_velocity] {
            v.clear();
            v.resize(n, Vec3::zeros());
        }
    }

    /// Drops all blocks and allocates exactly the blocks touched by the
    /// particles' stencils, in first-touch order. Node data is zeroed.
    pub fn allocate_for(&mut self, particles: &ParticleSet) {
        self.lookup.clear();
        self.blocks.clear();
        for p in &particles.particles {
            let (base, _) = stencil_weights(&p.x, self.h);
            let lo = base.map(|b| b.div_euclid(BLOCK_DIM));
            let hi = base.map(|b| (b + 2).div_euclid(BLOCK_DIM));
            for bx in lo[0]..=hi[0] {
                for by in lo[1]..=hi[1] {
                    for bz in lo[2]..=hi[2] {
                        self.touch_block([bx, by, bz]);
                    }
                }
            }
        }
        self.resize();
    }

    fn touch_block(&mut self, coord: [i32; 3]) {
        if !self.lookup.contains_key(&coord) {
            self.lookup.insert(coord, self.blocks.len() as u32);
            self.blocks.push(coord);
        }
    }

    pub fn node_index(&self, node: [i32; 3]) -> Option<u32> {
        let block = node.map(|c| c.div_euclid(BLOCK_DIM));
        let local = node.map(|c| c.rem_euclid(BLOCK_DIM));
        self.lookup
            .get(&block)
            .map(|&slot| slot * NODES_PER_BLOCK as u32 + (local[0] + BLOCK_DIM * local[1] + BLOCK_DIM * BLOCK_DIM * local[2]) as u32)
    }

    pub fn node_coord(&self, index: usize) -> [i32; 3] {
        let block = self.blocks[index / NODES_PER_BLOCK];
        let local = (index % NODES_PER_BLOCK) as i32;
        [
            block[0] * BLOCK_DIM + local % BLOCK_DIM,
            block[1] * BLOCK_DIM + (local / BLOCK_DIM) % BLOCK_DIM,
            block[2] * BLOCK_DIM + local / (BLOCK_DIM * BLOCK_DIM),
        ]
    }

    pub fn node_position(&self, index: usize) -> Vec3 {
        let c = self.node_coord(index);
        Vec3::new(c[0] as Real, c[1] as Real, c[2] as Real) * self.h
    }

    pub fn is_active(&self, index: usize) -> bool {
        self.mass[index] > MIN_NODE_MASS
    }

    pub fn active_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_nodes()).filter(|&i| self.is_active(i))
    }

    pub fn active_count(&self) -> usize {
        self.mass.iter().filter(|&&m| m > MIN_NODE_MASS).count()
    }

    /// Stencil of a point; fails if any of its nodes is outside the
    /// allocated blocks.
    pub fn stencil(&self, x: &Vec3) -> Result<Stencil> {
        let (base, w) = stencil_weights(x, self.h);
        let lo = base.map(|b| b.div_euclid(BLOCK_DIM));
        // the 3-node support spans at most two blocks per axis
        let mut slots = [[[None::<u32>; 2]; 2]; 2];
        let mut s = Stencil {
            nodes: [0; STENCIL],
            weights: [0.0; STENCIL],
            offsets: [Vec3::zeros(); STENCIL],
        };
        let mut k = 0;
        for i in 0..3 {
            for j in 0..3 {
                for l in 0..3 {
                    let node = [base[0] + i as i32, base[1] + j as i32, base[2] + l as i32];
                    let block = node.map(|c| c.div_euclid(BLOCK_DIM));
                    let rel = [0, 1, 2].map(|a| (block[a] - lo[a]) as usize);
                    let slot = match slots[rel[0]][rel[1]][rel[2]] {
                        Some(slot) => slot,
                        None => {
                            let slot = *self.lookup.get(&block).ok_or(Error::Allocation { node })?;
                            slots[rel[0]][rel[1]][rel[2]] = Some(slot);
                            slot
                        }
                    };
                    let local = node.map(|c| c.rem_euclid(BLOCK_DIM));
                    s.nodes[k] = slot * NODES_PER_BLOCK as u32
                        + (local[0] + BLOCK_DIM * local[1] + BLOCK_DIM * BLOCK_DIM * local[2]) as u32;
                    s.weights[k] = w[0][i] * w[1][j] * w[2][l];
                    s.offsets[k] = Vec3::new(node[0] as Real, node[1] as Real, node[2] as Real) * self.h - x;
                    k += 1;
                }
            }
        }
        Ok(s)
    }
}
