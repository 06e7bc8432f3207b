//! Explicit MLS-MPM: particles, block-sparse grid, constitutive model and the
//! transfers that produce the free-motion grid velocity.

pub mod grid;
pub mod kernel;
pub mod material;
pub mod particles;
pub mod transfer;

pub use grid::{SparseGrid, Stencil, MIN_NODE_MASS};
pub use material::{compute_stress, ConstitutiveModel, Material, MaterialModel};
pub use particles::{Particle, ParticleSet};
pub use transfer::{free_motion_substep, grid_to_particle, grid_update, particle_to_grid, P2gOutput};
