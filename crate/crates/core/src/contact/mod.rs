//! Contact registration between particles and rigid geometry, and the lagged
//! compliant contact potential.

pub mod detection;
pub mod model;

pub use detection::{bias_velocity, contact_velocity, detect_contacts, BiasCache, ContactPoint, FrictionTable};
pub use model::{
    contact_energy, contact_energy_difference, contact_gradient_hessian, normal_impulse, update_lagged_impulse,
    ContactParams, LocalContact,
};
