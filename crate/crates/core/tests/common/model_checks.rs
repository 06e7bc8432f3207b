//! Finite-difference checks of the per-contact potential.

use mpm_core::contact::{contact_energy_difference, contact_gradient_hessian, ContactParams, LocalContact};
use mpm_core::{Mat3, Real, Vec3};
use rand::Rng;

use super::{random_vec, rng};

pub const FD_DT: Real = 1e-3;

pub fn fd_params() -> ContactParams {
    ContactParams {
        stiffness: 1e5,
        dissipation_time: 1e-3,
        friction_regularization: 1e-3,
    }
}

/// True when `v` is at least `margin` away from the normal clamp and the
/// Huber transition.
pub fn away_from_kinks(v: &Vec3, c: &LocalContact, margin: Real) -> bool {
    let p = fd_params();
    let vhat = p.stabilization_velocity(c.phi, FD_DT);
    let st = (v.x * v.x + v.y * v.y).sqrt();
    (v.z - vhat).abs() > margin && (st - p.friction_regularization).abs() > margin
}

/// Largest relative gradient and Hessian errors against central differences
/// over `samples` random points away from the kinks.
pub fn model_fd_errors(seed: u64, samples: usize) -> (Real, Real) {
    let p = fd_params();
    let mut r = rng(seed);
    let mut checked = 0;
    let (mut worst_g, mut worst_h): (Real, Real) = (0.0, 0.0);
    while checked < samples {
        let c = LocalContact {
            phi: r.gen_range(-1e-3..0.0),
            mu: r.gen_range(0.1..1.5),
            gamma_lag_n: r.gen_range(0.0..0.1),
        };
        let scale = if r.gen_bool(0.5) { 2e-3 } else { 0.5 };
        let v = random_vec(&mut r, scale);
        let h = 1e-7 * scale.max(1e-3);
        if !away_from_kinks(&v, &c, 10.0 * h) {
            continue;
        }
        checked += 1;
        let (g, hess) = contact_gradient_hessian(&v, &c, &p, FD_DT);
        let mut g_fd = Vec3::zeros();
        let mut h_fd = Mat3::zeros();
        for a in 0..3 {
            let mut e = Vec3::zeros();
            e[a] = h;
            g_fd[a] = (contact_energy_difference(&v, &e, &c, &p, FD_DT) - contact_energy_difference(&v, &(-e), &c, &p, FD_DT))
                / (2.0 * h);
            let (gp, _) = contact_gradient_hessian(&(v + e), &c, &p, FD_DT);
            let (gm, _) = contact_gradient_hessian(&(v - e), &c, &p, FD_DT);
            h_fd.set_column(a, &((gp - gm) / (2.0 * h)));
        }
        worst_g = worst_g.max((g - g_fd).norm() / g.norm().max(1e-12));
        worst_h = worst_h.max((hess - h_fd).norm() / hess.norm().max(1e-9));
    }
    (worst_g, worst_h)
}
