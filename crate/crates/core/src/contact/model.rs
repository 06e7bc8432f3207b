//! Lagged compliant contact potential.
//!
//! Normal: `γ_n(v_n) = max(0, -K (v_n - v̂))` with `K = dt (dt + τ_d) k` and
//! `v̂ = -φ / (dt + τ_d)`; the potential is `ℓ_n = γ_n² / (2K)`.
//! Friction: `μ γ_lag huber_ε(‖v_t‖)` with the normal impulse `γ_lag` frozen
//! for the whole solve, which keeps the potential convex in `v_c`.
//!
//! Contact velocities are in the contact frame, `z` along the normal and
//! positive when separating.

use serde::{Deserialize, Serialize};

use crate::{Mat3, Real, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactParams {
    /// Contact stiffness k [N/m].
    pub stiffness: Real,
    /// Dissipation time scale τ_d [s].
    pub dissipation_time: Real,
    /// Friction regularization velocity ε_v [m/s].
    pub friction_regularization: Real,
}

impl ContactParams {
    /// Defaults for a coupling step `dt`: k = 1e5 N/m, τ_d = dt, ε_v = 1e-4 m/s.
    pub fn for_step(dt: Real) -> Self {
        ContactParams {
            stiffness: 1e5,
            dissipation_time: dt,
            friction_regularization: 1e-4,
        }
    }

    pub(crate) fn violations(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.stiffness > 0.0) {
            out.push(format!("{path}.stiffness: must be > 0"));
        }
        if !(self.dissipation_time >= 0.0) {
            out.push(format!("{path}.dissipation_time: must be >= 0"));
        }
        if !(self.friction_regularization > 0.0) {
            out.push(format!("{path}.friction_regularization: must be > 0"));
        }
        out
    }

    /// Impulse-per-velocity gain K [kg].
    #[inline]
    pub fn gain(&self, dt: Real) -> Real {
        dt * (dt + self.dissipation_time) * self.stiffness
    }

    /// Separation speed above which the normal impulse vanishes.
    #[inline]
    pub fn stabilization_velocity(&self, phi: Real, dt: Real) -> Real {
        -phi / (dt + self.dissipation_time)
    }
}

/// Per-contact data the potential depends on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalContact {
    pub phi: Real,
    pub mu: Real,
    pub gamma_lag_n: Real,
}

pub fn normal_impulse(v_n: Real, phi: Real, params: &ContactParams, dt: Real) -> Real {
    let k = params.gain(dt);
    let vhat = params.stabilization_velocity(phi, dt);
    (-k * (v_n - vhat)).max(0.0)
}

/// Normal impulse at the substep-start contact velocity; held fixed during
/// the solve as the radius of the friction cone.
pub fn update_lagged_impulse(v_c_start: &Vec3, phi: Real, params: &ContactParams, dt: Real) -> Real {
    normal_impulse(v_c_start.z, phi, params, dt)
}

#[inline]
fn huber(s: Real, eps: Real) -> Real {
    if s <= eps {
        s * s / (2.0 * eps)
    } else {
        s - 0.5 * eps
    }
}

pub fn contact_energy(v_c: &Vec3, c: &LocalContact, params: &ContactParams, dt: Real) -> Real {
    let k = params.gain(dt);
    let gn = normal_impulse(v_c.z, c.phi, params, dt);
    let st = (v_c.x * v_c.x + v_c.y * v_c.y).sqrt();
    gn * gn / (2.0 * k) + c.mu * c.gamma_lag_n * huber(st, params.friction_regularization)
}

/// `(∂ℓ/∂v_c, ∂²ℓ/∂v_c²)`. At the normal clamp boundary the active-branch
/// curvature is used.
pub fn contact_gradient_hessian(v_c: &Vec3, c: &LocalContact, params: &ContactParams, dt: Real) -> (Vec3, Mat3) {
    let k = params.gain(dt);
    let vhat = params.stabilization_velocity(c.phi, dt);
    let mut g = Vec3::zeros();
    let mut h = Mat3::zeros();

    if v_c.z <= vhat {
        g.z = k * (v_c.z - vhat);
        h[(2, 2)] = k;
    }

    let scale = c.mu * c.gamma_lag_n;
    if scale > 0.0 {
        let eps = params.friction_regularization;
        let st = (v_c.x * v_c.x + v_c.y * v_c.y).sqrt();
        if st <= eps {
            let a = scale / eps;
            g.x = a * v_c.x;
            g.y = a * v_c.y;
            h[(0, 0)] = a;
            h[(1, 1)] = a;
        } else {
            let (tx, ty) = (v_c.x / st, v_c.y / st);
            g.x = scale * tx;
            g.y = scale * ty;
            let a = scale / st;
            h[(0, 0)] = a * (1.0 - tx * tx);
            h[(1, 1)] = a * (1.0 - ty * ty);
            h[(0, 1)] = -a * tx * ty;
            h[(1, 0)] = h[(0, 1)];
        }
    }
    (g, h)
}

/// `ℓ(v_c + dv) - ℓ(v_c)` evaluated in factored form, so small decrements
/// are not lost to cancellation between two large potentials.
pub fn contact_energy_difference(v_c: &Vec3, dv: &Vec3, c: &LocalContact, params: &ContactParams, dt: Real) -> Real {
    let k = params.gain(dt);
    let vhat = params.stabilization_velocity(c.phi, dt);

    // normal: ℓ_n = K/2 · max(0, v̂ - v_n)²
    let a0 = (vhat - v_c.z).max(0.0);
    let a1 = (vhat - (v_c.z + dv.z)).max(0.0);
    let normal = if a0 > 0.0 && a1 > 0.0 {
        // a1 - a0 = -dv_z exactly on the active branch
        0.5 * k * (-dv.z) * (a0 + a1)
    } else {
        0.5 * k * (a1 * a1 - a0 * a0)
    };

    let scale = c.mu * c.gamma_lag_n;
    if scale == 0.0 {
        return normal;
    }
    let eps = params.friction_regularization;
    let s0sq = v_c.x * v_c.x + v_c.y * v_c.y;
    // s1² - s0² = dv_t · (2 v_t + dv_t)
    let dsq = dv.x * (2.0 * v_c.x + dv.x) + dv.y * (2.0 * v_c.y + dv.y);
    let s1sq = s0sq + dsq;
    let s0 = s0sq.sqrt();
    let s1 = s1sq.max(0.0).sqrt();
    let friction = match (s0 <= eps, s1 <= eps) {
        (true, true) => dsq / (2.0 * eps),
        (false, false) => {
            if s0 + s1 > 0.0 {
                dsq / (s0 + s1)
            } else {
                0.0
            }
        }
        (true, false) => (s1 - eps) + (eps - s0) * (eps + s0) / (2.0 * eps),
        (false, true) => -((s0 - eps) + (eps - s1) * (eps + s1) / (2.0 * eps)),
    };
    normal + scale * friction
}
