use log::warn;
use rayon::prelude::*;

use crate::contact::{
    contact_energy, contact_energy_difference, contact_gradient_hessian, ContactParams, ContactPoint, LocalContact,
};
use crate::mpm::MIN_NODE_MASS;
use crate::transfer::{ordered_sum, ordered_sum_pair, scatter_reduce_unplanned, NodeContributions, ReductionMode, STENCIL};
use crate::{Error, Mat3, Real, Result, Vec3};

/// One substep's contact problem over the full node arrays. Nodes at or below
/// the mass threshold are not degrees of freedom: their velocity stays at its
/// initial value and they carry no contact coupling.
pub struct ContactProblem<'a> {
    pub mass: &'a [Real],
    pub v_star: &'a [Vec3],
    pub contacts: &'a [ContactPoint],
    pub params: ContactParams,
    pub dt: Real,
    /// Stencil weights with non-DoF nodes zeroed.
    weights: Vec<[Real; STENCIL]>,
}

/// Gradient data at one iterate.
#[derive(Clone, Debug)]
pub struct Evaluation {
    /// Contact velocities `J v + b` in contact frames.
    pub contact_velocity: Vec<Vec3>,
    /// `∂ℓ_c/∂v_c` per contact; the impulse is its negation.
    pub contact_gradient: Vec<Vec3>,
    pub contact_hessian: Vec<Mat3>,
    /// `M (v - v*) + Jᵀ g` per node, zero on inactive nodes.
    pub gradient: Vec<Vec3>,
    /// `Jᵀ γ` per node.
    pub generalized_impulse: Vec<Vec3>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metric {
    pub residual: Real,
    pub momentum_norm: Real,
    pub impulse_norm: Real,
    pub threshold: Real,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchResult {
    pub alpha: Real,
    /// `φ(α) - φ(0)`.
    pub decrement: Real,
    pub iterations: usize,
}

impl<'a> ContactProblem<'a> {
    pub fn new(
        mass: &'a [Real],
        v_star: &'a [Vec3],
        contacts: &'a [ContactPoint],
        params: ContactParams,
        dt: Real,
    ) -> Result<Self> {
        if mass.len() != v_star.len() {
            return Err(Error::ContractViolation(format!(
                "{} node masses but {} free velocities",
                mass.len(),
                v_star.len()
            )));
        }
        for c in contacts {
            if c.stencil.nodes.iter().any(|&n| n as usize >= mass.len()) {
                return Err(Error::ContractViolation(format!(
                    "contact of particle {} references nodes outside the grid",
                    c.particle_id
                )));
            }
        }
        let weights = contacts
            .iter()
            .map(|c| {
                let mut w = c.stencil.weights;
                for s in 0..STENCIL {
                    if mass[c.stencil.nodes[s] as usize] <= MIN_NODE_MASS {
                        w[s] = 0.0;
                    }
                }
                w
            })
            .collect();
        Ok(ContactProblem {
            mass,
            v_star,
            contacts,
            params,
            dt,
            weights,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.mass.len()
    }

    #[inline]
    pub fn is_dof(&self, node: usize) -> bool {
        self.mass[node] > MIN_NODE_MASS
    }

    /// Indices of the nodes that are degrees of freedom, ascending.
    pub fn dofs(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&i| self.is_dof(i)).collect()
    }

    /// Marks the degree-of-freedom nodes touched by at least one contact.
    /// Every other node decouples and is minimized exactly by `v*`.
    pub fn coupled_nodes(&self) -> Vec<bool> {
        let mut out = vec![false; self.num_nodes()];
        for (c, w) in self.contacts.iter().zip(&self.weights) {
            for s in 0..STENCIL {
                if w[s] != 0.0 {
                    out[c.stencil.nodes[s] as usize] = true;
                }
            }
        }
        out
    }

    pub fn local(&self, c: usize) -> LocalContact {
        let cp = &self.contacts[c];
        LocalContact {
            phi: cp.phi,
            mu: cp.mu,
            gamma_lag_n: cp.gamma_lag_n,
        }
    }

    /// `R Σ_i w_i x_i` over degree-of-freedom nodes, without the bias.
    pub fn apply_jacobian(&self, c: usize, x: &[Vec3]) -> Vec3 {
        let cp = &self.contacts[c];
        let w = &self.weights[c];
        let mut acc = Vec3::zeros();
        for s in 0..STENCIL {
            acc += x[cp.stencil.nodes[s] as usize] * w[s];
        }
        cp.frame * acc
    }

    pub fn contact_velocities(&self, v: &[Vec3]) -> Vec<Vec3> {
        (0..self.contacts.len())
            .into_par_iter()
            .map(|c| self.apply_jacobian(c, v) + self.contacts[c].bias)
            .collect()
    }

    /// `Jᵀ y` for per-contact vectors `y` in contact frames.
    pub fn apply_jacobian_transpose(&self, y: &[Vec3]) -> Vec<Vec3> {
        let out = scatter_reduce_unplanned::<3, _>(self.contacts.len(), self.num_nodes(), ReductionMode::Deterministic, |c| {
            let cp = &self.contacts[c];
            let world = cp.frame.transpose() * y[c];
            let weights = &self.weights[c];
            let mut nc = NodeContributions::<3>::zeroed();
            for s in 0..STENCIL {
                let w = weights[s];
                nc.nodes[s] = cp.stencil.nodes[s];
                nc.values[s] = [world.x * w, world.y * w, world.z * w];
            }
            nc
        });
        out.values.iter().map(|a| Vec3::new(a[0], a[1], a[2])).collect()
    }

    /// `ℓ_p(v)`, evaluated directly.
    pub fn objective(&self, v: &[Vec3]) -> Real {
        let inertial = ordered_sum(self.num_nodes(), |i| {
            if self.is_dof(i) {
                0.5 * self.mass[i] * (v[i] - self.v_star[i]).norm_squared()
            } else {
                0.0
            }
        });
        let vc = self.contact_velocities(v);
        let contact = ordered_sum(self.contacts.len(), |c| {
            contact_energy(&vc[c], &self.local(c), &self.params, self.dt)
        });
        inertial + contact
    }

    /// `ℓ_p(v + dv) - ℓ_p(v)` in factored form.
    pub fn objective_difference(&self, v: &[Vec3], dv: &[Vec3]) -> Real {
        let a1 = ordered_sum(self.num_nodes(), |i| {
            if self.is_dof(i) {
                self.mass[i] * (v[i] - self.v_star[i]).dot(&dv[i])
            } else {
                0.0
            }
        });
        let a2 = ordered_sum(self.num_nodes(), |i| {
            if self.is_dof(i) {
                self.mass[i] * dv[i].norm_squared()
            } else {
                0.0
            }
        });
        let u = self.contact_velocities(v);
        let contact = ordered_sum(self.contacts.len(), |c| {
            let w = self.apply_jacobian(c, dv);
            contact_energy_difference(&u[c], &w, &self.local(c), &self.params, self.dt)
        });
        a1 + 0.5 * a2 + contact
    }

    pub fn evaluate(&self, v: &[Vec3]) -> Evaluation {
        let contact_velocity = self.contact_velocities(v);
        let (contact_gradient, contact_hessian): (Vec<Vec3>, Vec<Mat3>) = contact_velocity
            .par_iter()
            .enumerate()
            .map(|(c, vc)| contact_gradient_hessian(vc, &self.local(c), &self.params, self.dt))
            .unzip();
        let jt_g = self.apply_jacobian_transpose(&contact_gradient);
        let gradient: Vec<Vec3> = (0..self.num_nodes())
            .into_par_iter()
            .map(|i| {
                if self.is_dof(i) {
                    (v[i] - self.v_star[i]) * self.mass[i] + jt_g[i]
                } else {
                    Vec3::zeros()
                }
            })
            .collect();
        let generalized_impulse = jt_g.into_iter().map(|x| -x).collect();
        Evaluation {
            contact_velocity,
            contact_gradient,
            contact_hessian,
            gradient,
            generalized_impulse,
        }
    }

    /// Node-diagonal blocks `m_i I + Σ_c w_ic² Rᵀ G_c R`.
    pub fn block_hessian(&self, eval: &Evaluation) -> Vec<Mat3> {
        let out = scatter_reduce_unplanned::<6, _>(self.contacts.len(), self.num_nodes(), ReductionMode::Deterministic, |c| {
            let cp = &self.contacts[c];
            let world = cp.frame.transpose() * eval.contact_hessian[c] * cp.frame;
            let packed = [
                world[(0, 0)],
                world[(1, 1)],
                world[(2, 2)],
                world[(0, 1)],
                world[(0, 2)],
                world[(1, 2)],
            ];
            let weights = &self.weights[c];
            let mut nc = NodeContributions::<6>::zeroed();
            for s in 0..STENCIL {
                let w2 = weights[s] * weights[s];
                nc.nodes[s] = cp.stencil.nodes[s];
                for k in 0..6 {
                    nc.values[s][k] = packed[k] * w2;
                }
            }
            nc
        });
        out.values
            .iter()
            .enumerate()
            .map(|(i, a)| {
                if !self.is_dof(i) {
                    return Mat3::zeros();
                }
                let m = self.mass[i];
                Mat3::new(
                    m + a[0],
                    a[3],
                    a[4],
                    a[3],
                    m + a[1],
                    a[5],
                    a[4],
                    a[5],
                    m + a[2],
                )
            })
            .collect()
    }

    /// Scaled residual `‖D ∇ℓ_p‖` and threshold
    /// `ε_a + ε_r · max(‖D M v‖, ‖D Jᵀγ‖)` with `D = diag(M)^(-1/2)`.
    pub fn metric(&self, v: &[Vec3], eval: &Evaluation, eps_a: Real, eps_r: Real) -> Metric {
        let n = self.num_nodes();
        let dof = |i: usize| self.is_dof(i);
        let residual = ordered_sum(n, |i| if dof(i) { eval.gradient[i].norm_squared() / self.mass[i] } else { 0.0 }).sqrt();
        let momentum_norm = ordered_sum(n, |i| if dof(i) { self.mass[i] * v[i].norm_squared() } else { 0.0 }).sqrt();
        let impulse_norm = ordered_sum(n, |i| {
            if dof(i) {
                eval.generalized_impulse[i].norm_squared() / self.mass[i]
            } else {
                0.0
            }
        })
        .sqrt();
        Metric {
            residual,
            momentum_norm,
            impulse_norm,
            threshold: eps_a + eps_r * momentum_norm.max(impulse_norm),
        }
    }

    /// Exact line search along `dv`: safeguarded Newton on `φ'(α)` with a
    /// bisection bracket.
    pub fn line_search(
        &self,
        v: &[Vec3],
        dv: &[Vec3],
        max_iters: usize,
        tolerance: Real,
    ) -> Result<LineSearchResult> {
        let n = self.num_nodes();
        let a1 = ordered_sum(n, |i| {
            if self.is_dof(i) {
                self.mass[i] * (v[i] - self.v_star[i]).dot(&dv[i])
            } else {
                0.0
            }
        });
        let a2 = ordered_sum(n, |i| if self.is_dof(i) { self.mass[i] * dv[i].norm_squared() } else { 0.0 });
        let u = self.contact_velocities(v);
        let w: Vec<Vec3> = (0..self.contacts.len()).into_par_iter().map(|c| self.apply_jacobian(c, dv)).collect();
        let locals: Vec<LocalContact> = (0..self.contacts.len()).map(|c| self.local(c)).collect();

        let derivs = |alpha: Real| -> (Real, Real) {
            let (d1, d2) = ordered_sum_pair(self.contacts.len(), |c| {
                let (g, h) = contact_gradient_hessian(&(u[c] + w[c] * alpha), &locals[c], &self.params, self.dt);
                (g.dot(&w[c]), w[c].dot(&(h * w[c])))
            });
            (a1 + alpha * a2 + d1, a2 + d2)
        };
        let decrement = |alpha: Real| -> Real {
            let contact = ordered_sum(self.contacts.len(), |c| {
                contact_energy_difference(&u[c], &(w[c] * alpha), &locals[c], &self.params, self.dt)
            });
            alpha * a1 + 0.5 * alpha * alpha * a2 + contact
        };

        let (d0, _) = derivs(0.0);
        if !(d0 < 0.0) {
            return Err(Error::ContractViolation(format!(
                "line search direction is not a descent direction (φ'(0) = {d0:e})"
            )));
        }
        let target = tolerance * d0.abs();

        let mut lo = 0.0;
        let mut hi = 1.0;
        let mut iterations = 0;
        let (mut d_hi, mut dd_hi) = derivs(hi);
        while d_hi < 0.0 && iterations < max_iters {
            lo = hi;
            hi *= 2.0;
            let e = derivs(hi);
            d_hi = e.0;
            dd_hi = e.1;
            iterations += 1;
        }
        let mut best = if d_hi >= 0.0 { hi } else { lo.max(hi) };
        let mut best_abs = d_hi.abs();

        if d_hi.abs() > target && d_hi >= 0.0 {
            let mut alpha = hi;
            let (mut d, mut dd) = (d_hi, dd_hi);
            while iterations < max_iters {
                iterations += 1;
                let newton = if dd > 0.0 { alpha - d / dd } else { Real::NAN };
                alpha = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
                let e = derivs(alpha);
                d = e.0;
                dd = e.1;
                if d.abs() < best_abs {
                    best_abs = d.abs();
                    best = alpha;
                }
                if d.abs() <= target {
                    break;
                }
                if d < 0.0 {
                    lo = alpha;
                } else {
                    hi = alpha;
                }
                if hi - lo <= Real::EPSILON * hi {
                    break;
                }
            }
        }
        let mut alpha = best;
        let mut dec = decrement(alpha);
        // fall back to the largest bracket point known to decrease φ
        if !(dec < 0.0) && lo > 0.0 {
            alpha = lo;
            dec = decrement(alpha);
        }
        Ok(LineSearchResult {
            alpha,
            decrement: dec,
            iterations,
        })
    }
}

/// Per-node solve `Δv_i = -H_ii⁻¹ g_i` by 3×3 Cholesky. Blocks that fail to
/// factor are shifted by `1e-12 · tr(H_ii) · I`.
pub fn solve_search_direction(blocks: &[Mat3], gradient: &[Vec3]) -> Vec<Vec3> {
    blocks
        .par_iter()
        .zip(gradient.par_iter())
        .map(|(h, g)| {
            if *g == Vec3::zeros() {
                return Vec3::zeros();
            }
            match h.cholesky() {
                Some(ch) => -ch.solve(g),
                None => {
                    let shift = 1e-12 * h.trace().abs().max(Real::MIN_POSITIVE);
                    warn!("non-SPD Hessian block regularized by {shift:e}");
                    match (h + Mat3::identity() * shift).cholesky() {
                        Some(ch) => -ch.solve(g),
                        None => -g / h.diagonal().max().max(shift),
                    }
                }
            }
        })
        .collect()
}
