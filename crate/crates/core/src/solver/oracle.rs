//! Full-Hessian Newton reference. Assembles `J` and `Ĥ = M + Jᵀ G J` densely
//! and factors `Ĥ` directly; intended for small validation problems.

use nalgebra::{DMatrix, DVector};

use super::{ContactProblem, SolveReport, SolverParams};
use crate::contact::{contact_energy, contact_gradient_hessian};
use crate::transfer::STENCIL;
use crate::{Error, Real, Result, Vec3};

struct Dense {
    dofs: Vec<usize>,
    jac: DMatrix<Real>,
    bias: DVector<Real>,
    mass: DVector<Real>,
    x_star: DVector<Real>,
}

impl Dense {
    fn new(p: &ContactProblem) -> Self {
        let dofs = p.dofs();
        let mut slot = vec![usize::MAX; p.num_nodes()];
        for (k, &i) in dofs.iter().enumerate() {
            slot[i] = k;
        }
        let n = 3 * dofs.len();
        let m = 3 * p.contacts.len();
        let mut jac = DMatrix::zeros(m, n);
        let mut bias = DVector::zeros(m);
        for (c, cp) in p.contacts.iter().enumerate() {
            for s in 0..STENCIL {
                let k = slot[cp.stencil.nodes[s] as usize];
                if k == usize::MAX {
                    continue;
                }
                let w = cp.stencil.weights[s];
                for r in 0..3 {
                    for q in 0..3 {
                        jac[(3 * c + r, 3 * k + q)] += cp.frame[(r, q)] * w;
                    }
                }
            }
            for r in 0..3 {
                bias[3 * c + r] = cp.bias[r];
            }
        }
        let mass = DVector::from_iterator(n, dofs.iter().flat_map(|&i| [p.mass[i]; 3]));
        let x_star = DVector::from_iterator(n, dofs.iter().flat_map(|&i| p.v_star[i].iter().copied().collect::<Vec<_>>()));
        Dense {
            dofs,
            jac,
            bias,
            mass,
            x_star,
        }
    }

    fn gather(&self, v: &[Vec3]) -> DVector<Real> {
        DVector::from_iterator(3 * self.dofs.len(), self.dofs.iter().flat_map(|&i| [v[i].x, v[i].y, v[i].z]))
    }

    fn scatter(&self, x: &DVector<Real>, v: &mut [Vec3]) {
        for (k, &i) in self.dofs.iter().enumerate() {
            v[i] = Vec3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2]);
        }
    }

    fn local(u: &DVector<Real>, c: usize) -> Vec3 {
        Vec3::new(u[3 * c], u[3 * c + 1], u[3 * c + 2])
    }
}

/// Newton's method with the exact (generalized) Hessian and a bisection line
/// search. Returns the full node velocity array and an iteration report.
pub fn dense_newton_oracle(problem: &ContactProblem, v0: &[Vec3], params: &SolverParams) -> Result<(Vec<Vec3>, SolveReport)> {
    let d = Dense::new(problem);
    let mut v_full: Vec<Vec3> = (0..problem.num_nodes())
        .map(|i| if problem.is_dof(i) { v0[i] } else { problem.v_star[i] })
        .collect();
    let mut x = d.gather(&v_full);
    let nc = problem.contacts.len();
    let mut report = SolveReport::default();

    let objective = |x: &DVector<Real>| -> Real {
        let r = x - &d.x_star;
        let inertial = 0.5 * r.component_mul(&r).dot(&d.mass);
        let u = &d.jac * x + &d.bias;
        let contact: Real = (0..nc)
            .map(|c| contact_energy(&Dense::local(&u, c), &problem.local(c), &problem.params, problem.dt))
            .sum();
        inertial + contact
    };

    for _ in 0..=params.max_iters {
        let u = &d.jac * &x + &d.bias;
        let mut g_local = DVector::zeros(3 * nc);
        let mut hess = DMatrix::from_diagonal(&d.mass);
        let mut blocks = Vec::with_capacity(nc);
        for c in 0..nc {
            let (g, h) = contact_gradient_hessian(&Dense::local(&u, c), &problem.local(c), &problem.params, problem.dt);
            g_local.rows_mut(3 * c, 3).copy_from(&g);
            blocks.push(h);
        }
        let grad = (&x - &d.x_star).component_mul(&d.mass) + d.jac.transpose() * &g_local;
        let mut g_blocks = DMatrix::zeros(3 * nc, 3 * nc);
        for (c, h) in blocks.iter().enumerate() {
            g_blocks.view_mut((3 * c, 3 * c), (3, 3)).copy_from(h);
        }
        hess += d.jac.transpose() * &g_blocks * &d.jac;

        let jt_gamma = -(d.jac.transpose() * &g_local);
        let residual = grad.component_div(&d.mass).dot(&grad).sqrt();
        let p_norm = x.component_mul(&d.mass).dot(&x).sqrt();
        let j_norm = jt_gamma.component_div(&d.mass).dot(&jt_gamma).sqrt();
        let threshold = params.eps_a + params.eps_r * p_norm.max(j_norm);
        report.criterion_trace.push(residual);
        report.threshold_trace.push(threshold);
        if report.objective_trace.is_empty() {
            report.objective_trace.push(objective(&x));
        }
        if residual < threshold {
            report.converged = true;
            break;
        }
        if report.iterations >= params.max_iters {
            break;
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => -ch.solve(&grad),
            None => return Err(Error::NonFinite("dense Hessian is not SPD".into())),
        };

        // bisection on φ'(α) with precomputed contact velocities
        let w = &d.jac * &step;
        let a1 = (&x - &d.x_star).component_mul(&d.mass).dot(&step);
        let a2 = step.component_mul(&d.mass).dot(&step);
        let dphi = |alpha: Real| -> Real {
            let mut s = a1 + alpha * a2;
            for c in 0..nc {
                let wc = Dense::local(&w, c);
                let (g, _) = contact_gradient_hessian(
                    &(Dense::local(&u, c) + wc * alpha),
                    &problem.local(c),
                    &problem.params,
                    problem.dt,
                );
                s += g.dot(&wc);
            }
            s
        };
        let d0 = dphi(0.0);
        if !(d0 < 0.0) {
            report.stalled = true;
            break;
        }
        let mut alpha = 1.0;
        let d1 = dphi(1.0);
        if d1.abs() > 1e-14 * d0.abs() {
            let (mut lo, mut hi) = (0.0, 1.0);
            if d1 < 0.0 {
                while dphi(hi) < 0.0 && hi < 1e12 {
                    lo = hi;
                    hi *= 2.0;
                }
            }
            for _ in 0..200 {
                alpha = 0.5 * (lo + hi);
                let da = dphi(alpha);
                if da.abs() <= 1e-14 * d0.abs() || hi - lo <= Real::EPSILON * hi {
                    break;
                }
                if da < 0.0 {
                    lo = alpha;
                } else {
                    hi = alpha;
                }
            }
        }
        let x_new = &x + &step * alpha;
        let mut v_new = v_full.clone();
        d.scatter(&x_new, &mut v_new);
        let dv: Vec<Vec3> = v_new.iter().zip(&v_full).map(|(a, b)| a - b).collect();
        let dec = problem.objective_difference(&v_full, &dv);
        if !(dec < 0.0) {
            report.stalled = true;
            break;
        }
        x = x_new;
        v_full = v_new;
        report.iterations += 1;
        report.alpha_trace.push(alpha);
        report.decrement_trace.push(dec);
        let last = *report.objective_trace.last().unwrap();
        report.objective_trace.push(last + dec);
    }
    Ok((v_full, report))
}
