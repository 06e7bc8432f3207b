//! Checks shared by the solver tests and the acceptance run.

use mpm_core::solver::{dense_newton_oracle, quasi_newton_solve, ContactProblem, SolveResult, SolverParams};
use mpm_core::{Real, Vec3};
use nalgebra::DVector;

use super::{dense_jacobian, mass_norm, RandomScene};

/// Scaled momentum-balance residual `‖D (M (v - v*) - Jᵀγ)‖` relative to
/// `max(‖D M v‖, ‖D Jᵀγ‖)`, with `γ` evaluated at `v` and `D = M^(-1/2)`.
pub fn momentum_balance(p: &ContactProblem, v: &[Vec3]) -> Real {
    let eval = p.evaluate(v);
    let (dofs, j) = dense_jacobian(p);
    let gamma = DVector::from_iterator(
        3 * p.contacts.len(),
        eval.contact_gradient.iter().flat_map(|g| [-g.x, -g.y, -g.z]),
    );
    let jt_gamma = j.transpose() * gamma;
    let mut r2 = 0.0;
    let mut mv2 = 0.0;
    let mut j2 = 0.0;
    for (k, &i) in dofs.iter().enumerate() {
        let m = p.mass[i];
        let jg = Vec3::new(jt_gamma[3 * k], jt_gamma[3 * k + 1], jt_gamma[3 * k + 2]);
        let r = (v[i] - p.v_star[i]) * m - jg;
        r2 += r.norm_squared() / m;
        mv2 += m * v[i].norm_squared();
        j2 += jg.norm_squared() / m;
    }
    r2.sqrt() / mv2.max(j2).sqrt().max(Real::MIN_POSITIVE)
}

/// Contacts violating `‖γ_t‖ ≤ μ γ_lag + 1e-12` or `γ_t · v_t ≤ 0`.
pub fn cone_violations(p: &ContactProblem, sol: &SolveResult) -> usize {
    p.contacts
        .iter()
        .zip(sol.impulses.iter().zip(&sol.contact_velocities))
        .filter(|(c, (g, vc))| {
            let gt = (g.x * g.x + g.y * g.y).sqrt();
            gt > c.mu * c.gamma_lag_n + 1e-12 || g.x * vc.x + g.y * vc.y > 0.0
        })
        .count()
}

#[derive(Clone, Debug)]
pub struct OracleComparison {
    pub contacts: usize,
    pub dofs: usize,
    /// `‖v - v_oracle‖_M / ‖v_oracle‖_M`.
    pub velocity_error: Real,
    pub balance_qn: Real,
    pub balance_oracle: Real,
    pub qn_converged: bool,
    /// Least-squares rate `ρ` of the optimality gap.
    pub rate: Real,
    pub strictly_decreasing: bool,
    /// Distance between the minimisers reached from `v^k` and from zero,
    /// relative to `‖v_oracle‖_M`.
    pub init_difference: Real,
    pub cone_violations: usize,
    pub iterations: usize,
}

/// Least-squares slope of `ln(gap_m)` over the gaps above `floor`.
pub fn fit_rate(gaps: &[Real], floor: Real) -> Real {
    let pts: Vec<(Real, Real)> = gaps
        .iter()
        .enumerate()
        .filter(|(_, &g)| g > floor)
        .map(|(m, &g)| (m as Real, g.ln()))
        .collect();
    if pts.len() < 2 {
        // converged in at most one step: faster than any linear rate
        return 0.0;
    }
    let n = pts.len() as Real;
    let mx = pts.iter().map(|p| p.0).sum::<Real>() / n;
    let my = pts.iter().map(|p| p.1).sum::<Real>() / n;
    let sxy: Real = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: Real = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxy / sxx).exp()
}

pub fn compare_with_oracle(scene: &RandomScene) -> OracleComparison {
    let p = scene.problem();
    let params = SolverParams {
        eps_r: 1e-10,
        max_iters: 20_000,
        ..Default::default()
    };
    let sol = quasi_newton_solve(&p, &scene.v0, &params).unwrap();
    let (v_oracle, _) = dense_newton_oracle(&p, &scene.v0, &params).unwrap();
    let dofs = p.dofs();
    let diff: Vec<Vec3> = sol.velocity.iter().zip(&v_oracle).map(|(a, b)| a - b).collect();
    let scale = mass_norm(&p.mass, &dofs, &v_oracle).max(Real::MIN_POSITIVE);

    // optimality gaps f(v_m) - f(v_oracle) from the exact decrements
    let decs = &sol.report.decrement_trace;
    let tail = p.objective_difference(&v_oracle, &diff);
    let mut gaps = vec![0.0; decs.len() + 1];
    gaps[decs.len()] = tail;
    for m in (0..decs.len()).rev() {
        gaps[m] = gaps[m + 1] - decs[m];
    }
    let floor = 1e-9 * gaps[0].abs();
    let rate = fit_rate(&gaps, floor.max(tail.abs() * 10.0));

    let zeros = vec![Vec3::zeros(); p.num_nodes()];
    let alt = quasi_newton_solve(&p, &zeros, &params).unwrap();
    let alt_diff: Vec<Vec3> = alt.velocity.iter().zip(&sol.velocity).map(|(a, b)| a - b).collect();

    OracleComparison {
        contacts: p.contacts.len(),
        dofs: dofs.len(),
        velocity_error: mass_norm(&p.mass, &dofs, &diff) / scale,
        balance_qn: momentum_balance(&p, &sol.velocity),
        balance_oracle: momentum_balance(&p, &v_oracle),
        qn_converged: sol.report.converged,
        rate,
        strictly_decreasing: decs.iter().all(|&d| d < 0.0),
        init_difference: mass_norm(&p.mass, &dofs, &alt_diff) / scale,
        cone_violations: cone_violations(&p, &sol) + cone_violations(&p, &alt),
        iterations: sol.report.iterations,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DerivativeCheck {
    /// `‖∇ℓ_p - ∇_FD ℓ_p‖ / ‖∇ℓ_p‖`.
    pub gradient_error: Real,
    /// Largest entry difference between assembled node blocks and the
    /// diagonal blocks of `M + Jᵀ G J`, relative to the largest block entry.
    pub block_error: Real,
}

pub fn check_derivatives(scene: &RandomScene) -> DerivativeCheck {
    let p = scene.problem();
    let v: Vec<Vec3> = scene.v0.clone();
    let eval = p.evaluate(&v);
    let dofs = p.dofs();

    let mut num = 0.0;
    let mut den = 0.0;
    for &i in &dofs {
        for a in 0..3 {
            let x = v[i][a];
            let h = 1e-6 * (1.0 + x.abs());
            let mut up = vec![Vec3::zeros(); v.len()];
            up[i][a] = h;
            let mut dn = vec![Vec3::zeros(); v.len()];
            dn[i][a] = -h;
            // central difference of ℓ_p from exact differences
            let fd = (p.objective_difference(&v, &up) - p.objective_difference(&v, &dn)) / (2.0 * h);
            num += (fd - eval.gradient[i][a]).powi(2);
            den += eval.gradient[i][a].powi(2);
        }
    }

    let (_, j) = dense_jacobian(&p);
    let nc = p.contacts.len();
    let mut g = nalgebra::DMatrix::zeros(3 * nc, 3 * nc);
    for c in 0..nc {
        g.view_mut((3 * c, 3 * c), (3, 3)).copy_from(&eval.contact_hessian[c]);
    }
    let mut dense = j.transpose() * g * &j;
    for (k, &i) in dofs.iter().enumerate() {
        for a in 0..3 {
            dense[(3 * k + a, 3 * k + a)] += p.mass[i];
        }
    }
    let blocks = p.block_hessian(&eval);
    let mut worst: Real = 0.0;
    let mut largest: Real = 0.0;
    for (k, &i) in dofs.iter().enumerate() {
        for a in 0..3 {
            for b in 0..3 {
                let d = dense[(3 * k + a, 3 * k + b)];
                worst = worst.max((d - blocks[i][(a, b)]).abs());
                largest = largest.max(d.abs());
            }
        }
    }
    DerivativeCheck {
        gradient_error: num.sqrt() / den.sqrt().max(Real::MIN_POSITIVE),
        block_error: worst / largest,
    }
}
