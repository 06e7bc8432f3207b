use log::debug;

use super::{ContactProblem, SolveReport, SolverParams};
use crate::solver::problem::solve_search_direction;
use crate::{Error, Result, Vec3};

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub velocity: Vec<Vec3>,
    /// Contact-frame impulses `γ = -∂ℓ_c/∂v_c` at the returned velocity.
    pub impulses: Vec<Vec3>,
    /// Contact velocities at the returned velocity.
    pub contact_velocities: Vec<Vec3>,
    pub report: SolveReport,
}

/// Block-diagonal quasi-Newton iteration started from `v0`, normally the
/// substep-start velocities. A non-converged solve returns its last iterate
/// with `report.converged == false`.
pub fn quasi_newton_solve(problem: &ContactProblem, v0: &[Vec3], params: &SolverParams) -> Result<SolveResult> {
    let n = problem.num_nodes();
    if v0.len() != n {
        return Err(Error::ContractViolation(format!("initial velocity has {} nodes, problem has {n}", v0.len())));
    }
    // nodes away from every contact start at their exact minimizer v*; the
    // relative stopping test alone could otherwise accept v0 there and drop
    // the body force of a quiet substep
    let coupled = problem.coupled_nodes();
    let v: Vec<Vec3> = (0..n)
        .map(|i| if coupled[i] { v0[i] } else { problem.v_star[i] })
        .collect();
    let mut report = SolveReport::default();

    if problem.contacts.is_empty() {
        let eval = problem.evaluate(&v);
        let m = problem.metric(&v, &eval, params.eps_a, params.eps_r);
        report.objective_trace.push(problem.objective(&v));
        report.criterion_trace.push(m.residual);
        report.threshold_trace.push(m.threshold);
        report.converged = true;
        return Ok(SolveResult {
            velocity: v,
            impulses: Vec::new(),
            contact_velocities: Vec::new(),
            report,
        });
    }
    let mut v = v;

    let mut objective = problem.objective(&v);
    report.objective_trace.push(objective);
    let mut eval = problem.evaluate(&v);
    loop {
        let m = problem.metric(&v, &eval, params.eps_a, params.eps_r);
        report.criterion_trace.push(m.residual);
        report.threshold_trace.push(m.threshold);
        if !m.residual.is_finite() {
            return Err(Error::NonFinite("contact solver residual".into()));
        }
        if m.residual < m.threshold {
            report.converged = true;
            break;
        }
        if report.iterations >= params.max_iters {
            break;
        }
        let blocks = problem.block_hessian(&eval);
        let dv = solve_search_direction(&blocks, &eval.gradient);
        let ls = problem.line_search(&v, &dv, params.ls_max_iters, params.ls_tolerance)?;
        if !(ls.decrement < 0.0) {
            report.stalled = true;
            debug!("contact solve stalled at residual {:e} (threshold {:e})", m.residual, m.threshold);
            break;
        }
        for (vi, d) in v.iter_mut().zip(&dv) {
            *vi += d * ls.alpha;
        }
        objective += ls.decrement;
        report.iterations += 1;
        report.alpha_trace.push(ls.alpha);
        report.decrement_trace.push(ls.decrement);
        report.objective_trace.push(objective);
        eval = problem.evaluate(&v);
    }
    if v.iter().any(|x| !x.iter().all(|c| c.is_finite())) {
        return Err(Error::NonFinite("contact solver velocity".into()));
    }
    let impulses = eval.contact_gradient.iter().map(|g| -g).collect();
    Ok(SolveResult {
        velocity: v,
        impulses,
        contact_velocities: eval.contact_velocity,
        report,
    })
}

