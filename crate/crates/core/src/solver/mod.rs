//! Block-diagonal quasi-Newton solver for the per-substep contact problem
//!
//! ```text
//! min_v  ½‖v - v*‖²_M + Σ_c ℓ_c(J_c v + b_c)
//! ```
//!
//! plus a dense Newton reference used for validation.

mod oracle;
mod problem;
mod quasi_newton;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::Real;

pub use oracle::dense_newton_oracle;
pub use problem::{solve_search_direction, ContactProblem, Evaluation, LineSearchResult, Metric};
pub use quasi_newton::{quasi_newton_solve, SolveResult};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    pub eps_a: Real,
    pub eps_r: Real,
    pub max_iters: usize,
    pub ls_max_iters: usize,
    pub ls_tolerance: Real,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            eps_a: Real::EPSILON,
            eps_r: 5e-2,
            max_iters: 500,
            ls_max_iters: 50,
            ls_tolerance: 1e-8,
        }
    }
}

impl SolverParams {
    pub fn with_relative_tolerance(eps_r: Real) -> Self {
        SolverParams {
            eps_r,
            ..Default::default()
        }
    }

    pub(crate) fn violations(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.eps_a >= 0.0) {
            out.push(format!("{path}.eps_a: must be >= 0"));
        }
        if !(self.eps_r >= 0.0) {
            out.push(format!("{path}.eps_r: must be >= 0"));
        }
        if self.eps_a == 0.0 && self.eps_r == 0.0 {
            out.push(format!("{path}: eps_a and eps_r cannot both be 0"));
        }
        if self.max_iters == 0 {
            out.push(format!("{path}.max_iters: must be >= 1"));
        }
        if self.ls_max_iters == 0 {
            out.push(format!("{path}.ls_max_iters: must be >= 1"));
        }
        if !(self.ls_tolerance > 0.0) {
            out.push(format!("{path}.ls_tolerance: must be > 0"));
        }
        out
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Accepted iterations.
    pub iterations: usize,
    /// `ℓ_p` at the start and after every accepted iteration.
    pub objective_trace: Vec<Real>,
    /// `ℓ_p(v_{m+1}) - ℓ_p(v_m)`, evaluated without cancellation.
    pub decrement_trace: Vec<Real>,
    /// Scaled residual at every evaluated iterate.
    pub criterion_trace: Vec<Real>,
    pub threshold_trace: Vec<Real>,
    pub alpha_trace: Vec<Real>,
    pub converged: bool,
    /// The line search could no longer decrease the objective in floating
    /// point before the tolerance was met.
    pub stalled: bool,
}

impl SolveReport {
    /// One CSV line per iteration: `iter,objective,residual,threshold,alpha`.
    pub fn write_log<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter,objective,residual,threshold,alpha")?;
        for i in 0..self.criterion_trace.len() {
            let obj = self.objective_trace.get(i).copied().unwrap_or(Real::NAN);
            let alpha = self.alpha_trace.get(i).copied().unwrap_or(Real::NAN);
            writeln!(
                w,
                "{i},{obj:e},{:e},{:e},{alpha:e}",
                self.criterion_trace[i], self.threshold_trace[i]
            )?;
        }
        Ok(())
    }
}
