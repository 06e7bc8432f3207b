//! Time-splitting driver. Rigid velocities are frozen for a whole coupling
//! step while the MPM system takes `N` substeps; contact impulses are summed
//! and applied to free bodies once at the end of the step.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::contact::{contact_velocity, detect_contacts, update_lagged_impulse, BiasCache, ContactParams, FrictionTable};
use crate::mpm::{free_motion_substep, grid_to_particle, Material, ParticleSet, SparseGrid};
use crate::rigid::{integrate_rigid, BodyMode, RigidBody};
use crate::solver::{quasi_newton_solve, ContactProblem, SolveReport, SolverParams};
use crate::transfer::{ReductionMode, SortPlan};
use crate::{Error, Real, Result, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: Real,
    pub substeps: usize,
    pub gravity: Vec3,
}

impl StepConfig {
    pub fn substep_size(&self) -> Real {
        self.dt / self.substeps as Real
    }

    pub(crate) fn violations(&self, path: &str) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.dt > 0.0) {
            out.push(format!("{path}.dt: must be > 0"));
        }
        if self.substeps == 0 {
            out.push(format!("{path}.substeps: must be >= 1"));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            out.push(format!("{path}.gravity: must be finite"));
        }
        out
    }
}

/// Per-body impulses on the rigid side, about each body's centre of mass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImpulseAccumulator {
    pub linear: Vec<Vec3>,
    pub angular: Vec<Vec3>,
}

impl ImpulseAccumulator {
    pub fn new(bodies: usize) -> Self {
        ImpulseAccumulator {
            linear: vec![Vec3::zeros(); bodies],
            angular: vec![Vec3::zeros(); bodies],
        }
    }

    pub fn reset(&mut self, bodies: usize) {
        self.linear.clear();
        self.linear.resize(bodies, Vec3::zeros());
        self.angular.clear();
        self.angular.resize(bodies, Vec3::zeros());
    }

    /// Adds an impulse acting on a body at `arm` from its centre of mass.
    pub fn add(&mut self, body: usize, impulse: &Vec3, arm: &Vec3) {
        self.linear[body] += impulse;
        self.angular[body] += arm.cross(impulse);
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SubstepStats {
    pub contacts: usize,
    /// Grid nodes above the mass threshold.
    pub active_nodes: usize,
    pub iterations: usize,
    pub converged: bool,
    /// `max_c (‖γ_t‖ - μ γ_lag)`; non-positive when every impulse lies in its cone.
    pub cone_excess: Real,
    /// Contacts with `γ_t · v_t > 0`.
    pub dissipation_violations: usize,
    pub clamped_particles: usize,
    pub merges: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepStats {
    pub step: u64,
    /// Time at the end of the step.
    pub time: Real,
    pub substeps: Vec<SubstepStats>,
    /// Sort-plan staleness at the end of the step.
    pub staleness: Real,
    /// Rigid-side impulses of this step.
    pub impulses: ImpulseAccumulator,
}

impl StepStats {
    pub fn max_contacts(&self) -> usize {
        self.substeps.iter().map(|s| s.contacts).max().unwrap_or(0)
    }

    pub fn mean_contacts(&self) -> Real {
        mean(self.substeps.iter().map(|s| s.contacts as Real))
    }

    pub fn mean_active_nodes(&self) -> Real {
        mean(self.substeps.iter().map(|s| s.active_nodes as Real))
    }

    pub fn iterations(&self) -> usize {
        self.substeps.iter().map(|s| s.iterations).sum()
    }

    pub fn all_converged(&self) -> bool {
        self.substeps.iter().all(|s| s.converged)
    }
}

fn mean(it: impl Iterator<Item = Real>) -> Real {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as Real
    }
}

pub struct Simulation {
    pub particles: ParticleSet,
    pub materials: Vec<Material>,
    pub bodies: Vec<RigidBody>,
    pub grid: SparseGrid,
    pub step: StepConfig,
    pub contact: ContactParams,
    pub solver: SolverParams,
    pub friction: FrictionTable,
    pub mode: ReductionMode,
    pub time: Real,
    pub step_index: u64,
    /// Keep every solve report of the current step in `reports`.
    pub keep_reports: bool,
    pub reports: Vec<SolveReport>,
    bias_cache: BiasCache,
    accumulator: ImpulseAccumulator,
    plan: Option<SortPlan>,
}

impl Simulation {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        particles: ParticleSet,
        materials: Vec<Material>,
        bodies: Vec<RigidBody>,
        h: Real,
        step: StepConfig,
        contact: ContactParams,
        solver: SolverParams,
        friction: FrictionTable,
        mode: ReductionMode,
    ) -> Result<Self> {
        let mut errs = step.violations("step");
        errs.extend(contact.violations("contact"));
        errs.extend(solver.violations("solver"));
        if !(h > 0.0) {
            errs.push("grid.h: must be > 0".into());
        }
        if let Some(p) = particles.particles.iter().find(|p| p.material >= materials.len()) {
            errs.push(format!("particles: material index {} out of range", p.material));
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let n_bodies = bodies.len();
        Ok(Simulation {
            particles,
            materials,
            bodies,
            grid: SparseGrid::new(h),
            step,
            contact,
            solver,
            friction,
            mode,
            time: 0.0,
            step_index: 0,
            keep_reports: false,
            reports: Vec::new(),
            bias_cache: BiasCache::new(),
            accumulator: ImpulseAccumulator::new(n_bodies),
            plan: None,
        })
    }

    pub fn accumulator(&self) -> &ImpulseAccumulator {
        &self.accumulator
    }

    pub fn plan(&self) -> Option<&SortPlan> {
        self.plan.as_ref()
    }

    /// Starts a coupling step: freezes rigid velocities, builds the sort plan
    /// and clears the per-step caches.
    pub fn begin_step(&mut self) {
        let dt = self.step.dt;
        for body in &mut self.bodies {
            body.prepare_kinematic_step(self.time, dt);
        }
        self.plan = Some(SortPlan::build(&self.particles.positions(), self.grid.spacing(), self.step_index));
        self.bias_cache.clear();
        self.accumulator.reset(self.bodies.len());
        self.reports.clear();
    }

    /// One MPM substep: free motion, contact detection, lagged impulses,
    /// contact solve, reaction accumulation, then advection.
    pub fn advance_substep(&mut self, k: usize) -> Result<SubstepStats> {
        if k >= self.step.substeps {
            return Err(Error::ContractViolation(format!(
                "substep {k} out of range for {} substeps",
                self.step.substeps
            )));
        }
        let plan = self
            .plan
            .as_ref()
            .ok_or_else(|| Error::ContractViolation("substep advanced before begin_step".into()))?;
        let dt_s = self.step.substep_size();
        let p2g = free_motion_substep(
            &self.particles,
            &self.materials,
            &mut self.grid,
            plan,
            self.step_index,
            self.mode,
            &self.step.gravity,
            dt_s,
        )?;

        let mut contacts = detect_contacts(&self.particles, &self.bodies, &self.grid, &self.friction, &mut self.bias_cache)?;
        for c in &mut contacts {
            let vc = contact_velocity(c, &self.grid.velocity);
            c.gamma_lag_n = update_lagged_impulse(&vc, c.phi, &self.contact, dt_s);
        }

        let problem = ContactProblem::new(&self.grid.mass, &self.grid.free_velocity, &contacts, self.contact, dt_s)?;
        let sol = quasi_newton_solve(&problem, &self.grid.velocity, &self.solver)?;
        if !sol.report.converged {
            warn!(
                "contact solve did not converge at step {} substep {k} ({} iterations)",
                self.step_index, sol.report.iterations
            );
        }

        let mut cone_excess = Real::NEG_INFINITY;
        let mut dissipation_violations = 0;
        for (c, (gamma, vc)) in contacts.iter().zip(sol.impulses.iter().zip(&sol.contact_velocities)) {
            let gt = (gamma.x * gamma.x + gamma.y * gamma.y).sqrt();
            cone_excess = cone_excess.max(gt - c.mu * c.gamma_lag_n);
            if gamma.x * vc.x + gamma.y * vc.y > 0.0 {
                dissipation_violations += 1;
            }
            let on_mpm = c.frame.transpose() * gamma;
            let arm = c.witness - self.bodies[c.body_id].com();
            self.accumulator.add(c.body_id, &(-on_mpm), &arm);
        }
        if contacts.is_empty() {
            cone_excess = 0.0;
        }

        let clamped = grid_to_particle(&self.grid, &sol.velocity, &mut self.particles, dt_s)?;
        let stats = SubstepStats {
            contacts: contacts.len(),
            active_nodes: self.grid.active_count(),
            iterations: sol.report.iterations,
            converged: sol.report.converged,
            cone_excess,
            dissipation_violations,
            clamped_particles: clamped,
            merges: p2g.merges,
        };
        if self.keep_reports {
            self.reports.push(sol.report);
        }
        Ok(stats)
    }

    /// Ends a coupling step: applies the accumulated impulses to free bodies,
    /// moves kinematic bodies along their trajectories and advances time.
    pub fn end_step(&mut self) {
        let dt = self.step.dt;
        let t_next = (self.step_index + 1) as Real * dt;
        for (i, body) in self.bodies.iter_mut().enumerate() {
            match &body.mode {
                BodyMode::Free => integrate_rigid(
                    body,
                    &self.accumulator.linear[i],
                    &self.accumulator.angular[i],
                    &self.step.gravity,
                    dt,
                ),
                BodyMode::Kinematic(traj) => body.pose = traj.pose_at(t_next),
            }
        }
        self.step_index += 1;
        self.time = t_next;
    }

    pub fn advance_step(&mut self) -> Result<StepStats> {
        self.begin_step();
        let mut substeps = Vec::with_capacity(self.step.substeps);
        for k in 0..self.step.substeps {
            substeps.push(self.advance_substep(k)?);
        }
        let staleness = self.plan.as_ref().map_or(0.0, |p| p.staleness(&self.particles.positions()));
        let impulses = self.accumulator.clone();
        self.end_step();
        if !self.particles.is_finite() {
            return Err(Error::NonFinite(format!("particle state after step {}", self.step_index)));
        }
        if let Some(b) = self.bodies.iter().find(|b| !b.is_finite()) {
            return Err(Error::NonFinite(format!("rigid body '{}' after step {}", b.name, self.step_index)));
        }
        debug!(
            "step {} t={:.6}: {} contacts max, {} iterations",
            self.step_index,
            self.time,
            substeps.iter().map(|s| s.contacts).max().unwrap_or(0),
            substeps.iter().map(|s| s.iterations).sum::<usize>()
        );
        Ok(StepStats {
            step: self.step_index - 1,
            time: self.time,
            substeps,
            staleness,
            impulses,
        })
    }
}
