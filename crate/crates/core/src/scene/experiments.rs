//! Desk-scale reproductions of the grip, close-lift-shake and rolling
//! scenarios, plus the transfer benchmark.

use std::time::Instant;

use log::info;

use super::build::build_simulation;
use super::config::{
    BodyConfig, BodyKind, ContactConfig, GridConfig, KeyframeConfig, OutputConfig, SceneConfig,
    VolumeConfig, VolumeShape,
};
use super::output::{force_rows, ForceRow};
use super::run::step_count;
use crate::geometry::{RigidGeometry, Shape};
use crate::mpm::Material;
use crate::scheduler::{Simulation, StepConfig, StepStats};
use crate::solver::SolverParams;
use crate::{Real, Result, Vec3};

const GRAVITY: Real = 9.81;

/// Smooth 0→1 ramp on `[0, 1]`.
fn smoothstep(s: Real) -> Real {
    let s = s.clamp(0.0, 1.0);
    0.5 - 0.5 * (std::f64::consts::PI * s).cos()
}

/// Keyframes moving from `from` to `to` along a smooth ramp during
/// `[t0, t1]`, appended to `out`.
fn ramp(out: &mut Vec<KeyframeConfig>, t0: Real, t1: Real, from: Vec3, to: Vec3, samples: usize) {
    for i in 0..=samples {
        let s = i as Real / samples as Real;
        let time = t0 + s * (t1 - t0);
        if out.last().is_some_and(|k| k.time >= time) {
            continue;
        }
        out.push(KeyframeConfig {
            time,
            position: from + (to - from) * smoothstep(s),
            rotation: Vec3::zeros(),
        });
    }
}

fn hold(out: &mut Vec<KeyframeConfig>, t: Real, at: Vec3) {
    if out.last().is_some_and(|k| k.time >= t) {
        return;
    }
    out.push(KeyframeConfig {
        time: t,
        position: at,
        rotation: Vec3::zeros(),
    });
}

fn kinematic(name: &str, geometry: Shape, keyframes: Vec<KeyframeConfig>, friction: Real) -> BodyConfig {
    BodyConfig {
        name: name.into(),
        kind: BodyKind::Kinematic,
        position: keyframes.first().map_or(Vec3::zeros(), |k| k.position),
        rotation: Vec3::zeros(),
        velocity: Vec3::zeros(),
        angular_velocity: Vec3::zeros(),
        density: None,
        mass: None,
        inertia: None,
        friction,
        geometries: vec![RigidGeometry::new(geometry)],
        keyframes,
    }
}

fn floor_shape() -> Shape {
    Shape::HalfSpace {
        normal: Vec3::z(),
        offset: 0.0,
    }
}

fn mean(xs: impl Iterator<Item = Real> + Clone) -> Real {
    let n = xs.clone().count();
    if n == 0 {
        0.0
    } else {
        xs.sum::<Real>() / n as Real
    }
}

fn std_dev(xs: impl Iterator<Item = Real> + Clone) -> Real {
    let m = mean(xs.clone());
    mean(xs.map(|x| (x - m) * (x - m))).sqrt()
}

/// Solver health over a run.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveAudit {
    pub substeps: usize,
    pub converged: usize,
    /// Largest `‖γ_t‖ - μ γ_lag` seen in a converged solve.
    pub max_cone_excess: Real,
    pub dissipation_violations: usize,
}

impl SolveAudit {
    fn push(&mut self, s: &StepStats) {
        for sub in &s.substeps {
            self.substeps += 1;
            if sub.converged {
                self.converged += 1;
                if self.converged == 1 {
                    self.max_cone_excess = sub.cone_excess;
                } else {
                    self.max_cone_excess = self.max_cone_excess.max(sub.cone_excess);
                }
                self.dissipation_violations += sub.dissipation_violations;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// panel grip

#[derive(Clone, Debug)]
pub struct PanelGripOptions {
    pub duration: Real,
    /// Start of the force-averaging window.
    pub settle: Real,
    /// Length of the final window for the friction fluctuation check.
    pub window: Real,
    pub target_force: Real,
    /// Inward travel of each panel past first contact; calibrated when `None`.
    pub compression: Option<Real>,
}

impl Default for PanelGripOptions {
    fn default() -> Self {
        PanelGripOptions {
            duration: 1.5,
            settle: 0.5,
            window: 1.0,
            target_force: 10.0,
            compression: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PanelGripResult {
    pub compression: Real,
    pub box_mass: Real,
    /// Mean wrench on the left panel after the settle time.
    pub mean_force: Vec3,
    /// Standard deviation of `f_y` and `f_z` over the final window.
    pub friction_std: [Real; 2],
    pub rows: Vec<ForceRow>,
    pub audit: SolveAudit,
    pub wall_seconds: Real,
}

impl PanelGripResult {
    pub fn normal_error(&self, target: Real) -> Real {
        (self.mean_force.x.abs() - target).abs() / target
    }

    pub fn weight_error(&self) -> Real {
        let half = 0.5 * self.box_mass * GRAVITY;
        (self.mean_force.z.abs() - half).abs() / half
    }

    /// Largest friction-component deviation relative to the mean
    /// weight-supporting force.
    pub fn fluctuation_ratio(&self) -> Real {
        self.friction_std[0].max(self.friction_std[1]) / self.mean_force.z.abs()
    }
}

const GRIP_HALF: Real = 0.05;
const GRIP_H: Real = 0.02;
const GRIP_CLOSE: Real = 0.1;
/// Relative solver tolerance for the grip; the default 5e-2 leaves a
/// tolerance-driven wander of about 3% of the weight in the friction log.
pub const GRIP_EPS_R: Real = 1e-2;
const GRIP_FLOOR_DROP: (Real, Real) = (0.15, 0.35);

/// Elastic 10 cm cube between two kinematic panels, resting on a floor that
/// retracts once the panels have closed.
pub fn panel_grip_scene(compression: Real, gravity: bool, duration: Real) -> SceneConfig {
    let dt = 1e-4;
    // the outermost particles sit half a sample spacing inside the faces
    let first_touch = GRIP_HALF - 0.25 * GRIP_H;
    let panel = Vec3::new(0.01, 0.08, 0.08);
    let z_mid = GRIP_HALF;
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (side, kf) in [(-1.0, &mut left), (1.0, &mut right)] {
        let start = Vec3::new(side * (first_touch + panel.x), 0.0, z_mid);
        let end = Vec3::new(side * (first_touch - compression + panel.x), 0.0, z_mid);
        ramp(kf, 0.0, GRIP_CLOSE, start, end, 40);
        hold(kf, duration.max(GRIP_CLOSE) + 1.0, end);
    }
    let mut floor = Vec::new();
    let floor_top = Vec3::new(0.0, 0.0, 0.25 * GRIP_H);
    hold(&mut floor, 0.0, floor_top);
    ramp(
        &mut floor,
        GRIP_FLOOR_DROP.0,
        GRIP_FLOOR_DROP.1,
        floor_top,
        floor_top - Vec3::new(0.0, 0.0, 0.02),
        40,
    );

    SceneConfig {
        grid: GridConfig { h: GRIP_H },
        step: StepConfig {
            dt,
            substeps: 1,
            gravity: if gravity { Vec3::new(0.0, 0.0, -GRAVITY) } else { Vec3::zeros() },
        },
        deterministic: true,
        materials: vec![Material::new("jelly", 1e5, 0.4, 1000.0).expect("valid")],
        volumes: vec![VolumeConfig {
            material: "jelly".into(),
            shape: VolumeShape::Box {
                min: Vec3::new(-GRIP_HALF, -GRIP_HALF, 0.0),
                max: Vec3::new(GRIP_HALF, GRIP_HALF, 2.0 * GRIP_HALF),
            },
            particles_per_cell: 8,
            velocity: Vec3::zeros(),
            jitter: 0.0,
            seed: 0,
        }],
        bodies: vec![
            kinematic("left", Shape::Box { half_extents: panel }, left, 1.0),
            kinematic("right", Shape::Box { half_extents: panel }, right, 1.0),
            kinematic("floor", floor_shape(), floor, 0.0),
        ],
        friction: vec![],
        solver: SolverParams::with_relative_tolerance(GRIP_EPS_R),
        contact: ContactConfig::default(),
        output: OutputConfig {
            force_log: vec!["left".into(), "right".into()],
            ..Default::default()
        },
    }
}

fn run_grip(cfg: &SceneConfig, duration: Real) -> Result<(Simulation, Vec<ForceRow>, SolveAudit)> {
    let mut sim = build_simulation(cfg)?;
    let steps = step_count(duration, cfg.step.dt);
    let mut rows = Vec::with_capacity(steps);
    let mut audit = SolveAudit::default();
    for _ in 0..steps {
        let st = sim.advance_step()?;
        audit.push(&st);
        rows.extend(force_rows(&st, &[0], cfg.step.dt));
    }
    Ok((sim, rows, audit))
}

/// Mean panel normal force without gravity for a given compression.
pub fn grip_normal_force(compression: Real) -> Result<Real> {
    let settle = GRIP_CLOSE + 0.1;
    let duration = settle + 0.1;
    let cfg = panel_grip_scene(compression, false, duration);
    let (_, rows, _) = run_grip(&cfg, duration)?;
    Ok(mean(rows.iter().filter(|r| r.time > settle).map(|r| -r.force.x)))
}

/// Secant iteration on the prescribed compression until the gravity-free
/// normal force matches `target` to `rel_tol`.
pub fn calibrate_grip_compression(target: Real, rel_tol: Real) -> Result<Real> {
    // linear-elastic estimate: total squeeze F L / (E A), split over both panels
    let mut d0 = 0.5 * target * 0.1 / (1e5 * 0.01);
    let mut f0 = grip_normal_force(d0)?;
    let mut d1 = d0 * target / f0.max(1e-6);
    for _ in 0..8 {
        let f1 = grip_normal_force(d1)?;
        info!("grip calibration: compression {d1:.6e} m -> {f1:.4} N");
        if (f1 - target).abs() <= rel_tol * target {
            return Ok(d1);
        }
        let slope = (f1 - f0) / (d1 - d0);
        let next = if slope > 0.0 { d1 + (target - f1) / slope } else { d1 * target / f1 };
        d0 = d1;
        f0 = f1;
        d1 = next;
    }
    Ok(d1)
}

pub fn run_panel_grip(opts: &PanelGripOptions) -> Result<PanelGripResult> {
    let start = Instant::now();
    let compression = match opts.compression {
        Some(d) => d,
        None => calibrate_grip_compression(opts.target_force, 5e-3)?,
    };
    let cfg = panel_grip_scene(compression, true, opts.duration);
    let (sim, rows, audit) = run_grip(&cfg, opts.duration)?;
    let after = |t: Real| rows.iter().filter(move |r| r.time > t + 1e-12);
    let mean_force = Vec3::new(
        mean(after(opts.settle).map(|r| r.force.x)),
        mean(after(opts.settle).map(|r| r.force.y)),
        mean(after(opts.settle).map(|r| r.force.z)),
    );
    let w0 = opts.duration - opts.window;
    let friction_std = [
        std_dev(after(w0).map(|r| r.force.y)),
        std_dev(after(w0).map(|r| r.force.z)),
    ];
    Ok(PanelGripResult {
        compression,
        box_mass: sim.particles.total_mass(),
        mean_force,
        friction_std,
        rows,
        audit,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn free_body(name: &str, geometry: Shape, position: Vec3, rotation: Vec3, density: Real, friction: Real) -> BodyConfig {
    BodyConfig {
        name: name.into(),
        kind: BodyKind::Free,
        position,
        rotation,
        velocity: Vec3::zeros(),
        angular_velocity: Vec3::zeros(),
        density: Some(density),
        mass: None,
        inertia: None,
        friction,
        geometries: vec![RigidGeometry::new(geometry)],
        keyframes: vec![],
    }
}

fn box_volume(material: &str, min: Vec3, max: Vec3) -> VolumeConfig {
    VolumeConfig {
        material: material.into(),
        shape: VolumeShape::Box { min, max },
        particles_per_cell: 8,
        velocity: Vec3::zeros(),
        jitter: 0.0,
        seed: 0,
    }
}

// ---------------------------------------------------------------------------
// close-lift-shake stress test

#[derive(Clone, Debug)]
pub struct StressShakeOptions {
    pub eps_r: Real,
    /// Inward panel travel past first contact.
    pub compression: Real,
    /// Peak lateral (y) shake displacement.
    pub amplitude: Real,
    pub frequency: Real,
    /// Stiction velocity scale of the friction model.
    pub friction_regularization: Real,
}

impl Default for StressShakeOptions {
    fn default() -> Self {
        StressShakeOptions {
            eps_r: 1e-2,
            compression: 8e-4,
            amplitude: 8e-3,
            frequency: 5.0,
            friction_regularization: 1e-2,
        }
    }
}

const SHAKE_CUBE: Real = 0.04;
const SHAKE_H: Real = 0.01;
const SHAKE_CLOSE: (Real, Real) = (0.0, 0.01);
const SHAKE_LIFT: (Real, Real) = (0.04, 0.14);
const SHAKE_WINDOW: (Real, Real) = (0.14, 0.34);
const SHAKE_END: Real = 0.36;
const SHAKE_RISE: Real = 0.02;

/// Lateral panel offset during the shake window: a sine under a half-sine
/// envelope, so position and velocity start and end at zero.
fn shake_offset(t: Real, amplitude: Real, frequency: Real) -> Real {
    let (t0, t1) = SHAKE_WINDOW;
    if t <= t0 || t >= t1 {
        return 0.0;
    }
    let tau = t - t0;
    let envelope = (std::f64::consts::PI * tau / (t1 - t0)).sin();
    amplitude * envelope * (2.0 * std::f64::consts::PI * frequency * tau).sin()
}

/// Two light elastic cubes flanking a heavy free rigid cube (mass ratio
/// 150:1), squeezed by kinematic panels, lifted off the floor and shaken.
/// The rigid cube has no support of its own: it falls until the close
/// catches it.
pub fn stress_shake_scene(opts: &StressShakeOptions) -> SceneConfig {
    let a = 0.5 * SHAKE_CUBE;
    // the innermost particle layers sit exactly on the rigid cube faces
    let inset = 0.25 * SHAKE_H;
    let outer = a + 2.0 * a - inset;
    let first_touch = outer - inset;
    let panel = Vec3::new(0.01, 0.04, 0.04);
    let z_mid = a;

    let panel_keys = |side: Real| {
        let open = Vec3::new(side * (first_touch + panel.x), 0.0, z_mid);
        let closed = Vec3::new(side * (first_touch - opts.compression + panel.x), 0.0, z_mid);
        let lifted = closed + Vec3::new(0.0, 0.0, SHAKE_RISE);
        let mut kf = Vec::new();
        ramp(&mut kf, SHAKE_CLOSE.0, SHAKE_CLOSE.1, open, closed, 20);
        hold(&mut kf, SHAKE_LIFT.0, closed);
        ramp(&mut kf, SHAKE_LIFT.0, SHAKE_LIFT.1, closed, lifted, 40);
        let samples = 400;
        for i in 1..=samples {
            let t = SHAKE_WINDOW.0 + (SHAKE_WINDOW.1 - SHAKE_WINDOW.0) * i as Real / samples as Real;
            hold(&mut kf, t, lifted + Vec3::new(0.0, shake_offset(t, opts.amplitude, opts.frequency), 0.0));
        }
        hold(&mut kf, SHAKE_END + 1.0, lifted);
        kf
    };
    let mut floor = Vec::new();
    hold(&mut floor, 0.0, Vec3::new(0.0, 0.0, inset));

    SceneConfig {
        grid: GridConfig { h: SHAKE_H },
        step: StepConfig {
            dt: 1e-4,
            substeps: 10,
            gravity: Vec3::new(0.0, 0.0, -GRAVITY),
        },
        deterministic: true,
        materials: vec![Material::new("foam", 5e5, 0.4, 100.0).expect("valid")],
        volumes: vec![
            box_volume(
                "foam",
                Vec3::new(-outer, -a, 0.0),
                Vec3::new(-outer + SHAKE_CUBE, a, SHAKE_CUBE),
            ),
            box_volume("foam", Vec3::new(outer - SHAKE_CUBE, -a, 0.0), Vec3::new(outer, a, SHAKE_CUBE)),
        ],
        bodies: vec![
            kinematic("left", Shape::Box { half_extents: panel }, panel_keys(-1.0), 1.0),
            kinematic("right", Shape::Box { half_extents: panel }, panel_keys(1.0), 1.0),
            kinematic("floor", floor_shape(), floor, 0.5),
            free_body(
                "block",
                Shape::Box {
                    half_extents: Vec3::repeat(a),
                },
                Vec3::new(0.0, 0.0, z_mid),
                Vec3::zeros(),
                15000.0,
                1.0,
            ),
        ],
        friction: vec![],
        solver: SolverParams::with_relative_tolerance(opts.eps_r),
        contact: ContactConfig {
            friction_regularization: Some(opts.friction_regularization),
            ..Default::default()
        },
        output: OutputConfig {
            force_log: vec!["left".into(), "right".into()],
            ..Default::default()
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShakeSample {
    pub time: Real,
    pub panel_mid: Vec3,
    /// Mass-weighted centroid of both elastic cubes and the rigid cube.
    pub stack_centroid: Vec3,
    pub mpm_centroid: Vec3,
}

#[derive(Clone, Debug)]
pub struct StressShakeResult {
    pub steps: usize,
    /// `None` when the run completed with finite state.
    pub failure: Option<String>,
    /// Largest displacement of the stack centroid relative to the panel
    /// midpoint during the shake, measured from its value at shake start.
    pub drift: Real,
    /// Drop of the elastic cubes' centroid relative to the panels over the
    /// shake.
    pub height_drop: Real,
    pub mass_ratio: Real,
    pub mean_iterations: Real,
    pub audit: SolveAudit,
    pub samples: Vec<ShakeSample>,
    pub wall_seconds: Real,
}

pub fn run_stress_shake(opts: &StressShakeOptions) -> Result<StressShakeResult> {
    let start = Instant::now();
    let cfg = stress_shake_scene(opts);
    let mut sim = build_simulation(&cfg)?;
    let block = cfg.body_index("block").expect("block body");
    let mpm_mass = sim.particles.total_mass();
    let mass_ratio = sim.bodies[block].mass / (mpm_mass / 2.0);

    let steps = step_count(SHAKE_END, cfg.step.dt);
    let mut samples = Vec::with_capacity(steps);
    let mut audit = SolveAudit::default();
    let mut iterations = 0usize;
    let mut failure = None;
    for _ in 0..steps {
        match sim.advance_step() {
            Ok(st) => {
                audit.push(&st);
                iterations += st.iterations();
            }
            Err(crate::Error::NonFinite(msg)) => {
                failure = Some(msg);
                break;
            }
            Err(e) => return Err(e),
        }
        let mpm = sim.particles.centroid();
        let rigid = &sim.bodies[block];
        let stack = (mpm * mpm_mass + rigid.com() * rigid.mass) / (mpm_mass + rigid.mass);
        samples.push(ShakeSample {
            time: sim.time,
            panel_mid: 0.5 * (sim.bodies[0].com() + sim.bodies[1].com()),
            stack_centroid: stack,
            mpm_centroid: mpm,
        });
    }

    let in_shake: Vec<&ShakeSample> = samples
        .iter()
        .filter(|s| s.time >= SHAKE_WINDOW.0 - 1e-12 && s.time <= SHAKE_END + 1e-12)
        .collect();
    let (drift, height_drop) = match in_shake.first() {
        Some(first) if failure.is_none() => {
            let r0 = first.stack_centroid - first.panel_mid;
            let z0 = first.mpm_centroid.z - first.panel_mid.z;
            let drift = in_shake
                .iter()
                .map(|s| (s.stack_centroid - s.panel_mid - r0).norm())
                .fold(0.0, Real::max);
            let drop = in_shake
                .iter()
                .map(|s| z0 - (s.mpm_centroid.z - s.panel_mid.z))
                .fold(0.0, Real::max);
            (drift, drop)
        }
        _ => (Real::INFINITY, Real::INFINITY),
    };
    Ok(StressShakeResult {
        steps: samples.len(),
        failure,
        drift,
        height_drop,
        mass_ratio,
        mean_iterations: iterations as Real / (samples.len().max(1) * cfg.step.substeps) as Real,
        audit,
        samples,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------------------------
// rolling pin

#[derive(Clone, Debug)]
pub struct RollOptions {
    pub duration: Real,
    pub tolerances: Vec<Real>,
    pub initial_speed: Real,
}

impl Default for RollOptions {
    fn default() -> Self {
        RollOptions {
            duration: 1.0,
            tolerances: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
            initial_speed: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RollRow {
    pub eps_r: Real,
    pub iterations: usize,
    pub mean_iterations: Real,
    pub wall_seconds: Real,
    pub pin_position: Vec3,
    /// Pin position difference to the tightest-tolerance run.
    pub pin_difference: Real,
    /// RMS particle position difference to the tightest-tolerance run.
    pub particle_difference: Real,
}

/// Free capsule pin rolling across an elastic slab resting on a half-space,
/// at a large step (10 ms, 10 substeps).
pub fn roll_scene(eps_r: Real, initial_speed: Real) -> SceneConfig {
    let radius = 0.03;
    let slab_top = 0.06;
    let mut pin = free_body(
        "pin",
        Shape::Capsule {
            radius,
            half_length: 0.06,
        },
        Vec3::new(-0.15, 0.0, slab_top + radius - 0.0025),
        Vec3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0),
        500.0,
        0.8,
    );
    pin.velocity = Vec3::new(initial_speed, 0.0, 0.0);
    pin.angular_velocity = Vec3::new(0.0, initial_speed / radius, 0.0);
    SceneConfig {
        grid: GridConfig { h: 0.02 },
        step: StepConfig {
            dt: 1e-2,
            substeps: 10,
            gravity: Vec3::new(0.0, 0.0, -GRAVITY),
        },
        deterministic: true,
        materials: vec![Material::new("slab", 1e5, 0.3, 1000.0).expect("valid")],
        volumes: vec![box_volume("slab", Vec3::new(-0.3, -0.1, 0.0), Vec3::new(0.3, 0.1, slab_top))],
        bodies: vec![kinematic("floor", floor_shape(), vec![], 0.8), pin],
        friction: vec![],
        solver: SolverParams::with_relative_tolerance(eps_r),
        contact: ContactConfig::default(),
        output: OutputConfig::default(),
    }
}

pub fn run_roll(opts: &RollOptions) -> Result<Vec<RollRow>> {
    let mut runs = Vec::new();
    for &eps_r in &opts.tolerances {
        let start = Instant::now();
        let cfg = roll_scene(eps_r, opts.initial_speed);
        let mut sim = build_simulation(&cfg)?;
        let steps = step_count(opts.duration, cfg.step.dt);
        let mut iterations = 0;
        for _ in 0..steps {
            iterations += sim.advance_step()?.iterations();
        }
        let pin = sim.bodies[cfg.body_index("pin").expect("pin")].com();
        info!("roll: eps_r {eps_r:e}, {iterations} iterations");
        runs.push((
            eps_r,
            iterations,
            iterations as Real / (steps * cfg.step.substeps) as Real,
            start.elapsed().as_secs_f64(),
            pin,
            sim.particles.positions(),
        ));
    }
    let reference = runs
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|r| (r.4, r.5.clone()));
    Ok(runs
        .into_iter()
        .map(|(eps_r, iterations, mean_iterations, wall_seconds, pin, x)| {
            let (ref_pin, ref_x) = reference.as_ref().expect("at least one run");
            let sq: Real = x.iter().zip(ref_x).map(|(a, b)| (a - b).norm_squared()).sum();
            RollRow {
                eps_r,
                iterations,
                mean_iterations,
                wall_seconds,
                pin_position: pin,
                pin_difference: (pin - ref_pin).norm(),
                particle_difference: (sq / x.len().max(1) as Real).sqrt(),
            }
        })
        .collect())
}

pub const ROLL_CSV_HEADER: &str = "eps_r,iterations,mean_iterations,wall_s,pin_x,pin_z,pin_diff,particle_rms_diff";

pub fn roll_csv_row(r: &RollRow) -> String {
    format!(
        "{:e},{},{:.3},{:.3},{:.6},{:.6},{:e},{:e}",
        r.eps_r, r.iterations, r.mean_iterations, r.wall_seconds, r.pin_position.x, r.pin_position.z, r.pin_difference,
        r.particle_difference
    )
}

// ---------------------------------------------------------------------------
// transfer benchmark

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchMode {
    /// Binned scatter with one atomic merge per (bin, node).
    Fast,
    Deterministic,
    /// One atomic add per particle contribution.
    Naive,
}

impl BenchMode {
    pub fn name(self) -> &'static str {
        match self {
            BenchMode::Fast => "fast",
            BenchMode::Deterministic => "deterministic",
            BenchMode::Naive => "naive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fast" => Some(BenchMode::Fast),
            "deterministic" => Some(BenchMode::Deterministic),
            "naive" => Some(BenchMode::Naive),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub mode: BenchMode,
    pub particle_count: usize,
    /// Median wall time of one mass + momentum scatter.
    pub scatter_ns: u128,
    pub merges: usize,
    /// Fraction of particles whose key no longer matches the plan.
    pub staleness: Real,
}

pub const BENCH_CSV_HEADER: &str = "mode,particle_count,scatter_ns,merges,staleness";

pub fn bench_csv_row(r: &BenchRow) -> String {
    format!(
        "{},{},{},{},{:.4}",
        r.mode.name(),
        r.particle_count,
        r.scatter_ns,
        r.merges,
        r.staleness
    )
}

/// Scatters mass and momentum of `particles` random particles (8 per cell)
/// with each mode. Fast mode is measured twice: with a fresh plan and with a
/// plan aged by half a cell of random drift.
pub fn bench_transfer(particles: usize, modes: &[BenchMode], repeats: usize, seed: u64) -> Result<Vec<BenchRow>> {
    use crate::mpm::{Particle, ParticleSet, SparseGrid};
    use crate::transfer::{scatter_atomic_naive, scatter_reduce, NodeContributions, ReductionMode, SortPlan, STENCIL};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let h = 0.01;
    let side = (particles as Real / 8.0).cbrt() * h;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_point = |rng: &mut ChaCha8Rng| Vec3::new(rng.gen::<Real>(), rng.gen::<Real>(), rng.gen::<Real>()) * side;
    let fresh: Vec<Vec3> = (0..particles).map(|_| random_point(&mut rng)).collect();
    let drifted: Vec<Vec3> = fresh
        .iter()
        .map(|x| x + (Vec3::new(rng.gen(), rng.gen(), rng.gen()) - Vec3::repeat(0.5)) * h)
        .collect();
    let plan = SortPlan::build(&fresh, h, 0);

    let mut rows = Vec::new();
    let mut cases: Vec<(BenchMode, &[Vec3])> = modes.iter().map(|&m| (m, fresh.as_slice())).collect();
    if modes.contains(&BenchMode::Fast) {
        cases.push((BenchMode::Fast, drifted.as_slice()));
    }
    for (mode, positions) in cases {
        let set = ParticleSet::new(positions.iter().map(|x| Particle::at_rest(*x, 1.0, 1.0, 0)).collect());
        let mut grid = SparseGrid::new(h);
        grid.allocate_for(&set);
        let stencils = positions.iter().map(|x| grid.stencil(x)).collect::<Result<Vec<_>>>()?;
        let contribute = |p: usize| {
            let s = &stencils[p];
            let v = set.particles[p].v + Vec3::new(1.0, 2.0, 3.0);
            let mut nc = NodeContributions::<4>::zeroed();
            for k in 0..STENCIL {
                let w = s.weights[k];
                nc.nodes[k] = s.nodes[k];
                nc.values[k] = [w, w * v.x, w * v.y, w * v.z];
            }
            nc
        };
        let mut times = Vec::with_capacity(repeats);
        let mut merges = 0;
        for _ in 0..repeats.max(1) {
            let t = Instant::now();
            let out = match mode {
                BenchMode::Fast => scatter_reduce(&plan, 0, grid.num_nodes(), ReductionMode::Fast, contribute)?,
                BenchMode::Deterministic => {
                    scatter_reduce(&plan, 0, grid.num_nodes(), ReductionMode::Deterministic, contribute)?
                }
                BenchMode::Naive => scatter_atomic_naive(particles, grid.num_nodes(), contribute),
            };
            times.push(t.elapsed().as_nanos());
            merges = out.merges;
        }
        times.sort_unstable();
        rows.push(BenchRow {
            mode,
            particle_count: particles,
            scatter_ns: times[times.len() / 2],
            merges,
            staleness: plan.staleness(positions),
        });
    }
    Ok(rows)
}
