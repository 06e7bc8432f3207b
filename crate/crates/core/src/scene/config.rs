//! TOML scene description and its validation.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contact::ContactParams;
use crate::geometry::RigidGeometry;
use crate::mpm::Material;
use crate::scheduler::StepConfig;
use crate::solver::SolverParams;
use crate::{Error, Real, Result, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub grid: GridConfig,
    pub step: StepConfig,
    /// Bitwise-reproducible reductions.
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub materials: Vec<Material>,
    #[serde(default)]
    pub volumes: Vec<VolumeConfig>,
    #[serde(default)]
    pub bodies: Vec<BodyConfig>,
    #[serde(default)]
    pub friction: Vec<FrictionPair>,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub contact: ContactConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub h: Real,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum VolumeShape {
    Box { min: Vec3, max: Vec3 },
    Sphere { center: Vec3, radius: Real },
}

fn default_ppc() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeConfig {
    pub material: String,
    pub shape: VolumeShape,
    #[serde(default = "default_ppc")]
    pub particles_per_cell: usize,
    #[serde(default = "Vec3::zeros")]
    pub velocity: Vec3,
    /// Jitter amplitude as a fraction of the sample spacing, in `[0, 1)`.
    #[serde(default)]
    pub jitter: Real,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BodyKind {
    #[default]
    Kinematic,
    Free,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeConfig {
    pub time: Real,
    pub position: Vec3,
    /// Rotation vector (axis times angle, radians).
    #[serde(default = "Vec3::zeros")]
    pub rotation: Vec3,
}

fn default_friction() -> Real {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyConfig {
    pub name: String,
    #[serde(default)]
    pub kind: BodyKind,
    #[serde(default = "Vec3::zeros")]
    pub position: Vec3,
    /// Rotation vector (axis times angle, radians).
    #[serde(default = "Vec3::zeros")]
    pub rotation: Vec3,
    #[serde(default = "Vec3::zeros")]
    pub velocity: Vec3,
    #[serde(default = "Vec3::zeros")]
    pub angular_velocity: Vec3,
    /// Free bodies: density of their single bounded geometry...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Real>,
    /// ...or explicit mass and principal body-frame inertia.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<Vec3>,
    #[serde(default = "default_friction")]
    pub friction: Real,
    pub geometries: Vec<RigidGeometry>,
    /// Kinematic trajectory; overrides `position`/`rotation` when present.
    #[serde(default)]
    pub keyframes: Vec<KeyframeConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrictionPair {
    pub body: String,
    pub material: String,
    pub mu: Real,
}

/// Contact parameters; unset entries fall back to the defaults for the
/// configured step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stiffness: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dissipation_time: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub friction_regularization: Option<Real>,
}

impl ContactConfig {
    pub fn resolve(&self, dt: Real) -> ContactParams {
        let d = ContactParams::for_step(dt);
        ContactParams {
            stiffness: self.stiffness.unwrap_or(d.stiffness),
            dissipation_time: self.dissipation_time.unwrap_or(d.dissipation_time),
            friction_regularization: self.friction_regularization.unwrap_or(d.friction_regularization),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Write a frame every this many steps; 0 disables frames.
    #[serde(default)]
    pub frame_period: usize,
    #[serde(default)]
    pub velocities: bool,
    #[serde(default = "default_true")]
    pub csv_frames: bool,
    /// Bodies whose per-step wrench goes to the contact log.
    #[serde(default)]
    pub force_log: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            frame_period: 0,
            velocities: false,
            csv_frames: true,
            force_log: Vec::new(),
        }
    }
}

impl SceneConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let text = self.to_toml().expect("scene configs serialize");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn material_index(&self, name: &str) -> Option<usize> {
        self.materials.iter().position(|m| m.name == name)
    }

    pub fn body_index(&self, name: &str) -> Option<usize> {
        self.bodies.iter().position(|b| b.name == name)
    }

    /// Every semantic violation, each prefixed with its field path.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.grid.h > 0.0 && self.grid.h.is_finite()) {
            out.push("grid.h: must be > 0".to_string());
        }
        out.extend(self.step.violations("step"));
        out.extend(self.solver.violations("solver"));
        if self.step.dt > 0.0 {
            out.extend(self.contact.resolve(self.step.dt).violations("contact"));
        }

        let mut names = HashSet::new();
        for (i, m) in self.materials.iter().enumerate() {
            let path = format!("materials[{i}]");
            out.extend(m.violations(&path));
            if !names.insert(m.name.as_str()) {
                out.push(format!("{path}.name: duplicate material '{}'", m.name));
            }
        }
        for (i, v) in self.volumes.iter().enumerate() {
            let path = format!("volumes[{i}]");
            if self.material_index(&v.material).is_none() {
                out.push(format!("{path}.material: unknown material '{}'", v.material));
            }
            if v.particles_per_cell == 0 {
                out.push(format!("{path}.particles_per_cell: must be >= 1"));
            }
            if !(0.0..1.0).contains(&v.jitter) {
                out.push(format!("{path}.jitter: must be in [0, 1)"));
            }
            match &v.shape {
                VolumeShape::Box { min, max } => {
                    if !(0..3).all(|k| max[k] > min[k]) {
                        out.push(format!("{path}.shape: max must exceed min on every axis"));
                    }
                }
                VolumeShape::Sphere { radius, .. } => {
                    if !(*radius > 0.0) {
                        out.push(format!("{path}.shape.radius: must be > 0"));
                    }
                }
            }
        }

        let mut body_names = HashSet::new();
        for (i, b) in self.bodies.iter().enumerate() {
            let path = format!("bodies[{i}]");
            if !body_names.insert(b.name.as_str()) {
                out.push(format!("{path}.name: duplicate body '{}'", b.name));
            }
            if !(b.friction >= 0.0) {
                out.push(format!("{path}.friction: must be >= 0"));
            }
            if b.geometries.is_empty() {
                out.push(format!("{path}.geometries: at least one geometry required"));
            }
            for (j, g) in b.geometries.iter().enumerate() {
                out.extend(g.violations(&format!("{path}.geometries[{j}]")));
            }
            if b.keyframes.windows(2).any(|w| !(w[1].time > w[0].time)) {
                out.push(format!("{path}.keyframes: times must be strictly increasing"));
            }
            match b.kind {
                BodyKind::Kinematic => {
                    if b.density.is_some() || b.mass.is_some() || b.inertia.is_some() {
                        out.push(format!("{path}: kinematic bodies take no mass properties"));
                    }
                }
                BodyKind::Free => {
                    if !b.keyframes.is_empty() {
                        out.push(format!("{path}.keyframes: only kinematic bodies follow keyframes"));
                    }
                    match (b.density, b.mass, b.inertia) {
                        (Some(d), None, None) => {
                            if !(d > 0.0) {
                                out.push(format!("{path}.density: must be > 0"));
                            }
                            if b.geometries.len() != 1 || !b.geometries[0].is_bounded() {
                                out.push(format!(
                                    "{path}.density: needs exactly one bounded geometry (give mass and inertia instead)"
                                ));
                            }
                        }
                        (None, Some(m), Some(inertia)) => {
                            if !(m > 0.0) {
                                out.push(format!("{path}.mass: must be > 0"));
                            }
                            if !inertia.iter().all(|&x| x > 0.0) {
                                out.push(format!("{path}.inertia: principal moments must be > 0"));
                            }
                        }
                        _ => out.push(format!("{path}: free bodies need either density, or mass and inertia")),
                    }
                }
            }
        }
        for (i, f) in self.friction.iter().enumerate() {
            let path = format!("friction[{i}]");
            if self.body_index(&f.body).is_none() {
                out.push(format!("{path}.body: unknown body '{}'", f.body));
            }
            if self.material_index(&f.material).is_none() {
                out.push(format!("{path}.material: unknown material '{}'", f.material));
            }
            if !(f.mu >= 0.0) {
                out.push(format!("{path}.mu: must be >= 0"));
            }
        }
        for (i, name) in self.output.force_log.iter().enumerate() {
            if self.body_index(name).is_none() {
                out.push(format!("output.force_log[{i}]: unknown body '{name}'"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Reads and validates a scene file.
pub fn load_scene(path: &Path) -> Result<SceneConfig> {
    let text = std::fs::read_to_string(path)?;
    SceneConfig::from_toml(&text)
}
