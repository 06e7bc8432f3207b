//! Scene fixtures and run-output comparison.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use mpm_core::scene::{load_scene, run_simulation, BodyConfig, BodyKind, SceneConfig};
use mpm_core::{Real, Vec3};

pub fn scenes_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

pub fn scene(name: &str) -> SceneConfig {
    load_scene(&scenes_dir().join(name)).unwrap()
}

/// Small box dropped on a floor with a free ball landing on it.
pub fn drop_scene() -> SceneConfig {
    let mut cfg = scene("resting_box.toml");
    cfg.grid.h = 0.02;
    cfg.step.substeps = 4;
    cfg.output.frame_period = 10;
    cfg.output.velocities = true;
    cfg.volumes[0].particles_per_cell = 4;
    cfg.bodies.push(BodyConfig {
        name: "ball".into(),
        kind: BodyKind::Free,
        position: Vec3::new(0.005, 0.0, 0.09),
        rotation: Vec3::zeros(),
        velocity: Vec3::new(0.0, 0.0, -0.5),
        angular_velocity: Vec3::new(0.0, 3.0, 0.0),
        density: Some(500.0),
        mass: None,
        inertia: None,
        friction: 0.8,
        geometries: vec![toml::from_str("type = \"sphere\"\nradius = 0.02").unwrap()],
        keyframes: vec![],
    });
    cfg.output.force_log = vec!["floor".into(), "ball".into()];
    cfg
}

pub fn file_map(root: &Path) -> HashMap<String, Vec<u8>> {
    let mut out = HashMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let name = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            // wall-clock columns are the only nondeterministic output
            if name == "timing.csv" || name == "summary.csv" {
                continue;
            }
            out.insert(name, std::fs::read(&p).unwrap());
        }
    }
    out
}

pub fn run_in_pool(cfg: &SceneConfig, duration: Real, threads: usize, dir: &Path) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| run_simulation(cfg, duration, Some(dir)).unwrap());
}
