//! Run artifacts: particle frames, contact log, per-step counters and the
//! run summary.
//!
//! Binary frame layout (little endian):
//!
//! | bytes  | content                    |
//! |--------|----------------------------|
//! | 4      | magic `MPMF`               |
//! | 4      | `u32` format version (1)   |
//! | 8      | `u64` particle count `n`   |
//! | 24 n   | `f64` triples `x, y, z`    |
//!
//! Velocity frames use the same layout in a separate `_vel.bin` file.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::scheduler::StepStats;
use crate::{Error, Real, Result, Vec3};

pub const FRAME_MAGIC: &[u8; 4] = b"MPMF";
pub const FRAME_VERSION: u32 = 1;

pub fn encode_frame(points: &[Vec3]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + 24 * points.len());
    buf.extend_from_slice(FRAME_MAGIC);
    buf.extend_from_slice(&FRAME_VERSION.to_le_bytes());
    buf.extend_from_slice(&(points.len() as u64).to_le_bytes());
    for p in points {
        for c in p.iter() {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    buf
}

pub fn decode_frame(bytes: &[u8]) -> Result<Vec<Vec3>> {
    let bad = |m: &str| Error::Parse(format!("frame: {m}"));
    if bytes.len() < 16 || &bytes[0..4] != FRAME_MAGIC {
        return Err(bad("missing magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FRAME_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() != 16 + 24 * n {
        return Err(bad("length does not match particle count"));
    }
    let f = |i: usize| Real::from_le_bytes(bytes[16 + 8 * i..24 + 8 * i].try_into().unwrap());
    Ok((0..n).map(|p| Vec3::new(f(3 * p), f(3 * p + 1), f(3 * p + 2))).collect())
}

pub fn read_frame(path: &Path) -> Result<Vec<Vec3>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_frame(&bytes)
}

/// CSV mirror of a frame: header `x,y,z`, one row per particle, shortest
/// round-trip float formatting.
pub fn frame_csv(points: &[Vec3]) -> String {
    let mut s = String::from("x,y,z\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.x, p.y, p.z));
    }
    s
}

pub fn parse_frame_csv(text: &str) -> Result<Vec<Vec3>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let v: Vec<Real> = l
                .split(',')
                .map(|c| c.parse::<Real>().map_err(|e| Error::Parse(format!("frame csv: {e}"))))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(Error::Parse(format!("frame csv: expected 3 columns in '{l}'")));
            }
            Ok(Vec3::new(v[0], v[1], v[2]))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub step: u64,
    pub time: Real,
    pub file: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameManifest {
    pub config_hash: String,
    pub format_version: u32,
    pub frames: Vec<FrameEntry>,
}

/// One contact-log row: step-averaged wrench on a body, world frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForceRow {
    pub time: Real,
    pub body: usize,
    pub force: Vec3,
    pub torque: Vec3,
}

impl ForceRow {
    pub fn csv_header() -> &'static str {
        "time,body,fx,fy,fz,tx,ty,tz"
    }

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.time, self.body, self.force.x, self.force.y, self.force.z, self.torque.x, self.torque.y, self.torque.z
        )
    }
}

/// Rows for the given bodies from one step: impulse divided by `dt`.
pub fn force_rows(stats: &StepStats, bodies: &[usize], dt: Real) -> Vec<ForceRow> {
    bodies
        .iter()
        .map(|&b| ForceRow {
            time: stats.time,
            body: b,
            force: stats.impulses.linear[b] / dt,
            torque: stats.impulses.angular[b] / dt,
        })
        .collect()
}

pub fn write_contact_log(path: &Path, rows: &[ForceRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", ForceRow::csv_header())?;
    for r in rows {
        writeln!(w, "{}", r.csv())?;
    }
    w.flush()?;
    Ok(())
}

/// Per-step counters that do not depend on timing.
pub fn stats_csv_header() -> &'static str {
    "step,time,contacts_mean,contacts_max,active_nodes_mean,iterations,converged,clamped,staleness"
}

pub fn stats_csv_row(s: &StepStats) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        s.step,
        s.time,
        s.mean_contacts(),
        s.max_contacts(),
        s.mean_active_nodes(),
        s.iterations(),
        s.all_converged() as u8,
        s.substeps.iter().map(|x| x.clamped_particles).sum::<usize>(),
        s.staleness
    )
}

/// Run-level row in the layout of a per-scene timing table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub h: Real,
    pub particles: usize,
    /// Mean number of active grid nodes.
    pub mean_active_nodes: Real,
    /// Coupling step [ms].
    pub dt_ms: Real,
    pub substeps: usize,
    pub mean_ms_per_step: Real,
    pub contacts_avg: Real,
    pub contacts_max: usize,
    pub steps: usize,
    pub mean_iterations: Real,
}

impl StatsRecord {
    pub fn csv_header() -> &'static str {
        "h,particles,n_v,dt_ms,N,ms_per_step,contacts_avg,contacts_max,steps,iterations_per_substep"
    }

    pub fn csv(&self) -> String {
        format!(
            "{},{},{:.1},{},{},{:.3},{:.1},{},{},{:.2}",
            self.h,
            self.particles,
            self.mean_active_nodes,
            self.dt_ms,
            self.substeps,
            self.mean_ms_per_step,
            self.contacts_avg,
            self.contacts_max,
            self.steps,
            self.mean_iterations
        )
    }
}

/// Accumulates per-step statistics into a [`StatsRecord`].
#[derive(Clone, Debug, Default)]
pub struct StatsCollector {
    substeps: usize,
    contact_sum: Real,
    contact_max: usize,
    nodes_sum: Real,
    iterations: usize,
    steps: usize,
    wall_ms: Real,
}

impl StatsCollector {
    pub fn push(&mut self, s: &StepStats, wall_ms: Real) {
        for sub in &s.substeps {
            self.substeps += 1;
            self.contact_sum += sub.contacts as Real;
            self.contact_max = self.contact_max.max(sub.contacts);
            self.nodes_sum += sub.active_nodes as Real;
            self.iterations += sub.iterations;
        }
        self.steps += 1;
        self.wall_ms += wall_ms;
    }

    pub fn record(&self, h: Real, particles: usize, dt: Real, substeps: usize) -> StatsRecord {
        let per_sub = |x: Real| if self.substeps == 0 { 0.0 } else { x / self.substeps as Real };
        StatsRecord {
            h,
            particles,
            mean_active_nodes: per_sub(self.nodes_sum),
            dt_ms: dt * 1e3,
            substeps,
            mean_ms_per_step: if self.steps == 0 { 0.0 } else { self.wall_ms / self.steps as Real },
            contacts_avg: per_sub(self.contact_sum),
            contacts_max: self.contact_max,
            steps: self.steps,
            mean_iterations: per_sub(self.iterations as Real),
        }
    }
}

/// Frame writer for one output directory.
pub struct FrameWriter {
    dir: PathBuf,
    csv: bool,
    velocities: bool,
    manifest: FrameManifest,
}

impl FrameWriter {
    pub fn new(dir: &Path, config_hash: String, csv: bool, velocities: bool) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(FrameWriter {
            dir: dir.to_path_buf(),
            csv,
            velocities,
            manifest: FrameManifest {
                config_hash,
                format_version: FRAME_VERSION,
                frames: Vec::new(),
            },
        })
    }

    /// Writes a frame and returns its index.
    pub fn write(&mut self, step: u64, time: Real, positions: &[Vec3], velocities: &[Vec3]) -> Result<usize> {
        let index = self.manifest.frames.len();
        let stem = format!("frame_{index:05}");
        std::fs::write(self.dir.join(format!("{stem}.bin")), encode_frame(positions))?;
        if self.csv {
            std::fs::write(self.dir.join(format!("{stem}.csv")), frame_csv(positions))?;
        }
        if self.velocities {
            std::fs::write(self.dir.join(format!("{stem}_vel.bin")), encode_frame(velocities))?;
        }
        self.manifest.frames.push(FrameEntry {
            index,
            step,
            time,
            file: format!("{stem}.bin"),
        });
        self.write_manifest()?;
        Ok(index)
    }

    pub fn last_index(&self) -> Option<usize> {
        self.manifest.frames.len().checked_sub(1)
    }

    fn write_manifest(&self) -> Result<()> {
        let text = toml::to_string(&self.manifest).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(self.dir.join("manifest.toml"), text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_row_of_integral_point() {
        assert_eq!(frame_csv(&[Vec3::new(1.0, 2.0, 3.0)]), "x,y,z\n1,2,3\n");
    }

    #[test]
    fn binary_layout() {
        let b = encode_frame(&[Vec3::new(1.0, 2.0, 3.0)]);
        assert_eq!(&b[0..4], b"MPMF");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(b[16..24].try_into().unwrap()), 1.0);
        assert_eq!(b.len(), 40);
        assert!(decode_frame(&b[..39]).is_err());
    }
}
