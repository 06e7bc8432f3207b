use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use log::info;

use super::build::build_simulation;
use super::config::SceneConfig;
use super::output::{
    force_rows, stats_csv_header, stats_csv_row, write_contact_log, ForceRow, FrameWriter, StatsCollector, StatsRecord,
};
use crate::{Error, Real, Result};

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub steps: usize,
    pub stats: StatsRecord,
    pub config_hash: String,
    pub frames_written: usize,
    pub force_log: Vec<ForceRow>,
}

/// Number of coupling steps covering `duration`.
pub fn step_count(duration: Real, dt: Real) -> usize {
    let n = duration / dt;
    // tolerate representation error in e.g. 0.3 / 0.1
    let r = n.round();
    if (n - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        n.ceil() as usize
    }
}

/// Runs a validated scene for `duration` seconds. With an output directory,
/// writes `frames/`, `contact_log.csv`, `stats.csv` (deterministic counters),
/// `timing.csv` (wall time per step) and `summary.csv`.
pub fn run_simulation(cfg: &SceneConfig, duration: Real, out: Option<&Path>) -> Result<RunSummary> {
    let mut sim = build_simulation(cfg)?;
    let hash = cfg.hash();
    let steps = step_count(duration, cfg.step.dt);
    let logged: Vec<usize> = cfg
        .output
        .force_log
        .iter()
        .map(|n| cfg.body_index(n).expect("validated"))
        .collect();

    let mut frames = match out {
        Some(dir) if cfg.output.frame_period > 0 => Some(FrameWriter::new(
            &dir.join("frames"),
            hash.clone(),
            cfg.output.csv_frames,
            cfg.output.velocities,
        )?),
        _ => None,
    };
    let mut stats_file = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let mut s = BufWriter::new(File::create(dir.join("stats.csv"))?);
            writeln!(s, "{}", stats_csv_header())?;
            let mut t = BufWriter::new(File::create(dir.join("timing.csv"))?);
            writeln!(t, "step,wall_ms")?;
            Some((s, t))
        }
        None => None,
    };

    let write_frame = |frames: &mut Option<FrameWriter>, sim: &crate::scheduler::Simulation| -> Result<()> {
        if let Some(fw) = frames {
            let x: Vec<_> = sim.particles.particles.iter().map(|p| p.x).collect();
            let v: Vec<_> = sim.particles.particles.iter().map(|p| p.v).collect();
            fw.write(sim.step_index, sim.time, &x, &v)?;
        }
        Ok(())
    };
    write_frame(&mut frames, &sim)?;

    let mut collector = StatsCollector::default();
    let mut force_log = Vec::with_capacity(steps * logged.len());
    for _ in 0..steps {
        let t0 = Instant::now();
        let st = match sim.advance_step() {
            Ok(s) => s,
            Err(Error::NonFinite(msg)) => {
                let last = frames.as_ref().and_then(|f| f.last_index());
                return Err(Error::NonFinite(match last {
                    Some(i) => format!("{msg}; last good frame is frame_{i:05}"),
                    None => format!("{msg}; no frame written"),
                }));
            }
            Err(e) => return Err(e),
        };
        let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
        collector.push(&st, wall_ms);
        force_log.extend(force_rows(&st, &logged, cfg.step.dt));
        if let Some((s, t)) = &mut stats_file {
            writeln!(s, "{}", stats_csv_row(&st))?;
            writeln!(t, "{},{:.4}", st.step, wall_ms)?;
        }
        if cfg.output.frame_period > 0 && sim.step_index as usize % cfg.output.frame_period == 0 {
            write_frame(&mut frames, &sim)?;
        }
    }

    let stats = collector.record(cfg.grid.h, sim.particles.len(), cfg.step.dt, cfg.step.substeps);
    if let Some(dir) = out {
        if let Some((mut s, mut t)) = stats_file {
            s.flush()?;
            t.flush()?;
        }
        write_contact_log(&dir.join("contact_log.csv"), &force_log)?;
        std::fs::write(
            dir.join("summary.csv"),
            format!("{}\n{}\n", StatsRecord::csv_header(), stats.csv()),
        )?;
    }
    info!(
        "{} steps, {} particles, {:.1} contacts avg ({} max), {:.3} ms/step",
        steps,
        sim.particles.len(),
        stats.contacts_avg,
        stats.contacts_max,
        stats.mean_ms_per_step
    );
    Ok(RunSummary {
        steps,
        stats,
        config_hash: hash,
        frames_written: frames.as_ref().map_or(0, |f| f.last_index().map_or(0, |i| i + 1)),
        force_log,
    })
}
