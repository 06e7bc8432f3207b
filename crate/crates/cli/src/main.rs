use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use mpm_core::scene::experiments::{
    bench_csv_row, bench_transfer, roll_csv_row, run_panel_grip, run_roll, run_stress_shake, BenchMode,
    PanelGripOptions, RollOptions, StressShakeOptions, BENCH_CSV_HEADER, ROLL_CSV_HEADER,
};
use mpm_core::scene::output::write_contact_log;
use mpm_core::scene::{load_scene, run_simulation, StatsRecord};
use mpm_core::Error;

/// Worker thread cap; unset means one per core.
const THREADS_ENV: &str = "MPM_THREADS";

#[derive(Parser)]
#[command(name = "mpmsim", version, about = "MPM simulator with convex frictional rigid-body contact")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scene file.
    Run {
        scene: PathBuf,
        /// Simulated time [s].
        #[arg(long)]
        duration: f64,
        /// Output directory for frames, logs and stats.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Force bitwise-reproducible reductions.
        #[arg(long)]
        deterministic: bool,
    },
    /// Check a scene file and report every invalid field.
    Validate { scene: PathBuf },
    /// Time one mass + momentum scatter per reduction mode.
    BenchTransfer {
        #[arg(long, default_value_t = 100_000)]
        particles: usize,
        /// Modes to measure; all when omitted.
        #[arg(long, value_enum)]
        mode: Vec<ModeArg>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a canned experiment.
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Fast,
    Deterministic,
    Naive,
}

impl From<ModeArg> for BenchMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fast => BenchMode::Fast,
            ModeArg::Deterministic => BenchMode::Deterministic,
            ModeArg::Naive => BenchMode::Naive,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentName {
    PanelGrip,
    StressShake,
    Roll,
}

fn thread_pool() -> anyhow::Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_ENV}={v} is not a thread count"))?;
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

fn csv_out(out: Option<&Path>, name: &str, header: &str, rows: &[String]) -> anyhow::Result<()> {
    println!("{header}");
    for r in rows {
        println!("{r}");
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join(name))?);
        writeln!(w, "{header}")?;
        for r in rows {
            writeln!(w, "{r}")?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run {
            scene,
            duration,
            out,
            deterministic,
        } => {
            let mut cfg = load_scene(&scene).with_context(|| format!("loading {}", scene.display()))?;
            cfg.deterministic |= deterministic;
            let summary = run_simulation(&cfg, duration, out.as_deref())?;
            println!("{}", StatsRecord::csv_header());
            println!("{}", summary.stats.csv());
            info!("{} steps, {} frames, config {}", summary.steps, summary.frames_written, summary.config_hash);
        }
        Command::Validate { scene } => {
            load_scene(&scene)?;
            println!("{}: ok", scene.display());
        }
        Command::BenchTransfer {
            particles,
            mode,
            repeats,
            out,
        } => {
            let modes: Vec<BenchMode> = if mode.is_empty() {
                vec![BenchMode::Fast, BenchMode::Deterministic, BenchMode::Naive]
            } else {
                mode.into_iter().map(BenchMode::from).collect()
            };
            let rows = bench_transfer(particles, &modes, repeats, 0)?;
            let lines: Vec<String> = rows.iter().map(bench_csv_row).collect();
            csv_out(out.as_deref(), "bench_transfer.csv", BENCH_CSV_HEADER, &lines)?;
        }
        Command::Experiment { name, out } => match name {
            ExperimentName::PanelGrip => {
                let opts = PanelGripOptions::default();
                let r = run_panel_grip(&opts)?;
                if let Some(dir) = &out {
                    std::fs::create_dir_all(dir)?;
                    write_contact_log(&dir.join("contact_log.csv"), &r.rows)?;
                }
                println!("compression_m,box_mass_kg,fx,fy,fz,std_fy,std_fz,normal_err,weight_err,fluctuation,wall_s");
                println!(
                    "{:.6e},{:.6},{:.4},{:.4},{:.4},{:.5},{:.5},{:.4},{:.4},{:.4},{:.1}",
                    r.compression,
                    r.box_mass,
                    r.mean_force.x,
                    r.mean_force.y,
                    r.mean_force.z,
                    r.friction_std[0],
                    r.friction_std[1],
                    r.normal_error(opts.target_force),
                    r.weight_error(),
                    r.fluctuation_ratio(),
                    r.wall_seconds
                );
            }
            ExperimentName::StressShake => {
                let r = run_stress_shake(&StressShakeOptions::default())?;
                if let Some(dir) = &out {
                    std::fs::create_dir_all(dir)?;
                    let mut w = BufWriter::new(File::create(dir.join("stress_shake.csv"))?);
                    writeln!(w, "time,panel_x,panel_y,panel_z,stack_x,stack_y,stack_z,mpm_x,mpm_y,mpm_z")?;
                    for s in &r.samples {
                        writeln!(
                            w,
                            "{},{},{},{},{},{},{},{},{},{}",
                            s.time,
                            s.panel_mid.x,
                            s.panel_mid.y,
                            s.panel_mid.z,
                            s.stack_centroid.x,
                            s.stack_centroid.y,
                            s.stack_centroid.z,
                            s.mpm_centroid.x,
                            s.mpm_centroid.y,
                            s.mpm_centroid.z
                        )?;
                    }
                }
                println!("steps,mass_ratio,drift_m,height_drop_m,iterations_per_substep,converged,substeps,wall_s");
                println!(
                    "{},{:.1},{:.5},{:.5},{:.2},{},{},{:.1}",
                    r.steps,
                    r.mass_ratio,
                    r.drift,
                    r.height_drop,
                    r.mean_iterations,
                    r.audit.converged,
                    r.audit.substeps,
                    r.wall_seconds
                );
                if let Some(msg) = r.failure {
                    bail!(Error::NonFinite(msg));
                }
            }
            ExperimentName::Roll => {
                let rows = run_roll(&RollOptions::default())?;
                let lines: Vec<String> = rows.iter().map(roll_csv_row).collect();
                csv_out(out.as_deref(), "roll.csv", ROLL_CSV_HEADER, &lines)?;
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    // running inside the pool keeps the step loop on a worker thread
    match pool.install(|| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if matches!(e.downcast_ref::<Error>(), Some(Error::NonFinite(_))) {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
