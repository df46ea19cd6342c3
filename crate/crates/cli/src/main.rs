//! `semgauss` experiment runner.
//!
//! Exit codes: 0 success, 2 configuration error, 3 input-file error,
//! 4 internal invariant violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use semgauss::camera::Intrinsics;
use semgauss::config::{CurvatureOrientation, FusionStrategy, RunConfig, UpdateMode};
use semgauss::io;
use semgauss::memory::{run_embodied, run_local, RunOutput, RunReport, SyntheticProposals};
use semgauss::metrics::{self, EvalReport, UpdateTotals};
use semgauss::scene::{generate_scene, orbit_trajectory, render_cues, SyntheticScene};
use semgauss::Error;

#[derive(Parser)]
#[command(name = "semgauss", version, about = "Semantic Gaussian scene memory simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a scene JSON, generated from a seed or validated from a spec file.
    GenScene {
        #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
        seed: Option<u64>,
        /// Scene JSON to validate and normalize.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write an orbit trajectory around the room center.
    GenTrajectory {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
        /// Camera height above the floor, meters.
        #[arg(long, default_value_t = 1.2)]
        height: f64,
        /// Pitch in radians; negative looks down.
        #[arg(long, default_value_t = -0.2, allow_hyphen_values = true)]
        pitch: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render the cue maps of one trajectory frame.
    RenderCues {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the embodied update loop over a trajectory.
    RunEmbodied {
        #[command(flatten)]
        inputs: RunInputs,
        #[command(flatten)]
        opts: RunOptions,
        #[arg(long)]
        load_memory: Option<PathBuf>,
    },
    /// Refine a fresh frustum lattice on a single frame.
    RunLocal {
        #[command(flatten)]
        inputs: RunInputs,
        #[command(flatten)]
        opts: RunOptions,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        /// Refinement rounds; defaults to `run.local_iterations`.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Run every fusion strategy and print a comparison table.
    AblateFusion {
        #[command(flatten)]
        inputs: RunInputs,
        #[command(flatten)]
        overrides: ConfigOverrides,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Score a predicted grid against a ground-truth grid.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    PrintConfig {
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
}

#[derive(Args)]
struct RunInputs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    trajectory: PathBuf,
}

#[derive(Args)]
struct ConfigOverrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<UpdateMode>,
    #[arg(long)]
    fusion: Option<FusionStrategy>,
    #[arg(long)]
    curvature_orientation: Option<CurvatureOrientation>,
    #[arg(long)]
    tau_unc: Option<f64>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    sigma_pos: Option<f64>,
}

#[derive(Args)]
struct RunOptions {
    #[command(flatten)]
    overrides: ConfigOverrides,
    /// Run report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Predicted voxel grid.
    #[arg(long)]
    grid_out: Option<PathBuf>,
    /// Ground-truth voxel grid on the same spec.
    #[arg(long)]
    gt_out: Option<PathBuf>,
    #[arg(long)]
    save_memory: Option<PathBuf>,
    /// Colored point cloud of the occupied predicted voxels.
    #[arg(long)]
    export_ply: Option<PathBuf>,
    /// Record wall time in the report (makes reports non-reproducible).
    #[arg(long)]
    timing: bool,
}

/// Error carrying the process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    err: anyhow::Error,
}

fn code_of(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) => 2,
        Error::Io(_)
        | Error::Json(_)
        | Error::Format(_)
        | Error::InvalidScene(_)
        | Error::InvalidObject { .. }
        | Error::InvalidFrame(_)
        | Error::GridMismatch(_)
        | Error::DegenerateBounds(_) => 3,
        _ => 4,
    }
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        let code = err
            .chain()
            .find_map(|c| c.downcast_ref::<Error>())
            .map_or(4, code_of);
        Self { code, err }
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        err: anyhow!(msg.into()),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

impl ConfigOverrides {
    fn load(&self, needs_seed: bool) -> CliResult<RunConfig> {
        if needs_seed && self.seed.is_none() && std::env::var_os("CI").is_some() {
            return Err(config_error("--seed is required when CI is set"));
        }
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))
                    .map_err(|err| Failure { code: 2, err })?;
                RunConfig::from_toml_str(&text)
                    .with_context(|| format!("in config {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(m) = self.mode {
            cfg.run.mode = m;
        }
        if let Some(f) = self.fusion {
            cfg.refinement.fusion = f;
        }
        if let Some(o) = self.curvature_orientation {
            cfg.refinement.curvature_orientation = o;
        }
        if let Some(t) = self.tau_unc {
            cfg.refinement.tau_unc = t;
        }
        if let Some(m) = self.mc_samples {
            cfg.refinement.mc_samples = m;
        }
        if let Some(s) = self.sigma_pos {
            cfg.proposals.sigma_pos = s;
        }
        cfg.validate().context("invalid configuration")?;
        Ok(cfg)
    }
}

fn load_scene(path: &Path) -> anyhow::Result<SyntheticScene> {
    io::load_scene(path).with_context(|| format!("scene {}", path.display()))
}

fn load_trajectory(path: &Path) -> anyhow::Result<Vec<semgauss::CameraFrame>> {
    let frames = io::load_trajectory(path).with_context(|| format!("trajectory {}", path.display()))?;
    if frames.is_empty() {
        return Err(Error::InvalidFrame("trajectory has no poses".into()))
            .with_context(|| format!("trajectory {}", path.display()));
    }
    Ok(frames)
}

fn write_outputs(out: &RunOutput, opts: &RunOptions, cfg: &RunConfig, report: &RunReport) -> anyhow::Result<()> {
    if let Some(p) = &opts.report {
        io::write_json(p, report).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &opts.grid_out {
        io::save_grid(p, &out.prediction, true).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &opts.gt_out {
        io::save_grid(p, &out.ground_truth, false).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &opts.save_memory {
        io::save_memory(p, &out.memory, &cfg.hash()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = &opts.export_ply {
        io::save_ply(p, &out.prediction).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn print_summary(report: &RunReport) {
    let label = format!("{}/{}", report.mode, report.fusion);
    print!("{}", metrics::format_table(&[(label, &report.eval)]));
    let t: &UpdateTotals = &report.eval.totals;
    println!(
        "frames {}  gaussians {}  visible {}  updated {}  skipped {}",
        report.frames.len(),
        report.num_gaussians,
        t.visible,
        t.updated,
        t.skipped
    );
}

#[derive(Serialize)]
struct AblationRow {
    fusion: FusionStrategy,
    default: bool,
    eval: EvalReport,
}

#[derive(Serialize)]
struct AblationReport {
    seed: u64,
    mode: UpdateMode,
    rows: Vec<AblationRow>,
}

#[derive(Serialize)]
struct EvalOutput {
    iou: f64,
    per_class_iou: Vec<Option<f64>>,
    miou: f64,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenScene { seed, spec, out } => {
            let scene = match (seed, spec) {
                (Some(s), _) => generate_scene(s),
                (None, Some(p)) => load_scene(&p)?,
                (None, None) => return Err(config_error("one of --seed or --spec is required")),
            };
            io::save_scene(&out, &scene).with_context(|| format!("writing {}", out.display()))?;
            println!("scene: room {:?}, {} objects, {} surfaces", scene.room.as_slice(), scene.objects.len(), scene.surfaces().len());
        }
        Command::GenTrajectory {
            scene,
            frames,
            radius,
            height,
            pitch,
            out,
        } => {
            if frames == 0 {
                return Err(config_error("--frames must be positive"));
            }
            let scene = load_scene(&scene)?;
            let traj = orbit_trajectory(&scene, frames, radius, height, pitch, Intrinsics::default())
                .context("building trajectory")?;
            io::save_trajectory(&out, &traj).with_context(|| format!("writing {}", out.display()))?;
        }
        Command::RenderCues {
            scene,
            trajectory,
            frame,
            out,
        } => {
            let scene = load_scene(&scene)?;
            let traj = load_trajectory(&trajectory)?;
            let f = traj
                .get(frame)
                .ok_or_else(|| config_error(format!("frame {frame} out of range (0..{})", traj.len())))?;
            let rendered = render_cues(&scene, f);
            io::save_cues(&out, &rendered.cues).with_context(|| format!("writing {}", out.display()))?;
            println!("cues: {} surface pixels", rendered.cloud.len());
        }
        Command::RunEmbodied {
            inputs,
            opts,
            load_memory,
        } => {
            let cfg = opts.overrides.load(true)?;
            let scene = load_scene(&inputs.scene)?;
            let traj = load_trajectory(&inputs.trajectory)?;
            let initial = match &load_memory {
                Some(p) => Some(io::load_memory(p).with_context(|| format!("memory {}", p.display()))?.0),
                None => None,
            };
            let source = SyntheticProposals::new(cfg.proposals.clone());
            let start = Instant::now();
            let out = run_embodied(&scene, &traj, &cfg, &source, initial).context("run-embodied")?;
            let mut report = out.report.clone();
            if opts.timing {
                report.wall_time_s = Some(start.elapsed().as_secs_f64());
            }
            write_outputs(&out, &opts, &cfg, &report)?;
            print_summary(&report);
        }
        Command::RunLocal {
            inputs,
            opts,
            frame,
            iterations,
        } => {
            let cfg = opts.overrides.load(true)?;
            let scene = load_scene(&inputs.scene)?;
            let traj = load_trajectory(&inputs.trajectory)?;
            let f = traj
                .get(frame)
                .ok_or_else(|| config_error(format!("frame {frame} out of range (0..{})", traj.len())))?;
            let k = iterations.unwrap_or(cfg.run.local_iterations);
            if k == 0 {
                return Err(config_error("--iterations must be at least 1"));
            }
            let source = SyntheticProposals::new(cfg.proposals.clone());
            let start = Instant::now();
            let out = run_local(&scene, f, &cfg, &source, k).context("run-local")?;
            let mut report = out.report.clone();
            if opts.timing {
                report.wall_time_s = Some(start.elapsed().as_secs_f64());
            }
            write_outputs(&out, &opts, &cfg, &report)?;
            print_summary(&report);
        }
        Command::AblateFusion {
            inputs,
            overrides,
            report,
        } => {
            let base = overrides.load(true)?;
            let scene = load_scene(&inputs.scene)?;
            let traj = load_trajectory(&inputs.trajectory)?;
            let source = SyntheticProposals::new(base.proposals.clone());
            let mut rows = Vec::new();
            for strategy in FusionStrategy::ALL {
                let mut cfg = base.clone();
                cfg.refinement.fusion = strategy;
                let out = run_embodied(&scene, &traj, &cfg, &source, None)
                    .with_context(|| format!("fusion {strategy}"))?;
                rows.push(AblationRow {
                    fusion: strategy,
                    default: strategy == FusionStrategy::default(),
                    eval: out.report.eval,
                });
            }
            let labels: Vec<(String, &EvalReport)> = rows
                .iter()
                .map(|r| {
                    let name = if r.default {
                        format!("{} (default)", r.fusion)
                    } else {
                        r.fusion.to_string()
                    };
                    (name, &r.eval)
                })
                .collect();
            print!("{}", metrics::format_table(&labels));
            if let Some(p) = &report {
                let doc = AblationReport {
                    seed: base.run.seed,
                    mode: base.run.mode,
                    rows,
                };
                io::write_json(p, &doc).with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Command::Eval { pred, gt, report } => {
            let p = io::load_grid(&pred).with_context(|| format!("grid {}", pred.display()))?;
            let g = io::load_grid(&gt).with_context(|| format!("grid {}", gt.display()))?;
            let iou = metrics::scene_iou(&p, &g).context("eval")?;
            let class = metrics::miou(&p, &g).context("eval")?;
            let out = EvalOutput {
                iou,
                per_class_iou: class.per_class,
                miou: class.mean,
            };
            println!("IoU {:.6}  mIoU {:.6}", out.iou, out.miou);
            if let Some(path) = &report {
                io::write_json(path, &out).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::PrintConfig { overrides } => {
            let cfg = overrides.load(false)?;
            print!("{}", cfg.to_toml_string());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}
