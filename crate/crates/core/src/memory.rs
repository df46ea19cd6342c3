//! World-frame Gaussian memory and the embodied update loop.
//!
//! Per frame, every visible Gaussian draws `M` proposals from a
//! [`ProposalSource`], the entropy of their semantic distributions decides
//! whether and how strongly it is updated, and the position residual is
//! pushed onto the local surface plane. Proposals and decisions run in
//! parallel; the resulting Gaussians are committed serially in id order.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraFrame, GeometricCues};
use crate::classes::{SemanticClass, NUM_CLASSES};
use crate::config::{BlendTarget, ProposalConfig, RefinementConfig, RunConfig, UpdateMode};
use crate::error::{Error, Result};
use crate::gaussian::{compose_refined, GaussianDelta, SemanticGaussian};
use crate::grm::{refine_position, RefineStatus};
use crate::knn::DepthIndex;
use crate::metrics::{self, EvalReport, UpdateTotals};
use crate::quat::Quat;
use crate::rng::{hash_words, substream};
use crate::scene::{render_cues, voxelize_gt, voxelize_gt_posed, GridPose, Surface, SyntheticScene};
use crate::splat::{splat, GridSpec, VoxelGrid};
use crate::sus::{blended_update, sample_and_decide, scaled_residual_update};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Result<Self> {
        let b = Self { min, max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.min.iter().chain(self.max.iter()).all(|v| v.is_finite());
        if !finite || (0..3).any(|a| self.max[a] <= self.min[a]) {
            return Err(Error::DegenerateBounds(format!(
                "min {:?} max {:?}",
                self.min.as_slice(),
                self.max.as_slice()
            )));
        }
        Ok(())
    }

    pub fn expanded(&self, margin: f64) -> Self {
        Self {
            min: self.min.add_scalar(-margin),
            max: self.max.add_scalar(margin),
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn clamp(&self, p: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|a, _| p[a].clamp(self.min[a], self.max[a]))
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }
}

/// Per-frame counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameStats {
    pub visible: usize,
    pub updated: usize,
    pub skipped: usize,
    /// Visible Gaussians whose pixel carried no surface.
    pub invalid_cues: usize,
    /// Visible Gaussians refined without depth points.
    pub fallbacks: usize,
}

/// Gaussians sorted by id, plus the box their means are clamped to.
///
/// `bounds` is expressed in the frame given by `pose`; the embodied memory
/// uses the identity pose, the local frustum memory the frustum frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMemory {
    pub gaussians: Vec<SemanticGaussian>,
    pub bounds: Aabb,
    pub pose: GridPose,
    pub update_log: Vec<FrameStats>,
}

impl GaussianMemory {
    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    /// Keeps a mean inside the bounds; means already inside are returned untouched.
    pub fn clamp_mean(&self, m: &Vector3<f64>) -> Vector3<f64> {
        let local = self.pose.to_local(m);
        if self.bounds.contains(&local) {
            *m
        } else {
            self.pose.to_world(&self.bounds.clamp(&local))
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        for w in self.gaussians.windows(2) {
            if w[0].id >= w[1].id {
                return Err(Error::InvalidArgument(format!(
                    "memory ids not strictly increasing at {}",
                    w[1].id
                )));
            }
        }
        for g in &self.gaussians {
            if let Some(msg) = g.check_invariants() {
                return Err(Error::InvalidArgument(format!("gaussian {}: {msg}", g.id)));
            }
        }
        Ok(())
    }

    pub fn totals(&self) -> UpdateTotals {
        self.update_log.iter().fold(UpdateTotals::default(), |t, s| UpdateTotals {
            visible: t.visible + s.visible,
            updated: t.updated + s.updated,
            skipped: t.skipped + s.skipped,
        })
    }
}

fn lattice_axis(lo: f64, hi: f64, interval: f64) -> Vec<f64> {
    let n = (((hi - lo) / interval + 1e-9).floor() as usize).max(1);
    let mid = 0.5 * (lo + hi);
    (0..n)
        .map(|k| mid + (k as f64 - 0.5 * (n as f64 - 1.0)) * interval)
        .collect()
}

/// Regular lattice with spacing `interval`, centered in `bounds`.
pub fn init_memory(bounds: Aabb, interval: f64) -> Result<GaussianMemory> {
    init_memory_posed(bounds, GridPose::identity(), interval, 0.5)
}

/// Lattice laid out in the frame of `pose` and stored in world coordinates.
pub fn init_memory_posed(
    bounds: Aabb,
    pose: GridPose,
    interval: f64,
    fixed_weight: f64,
) -> Result<GaussianMemory> {
    bounds.validate()?;
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(Error::InvalidArgument(format!("lattice interval {interval} must be positive")));
    }
    let xs = lattice_axis(bounds.min.x, bounds.max.x, interval);
    let ys = lattice_axis(bounds.min.y, bounds.max.y, interval);
    let zs = lattice_axis(bounds.min.z, bounds.max.z, interval);
    let mut gaussians = Vec::with_capacity(xs.len() * ys.len() * zs.len());
    for &z in &zs {
        for &y in &ys {
            for &x in &xs {
                let id = gaussians.len() as u64;
                let mut g = SemanticGaussian::new(id, pose.to_world(&Vector3::new(x, y, z)), interval / 2.0);
                g.fixed_weight = fixed_weight;
                gaussians.push(g);
            }
        }
    }
    Ok(GaussianMemory {
        gaussians,
        bounds,
        pose,
        update_log: Vec::new(),
    })
}

/// Everything a proposal source may look at for one frame.
pub struct ProposalContext<'a> {
    pub frame: &'a CameraFrame,
    pub scene: &'a SyntheticScene,
    pub surfaces: &'a [Surface],
    pub seed: u64,
    pub frame_key: u64,
    pub voxel_size: f64,
}

/// Stand-in for the network: `samples` stochastic residuals per Gaussian.
pub trait ProposalSource: Sync {
    fn propose(&self, g: &SemanticGaussian, ctx: &ProposalContext<'_>, samples: usize) -> Vec<GaussianDelta>;
}

/// Residuals that pull each Gaussian toward the nearest ground-truth surface
/// and its class, with Gaussian noise per sample.
#[derive(Debug, Clone, Default)]
pub struct SyntheticProposals {
    pub cfg: ProposalConfig,
}

impl SyntheticProposals {
    pub fn new(cfg: ProposalConfig) -> Self {
        Self { cfg }
    }
}

fn normal_or_zero(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("validated sigma"))
}

fn draw<R: Rng>(dist: &Option<Normal<f64>>, rng: &mut R) -> f64 {
    dist.as_ref().map_or(0.0, |d| d.sample(rng))
}

impl ProposalSource for SyntheticProposals {
    fn propose(&self, g: &SemanticGaussian, ctx: &ProposalContext<'_>, samples: usize) -> Vec<GaussianDelta> {
        let p = &self.cfg;
        let near = ctx.scene.nearest_surface(ctx.surfaces, &g.mean);
        // Beyond the band a Gaussian is free space: stay put, fade out.
        let (target, class, target_opacity) = if near.distance <= p.surface_band {
            (near.point, near.class, p.target_opacity)
        } else {
            (g.mean, SemanticClass::Empty, 0.0)
        };
        let onehot = class.id() as usize;
        let pos = normal_or_zero(p.sigma_pos);
        let sem = normal_or_zero(p.sigma_sem);
        let scl = normal_or_zero(p.sigma_scale);
        let opa = normal_or_zero(p.sigma_opacity);
        let rot = normal_or_zero(p.sigma_rot);

        (0..samples)
            .map(|i| {
                let mut rng = substream(ctx.seed, ctx.frame_key, g.id, i as u64);
                let noise = Vector3::from_fn(|_, _| draw(&pos, &mut rng));
                let d_mean = (target - g.mean) * p.step + noise;
                let mut d_logits = [0.0; NUM_CLASSES];
                for (j, d) in d_logits.iter_mut().enumerate() {
                    let goal = if j == onehot { p.logit_scale } else { 0.0 };
                    *d = p.step * (goal - g.logits[j]) + draw(&sem, &mut rng);
                }
                let d_scale =
                    Vector3::from_fn(|a, _| p.step * (ctx.voxel_size - g.scale[a]) + draw(&scl, &mut rng));
                let d_opacity = p.step * (target_opacity - g.opacity) + draw(&opa, &mut rng);
                let d_rotation = match &rot {
                    Some(dist) => {
                        let axis: [f64; 3] = UnitSphere.sample(&mut rng);
                        let angle = dist.sample(&mut rng);
                        Quat::from_axis_angle(&Vector3::from(axis), angle).canonical()
                    }
                    None => Quat::IDENTITY,
                };
                GaussianDelta {
                    d_mean,
                    d_scale,
                    d_rotation,
                    d_opacity,
                    d_logits,
                }
            })
            .collect()
    }
}

/// Key of a frame derived from its pose and intrinsics, so the random
/// streams of a frame do not depend on its position in a trajectory.
pub fn frame_key(frame: &CameraFrame) -> u64 {
    let k = &frame.intrinsics;
    let mut words: Vec<u64> = frame.rotation.iter().map(|v| v.to_bits()).collect();
    words.extend(frame.translation.iter().map(|v| v.to_bits()));
    words.extend([k.fx, k.fy, k.cx, k.cy].iter().map(|v| v.to_bits()));
    words.push(((k.width as u64) << 32) | k.height as u64);
    hash_words(&words)
}

/// Cues and depth index of one frame.
pub struct FrameInput<'a> {
    pub frame: &'a CameraFrame,
    pub cues: &'a GeometricCues,
    pub cloud: &'a DepthIndex,
    pub key: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct UpdateSettings<'a> {
    pub refinement: &'a RefinementConfig,
    pub mode: UpdateMode,
    /// When false, every visible Gaussian is updated with ratio 1.
    pub gating: bool,
    pub seed: u64,
}

enum Outcome {
    Skipped,
    Updated(SemanticGaussian, RefineStatus),
}

/// Refines every Gaussian visible in one frame and appends the frame's stats to the log.
pub fn update_frame(
    mem: &mut GaussianMemory,
    input: &FrameInput<'_>,
    scene: &SyntheticScene,
    source: &dyn ProposalSource,
    settings: &UpdateSettings<'_>,
) -> Result<FrameStats> {
    let cfg = settings.refinement;
    let surfaces = scene.surfaces();
    let ctx = ProposalContext {
        frame: input.frame,
        scene,
        surfaces: &surfaces,
        seed: settings.seed,
        frame_key: input.key,
        voxel_size: cfg.voxel_size,
    };
    let visible: Vec<usize> = (0..mem.gaussians.len())
        .filter(|&i| input.frame.is_visible(&mem.gaussians[i]))
        .collect();

    let mem_ref = &*mem;
    let outcomes: Vec<Result<Outcome>> = visible
        .par_iter()
        .map(|&i| {
            let g = &mem_ref.gaussians[i];
            let proposals = source.propose(g, &ctx, cfg.mc_samples);
            let (decision, delta) = sample_and_decide(g, &proposals, cfg)?;
            let ratio = match settings.mode {
                UpdateMode::Fixed => 1.0 - g.fixed_weight,
                _ if !settings.gating => 1.0,
                _ => decision.ratio,
            };
            if settings.mode != UpdateMode::Fixed && settings.gating && decision.skipped {
                return Ok(Outcome::Skipped);
            }
            let (delta, status) = if settings.mode == UpdateMode::Unconstrained {
                (delta, RefineStatus::Constrained)
            } else {
                let out = refine_position(g, &delta, input.frame, input.cues, input.cloud, cfg)?;
                (out.delta, out.status)
            };
            let mut updated = match cfg.blend_target {
                BlendTarget::Refined => blended_update(g, &compose_refined(g, &delta), ratio)?,
                BlendTarget::ScaledResidual => scaled_residual_update(g, &delta, ratio),
            };
            updated.mean = mem_ref.clamp_mean(&updated.mean);
            Ok(Outcome::Updated(updated, status))
        })
        .collect();

    let mut stats = FrameStats {
        visible: visible.len(),
        ..FrameStats::default()
    };
    let mut commits = Vec::with_capacity(visible.len());
    for (&i, outcome) in visible.iter().zip(outcomes) {
        match outcome? {
            Outcome::Skipped => stats.skipped += 1,
            Outcome::Updated(g, status) => {
                stats.updated += 1;
                match status {
                    RefineStatus::InvalidCue => stats.invalid_cues += 1,
                    RefineStatus::UnconstrainedFallback => stats.fallbacks += 1,
                    RefineStatus::Constrained => {}
                }
                commits.push((i, g));
            }
        }
    }
    for (i, g) in commits {
        mem.gaussians[i] = g;
    }
    mem.update_log.push(stats);
    Ok(stats)
}

/// Final outputs of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub mode: UpdateMode,
    pub fusion: crate::config::FusionStrategy,
    pub seed: u64,
    pub config_hash: String,
    pub num_gaussians: usize,
    pub frames: Vec<FrameStats>,
    pub eval: EvalReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub prediction: VoxelGrid,
    pub ground_truth: VoxelGrid,
    pub memory: GaussianMemory,
    pub report: RunReport,
}

fn evaluate(
    pred: &VoxelGrid,
    gt: &VoxelGrid,
    mem: &GaussianMemory,
    scene: &SyntheticScene,
    voxel_size: f64,
) -> Result<EvalReport> {
    let class = metrics::miou(pred, gt)?;
    let drift = metrics::out_of_plane_drift(&mem.gaussians, scene, voxel_size);
    Ok(EvalReport {
        iou: metrics::scene_iou(pred, gt)?,
        per_class_iou: class.per_class,
        miou: class.mean,
        oop_drift_rms: drift.rms,
        drift_samples: drift.count,
        updates_per_frame: mem.update_log.iter().map(|s| s.updated).collect(),
        totals: mem.totals(),
    })
}

fn make_report(command: &str, cfg: &RunConfig, mem: &GaussianMemory, eval: EvalReport) -> RunReport {
    RunReport {
        command: command.into(),
        mode: cfg.run.mode,
        fusion: cfg.refinement.fusion,
        seed: cfg.run.seed,
        config_hash: cfg.hash(),
        num_gaussians: mem.len(),
        frames: mem.update_log.clone(),
        eval,
        wall_time_s: None,
    }
}

/// Bounds of the embodied memory: the room grown by half a lattice step.
pub fn embodied_bounds(scene: &SyntheticScene, interval: f64) -> Result<Aabb> {
    let (lo, hi) = scene.bounds();
    Ok(Aabb::new(lo, hi)?.expanded(interval / 2.0))
}

/// Full pipeline over a trajectory: update the memory frame by frame, then
/// splat it over the room and score it.
///
/// `initial` resumes from a saved memory instead of a fresh lattice.
pub fn run_embodied(
    scene: &SyntheticScene,
    trajectory: &[CameraFrame],
    cfg: &RunConfig,
    source: &dyn ProposalSource,
    initial: Option<GaussianMemory>,
) -> Result<RunOutput> {
    cfg.validate()?;
    scene.validate()?;
    if trajectory.is_empty() {
        return Err(Error::InvalidArgument("trajectory is empty".into()));
    }
    let r = &cfg.refinement;
    let mut mem = match initial {
        Some(m) => {
            m.validate()?;
            m
        }
        None => init_memory_posed(
            embodied_bounds(scene, r.init_interval)?,
            GridPose::identity(),
            r.init_interval,
            r.fixed_weight,
        )?,
    };
    let settings = UpdateSettings {
        refinement: r,
        mode: cfg.run.mode,
        gating: true,
        seed: cfg.run.seed,
    };
    for frame in trajectory {
        let rendered = render_cues(scene, frame);
        let cloud = DepthIndex::build(rendered.cloud, r.d_far);
        let input = FrameInput {
            frame,
            cues: &rendered.cues,
            cloud: &cloud,
            key: frame_key(frame),
        };
        update_frame(&mut mem, &input, scene, source, &settings)?;
    }
    let (lo, hi) = scene.bounds();
    let spec = GridSpec::covering(lo, hi, r.voxel_size)?;
    let prediction = splat(&mem.gaussians, &spec, &cfg.splat)?;
    let ground_truth = voxelize_gt(scene, &spec);
    let eval = evaluate(&prediction, &ground_truth, &mem, scene, r.voxel_size)?;
    let report = make_report("run-embodied", cfg, &mem, eval);
    Ok(RunOutput {
        prediction,
        ground_truth,
        memory: mem,
        report,
    })
}

/// Frame of the local prediction volume: x right, y along the optical axis,
/// z up, origin at the camera center.
pub fn frustum_pose(frame: &CameraFrame) -> GridPose {
    let rt = frame.rotation.transpose();
    let right = rt.column(0).into_owned();
    let forward = rt.column(2).into_owned();
    let up = -rt.column(1).into_owned();
    GridPose {
        rotation: Matrix3::from_columns(&[right, forward, up]),
        translation: frame.camera_center(),
    }
}

/// Voxel grid of the frustum box in the frustum frame.
pub fn frustum_grid(frame: &CameraFrame, voxel_size: f64) -> Result<GridSpec> {
    let b = &frame.frustum;
    let dims = [b.width, b.depth, b.height].map(|e| (e / voxel_size).round() as usize);
    GridSpec::new(Vector3::new(-0.5 * b.width, 0.0, -0.5 * b.height), dims, voxel_size)
}

fn to_local_gaussian(g: &SemanticGaussian, pose: &GridPose) -> SemanticGaussian {
    let q = Quat::from_rotation_matrix(&pose.rotation.transpose());
    SemanticGaussian {
        mean: pose.to_local(&g.mean),
        rotation: (q * g.rotation).normalized().canonical(),
        ..g.clone()
    }
}

/// Single-frame prediction: a fresh lattice in the frustum box refined for
/// `iterations` rounds on the same frame. The first round is not gated.
pub fn run_local(
    scene: &SyntheticScene,
    frame: &CameraFrame,
    cfg: &RunConfig,
    source: &dyn ProposalSource,
    iterations: usize,
) -> Result<RunOutput> {
    cfg.validate()?;
    scene.validate()?;
    if iterations == 0 {
        return Err(Error::InvalidArgument("local refinement needs at least one iteration".into()));
    }
    let r = &cfg.refinement;
    let pose = frustum_pose(frame);
    let spec = frustum_grid(frame, r.voxel_size)?;
    let bounds = Aabb::new(spec.origin, spec.max_corner())?;
    let mut mem = init_memory_posed(bounds, pose, r.init_interval, r.fixed_weight)?;

    let rendered = render_cues(scene, frame);
    let cloud = DepthIndex::build(rendered.cloud, r.d_far);
    let base_key = frame_key(frame);
    for round in 0..iterations {
        let key = if round == 0 {
            base_key
        } else {
            hash_words(&[base_key, round as u64])
        };
        let input = FrameInput {
            frame,
            cues: &rendered.cues,
            cloud: &cloud,
            key,
        };
        let settings = UpdateSettings {
            refinement: r,
            mode: cfg.run.mode,
            gating: round > 0,
            seed: cfg.run.seed,
        };
        update_frame(&mut mem, &input, scene, source, &settings)?;
    }

    let local: Vec<SemanticGaussian> = mem.gaussians.iter().map(|g| to_local_gaussian(g, &pose)).collect();
    let prediction = splat(&local, &spec, &cfg.splat)?;
    let ground_truth = voxelize_gt_posed(scene, &spec, &pose);
    let eval = evaluate(&prediction, &ground_truth, &mem, scene, r.voxel_size)?;
    let report = make_report("run-local", cfg, &mem, eval);
    Ok(RunOutput {
        prediction,
        ground_truth,
        memory: mem,
        report,
    })
}
