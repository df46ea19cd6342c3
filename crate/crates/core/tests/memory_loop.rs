use nalgebra::Vector3;
use semgauss::camera::{CameraFrame, Intrinsics};
use semgauss::config::{ProposalConfig, RunConfig, UpdateMode};
use semgauss::knn::DepthIndex;
use semgauss::memory::{
    embodied_bounds, frame_key, frustum_grid, init_memory, init_memory_posed, run_embodied, run_local,
    update_frame, Aabb, FrameInput, GaussianMemory, SyntheticProposals, UpdateSettings,
};
use semgauss::scene::{generate_scene, orbit_trajectory, render_cues, GridPose, SyntheticScene};
use semgauss::{Error, SemanticClass, NUM_CLASSES};

fn room() -> SyntheticScene {
    SyntheticScene::empty_room(Vector3::new(4.8, 4.8, 2.56)).unwrap()
}

fn look(eye: [f64; 3], target: [f64; 3]) -> CameraFrame {
    CameraFrame::look_at(Vector3::from(eye), Vector3::from(target), Intrinsics::default()).unwrap()
}

fn fresh(scene: &SyntheticScene) -> GaussianMemory {
    init_memory(embodied_bounds(scene, 0.16).unwrap(), 0.16).unwrap()
}

fn step(mem: &mut GaussianMemory, scene: &SyntheticScene, frame: &CameraFrame, cfg: &RunConfig, gating: bool) {
    let rendered = render_cues(scene, frame);
    let cloud = DepthIndex::build(rendered.cloud, cfg.refinement.d_far);
    let input = FrameInput {
        frame,
        cues: &rendered.cues,
        cloud: &cloud,
        key: frame_key(frame),
    };
    let settings = UpdateSettings {
        refinement: &cfg.refinement,
        mode: cfg.run.mode,
        gating,
        seed: cfg.run.seed,
    };
    let src = SyntheticProposals::new(cfg.proposals.clone());
    update_frame(mem, &input, scene, &src, &settings).unwrap();
}

#[test]
fn outward_camera_sees_nothing() {
    let scene = room();
    let mut mem = fresh(&scene);
    let before = mem.clone();
    // Outside the room, looking away from it.
    let frame = look([-1.0, 2.4, 1.2], [-2.0, 2.4, 1.2]);
    step(&mut mem, &scene, &frame, &RunConfig::default(), true);
    assert_eq!(mem.update_log[0].visible, 0);
    assert_eq!(mem.gaussians, before.gaussians);
}

#[test]
fn fixed_mode_never_skips_and_sus_updates_less() {
    let scene = room();
    let traj = orbit_trajectory(&scene, 12, 0.5, 1.28, -0.2, Intrinsics::default()).unwrap();
    let mut totals = Vec::new();
    for mode in [UpdateMode::Fixed, UpdateMode::Sus] {
        let mut cfg = RunConfig::default();
        cfg.run.mode = mode;
        let src = SyntheticProposals::new(cfg.proposals.clone());
        let out = run_embodied(&scene, &traj, &cfg, &src, None).unwrap();
        if mode == UpdateMode::Fixed {
            assert!(out.report.frames.iter().all(|f| f.skipped == 0 && f.updated == f.visible));
        }
        totals.push(out.report.eval.totals.updated);
    }
    assert!(totals[1] < totals[0], "sus {} vs fixed {}", totals[1], totals[0]);
}

#[test]
fn skipped_and_unseen_gaussians_are_bit_identical() {
    let scene = generate_scene(5);
    let traj = orbit_trajectory(&scene, 6, 0.5, 1.2, -0.2, Intrinsics::default()).unwrap();
    let cfg = RunConfig::default();
    let init = fresh(&scene);
    let mut mem = init.clone();
    let mut ever_visible = vec![false; mem.len()];
    for frame in &traj {
        let before = mem.clone();
        for (i, g) in before.gaussians.iter().enumerate() {
            ever_visible[i] |= frame.is_visible(g);
        }
        step(&mut mem, &scene, frame, &cfg, true);
        let stats = *mem.update_log.last().unwrap();
        let changed = before
            .gaussians
            .iter()
            .zip(&mem.gaussians)
            .filter(|(a, b)| a != b)
            .count();
        assert!(changed <= stats.updated);
        let invisible_changed = before
            .gaussians
            .iter()
            .zip(&mem.gaussians)
            .any(|(a, b)| !frame.is_visible(a) && a != b);
        assert!(!invisible_changed);
    }
    assert_eq!(mem.len(), init.len());
    assert_eq!(mem.update_log.len(), traj.len());
    for (i, (a, b)) in init.gaussians.iter().zip(&mem.gaussians).enumerate() {
        if !ever_visible[i] {
            assert_eq!(a, b);
        }
        let local = mem.pose.to_local(&b.mean);
        assert!(mem.bounds.contains(&local));
        assert!(b.check_invariants().is_none());
    }
}

#[test]
fn skipped_gaussian_unchanged_across_frame() {
    let scene = room();
    let frame = look([2.4, 2.4, 1.28], [2.4, 4.8, 1.28]);
    let cfg = RunConfig::default();
    let mut mem = fresh(&scene);
    step(&mut mem, &scene, &frame, &cfg, false);
    let before = mem.clone();
    step(&mut mem, &scene, &frame, &cfg, true);
    let stats = mem.update_log[1];
    assert!(stats.skipped > 0);
    let unchanged = before.gaussians.iter().zip(&mem.gaussians).filter(|(a, b)| a == b).count();
    assert!(unchanged >= stats.skipped + (mem.len() - stats.visible));
}

#[test]
fn settled_gaussian_is_skipped_in_later_frames() {
    let scene = room();
    let frame = look([2.4, 2.4, 1.28], [2.4, 4.8, 1.28]);
    let mut cfg = RunConfig::default();
    cfg.proposals = ProposalConfig {
        sigma_pos: 0.0,
        sigma_sem: 0.0,
        sigma_scale: 0.0,
        sigma_opacity: 0.0,
        sigma_rot: 0.0,
        ..ProposalConfig::default()
    };
    let bounds = Aabb::new(Vector3::new(2.3, 4.7, 1.2), Vector3::new(2.5, 4.8, 1.4)).unwrap();
    let mut mem = init_memory(bounds, 0.16).unwrap();
    assert_eq!(mem.len(), 1);
    let g = &mut mem.gaussians[0];
    g.mean = Vector3::new(2.4, 4.8, 1.3);
    g.scale = Vector3::repeat(0.08);
    g.opacity = 0.8;
    g.logits = [0.0; NUM_CLASSES];
    g.logits[SemanticClass::Wall.id() as usize] = cfg.proposals.logit_scale;
    step(&mut mem, &scene, &frame, &cfg, true);
    step(&mut mem, &scene, &frame, &cfg, true);
    assert_eq!(mem.update_log[0].visible, 1);
    assert_eq!(mem.update_log[1].skipped, 1);
    assert_eq!(mem.update_log[1].updated, 0);
}

#[test]
fn reordering_disjoint_frames_gives_same_memory() {
    let scene = room();
    let a = look([2.4, 2.4, 1.28], [4.8, 2.4, 1.28]);
    let b = look([2.4, 2.4, 1.28], [0.0, 2.4, 1.28]);
    let init = fresh(&scene);
    assert!(!init.gaussians.iter().any(|g| a.is_visible(g) && b.is_visible(g)));
    let cfg = RunConfig::default();
    let mut ab = init.clone();
    step(&mut ab, &scene, &a, &cfg, true);
    step(&mut ab, &scene, &b, &cfg, true);
    let mut ba = init;
    step(&mut ba, &scene, &b, &cfg, true);
    step(&mut ba, &scene, &a, &cfg, true);
    assert_eq!(ab.gaussians, ba.gaussians);
}

#[test]
fn embodied_runs_are_reproducible() {
    let scene = generate_scene(2);
    let traj = orbit_trajectory(&scene, 4, 0.5, 1.2, -0.2, Intrinsics::default()).unwrap();
    let mut cfg = RunConfig::default();
    cfg.run.seed = 11;
    let src = SyntheticProposals::new(cfg.proposals.clone());
    let x = run_embodied(&scene, &traj, &cfg, &src, None).unwrap();
    let y = run_embodied(&scene, &traj, &cfg, &src, None).unwrap();
    assert_eq!(x.report, y.report);
    assert_eq!(x.memory, y.memory);
    assert_eq!(x.prediction, y.prediction);
    assert!(run_embodied(&scene, &[], &cfg, &src, None).is_err());
}

#[test]
fn grm_lowers_drift_against_unconstrained() {
    let scene = room();
    let traj = orbit_trajectory(&scene, 10, 0.5, 1.28, -0.2, Intrinsics::default()).unwrap();
    for seed in 0..3 {
        let drift = |mode| {
            let mut cfg = RunConfig::default();
            cfg.run.seed = seed;
            cfg.run.mode = mode;
            let src = SyntheticProposals::new(cfg.proposals.clone());
            run_embodied(&scene, &traj, &cfg, &src, None).unwrap().report.eval.oop_drift_rms
        };
        let (grm, free) = (drift(UpdateMode::Sus), drift(UpdateMode::Unconstrained));
        assert!(grm < free, "seed {seed}: {grm} vs {free}");
    }
}

#[test]
fn local_run_rejects_zero_iterations() {
    let scene = room();
    let frame = look([2.4, 0.5, 1.28], [2.4, 4.8, 1.28]);
    let cfg = RunConfig::default();
    let src = SyntheticProposals::new(cfg.proposals.clone());
    assert!(matches!(
        run_local(&scene, &frame, &cfg, &src, 0),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn local_single_round_matches_manual_update() {
    let scene = generate_scene(4);
    let c = scene.center();
    let frame = look([c.x, c.y, 1.2], [c.x + 1.0, c.y, 1.0]);
    let cfg = RunConfig::default();
    let src = SyntheticProposals::new(cfg.proposals.clone());
    let out = run_local(&scene, &frame, &cfg, &src, 1).unwrap();
    assert_eq!(out.prediction.spec.dims, [60, 60, 36]);
    assert_eq!(out.ground_truth.spec, out.prediction.spec);

    let pose = semgauss::memory::frustum_pose(&frame);
    let spec = frustum_grid(&frame, 0.08).unwrap();
    let bounds = Aabb::new(spec.origin, spec.max_corner()).unwrap();
    let mut mem = init_memory_posed(bounds, pose, 0.16, 0.5).unwrap();
    assert_eq!(mem.len(), 30 * 30 * 18);
    step(&mut mem, &scene, &frame, &cfg, false);
    assert_eq!(mem, out.memory);
    assert_eq!(out.report.frames[0].skipped, 0);
    assert_ne!(pose, GridPose::identity());
}
