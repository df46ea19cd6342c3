use nalgebra::Vector3;
use semgauss::camera::Intrinsics;
use semgauss::config::RunConfig;
use semgauss::io;
use semgauss::memory::{run_embodied, SyntheticProposals};
use semgauss::scene::{generate_scene, orbit_trajectory, render_cues, SceneObject, SyntheticScene};
use semgauss::{Error, SemanticClass};

#[test]
fn run_artifacts_survive_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scene = generate_scene(9);
    let traj = orbit_trajectory(&scene, 3, 0.5, 1.2, -0.2, Intrinsics::default()).unwrap();

    let scene_path = dir.path().join("scene.json");
    io::save_scene(&scene_path, &scene).unwrap();
    assert_eq!(io::load_scene(&scene_path).unwrap(), scene);

    let traj_path = dir.path().join("traj.json");
    io::save_trajectory(&traj_path, &traj).unwrap();
    let back = io::load_trajectory(&traj_path).unwrap();
    assert_eq!(back, traj);

    let cues = render_cues(&scene, &traj[0]).cues;
    let cue_path = dir.path().join("cues.bin");
    io::save_cues(&cue_path, &cues).unwrap();
    let loaded = io::load_cues(&cue_path).unwrap();
    for (a, b) in cues.depth.iter().zip(&loaded.depth) {
        assert_eq!(*a as f32, *b as f32);
    }

    let cfg = RunConfig::default();
    let src = SyntheticProposals::new(cfg.proposals.clone());
    let out = run_embodied(&scene, &traj, &cfg, &src, None).unwrap();

    let mem_path = dir.path().join("memory.bin");
    io::save_memory(&mem_path, &out.memory, &cfg.hash()).unwrap();
    let (mem, hash) = io::load_memory(&mem_path).unwrap();
    assert_eq!(mem, out.memory);
    assert_eq!(hash, cfg.hash());
    let size = std::fs::metadata(&mem_path).unwrap().len() as usize;
    assert!(size > mem.len() * io::GAUSSIAN_RECORD_BYTES);

    let grid_path = dir.path().join("gt.bin");
    io::save_grid(&grid_path, &out.ground_truth, false).unwrap();
    let gt = io::load_grid(&grid_path).unwrap();
    assert_eq!(gt.labels, out.ground_truth.labels);
    assert_eq!(gt.spec, out.ground_truth.spec);

    // Resuming from the checkpoint continues the update log.
    let resumed = run_embodied(&scene, &traj[..1], &cfg, &src, Some(mem)).unwrap();
    assert_eq!(resumed.report.frames.len(), 4);
}

#[test]
fn invalid_scene_file_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let scene = SyntheticScene {
        room: Vector3::new(4.0, 4.0, 2.5),
        objects: vec![SceneObject {
            class: SemanticClass::Bed,
            min: Vector3::new(1.0, 1.0, 0.0),
            max: Vector3::new(0.5, 2.0, 0.5),
        }],
    };
    io::write_json(&path, &scene).unwrap();
    assert!(matches!(io::load_scene(&path), Err(Error::InvalidObject { index: 0, .. })));

    std::fs::write(&path, b"{\"room\": [4, 4, 2.5], \"objects\": [], \"extra\": 1}").unwrap();
    assert!(matches!(io::load_scene(&path), Err(Error::Json(_))));
}

#[test]
fn truncated_checkpoint_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    let mem = semgauss::memory::init_memory(
        semgauss::memory::Aabb::new(Vector3::zeros(), Vector3::repeat(0.5)).unwrap(),
        0.16,
    )
    .unwrap();
    io::save_memory(&path, &mem, "h").unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(io::load_memory(&path), Err(Error::Format(_))));
}
