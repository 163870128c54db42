use photoba::ba::total_error;
use photoba::eval::ate_rmse;
use photoba::io::raster::{decode_depth, decode_intensity};
use photoba::io::{image_file_name, load_dataset, load_trajectory, MANIFEST_FILE};
use photoba::pipeline::{build_problem, inputs_from_dataset, refine, RefineOptions};
use photoba::synth::{box_room_trajectory, render, PerturbationSpec, SynthSpec};

fn small_room(n: usize, perturbed: bool) -> SynthSpec {
    let mut spec = SynthSpec::box_room();
    spec.poses = box_room_trajectory(n);
    spec.perturbation = perturbed.then_some(PerturbationSpec {
        sigma_t: 0.05,
        sigma_r: 2f64.to_radians(),
        seed: 1,
    });
    spec
}

#[test]
fn generated_dataset_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_room(4, true);
    let manifest = generate_and_check(&spec, dir.path());
    let ds = load_dataset(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(ds.manifest, manifest);
    assert_eq!(ds.sensors.len(), 2);
    let gt = spec.groundtruth().unwrap();
    let saved_gt = ds.groundtruth.as_ref().unwrap();
    for (a, b) in saved_gt.poses().iter().zip(gt.poses()) {
        assert!(a.max_abs_diff(&b) < 1e-12);
    }
    assert!(ate_rmse(&ds.trajectory, &gt).unwrap() > 0.01);
    for (s, entry) in ds.sensors.iter().zip(&spec.sensors) {
        assert_eq!(s.nodes.len(), 4);
        assert_eq!(s.nodes[0].pyramid.num_levels(), 3);
        for (node, (t, guess)) in s.nodes.iter().zip(ds.trajectory.entries()) {
            assert_eq!(node.timestamp, *t);
            assert_eq!(node.pose_guess.max_abs_diff(guess), 0.0);
            assert_eq!(node.sensor_id, entry.id);
        }
    }
}

fn generate_and_check(spec: &SynthSpec, root: &std::path::Path) -> photoba::io::Manifest {
    let manifest = photoba::synth::generate_dataset(spec, root).unwrap();
    let gt = spec.groundtruth().unwrap();
    let (t, pose) = gt.entries()[2];
    for s in &spec.sensors {
        let frame = render(&spec.scene, &s.intrinsics, &(pose * s.extrinsics.to_pose().unwrap()));
        let name = image_file_name(t);
        let i = decode_intensity(&std::fs::read(root.join(s.intensity_dir()).join(&name)).unwrap()).unwrap();
        let d = decode_depth(
            &std::fs::read(root.join(s.depth_dir()).join(&name)).unwrap(),
            s.depth_scale,
        )
        .unwrap();
        for (a, b) in i.data().iter().zip(frame.intensity.data()) {
            assert!((a - b).abs() <= 0.5 / 65535.0 + 1e-12);
        }
        for (a, b) in d.data().iter().zip(frame.depth.data()) {
            assert!((a - b).abs() <= 0.5 * s.depth_scale + 1e-12);
        }
    }
    assert!(load_trajectory(&root.join("trajectory.txt")).is_ok());
    manifest
}

#[test]
fn ground_truth_is_photo_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_room(5, true);
    photoba::synth::generate_dataset(&spec, dir.path()).unwrap();
    let ds = load_dataset(&dir.path().join(MANIFEST_FILE)).unwrap();
    let gt = ds.groundtruth.clone().unwrap().poses();
    let guess = ds.trajectory.poses();
    let opts = RefineOptions::default();
    for input in inputs_from_dataset(&ds) {
        let p = build_problem(&input, &opts).unwrap();
        let finest = p.num_levels() - 1;
        let at_gt = total_error(&[&p], &gt, finest, &opts.solver);
        let at_guess = total_error(&[&p], &guess, finest, &opts.solver);
        let per_block = at_gt.total / at_gt.valid_blocks as f64;
        // residual floor from 16-bit quantization and resampling
        assert!(per_block < 5e-3, "{}: {per_block}", input.id);
        assert!(
            at_guess.total / at_guess.valid_blocks as f64 > 10.0 * per_block,
            "{}",
            input.id
        );
    }
}

#[test]
fn refinement_from_disk_reduces_ate() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_room(5, true);
    spec.sensors.truncate(1);
    photoba::synth::generate_dataset(&spec, dir.path()).unwrap();
    let ds = load_dataset(&dir.path().join(MANIFEST_FILE)).unwrap();
    let gt = ds.groundtruth.clone().unwrap();
    let before = ate_rmse(&ds.trajectory, &gt).unwrap();
    let res = refine(&inputs_from_dataset(&ds), &RefineOptions::default()).unwrap();
    let est = photoba::eval::Trajectory::from_poses(&ds.trajectory.timestamps(), &res.poses).unwrap();
    let after = ate_rmse(&est, &gt).unwrap();
    assert!(after < 0.2 * before, "{before} -> {after}");
    assert!(res.report.levels.iter().all(|l| l.is_monotone()));
}
