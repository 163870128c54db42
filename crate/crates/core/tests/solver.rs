mod common;

use nalgebra::Vector3;
use photoba::ba::{linearize, solve_hierarchical, solve_level, total_error, BaProblem, SolverConfig};
use photoba::cue::{build_pyramid, Grid, PyramidConfig};
use photoba::geometry::Pose;
use photoba::graph::{Edge, EdgeKind, FrameNode, MatchGraph};
use photoba::sensor::{Intrinsics, SensorExtrinsics};
use photoba::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pose(rng: &mut ChaCha8Rng, rot: f64, trans: f64) -> Pose {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    Pose::from_axis_angle(
        &axis,
        rng.random_range(-rot..rot),
        Vector3::new(
            rng.random_range(-trans..trans),
            rng.random_range(-trans..trans),
            rng.random_range(-trans..trans),
        ),
    )
}

#[test]
fn objective_is_invariant_to_a_common_rigid_motion() {
    let cfg = SolverConfig::default();
    for sensor in [0, 1] {
        let (p, gt) = common::full_problem(sensor, 5, &[0.25, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // evaluate away from the optimum so every cue contributes
        let poses: Vec<Pose> = gt.iter().map(|x| *x * random_pose(&mut rng, 0.02, 0.02)).collect();
        let base = total_error(&[&p], &poses, 1, &cfg).total;
        assert!(base > 0.0);
        for _ in 0..10 {
            let g = random_pose(&mut rng, 3.0, 10.0);
            let moved: Vec<Pose> = poses.iter().map(|x| g * *x).collect();
            let f = total_error(&[&p], &moved, 1, &cfg).total;
            assert!(((f - base) / base).abs() < 1e-9, "sensor {sensor}: {f} vs {base}");
        }
    }
}

#[test]
fn self_alignment_has_zero_gradient() {
    for sensor in [0, 1] {
        let (p, x) = common::self_pair(sensor, 3, &[0.25, 0.5]);
        let lin = linearize(&[&p], &[x, x], 1, &SolverConfig::default());
        assert!(lin.gradient.amax() <= 1e-10, "|b| = {}", lin.gradient.amax());
        assert!(lin.hessian.amax() > 0.0);
    }
}

#[test]
fn already_optimal_input_is_returned_unchanged() {
    let (p, x) = common::self_pair(0, 2, &[0.25, 0.5]);
    let rep = solve_hierarchical(&[&p], &[x, x], &SolverConfig::default()).unwrap();
    assert!(rep.poses[1].max_abs_diff(&x) < 1e-9);
    for l in &rep.levels {
        assert!(l.iterations <= 2);
    }
}

#[test]
fn two_frame_self_alignment_recovers_ten_centimeters() {
    for sensor in [0, 1] {
        let (p, x) = common::self_pair(sensor, 4, &[0.125, 0.25, 0.5]);
        let start = x * Pose::from_translation(Vector3::new(0.6, -0.5, 0.58).normalize() * 0.1);
        assert!(((start.translation() - x.translation()).norm() - 0.1).abs() < 1e-12);
        let rep = solve_hierarchical(&[&p], &[x, start], &SolverConfig::default()).unwrap();
        let err = (rep.poses[1].translation() - x.translation()).norm();
        assert!(err < 1e-4, "sensor {sensor}: residual offset {err}");
        assert!(rep.levels.iter().all(|l| l.is_monotone()));
    }
}

#[test]
fn accepted_error_never_increases() {
    let (p, gt) = common::full_problem(0, 4, &[0.125, 0.25]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..4 {
        let mut start = gt.clone();
        for x in start.iter_mut().skip(1) {
            *x = *x * random_pose(&mut rng, 0.08, 0.1);
        }
        match solve_hierarchical(&[&p], &start, &SolverConfig::default()) {
            Ok(rep) => {
                for l in &rep.levels {
                    assert!(l.is_monotone(), "{:?}", l.trace);
                }
            }
            Err(Error::UnderConstrained(_)) => {}
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn result_does_not_depend_on_thread_count() {
    let (p, gt) = common::full_problem(1, 4, &[0.125, 0.25]);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let start: Vec<Pose> = gt
        .iter()
        .enumerate()
        .map(|(k, x)| {
            if k == 0 {
                *x
            } else {
                *x * random_pose(&mut rng, 0.03, 0.05)
            }
        })
        .collect();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| solve_hierarchical(&[&p], &start, &SolverConfig::default()).unwrap())
    };
    let a = run(1);
    let b = run(4);
    let c = run(3);
    for ((x, y), z) in a.poses.iter().zip(&b.poses).zip(&c.poses) {
        assert_eq!(x.to_homogeneous(), y.to_homogeneous());
        assert_eq!(x.to_homogeneous(), z.to_homogeneous());
    }
    let traces = |r: &photoba::ba::SolveReport| r.levels.iter().map(|l| l.trace.clone()).collect::<Vec<_>>();
    assert_eq!(traces(&a), traces(&b));
}

fn flat_node(id: usize) -> FrameNode {
    let k = Intrinsics::pinhole(40.0, 40.0, 15.5, 11.5, 32, 24);
    let pyramid = build_pyramid(
        &Grid::from_fn(32, 24, |x, y| ((x * 7 + y * 3) % 10) as f64 / 10.0),
        &Grid::filled(32, 24, 2.0),
        &k,
        &PyramidConfig {
            scales: vec![1.0],
            ..Default::default()
        },
    )
    .unwrap();
    FrameNode {
        id,
        timestamp: id as f64,
        sensor_id: "cam".into(),
        pose_guess: Pose::identity(),
        pyramid,
    }
}

#[test]
fn under_constrained_problems_are_rejected() {
    let cfg = SolverConfig::default();
    let single = BaProblem::new(
        MatchGraph::from_edges(vec![flat_node(0)], []).unwrap(),
        SensorExtrinsics::identity(),
    );
    let err = solve_hierarchical(&[&single], &[Pose::identity()], &cfg).unwrap_err();
    assert!(matches!(err, Error::UnderConstrained(_)));

    let split = BaProblem::new(
        MatchGraph::from_edges(
            (0..4).map(flat_node).collect(),
            [
                Edge {
                    i: 0,
                    j: 1,
                    kind: EdgeKind::Odometry,
                },
                Edge {
                    i: 2,
                    j: 3,
                    kind: EdgeKind::Odometry,
                },
            ],
        )
        .unwrap(),
        SensorExtrinsics::identity(),
    );
    let err = solve_level(&[&split], &[Pose::identity(); 4], 0, 5, &cfg).unwrap_err();
    match err {
        Error::UnderConstrained(msg) => assert!(msg.contains("[2, 3]"), "{msg}"),
        other => panic!("{other}"),
    }
}

#[test]
fn invalid_destination_depth_leaves_no_blocks() {
    let k = Intrinsics::pinhole(40.0, 40.0, 15.5, 11.5, 32, 24);
    let cfg = PyramidConfig {
        scales: vec![1.0],
        ..Default::default()
    };
    let good = flat_node(0);
    let mut empty = flat_node(1);
    empty.pyramid = build_pyramid(&Grid::filled(32, 24, 0.5), &Grid::filled(32, 24, 0.0), &k, &cfg).unwrap();
    let p = BaProblem::new(
        MatchGraph::from_edges(
            vec![good, empty],
            [Edge {
                i: 0,
                j: 1,
                kind: EdgeKind::Covisibility,
            }],
        )
        .unwrap(),
        SensorExtrinsics::identity(),
    );
    let s = total_error(&[&p], &[Pose::identity(); 2], 0, &SolverConfig::default());
    assert_eq!((s.valid_blocks, s.occluded_blocks, s.total), (0, 0, 0.0));
}
