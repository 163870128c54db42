use nalgebra::{Vector2, Vector3};
use photoba::ba::residual::PairGeometry;
use photoba::cue::{build_pyramid, Grid, PyramidConfig};
use photoba::eval::{ate, Trajectory};
use photoba::geometry::{relative, Perturbation, Pose};
use photoba::graph::{build_graph, overlap_ratio, FrameNode, GraphCriteria};
use photoba::io::{format_trajectory, parse_basin_grid, parse_trajectory, BasinGrid, BasinPanel, Manifest};
use photoba::sensor::{Intrinsics, ProjectionModel, SensorExtrinsics};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn pose() -> impl Strategy<Value = Pose> {
    (vec3(1.0), 0.0..3.0f64, vec3(5.0)).prop_filter_map("axis", |(a, ang, t)| {
        (a.norm() > 1e-3).then(|| Pose::from_axis_angle(&a, ang, t))
    })
}

fn small_perturbation() -> impl Strategy<Value = Perturbation> {
    // imaginary quaternion part, well inside the unit ball
    (vec3(1.0), vec3(0.5)).prop_map(|(dt, dq)| Perturbation::new(dt, dq))
}

fn pinhole() -> Intrinsics {
    Intrinsics::pinhole(120.0, 110.0, 79.5, 59.5, 160, 120)
}

fn spherical() -> Intrinsics {
    Intrinsics::spherical_panorama(360, 64, 0.8)
}

fn pixel(k: Intrinsics) -> impl Strategy<Value = Vector2<f64>> {
    (0.0..(k.width - 1) as f64, 0.0..(k.height - 1) as f64).prop_map(|(x, y)| Vector2::new(x, y))
}

proptest! {
    #[test]
    fn relative_of_boxplus_is_the_increment(x in pose(), d in small_perturbation()) {
        let y = x.boxplus(&d).unwrap();
        let e = d.exp().unwrap();
        prop_assert!(relative(&y, &x).max_abs_diff(&e) < 1e-9);
    }

    #[test]
    fn log_inverts_exp(d in small_perturbation()) {
        let back = d.exp().unwrap().log().unwrap();
        prop_assert!((back.dt - d.dt).norm() < 1e-9);
        prop_assert!((back.dq - d.dq).norm() < 1e-9);
    }

    #[test]
    fn composition_is_associative(a in pose(), b in pose(), c in pose()) {
        prop_assert!(((a * b) * c).max_abs_diff(&(a * (b * c))) < 1e-9);
    }

    #[test]
    fn pose_times_inverse_is_identity(a in pose()) {
        prop_assert!((a * a.inverse()).max_abs_diff(&Pose::identity()) < 1e-12);
        prop_assert!((a.inverse() * a).max_abs_diff(&Pose::identity()) < 1e-12);
    }

    #[test]
    fn pinhole_round_trip(u in pixel(pinhole()), d in 0.2..9.0f64) {
        let k = pinhole();
        let p = k.unproject(&u, d).unwrap();
        prop_assert!((k.depth_of(&p) - d).abs() < 1e-12);
        let back = k.project(&p).unwrap();
        prop_assert!((back - u).norm() < 1e-6);
    }

    #[test]
    fn spherical_round_trip(u in pixel(spherical()), d in 0.2..25.0f64) {
        let k = spherical();
        let p = k.unproject(&u, d).unwrap();
        prop_assert!((p.norm() - d).abs() < 1e-9);
        prop_assert!((k.depth_of(&p) - d).abs() < 1e-9);
        let back = k.project(&p).unwrap();
        let mut dx = (back.x - u.x).abs();
        dx = dx.min(k.width as f64 - dx);
        prop_assert!(dx < 1e-6 && (back.y - u.y).abs() < 1e-6);
    }

    #[test]
    fn projective_jacobian_matches_differences(
        spherical_model in any::<bool>(),
        u in pixel(pinhole()),
        d in 0.5..8.0f64,
    ) {
        let k = if spherical_model { spherical() } else { pinhole() };
        let u = Vector2::new(u.x * (k.width - 1) as f64 / 159.0, u.y * (k.height - 1) as f64 / 119.0);
        let p = k.unproject(&u, d).unwrap();
        let j = k.projective_jacobian(&p).unwrap();
        let h = 1e-6;
        for c in 0..3 {
            let mut a = p;
            let mut b = p;
            a[c] += h;
            b[c] -= h;
            let (Some(pa), Some(pb)) = (k.project_unbounded(&a), k.project_unbounded(&b)) else {
                continue;
            };
            let mut diff = pa - pb;
            if k.model == ProjectionModel::Spherical {
                let w = k.width as f64;
                diff.x -= w * (diff.x / w).round();
            }
            let fd = diff / (2.0 * h);
            let an = j.column(c);
            let scale = an.norm().max(1e-7);
            prop_assert!((fd - an).norm() / scale < 1e-4, "column {}: {:?} vs {:?}", c, fd, an);
        }
    }

    #[test]
    fn transformed_normals_stay_unit(xi in pose(), xj in pose(), o in pose(), n in vec3(1.0)) {
        prop_assume!(n.norm() > 1e-3);
        let n = n.normalize();
        let g = PairGeometry::new(&xi, &xj, &SensorExtrinsics::new(o));
        prop_assert!((g.rotate_normal(&n).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pyramid_levels_have_floored_dimensions(
        w in 20usize..80,
        h in 20usize..80,
        a in 0.1..0.3f64,
        b in 0.35..0.6f64,
        c in 0.65..1.0f64,
    ) {
        let k = Intrinsics::pinhole(50.0, 50.0, w as f64 / 2.0, h as f64 / 2.0, w, h);
        let cfg = PyramidConfig { scales: vec![a, b, c], ..Default::default() };
        let pyr = build_pyramid(&Grid::filled(w, h, 0.5), &Grid::filled(w, h, 3.0), &k, &cfg).unwrap();
        for (lvl, s) in pyr.levels().iter().zip([a, b, c]) {
            let ew = (w as f64 * s).floor() as usize;
            let eh = (h as f64 * s).floor() as usize;
            prop_assert_eq!((lvl.width(), lvl.height()), (ew, eh));
            prop_assert!(lvl.valid_count() * 2 > ew * eh);
            for y in 0..lvl.height() {
                for x in 0..lvl.width() {
                    // corner footprints may lack a normal and stay invalid
                    prop_assert!(matches!(lvl.depth(x, y), None | Some(3.0)));
                    if let Some(n) = lvl.normal(x, y) {
                        prop_assert!((n.norm() - 1.0).abs() < 1e-9);
                        prop_assert!(n.z < 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn ate_ignores_rigid_motion_of_either_trajectory(
        poses in prop::collection::vec(pose(), 4..10),
        g in pose(),
        noise in prop::collection::vec(vec3(0.05), 10),
    ) {
        let ts: Vec<f64> = (0..poses.len()).map(|k| k as f64).collect();
        let reference = Trajectory::from_poses(&ts, &poses).unwrap();
        let noisy: Vec<Pose> = poses
            .iter()
            .zip(&noise)
            .map(|(p, n)| Pose::new(*p.rotation(), p.translation() + n))
            .collect();
        let est = Trajectory::from_poses(&ts, &noisy).unwrap();
        let Ok(base) = ate(&est, &reference, 0.02) else { return Ok(()) };
        let moved = ate(&est.transformed(&g), &reference, 0.02).unwrap();
        prop_assert!((moved.rmse - base.rmse).abs() < 1e-9);
        prop_assert!(base.rmse <= 0.05 * 3f64.sqrt() + 1e-12);
        prop_assert!(base.rmse >= 0.0);
        let swapped = ate(&reference, &est, 0.02).unwrap();
        prop_assert!((swapped.rmse - base.rmse).abs() < 1e-9);
    }

    #[test]
    fn trajectory_text_round_trips(poses in prop::collection::vec(pose(), 1..12), t0 in -1e3..1e3f64) {
        let ts: Vec<f64> = (0..poses.len()).map(|k| t0 + 0.1 * k as f64).collect();
        let traj = Trajectory::from_poses(&ts, &poses).unwrap();
        let back = parse_trajectory(&format_trajectory(&traj), "prop").unwrap();
        prop_assert_eq!(back.timestamps(), traj.timestamps());
        for (a, b) in back.poses().iter().zip(traj.poses()) {
            prop_assert!(a.max_abs_diff(&b) < 1e-12);
        }
    }

    #[test]
    fn basin_grid_round_trips(
        values in prop::collection::vec(-12.0..2.0f64, 6),
        t in prop::collection::vec(0.0..1.0f64, 3),
        r in prop::collection::vec(0.0..3.0f64, 2),
    ) {
        let grid = BasinGrid {
            translations: t,
            rotations: r,
            panels: vec![BasinPanel { mode: "coupled".into(), values: vec![values[..3].to_vec(), values[3..].to_vec()] }],
        };
        prop_assert_eq!(parse_basin_grid(&grid.format()).unwrap(), grid);
    }

    #[test]
    fn manifest_round_trips(depth_scale in 1e-5..1e-2f64, fx in 10.0..500.0f64, o in pose(), stride in 1usize..5) {
        let mut m = Manifest::parse(
            "trajectory = \"t.txt\"\n[[sensors]]\nid = \"cam\"\ndepth_scale = 0.001\n\
             [sensors.intrinsics]\nmodel = \"pinhole\"\nfx = 100.0\nfy = 100.0\ncx = 15.5\ncy = 11.5\nwidth = 32\nheight = 24\ndepth_min = 0.1\ndepth_max = 10.0\n",
            "prop",
        )
        .unwrap();
        m.sensors[0].depth_scale = depth_scale;
        m.sensors[0].intrinsics.fx = fx;
        m.sensors[0].extrinsics = photoba::io::ExtrinsicsEntry::from_pose(&o);
        m.graph.overlap_stride = stride;
        let back = Manifest::parse(&m.to_toml(), "prop").unwrap();
        prop_assert_eq!(back, m);
    }
}

fn flat_node(id: usize, pose: Pose) -> FrameNode {
    let k = Intrinsics::pinhole(40.0, 40.0, 15.5, 11.5, 32, 24);
    let pyramid = build_pyramid(
        &Grid::filled(32, 24, 0.5),
        &Grid::filled(32, 24, 2.0),
        &k,
        &PyramidConfig {
            scales: vec![0.5, 1.0],
            ..Default::default()
        },
    )
    .unwrap();
    FrameNode {
        id,
        timestamp: id as f64,
        sensor_id: "cam".into(),
        pose_guess: pose,
        pyramid,
    }
}

fn sideways(x: f64) -> Pose {
    Pose::from_translation(Vector3::new(x, 0.0, 0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn overlap_shrinks_with_distance(a in 0.0..0.8f64, b in 0.0..0.8f64) {
        let (near, far) = if a < b { (a, b) } else { (b, a) };
        let src = flat_node(0, Pose::identity());
        let ext = SensorExtrinsics::identity();
        let o_near = overlap_ratio(&src, &flat_node(1, sideways(near)), 0, &ext, 1);
        let o_far = overlap_ratio(&src, &flat_node(1, sideways(far)), 0, &ext, 1);
        prop_assert!(o_far <= o_near + 1e-12);
        prop_assert!((0.0..=1.0).contains(&o_far));
    }

    #[test]
    fn graph_is_deterministic_and_edges_shrink_with_thresholds(
        xs in prop::collection::vec(0.0..1.5f64, 3..6),
        t1 in 0.1..1.0f64,
        t2 in 0.1..1.0f64,
    ) {
        let nodes: Vec<FrameNode> = xs.iter().enumerate().map(|(i, &x)| flat_node(i, sideways(x))).collect();
        let ext = SensorExtrinsics::identity();
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        let crit = |t: f64| GraphCriteria { max_translation: t, sequential: false, ..Default::default() };
        let strict = build_graph(nodes.clone(), &ext, &crit(lo)).unwrap();
        let loose = build_graph(nodes.clone(), &ext, &crit(hi)).unwrap();
        for e in strict.edges() {
            prop_assert!(loose.has_edge(e.i, e.j));
        }
        let again = build_graph(nodes, &ext, &crit(hi)).unwrap();
        prop_assert_eq!(loose.dump(), again.dump());
    }
}
