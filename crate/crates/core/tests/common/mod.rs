#![allow(dead_code)]

use photoba::ba::BaProblem;
use photoba::cue::PyramidConfig;
use photoba::eval::Trajectory;
use photoba::geometry::Pose;
use photoba::graph::{Edge, EdgeKind, MatchGraph};
use photoba::pipeline::{render_frames, SensorInput};
use photoba::synth::SynthSpec;

pub fn box_room() -> (SynthSpec, Trajectory) {
    let spec = SynthSpec::box_room();
    let gt = spec.groundtruth().unwrap();
    (spec, gt)
}

/// Box-room frames of sensor `sensor` (0 = camera, 1 = LiDAR) rendered at
/// ground truth, first `n` poses.
pub fn render_sensor(sensor: usize, n: usize, scales: &[f64]) -> (SensorInput, Trajectory) {
    let (spec, gt) = box_room();
    let gt = Trajectory::new(gt.entries()[..n].to_vec()).unwrap();
    let cfg = PyramidConfig {
        scales: scales.to_vec(),
        ..Default::default()
    };
    let input = render_frames(&spec.scene, &spec.sensors[sensor], &gt, &gt.poses(), &cfg).unwrap();
    (input, gt)
}

/// Problem over every pair of the first `n` frames.
pub fn full_problem(sensor: usize, n: usize, scales: &[f64]) -> (BaProblem, Vec<Pose>) {
    let (input, gt) = render_sensor(sensor, n, scales);
    let edges: Vec<Edge> = (0..n)
        .flat_map(|i| {
            (i + 1..n).map(move |j| Edge {
                i,
                j,
                kind: EdgeKind::Covisibility,
            })
        })
        .collect();
    let graph = MatchGraph::from_edges(input.nodes, edges).unwrap();
    (BaProblem::new(graph, input.extrinsics), gt.poses())
}

/// One frame paired with a copy of itself.
pub fn self_pair(sensor: usize, frame: usize, scales: &[f64]) -> (BaProblem, Pose) {
    let (input, gt) = render_sensor(sensor, frame + 1, scales);
    let mut a = input.nodes[frame].clone();
    a.id = 0;
    let mut b = a.clone();
    b.id = 1;
    let graph = MatchGraph::from_edges(
        vec![a, b],
        [Edge {
            i: 0,
            j: 1,
            kind: EdgeKind::Covisibility,
        }],
    )
    .unwrap();
    (BaProblem::new(graph, input.extrinsics), gt.poses()[frame])
}
