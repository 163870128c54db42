//! End-to-end refinement: frames → match graphs → hierarchical solve.

use crate::ba::{solve_fusion, solve_hierarchical, BaProblem, FusionMode, SolveReport, SolverConfig};
use crate::cue::{build_pyramid, PyramidConfig};
use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::geometry::Pose;
use crate::graph::{build_graph, FrameNode, GraphCriteria, MatchGraph};
use crate::io::{Dataset, SensorEntry};
use crate::sensor::{ProjectionModel, SensorExtrinsics};
use crate::synth::{render, SceneSpec};

/// Frames of one sensor ready for graph construction.
#[derive(Debug, Clone)]
pub struct SensorInput {
    pub id: String,
    pub model: ProjectionModel,
    pub extrinsics: SensorExtrinsics,
    pub nodes: Vec<FrameNode>,
}

#[derive(Debug, Clone)]
pub struct RefineOptions {
    /// Use only the `n` finest pyramid levels.
    pub levels: Option<usize>,
    pub fusion: FusionMode,
    pub graph: GraphCriteria,
    pub solver: SolverConfig,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            levels: None,
            fusion: FusionMode::Consecutive,
            graph: GraphCriteria::default(),
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RefineResult {
    pub poses: Vec<Pose>,
    pub report: SolveReport,
    /// One graph per sensor, in input order.
    pub graphs: Vec<(String, MatchGraph)>,
}

impl RefineResult {
    pub fn edge_count(&self) -> usize {
        self.graphs.iter().map(|(_, g)| g.edges().len()).sum()
    }
}

/// Renders a sensor at the ground-truth poses and packs the frames with the
/// given pose guesses.
pub fn render_frames(
    scene: &SceneSpec,
    sensor: &SensorEntry,
    groundtruth: &Trajectory,
    guesses: &[Pose],
    pyramid: &PyramidConfig,
) -> Result<SensorInput> {
    if guesses.len() != groundtruth.len() {
        return Err(Error::Config("one guess per ground-truth pose required".into()));
    }
    let offset = sensor.extrinsics.to_pose()?;
    let nodes = groundtruth
        .entries()
        .iter()
        .zip(guesses)
        .enumerate()
        .map(|(id, ((t, gt), guess))| {
            let f = render(scene, &sensor.intrinsics, &(*gt * offset));
            Ok(FrameNode {
                id,
                timestamp: *t,
                sensor_id: sensor.id.clone(),
                pose_guess: *guess,
                pyramid: build_pyramid(&f.intensity, &f.depth, &sensor.intrinsics, pyramid)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SensorInput {
        id: sensor.id.clone(),
        model: sensor.intrinsics.model,
        extrinsics: SensorExtrinsics::new(offset),
        nodes,
    })
}

pub fn inputs_from_dataset(ds: &Dataset) -> Vec<SensorInput> {
    ds.sensors
        .iter()
        .map(|s| SensorInput {
            id: s.id.clone(),
            model: s.intrinsics.model,
            extrinsics: s.extrinsics,
            nodes: s.nodes.clone(),
        })
        .collect()
}

pub fn build_problem(input: &SensorInput, opts: &RefineOptions) -> Result<BaProblem> {
    let graph = build_graph(input.nodes.clone(), &input.extrinsics, &opts.graph)?;
    let graph = match opts.levels {
        Some(n) if n == 0 || n > graph.num_levels() => {
            return Err(Error::Config(format!(
                "requested {n} levels, pyramid has {}",
                graph.num_levels()
            )))
        }
        Some(n) => graph.with_finest_levels(n),
        None => graph,
    };
    Ok(BaProblem::new(graph, input.extrinsics))
}

/// Refines the platform trajectory seen by one or two sensors. With two
/// sensors (one pinhole, one spherical) `opts.fusion` selects the scheme.
pub fn refine(inputs: &[SensorInput], opts: &RefineOptions) -> Result<RefineResult> {
    let problems = inputs
        .iter()
        .map(|s| build_problem(s, opts))
        .collect::<Result<Vec<_>>>()?;
    let initial = problems
        .first()
        .ok_or_else(|| Error::Config("no sensor frames to refine".into()))?
        .graph
        .pose_guesses();
    let report = match problems.as_slice() {
        [single] => solve_hierarchical(&[single], &initial, &opts.solver)?,
        [a, b] => {
            let (rgbd, lidar) = match (a.graph.nodes()[0].pyramid.finest().intrinsics().model, inputs[1].model) {
                (ProjectionModel::Pinhole, ProjectionModel::Spherical) => (a, b),
                (ProjectionModel::Spherical, ProjectionModel::Pinhole) => (b, a),
                _ => {
                    return Err(Error::Config(
                        "fusion needs one pinhole and one spherical sensor".into(),
                    ))
                }
            };
            solve_fusion(rgbd, lidar, &initial, opts.fusion, &opts.solver)?
        }
        _ => {
            return Err(Error::Config(format!(
                "{} sensors given, at most two supported",
                inputs.len()
            )))
        }
    };
    Ok(RefineResult {
        poses: report.poses.clone(),
        report,
        graphs: inputs
            .iter()
            .zip(problems)
            .map(|(i, p)| (i.id.clone(), p.graph))
            .collect(),
    })
}
