//! Photometric bundle adjustment over all poses of a match graph.

mod fusion;
mod lm;
mod normal_equations;
pub mod residual;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MatchGraph;
use crate::sensor::SensorExtrinsics;

pub use fusion::{solve_fusion, FusionMode};
pub use lm::{solve_hierarchical, solve_level, IterationRecord, LevelReport, SolveReport};
pub use normal_equations::{linearize, total_error, ErrorSummary, Linearization};

/// Diagonal information weights per cue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CueWeights {
    pub intensity: f64,
    /// m⁻²
    pub depth: f64,
    pub normal: [f64; 3],
}

impl Default for CueWeights {
    fn default() -> Self {
        CueWeights {
            intensity: 1.0,
            depth: 10.0,
            normal: [1.0; 3],
        }
    }
}

impl CueWeights {
    pub fn diagonal(&self) -> [f64; 5] {
        [
            self.intensity,
            self.depth,
            self.normal[0],
            self.normal[1],
            self.normal[2],
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Huber threshold on the Ω-weighted norm of the stacked cue residual.
    pub huber_delta: f64,
    pub omega: CueWeights,
    pub lm_initial_lambda: f64,
    /// Damping multiplier after a rejected step.
    pub lm_lambda_up: f64,
    /// Damping multiplier after an accepted step.
    pub lm_lambda_down: f64,
    /// Iteration caps, first entry for the coarsest level of the schedule;
    /// the last entry repeats for any further levels.
    pub max_iterations_per_level: Vec<usize>,
    /// Stop a level when the accepted relative error decrease falls below this.
    pub termination_rel_decrease: f64,
    /// Meters at full resolution; doubled for each halving of resolution.
    pub occlusion_depth_tolerance: f64,
    pub pixel_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            huber_delta: 0.1,
            omega: CueWeights::default(),
            lm_initial_lambda: 1e-3,
            lm_lambda_up: 10.0,
            lm_lambda_down: 0.5,
            max_iterations_per_level: vec![10, 5, 3],
            termination_rel_decrease: 1e-4,
            occlusion_depth_tolerance: 0.05,
            pixel_stride: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("huber_delta", self.huber_delta),
            ("omega.intensity", self.omega.intensity),
            ("omega.depth", self.omega.depth),
            ("omega.normal[0]", self.omega.normal[0]),
            ("omega.normal[1]", self.omega.normal[1]),
            ("omega.normal[2]", self.omega.normal[2]),
            ("lm_initial_lambda", self.lm_initial_lambda),
            ("occlusion_depth_tolerance", self.occlusion_depth_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lm_lambda_up > 1.0) || !(self.lm_lambda_down > 0.0 && self.lm_lambda_down < 1.0) {
            return Err(Error::Config(
                "damping factors must satisfy up > 1 and 0 < down < 1".into(),
            ));
        }
        if !(self.termination_rel_decrease > 0.0 && self.termination_rel_decrease < 1.0) {
            return Err(Error::Config(format!(
                "termination_rel_decrease must lie in (0, 1), got {}",
                self.termination_rel_decrease
            )));
        }
        if self.max_iterations_per_level.is_empty() {
            return Err(Error::Config("max_iterations_per_level is empty".into()));
        }
        if self.pixel_stride == 0 {
            return Err(Error::Config("pixel_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Iteration cap for the `k`-th level of a schedule (0 = first/coarsest).
    pub fn iteration_cap(&self, k: usize) -> usize {
        let caps = &self.max_iterations_per_level;
        caps[k.min(caps.len() - 1)]
    }

    /// Occlusion tolerance at an image of the given relative scale.
    pub fn occlusion_tolerance_at(&self, scale: f64) -> f64 {
        self.occlusion_depth_tolerance / scale
    }
}

/// One sensor's view of the platform trajectory: its match graph (poses
/// are platform poses) plus the sensor mounting.
#[derive(Debug, Clone)]
pub struct BaProblem {
    pub graph: MatchGraph,
    pub extrinsics: SensorExtrinsics,
    /// Index of the pose held fixed.
    pub gauge: usize,
}

impl BaProblem {
    pub fn new(graph: MatchGraph, extrinsics: SensorExtrinsics) -> Self {
        BaProblem {
            graph,
            extrinsics,
            gauge: 0,
        }
    }

    pub fn num_poses(&self) -> usize {
        self.graph.len()
    }

    pub fn num_levels(&self) -> usize {
        self.graph.num_levels()
    }
}

/// Rejects problem sets whose poses cannot all be determined: fewer than two
/// poses, no edges, or nodes disconnected from the gauge.
pub(crate) fn check_constrained(problems: &[&BaProblem]) -> Result<()> {
    let first = problems
        .first()
        .ok_or_else(|| Error::Config("no problem to solve".into()))?;
    let n = first.num_poses();
    if problems.iter().any(|p| p.num_poses() != n) {
        return Err(Error::Config("problems disagree on the number of poses".into()));
    }
    if first.gauge >= n {
        return Err(Error::Config(format!("gauge index {} out of range", first.gauge)));
    }
    if n < 2 {
        return Err(Error::UnderConstrained(format!(
            "{n} pose(s): at least two frames are needed to form a matching pair"
        )));
    }
    let edges: Vec<(usize, usize)> = problems
        .iter()
        .flat_map(|p| p.graph.edges().iter().map(|e| (e.i, e.j)))
        .collect();
    if edges.is_empty() {
        return Err(Error::UnderConstrained("match graph has no edges".into()));
    }
    let comps = crate::graph::components(n, edges);
    if comps.len() > 1 {
        let floating: Vec<&Vec<usize>> = comps.iter().filter(|c| !c.contains(&first.gauge)).collect();
        return Err(Error::UnderConstrained(format!(
            "graph component(s) {floating:?} are not connected to the fixed pose {}",
            first.gauge
        )));
    }
    Ok(())
}
