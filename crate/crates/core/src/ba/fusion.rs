use std::str::FromStr;

use super::lm::{solve_hierarchical, SolveReport};
use super::{BaProblem, SolverConfig};
use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// One solve on the summed objective; both sensors share the poses.
    Coupled,
    /// Solve the LiDAR problem, then refine with the RGB-D problem.
    Consecutive,
}

impl FromStr for FusionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coupled" => Ok(FusionMode::Coupled),
            "consecutive" => Ok(FusionMode::Consecutive),
            other => Err(Error::Config(format!("unknown fusion mode `{other}`"))),
        }
    }
}

/// Refines one platform trajectory observed by an RGB-D and a LiDAR sensor.
/// For the consecutive mode the returned report holds the LiDAR levels
/// followed by the RGB-D levels.
pub fn solve_fusion(
    rgbd: &BaProblem,
    lidar: &BaProblem,
    initial: &[Pose],
    mode: FusionMode,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    if rgbd.num_poses() != lidar.num_poses() || initial.len() != rgbd.num_poses() {
        return Err(Error::Config(format!(
            "trajectory length mismatch: rgbd {} poses, lidar {} poses, initial guess {}",
            rgbd.num_poses(),
            lidar.num_poses(),
            initial.len()
        )));
    }
    match mode {
        FusionMode::Coupled => solve_hierarchical(&[rgbd, lidar], initial, cfg),
        FusionMode::Consecutive => {
            let first = solve_hierarchical(&[lidar], initial, cfg)?;
            let second = solve_hierarchical(&[rgbd], &first.poses, cfg)?;
            let mut levels = first.levels;
            levels.extend(second.levels);
            Ok(SolveReport {
                poses: second.poses,
                levels,
            })
        }
    }
}
