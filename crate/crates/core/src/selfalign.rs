//! Convergence-basin sweeps: a frame (or frame pair) is aligned against
//! itself from a grid of translation × rotation perturbations, per sensor
//! mode.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ba::{solve_fusion, solve_hierarchical, BaProblem, FusionMode, SolverConfig};
use crate::error::{Error, Result};
use crate::geometry::{relative, Pose};
use crate::graph::{Edge, EdgeKind, FrameNode, MatchGraph};
use crate::io::{BasinGrid, BasinPanel};
use crate::sensor::SensorExtrinsics;

/// Errors below this are numerically zero; they are clamped before taking
/// logarithms or comparing modes.
pub const ERROR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SweepMode {
    Pinhole,
    Spherical,
    Coupled,
    Consecutive,
}

impl SweepMode {
    pub const ALL: [SweepMode; 4] = [
        SweepMode::Pinhole,
        SweepMode::Spherical,
        SweepMode::Coupled,
        SweepMode::Consecutive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepMode::Pinhole => "pinhole",
            SweepMode::Spherical => "spherical",
            SweepMode::Coupled => "coupled",
            SweepMode::Consecutive => "consecutive",
        }
    }
}

/// The two frames to align for one sensor: `source` stays at its reference
/// pose (the gauge), `target` starts from a perturbed guess.
#[derive(Debug, Clone)]
pub struct AlignmentPair {
    pub source: FrameNode,
    pub target: FrameNode,
    pub extrinsics: SensorExtrinsics,
}

impl AlignmentPair {
    /// A frame matched against a copy of itself.
    pub fn single(frame: &FrameNode, extrinsics: SensorExtrinsics) -> Self {
        AlignmentPair {
            source: frame.clone(),
            target: frame.clone(),
            extrinsics,
        }
    }

    fn problem(&self, source_pose: Pose, target_pose: Pose) -> Result<BaProblem> {
        let mut a = self.source.clone();
        let mut b = self.target.clone();
        a.id = 0;
        b.id = 1;
        a.pose_guess = source_pose;
        b.pose_guess = target_pose;
        let graph = MatchGraph::from_edges(
            vec![a, b],
            [Edge {
                i: 0,
                j: 1,
                kind: EdgeKind::Covisibility,
            }],
        )?;
        Ok(BaProblem::new(graph, self.extrinsics))
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Translation magnitudes (m), one grid column each.
    pub translations: Vec<f64>,
    /// Rotation magnitudes (rad), one grid row each.
    pub rotations: Vec<f64>,
    pub seed: u64,
    /// A cell converges when its mean error falls below this.
    pub convergence_threshold: f64,
}

impl SweepConfig {
    /// `n` evenly spaced values from 0 to each maximum.
    pub fn linear(n: usize, max_translation: f64, max_rotation: f64, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("grid needs at least one value per axis".into()));
        }
        let axis = |max: f64| -> Vec<f64> {
            if n == 1 {
                vec![0.0]
            } else {
                (0..n).map(|k| max * k as f64 / (n - 1) as f64).collect()
            }
        };
        let cfg = SweepConfig {
            translations: axis(max_translation),
            rotations: axis(max_rotation),
            seed,
            convergence_threshold: 1e-3,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.translations.is_empty() || self.rotations.is_empty() {
            return Err(Error::Config("perturbation grid axes must be non-empty".into()));
        }
        if self
            .translations
            .iter()
            .chain(&self.rotations)
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::Config(
                "perturbation magnitudes must be finite and non-negative".into(),
            ));
        }
        if self.rotations.iter().any(|&r| r >= std::f64::consts::PI) {
            return Err(Error::Config("rotation perturbations must be below π".into()));
        }
        if !(self.convergence_threshold > 0.0) {
            return Err(Error::Config("convergence threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOutcome {
    pub mode: SweepMode,
    pub translation: f64,
    pub rotation: f64,
    /// Final errors of the target pose relative to its reference.
    pub translation_error: f64,
    pub rotation_error: f64,
    /// `max(ERROR_FLOOR, (rotation_error + translation_error) / 2)`
    pub mean_error: f64,
    pub converged: bool,
    /// The solver refused the cell (e.g. no overlap left).
    pub failed: bool,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub modes: Vec<SweepMode>,
    /// Row-major over (rotation, translation), modes innermost.
    pub cells: Vec<CellOutcome>,
}

impl SweepResult {
    pub fn cell(&self, mode: SweepMode, r: usize, t: usize) -> Option<&CellOutcome> {
        let nt = self.config.translations.len();
        let nm = self.modes.len();
        let m = self.modes.iter().position(|&x| x == mode)?;
        self.cells.get((r * nt + t) * nm + m)
    }

    /// `(rotation index, translation index)` of every converged cell.
    pub fn converged_set(&self, mode: SweepMode) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.config.rotations.len() {
            for t in 0..self.config.translations.len() {
                if self.cell(mode, r, t).is_some_and(|c| c.converged) {
                    out.push((r, t));
                }
            }
        }
        out
    }

    pub fn grid(&self) -> BasinGrid {
        let panels = self
            .modes
            .iter()
            .map(|&m| BasinPanel {
                mode: m.name().to_string(),
                values: (0..self.config.rotations.len())
                    .map(|r| {
                        (0..self.config.translations.len())
                            .map(|t| self.cell(m, r, t).map_or(f64::NAN, |c| c.mean_error.log10()))
                            .collect()
                    })
                    .collect(),
            })
            .collect();
        BasinGrid {
            translations: self.config.translations.clone(),
            rotations: self.config.rotations.clone(),
            panels,
        }
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Perturbations of every cell, row-major over (rotation, translation).
/// Directions are drawn from `seed`; the same draw serves every mode.
pub fn cell_perturbations(cfg: &SweepConfig) -> Vec<Pose> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.rotations.len() * cfg.translations.len());
    for &r in &cfg.rotations {
        for &t in &cfg.translations {
            let dir = unit_vector(&mut rng);
            let axis = unit_vector(&mut rng);
            out.push(Pose::from_axis_angle(&axis, r, dir * t));
        }
    }
    out
}

fn outcome(
    mode: SweepMode,
    t: f64,
    r: f64,
    est: Option<&Pose>,
    truth: &Pose,
    start: &Pose,
    threshold: f64,
) -> CellOutcome {
    let err = relative(est.unwrap_or(start), truth);
    let te = err.translation().norm();
    let re = err.rotation_angle();
    let mean = (0.5 * (te + re)).max(ERROR_FLOOR);
    CellOutcome {
        mode,
        translation: t,
        rotation: r,
        translation_error: te,
        rotation_error: re,
        mean_error: mean,
        converged: est.is_some() && mean < threshold,
        failed: est.is_none(),
    }
}

/// Runs the sweep. `reference` holds the true poses of (source, target).
/// Modes needing a missing sensor are skipped.
pub fn sweep(
    rgbd: Option<&AlignmentPair>,
    lidar: Option<&AlignmentPair>,
    reference: (Pose, Pose),
    cfg: &SweepConfig,
    solver: &SolverConfig,
) -> Result<SweepResult> {
    cfg.validate()?;
    solver.validate()?;
    let modes: Vec<SweepMode> = SweepMode::ALL
        .into_iter()
        .filter(|m| match m {
            SweepMode::Pinhole => rgbd.is_some(),
            SweepMode::Spherical => lidar.is_some(),
            _ => rgbd.is_some() && lidar.is_some(),
        })
        .collect();
    if modes.is_empty() {
        return Err(Error::Config("self-alignment needs at least one sensor".into()));
    }
    let (x0, x1) = reference;
    let perturbations = cell_perturbations(cfg);
    let mut cells = Vec::with_capacity(perturbations.len() * modes.len());
    let mut k = 0;
    for &r in &cfg.rotations {
        for &t in &cfg.translations {
            let start = x1 * perturbations[k];
            k += 1;
            let initial = [x0, start];
            for &mode in &modes {
                let solved = match mode {
                    SweepMode::Pinhole | SweepMode::Spherical => {
                        let pair = if mode == SweepMode::Pinhole { rgbd } else { lidar }.expect("mode filtered");
                        let p = pair.problem(x0, start)?;
                        solve_hierarchical(&[&p], &initial, solver)
                    }
                    SweepMode::Coupled | SweepMode::Consecutive => {
                        let pr = rgbd.expect("mode filtered").problem(x0, start)?;
                        let pl = lidar.expect("mode filtered").problem(x0, start)?;
                        let fm = if mode == SweepMode::Coupled {
                            FusionMode::Coupled
                        } else {
                            FusionMode::Consecutive
                        };
                        solve_fusion(&pr, &pl, &initial, fm, solver)
                    }
                };
                let est = match solved {
                    Ok(rep) => Some(rep.poses[1]),
                    Err(Error::UnderConstrained(_)) => None,
                    Err(e) => return Err(e),
                };
                cells.push(outcome(
                    mode,
                    t,
                    r,
                    est.as_ref(),
                    &x1,
                    &start,
                    cfg.convergence_threshold,
                ));
            }
        }
    }
    Ok(SweepResult {
        config: cfg.clone(),
        modes,
        cells,
    })
}
