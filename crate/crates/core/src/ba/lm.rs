use std::fmt;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Vector6};

use super::normal_equations::{linearize, total_error, ErrorSummary};
use super::{check_constrained, BaProblem, SolverConfig};
use crate::error::{Error, Result};
use crate::geometry::{Perturbation, Pose};

const MAX_REJECTIONS: usize = 12;
const LAMBDA_MAX: f64 = 1e12;

/// One line of the per-iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub level: usize,
    pub iteration: usize,
    pub lambda: f64,
    pub error: f64,
    pub valid_blocks: usize,
    pub accepted: bool,
}

impl fmt::Display for IterationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "level {} iter {} lambda {:.3e} error {:.12e} valid {} {}",
            self.level,
            self.iteration,
            self.lambda,
            self.error,
            self.valid_blocks,
            if self.accepted { "accepted" } else { "stalled" }
        )
    }
}

#[derive(Debug, Clone)]
pub struct LevelReport {
    pub level: usize,
    pub scale: f64,
    pub iterations: usize,
    /// Error at the start followed by every accepted error.
    pub trace: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub seconds: f64,
}

impl LevelReport {
    pub fn initial_error(&self) -> f64 {
        self.trace[0]
    }

    pub fn final_error(&self) -> f64 {
        *self.trace.last().expect("trace starts with the initial error")
    }

    pub fn is_monotone(&self) -> bool {
        self.trace.windows(2).all(|w| w[1] <= w[0])
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub poses: Vec<Pose>,
    pub levels: Vec<LevelReport>,
}

impl SolveReport {
    pub fn records(&self) -> impl Iterator<Item = &IterationRecord> {
        self.levels.iter().flat_map(|l| l.records.iter())
    }
}

fn variable_index(pose: usize, gauge: usize) -> Option<usize> {
    use std::cmp::Ordering::*;
    match pose.cmp(&gauge) {
        Less => Some(pose),
        Equal => None,
        Greater => Some(pose - 1),
    }
}

fn reduce(h: &DMatrix<f64>, b: &DVector<f64>, n_poses: usize, gauge: usize) -> (DMatrix<f64>, DVector<f64>) {
    let keep: Vec<usize> = (0..n_poses)
        .filter(|&k| k != gauge)
        .flat_map(|k| 6 * k..6 * k + 6)
        .collect();
    let m = keep.len();
    let hr = DMatrix::from_fn(m, m, |r, c| h[(keep[r], keep[c])]);
    let br = DVector::from_fn(m, |r, _| b[keep[r]]);
    (hr, br)
}

fn apply_step(poses: &[Pose], step: &DVector<f64>, gauge: usize) -> Option<Vec<Pose>> {
    poses
        .iter()
        .enumerate()
        .map(|(k, p)| match variable_index(k, gauge) {
            None => Some(*p),
            Some(v) => {
                let d = Vector6::from_iterator(step.rows(6 * v, 6).iter().copied());
                p.boxplus(&Perturbation::from_vector(&d)).ok()
            }
        })
        .collect()
}

/// Levenberg-Marquardt on one pyramid level.
///
/// Returns the updated poses and the level report. The error trace is
/// non-increasing by construction: a step is kept only if it lowers `F`.
pub fn solve_level(
    problems: &[&BaProblem],
    poses: &[Pose],
    level: usize,
    max_iterations: usize,
    cfg: &SolverConfig,
) -> Result<(Vec<Pose>, LevelReport)> {
    cfg.validate()?;
    check_constrained(problems)?;
    let n = poses.len();
    if problems.iter().any(|p| p.num_poses() != n) {
        return Err(Error::Config(format!(
            "{n} poses supplied for a problem with {} nodes",
            problems[0].num_poses()
        )));
    }
    if problems.iter().any(|p| level >= p.num_levels()) {
        return Err(Error::Config(format!("pyramid level {level} does not exist")));
    }
    let gauge = problems[0].gauge;
    let scale = problems[0].graph.nodes()[0].pyramid.level(level).scale();
    let start = Instant::now();

    let mut poses = poses.to_vec();
    let mut lambda = cfg.lm_initial_lambda;
    let initial = total_error(problems, &poses, level, cfg);
    let mut current = initial;
    let mut trace = vec![initial.total];
    let mut records = Vec::new();
    let mut iterations = 0;

    while iterations < max_iterations && current.total > 0.0 {
        iterations += 1;
        let lin = linearize(problems, &poses, level, cfg);
        let (h, b) = reduce(&lin.hessian, &lin.gradient, n, gauge);
        for k in 0..n {
            if let Some(v) = variable_index(k, gauge) {
                if (0..6).all(|r| h[(6 * v + r, 6 * v + r)] == 0.0) {
                    return Err(Error::UnderConstrained(format!(
                        "pose {k} has no valid residual blocks at level {level}"
                    )));
                }
            }
        }
        if b.amax() == 0.0 {
            records.push(IterationRecord {
                level,
                iteration: iterations,
                lambda,
                error: current.total,
                valid_blocks: current.valid_blocks,
                accepted: false,
            });
            break;
        }
        let diag_floor = 1e-12 * h.diagonal().amax();

        let mut accepted: Option<(Vec<Pose>, ErrorSummary)> = None;
        for _ in 0..MAX_REJECTIONS {
            let mut damped = h.clone();
            for r in 0..damped.nrows() {
                damped[(r, r)] += lambda * h[(r, r)].max(diag_floor);
            }
            let candidate = Cholesky::new(damped)
                .map(|ch| -ch.solve(&b))
                .and_then(|step| apply_step(&poses, &step, gauge));
            if let Some(candidate) = candidate {
                let err = total_error(problems, &candidate, level, cfg);
                if err.total < current.total {
                    lambda = (lambda * cfg.lm_lambda_down).max(1e-12);
                    accepted = Some((candidate, err));
                    break;
                }
            }
            lambda *= cfg.lm_lambda_up;
            if lambda > LAMBDA_MAX {
                break;
            }
        }

        let Some((next, err)) = accepted else {
            records.push(IterationRecord {
                level,
                iteration: iterations,
                lambda,
                error: current.total,
                valid_blocks: current.valid_blocks,
                accepted: false,
            });
            break;
        };
        let rel = (current.total - err.total) / current.total;
        poses = next;
        current = err;
        trace.push(err.total);
        records.push(IterationRecord {
            level,
            iteration: iterations,
            lambda,
            error: err.total,
            valid_blocks: err.valid_blocks,
            accepted: true,
        });
        if rel < cfg.termination_rel_decrease {
            break;
        }
    }

    Ok((
        poses,
        LevelReport {
            level,
            scale,
            iterations,
            trace,
            records,
            seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

/// Coarse-to-fine solve over every pyramid level shared by `problems`,
/// each level starting from the previous level's result.
pub fn solve_hierarchical(problems: &[&BaProblem], initial: &[Pose], cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    check_constrained(problems)?;
    let levels = problems.iter().map(|p| p.num_levels()).min().unwrap_or(0);
    if problems.iter().any(|p| p.num_levels() != levels) {
        return Err(Error::Config(
            "pyramids of the fused problems differ in level count".into(),
        ));
    }
    let mut poses = initial.to_vec();
    let mut reports = Vec::with_capacity(levels);
    for (k, level) in (0..levels).enumerate() {
        let (next, report) = solve_level(problems, &poses, level, cfg.iteration_cap(k), cfg)?;
        poses = next;
        reports.push(report);
    }
    Ok(SolveReport { poses, levels: reports })
}
