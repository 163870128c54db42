//! Residual evaluation and Gauss-Newton accumulation over all blocks.
//!
//! Work is split into fixed tasks (problem, edge, direction, row band), each
//! reduced locally and then summed in task order, so the result does not
//! depend on the number of worker threads.

use nalgebra::{DMatrix, DVector, Matrix6, SMatrix, Vector6};
use rayon::prelude::*;

use super::residual::{evaluate_block, PairGeometry};
use super::{BaProblem, SolverConfig};
use crate::geometry::Pose;

const ROWS_PER_TASK: usize = 8;

#[derive(Debug, Clone, Copy)]
struct Task {
    problem: usize,
    src: usize,
    dst: usize,
    row_start: usize,
    row_end: usize,
}

#[derive(Clone)]
struct TaskOutput {
    src: usize,
    dst: usize,
    h_ss: Matrix6<f64>,
    h_sd: Matrix6<f64>,
    h_dd: Matrix6<f64>,
    b_s: Vector6<f64>,
    b_d: Vector6<f64>,
    cost: f64,
    valid: usize,
    occluded: usize,
}

impl TaskOutput {
    fn empty(src: usize, dst: usize) -> Self {
        TaskOutput {
            src,
            dst,
            h_ss: Matrix6::zeros(),
            h_sd: Matrix6::zeros(),
            h_dd: Matrix6::zeros(),
            b_s: Vector6::zeros(),
            b_d: Vector6::zeros(),
            cost: 0.0,
            valid: 0,
            occluded: 0,
        }
    }
}

/// Total robust cost and block counts at one pyramid level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub total: f64,
    pub valid_blocks: usize,
    pub occluded_blocks: usize,
}

/// Gauss-Newton system `H Δ = −b` at the current poses.
#[derive(Debug, Clone)]
pub struct Linearization {
    /// Full 6N×6N system; the gauge block is removed by the caller.
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
}

fn tasks(problems: &[&BaProblem], level: usize, stride: usize) -> Vec<Task> {
    let mut out = Vec::new();
    for (pi, p) in problems.iter().enumerate() {
        for e in p.graph.edges() {
            for (src, dst) in [(e.i, e.j), (e.j, e.i)] {
                let h = p.graph.nodes()[src].pyramid.level(level).height();
                let rows: Vec<usize> = (1..h.saturating_sub(1)).step_by(stride).collect();
                for band in rows.chunks(ROWS_PER_TASK) {
                    out.push(Task {
                        problem: pi,
                        src,
                        dst,
                        row_start: band[0],
                        row_end: band[band.len() - 1] + 1,
                    });
                }
            }
        }
    }
    out
}

/// Huber cost and IRLS weight for a squared weighted norm.
#[inline]
pub(crate) fn huber(s2: f64, delta: f64) -> (f64, f64) {
    let s = s2.sqrt();
    if s <= delta {
        (s2, 1.0)
    } else {
        (2.0 * delta * s - delta * delta, delta / s)
    }
}

fn run_task(
    task: &Task,
    problems: &[&BaProblem],
    poses: &[Pose],
    level: usize,
    cfg: &SolverConfig,
    with_jacobians: bool,
) -> TaskOutput {
    let p = problems[task.problem];
    let nodes = p.graph.nodes();
    let src = nodes[task.src].pyramid.level(level);
    let dst = nodes[task.dst].pyramid.level(level);
    let k_dst = dst.intrinsics();
    let geom = PairGeometry::new(&poses[task.src], &poses[task.dst], &p.extrinsics);
    let omega = cfg.omega.diagonal();
    let tol = cfg.occlusion_tolerance_at(dst.scale());
    let stride = cfg.pixel_stride;
    let mut out = TaskOutput::empty(task.src, task.dst);

    for y in (task.row_start..task.row_end).step_by(stride) {
        for x in (1..src.width().saturating_sub(1)).step_by(stride) {
            let Some(block) = evaluate_block(&geom, src, x, y, dst, k_dst, with_jacobians) else {
                continue;
            };
            if block.is_occluded(tol) {
                out.occluded += 1;
                continue;
            }
            let e = &block.residual;
            let s2: f64 = (0..5).map(|c| omega[c] * e[c] * e[c]).sum();
            let (cost, w) = huber(s2, cfg.huber_delta);
            out.cost += cost;
            out.valid += 1;
            if let Some((ji, jj)) = &block.jacobians {
                let mut wji: SMatrix<f64, 5, 6> = *ji;
                let mut wjj: SMatrix<f64, 5, 6> = *jj;
                let mut we = *e;
                for c in 0..5 {
                    let s = w * omega[c];
                    wji.row_mut(c).scale_mut(s);
                    wjj.row_mut(c).scale_mut(s);
                    we[c] *= s;
                }
                out.h_ss += ji.transpose() * wji;
                out.h_sd += ji.transpose() * wjj;
                out.h_dd += jj.transpose() * wjj;
                out.b_s += ji.transpose() * we;
                out.b_d += jj.transpose() * we;
            }
        }
    }
    out
}

fn run_all(
    problems: &[&BaProblem],
    poses: &[Pose],
    level: usize,
    cfg: &SolverConfig,
    with_jacobians: bool,
) -> Vec<TaskOutput> {
    let tasks = tasks(problems, level, cfg.pixel_stride);
    tasks
        .par_iter()
        .map(|t| run_task(t, problems, poses, level, cfg, with_jacobians))
        .collect()
}

fn summarize(outputs: &[TaskOutput]) -> ErrorSummary {
    let mut s = ErrorSummary {
        total: 0.0,
        valid_blocks: 0,
        occluded_blocks: 0,
    };
    for o in outputs {
        s.total += o.cost;
        s.valid_blocks += o.valid;
        s.occluded_blocks += o.occluded;
    }
    s
}

/// The robust objective `F` summed over every problem at `level`.
pub fn total_error(problems: &[&BaProblem], poses: &[Pose], level: usize, cfg: &SolverConfig) -> ErrorSummary {
    summarize(&run_all(problems, poses, level, cfg, false))
}

pub fn linearize(problems: &[&BaProblem], poses: &[Pose], level: usize, cfg: &SolverConfig) -> Linearization {
    let outputs = run_all(problems, poses, level, cfg, true);
    let n = 6 * poses.len();
    let mut hessian = DMatrix::zeros(n, n);
    let mut gradient = DVector::zeros(n);
    for o in &outputs {
        let (s, d) = (6 * o.src, 6 * o.dst);
        {
            let mut blk = hessian.fixed_view_mut::<6, 6>(s, s);
            blk += o.h_ss;
        }
        {
            let mut blk = hessian.fixed_view_mut::<6, 6>(d, d);
            blk += o.h_dd;
        }
        {
            let mut blk = hessian.fixed_view_mut::<6, 6>(s, d);
            blk += o.h_sd;
        }
        {
            let mut blk = hessian.fixed_view_mut::<6, 6>(d, s);
            blk += o.h_sd.transpose();
        }
        {
            let mut g = gradient.fixed_rows_mut::<6>(s);
            g += o.b_s;
        }
        {
            let mut g = gradient.fixed_rows_mut::<6>(d);
            g += o.b_d;
        }
    }
    Linearization { hessian, gradient }
}
