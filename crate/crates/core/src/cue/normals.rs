use nalgebra::{Matrix3, SymmetricEigen, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Grid;
use crate::sensor::Intrinsics;

/// Plane-fit normal estimation parameters. The neighbourhood radius follows
/// `τ = clamp(k_tau / depth, radius_min, radius_max)` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalConfig {
    pub k_tau: f64,
    pub radius_min: f64,
    pub radius_max: f64,
    pub min_points: usize,
    /// Neighbours whose depth differs from the centre by more than this
    /// fraction of the centre depth belong to another surface.
    pub max_relative_depth_jump: f64,
    /// Fit is degenerate when `λ_mid / λ_max` falls below this.
    pub min_eigen_ratio: f64,
}

impl Default for NormalConfig {
    fn default() -> Self {
        NormalConfig {
            k_tau: 4.0,
            radius_min: 2.0,
            radius_max: 8.0,
            min_points: 6,
            max_relative_depth_jump: 0.1,
            min_eigen_ratio: 1e-4,
        }
    }
}

/// Per-pixel surface normals from a depth (or range) image, oriented towards
/// the sensor. Invalid pixels get the zero vector.
pub fn estimate_normals(depth: &Grid<f64>, k: &Intrinsics, cfg: &NormalConfig) -> Grid<Vector3<f64>> {
    let (w, h) = (depth.width(), depth.height());
    let valid = |x: usize, y: usize| {
        let d = *depth.get(x, y);
        d.is_finite() && k.depth_in_range(d)
    };
    let rows: Vec<Vec<Vector3<f64>>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    if !valid(x, y) {
                        return Vector3::zeros();
                    }
                    normal_at(depth, k, cfg, x, y, &valid).unwrap_or_else(Vector3::zeros)
                })
                .collect()
        })
        .collect();
    Grid::from_vec(w, h, rows.into_iter().flatten().collect())
}

fn normal_at(
    depth: &Grid<f64>,
    k: &Intrinsics,
    cfg: &NormalConfig,
    x: usize,
    y: usize,
    valid: &impl Fn(usize, usize) -> bool,
) -> Option<Vector3<f64>> {
    let (w, h) = (depth.width() as isize, depth.height() as isize);
    let d0 = *depth.get(x, y);
    let tau = (cfg.k_tau / d0).clamp(cfg.radius_min, cfg.radius_max);
    let reach = tau.ceil() as isize;
    let center = k.unproject_unchecked(&Vector2::new(x as f64, y as f64), d0);

    let mut points: Vec<Vector3<f64>> = Vec::with_capacity(((2 * reach + 1) * (2 * reach + 1)) as usize);
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            if ((dx * dx + dy * dy) as f64) >= tau * tau {
                continue;
            }
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx < 0 || ny < 0 || nx >= w || ny >= h {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            if !valid(nx, ny) {
                continue;
            }
            let d = *depth.get(nx, ny);
            if (d - d0).abs() > cfg.max_relative_depth_jump * d0 {
                continue;
            }
            points.push(k.unproject_unchecked(&Vector2::new(nx as f64, ny as f64), d));
        }
    }
    if points.len() < cfg.min_points.max(3) {
        return None;
    }

    let mean = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut scatter = Matrix3::zeros();
    for p in &points {
        let q = p - mean;
        scatter += q * q.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (lmin, lmid, lmax) = (order[0], eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if !(lmax > 0.0) || lmid / lmax < cfg.min_eigen_ratio {
        return None;
    }
    let mut n: Vector3<f64> = eig.eigenvectors.column(lmin).into_owned();
    let norm = n.norm();
    if !(norm > 0.0) {
        return None;
    }
    n /= norm;
    if n.dot(&center) > 0.0 {
        n = -n;
    }
    Some(n)
}
