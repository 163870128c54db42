//! Per-pixel multi-cue residuals and their analytic Jacobians.
//!
//! For a source pixel `u` with depth `d` in frame `i` and a destination frame
//! `j`, with sensor mounting `O = (R_o, t_o)`:
//!
//! ```text
//! p_u = R_o π⁻¹(u, d) + t_o
//! y   = R_jᵀ (R_i p_u + t_i − t_j)
//! p̄   = R_oᵀ (y − t_o)
//! e   = [ I_i^g(u) − I_j^g(u'),  ζ(p̄) − I_j^d(u'),  R_oᵀR_jᵀR_iR_o n_u − I_j^n(u') ]
//! ```
//!
//! with `u' = π(p̄)` and `ζ` the depth (pinhole) or range (spherical) of `p̄`.
//! Jacobians are taken with respect to right perturbations of `X_i` and
//! `X_j`; for a unit-quaternion perturbation `R(Δq) p ≈ p − 2⌊p⌋Δq`.

use nalgebra::{Matrix3, Matrix3x6, SMatrix, SVector, Vector2, Vector3};

use crate::cue::{CueImage, CueSampler, NUM_CUES};
use crate::geometry::{skew, Pose};
use crate::sensor::{Intrinsics, ProjectionModel, SensorExtrinsics};

pub type Residual = SVector<f64, NUM_CUES>;
pub type BlockJacobian = SMatrix<f64, NUM_CUES, 6>;

/// Rotations and translations of one ordered frame pair, precomputed once per
/// linearization.
#[derive(Debug, Clone, Copy)]
pub struct PairGeometry {
    offset_rot: Matrix3<f64>,
    offset_t: Vector3<f64>,
    ri: Matrix3<f64>,
    ti: Vector3<f64>,
    rj_t: Matrix3<f64>,
    tj: Vector3<f64>,
    /// `R_oᵀ R_jᵀ R_i`
    chain: Matrix3<f64>,
    /// `R_oᵀ R_jᵀ R_i R_o`
    normal_rot: Matrix3<f64>,
}

/// A source point carried into the destination frame.
#[derive(Debug, Clone, Copy)]
pub struct TransformedPoint {
    /// Point in the platform frame of `i`.
    pub p_u: Vector3<f64>,
    /// Point in the platform frame of `j`.
    pub y: Vector3<f64>,
    /// Point in the sensor frame of `j`.
    pub p_bar: Vector3<f64>,
}

impl PairGeometry {
    pub fn new(xi: &Pose, xj: &Pose, ext: &SensorExtrinsics) -> Self {
        let ro = *ext.offset.rotation();
        let ri = *xi.rotation();
        let rj_t = xj.rotation().transpose();
        let chain = ro.transpose() * rj_t * ri;
        PairGeometry {
            offset_rot: ro,
            offset_t: *ext.offset.translation(),
            ri,
            ti: *xi.translation(),
            rj_t,
            tj: *xj.translation(),
            chain,
            normal_rot: chain * ro,
        }
    }

    #[inline]
    pub fn transform(&self, p_sensor: &Vector3<f64>) -> TransformedPoint {
        let p_u = self.offset_rot * p_sensor + self.offset_t;
        let y = self.rj_t * (self.ri * p_u + self.ti - self.tj);
        let p_bar = self.offset_rot.transpose() * (y - self.offset_t);
        TransformedPoint { p_u, y, p_bar }
    }

    #[inline]
    pub fn rotate_normal(&self, n: &Vector3<f64>) -> Vector3<f64> {
        self.normal_rot * n
    }

    /// `∂p̄/∂Δx_i` and `∂p̄/∂Δx_j`.
    #[inline]
    pub fn point_jacobians(&self, tp: &TransformedPoint) -> (Matrix3x6<f64>, Matrix3x6<f64>) {
        let mut ai = Matrix3x6::zeros();
        ai.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.chain);
        ai.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(self.chain * (-2.0 * skew(&tp.p_u))));
        let ro_t = self.offset_rot.transpose();
        let mut aj = Matrix3x6::zeros();
        aj.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-ro_t));
        aj.fixed_view_mut::<3, 3>(0, 3).copy_from(&(ro_t * (2.0 * skew(&tp.y))));
        (ai, aj)
    }

    /// `∂n̄/∂Δq_i` and `∂n̄/∂Δq_j` for a source normal `n` (sensor frame).
    #[inline]
    pub fn normal_jacobians(&self, n: &Vector3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
        let m = self.offset_rot * n;
        let ji = self.chain * (-2.0 * skew(&m));
        let jj = self.offset_rot.transpose() * (2.0 * skew(&(self.rj_t * self.ri * m)));
        (ji, jj)
    }
}

/// Reprojects source pixel `u` at depth `d` into the destination image.
/// Returns `(u', p̄)` or `None` when the point leaves the destination view.
pub fn reproject(
    u: &Vector2<f64>,
    d: f64,
    xi: &Pose,
    xj: &Pose,
    ext: &SensorExtrinsics,
    k_src: &Intrinsics,
    k_dst: &Intrinsics,
) -> Option<(Vector2<f64>, Vector3<f64>)> {
    let p = k_src.unproject(u, d).ok()?;
    let tp = PairGeometry::new(xi, xj, ext).transform(&p);
    k_dst.project(&tp.p_bar).map(|uv| (uv, tp.p_bar))
}

/// Depth (pinhole) or range (spherical) of a point in the destination frame.
#[inline]
pub fn predicted_depth(model: ProjectionModel, p_bar: &Vector3<f64>) -> f64 {
    match model {
        ProjectionModel::Pinhole => p_bar.z,
        ProjectionModel::Spherical => p_bar.norm(),
    }
}

/// One evaluated pixel of one ordered pair.
#[derive(Debug, Clone, Copy)]
pub struct ResidualBlock {
    pub pixel: (usize, usize),
    pub u_dst: Vector2<f64>,
    pub residual: Residual,
    /// Depth of the reprojected point and the depth measured at `u'`.
    pub predicted_depth: f64,
    pub measured_depth: f64,
    pub jacobians: Option<(BlockJacobian, BlockJacobian)>,
}

impl ResidualBlock {
    /// Predicted surface lies behind the measured one by more than `tolerance`.
    #[inline]
    pub fn is_occluded(&self, tolerance: f64) -> bool {
        self.predicted_depth - self.measured_depth > tolerance
    }
}

/// Evaluates the residual (and optionally Jacobians) of source pixel `(x, y)`.
/// `None` if the source pixel is unusable, the reprojection leaves the
/// destination view, or the destination sample is invalid.
pub fn evaluate_block<S: CueSampler + ?Sized>(
    geom: &PairGeometry,
    src: &CueImage,
    x: usize,
    y: usize,
    dst: &S,
    k_dst: &Intrinsics,
    with_jacobians: bool,
) -> Option<ResidualBlock> {
    if !src.is_usable(x, y) {
        return None;
    }
    let d = src.depth(x, y)?;
    let n = src.normal(x, y)?;
    let u = Vector2::new(x as f64, y as f64);
    let p = src.intrinsics().unproject_unchecked(&u, d);
    evaluate_point(geom, &p, src.intensity(x, y), &n, (x, y), dst, k_dst, with_jacobians)
}

/// Core of [`evaluate_block`] for an already unprojected source point.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_point<S: CueSampler + ?Sized>(
    geom: &PairGeometry,
    p_sensor: &Vector3<f64>,
    src_intensity: f64,
    src_normal: &Vector3<f64>,
    pixel: (usize, usize),
    dst: &S,
    k_dst: &Intrinsics,
    with_jacobians: bool,
) -> Option<ResidualBlock> {
    let tp = geom.transform(p_sensor);
    let u_dst = k_dst.project(&tp.p_bar)?;
    let sample = dst.sample_all(&u_dst)?;
    let zeta = predicted_depth(k_dst.model, &tp.p_bar);
    let n_bar = geom.rotate_normal(src_normal);

    let residual = Residual::from([
        src_intensity - sample.values[0],
        zeta - sample.values[1],
        n_bar.x - sample.values[2],
        n_bar.y - sample.values[3],
        n_bar.z - sample.values[4],
    ]);

    let jacobians = if with_jacobians {
        let proj = k_dst.projective_jacobian(&tp.p_bar).ok()?;
        let (ai, aj) = geom.point_jacobians(&tp);
        let (ni, nj) = geom.normal_jacobians(src_normal);
        let zeta_row = match k_dst.model {
            ProjectionModel::Pinhole => nalgebra::RowVector3::new(0.0, 0.0, 1.0),
            ProjectionModel::Spherical => (tp.p_bar / tp.p_bar.norm()).transpose(),
        };
        // image-gradient chain: ∂I/∂u · ∂π/∂p̄ · ∂p̄/∂Δx
        let pai = proj * ai;
        let paj = proj * aj;
        let mut ji = BlockJacobian::zeros();
        let mut jj = BlockJacobian::zeros();
        for c in 0..NUM_CUES {
            let g = nalgebra::RowVector2::new(sample.gradients[c][0], sample.gradients[c][1]);
            let mut row_i = -(g * pai);
            let mut row_j = -(g * paj);
            match c {
                1 => {
                    row_i += zeta_row * ai;
                    row_j += zeta_row * aj;
                }
                2..=4 => {
                    let k = c - 2;
                    for col in 0..3 {
                        row_i[3 + col] += ni[(k, col)];
                        row_j[3 + col] += nj[(k, col)];
                    }
                }
                _ => {}
            }
            ji.set_row(c, &row_i);
            jj.set_row(c, &row_j);
        }
        Some((ji, jj))
    } else {
        None
    };

    Some(ResidualBlock {
        pixel,
        u_dst,
        residual,
        predicted_depth: zeta,
        measured_depth: sample.values[1],
        jacobians,
    })
}
