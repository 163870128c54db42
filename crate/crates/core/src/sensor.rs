//! Pinhole (RGB-D) and spherical (LiDAR range image) projection models.
//!
//! Pixel coordinates are `[x, y] = [column, row]` with pixel centers at
//! integer coordinates. For the spherical model the column axis is azimuth
//! `atan2(y, x)` and the row axis is elevation `atan2(z, √(x²+y²))`.

use std::f64::consts::PI;

use nalgebra::{Matrix2x3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionModel {
    Pinhole,
    Spherical,
}

impl ProjectionModel {
    pub fn name(self) -> &'static str {
        match self {
            ProjectionModel::Pinhole => "pinhole",
            ProjectionModel::Spherical => "spherical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub model: ProjectionModel,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub depth_min: f64,
    pub depth_max: f64,
}

impl Intrinsics {
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Self {
        Intrinsics {
            model: ProjectionModel::Pinhole,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            depth_min: 0.1,
            depth_max: 10.0,
        }
    }

    /// Full 360° panorama spanning `[-v_fov/2, v_fov/2]` in elevation, top row
    /// looking up.
    pub fn spherical_panorama(width: usize, height: usize, vertical_fov: f64) -> Self {
        let fx = -(width as f64) / (2.0 * PI);
        let fy = -((height - 1) as f64) / vertical_fov;
        Intrinsics {
            model: ProjectionModel::Spherical,
            fx,
            fy,
            cx: width as f64 / 2.0,
            cy: (height - 1) as f64 / 2.0,
            width,
            height,
            depth_min: 0.1,
            depth_max: 30.0,
        }
    }

    pub fn with_depth_range(mut self, min: f64, max: f64) -> Self {
        self.depth_min = min;
        self.depth_max = max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx.is_finite() && self.fy.is_finite() && self.fx != 0.0 && self.fy != 0.0) {
            return Err(Error::Config(format!(
                "focal terms must be finite and non-zero (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::Config("principal point must be finite".into()));
        }
        if self.width < 2 || self.height < 2 {
            return Err(Error::Config(format!(
                "image must be at least 2x2, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.depth_min > 0.0 && self.depth_min < self.depth_max) {
            return Err(Error::Config(format!(
                "depth range must satisfy 0 < min < max, got [{}, {}]",
                self.depth_min, self.depth_max
            )));
        }
        Ok(())
    }

    /// Intrinsics of an image resampled by `scale`: dimensions are floored
    /// and the pixel grid is mapped center-to-center.
    pub fn scaled(&self, scale: f64) -> Intrinsics {
        Intrinsics {
            fx: self.fx * scale,
            fy: self.fy * scale,
            cx: (self.cx + 0.5) * scale - 0.5,
            cy: (self.cy + 0.5) * scale - 0.5,
            width: (self.width as f64 * scale).floor() as usize,
            height: (self.height as f64 * scale).floor() as usize,
            ..*self
        }
    }

    /// Depth (pinhole, z-component) or range (spherical, Euclidean norm).
    #[inline]
    pub fn depth_of(&self, p: &Vector3<f64>) -> f64 {
        match self.model {
            ProjectionModel::Pinhole => p.z,
            ProjectionModel::Spherical => p.norm(),
        }
    }

    #[inline]
    pub fn depth_in_range(&self, d: f64) -> bool {
        d >= self.depth_min && d <= self.depth_max
    }

    #[inline]
    pub fn contains(&self, u: &Vector2<f64>) -> bool {
        u.x >= 0.0 && u.y >= 0.0 && u.x < self.width as f64 && u.y < self.height as f64
    }

    /// Continuous pixel coordinates of `p` ignoring image bounds and depth
    /// range. `None` only when the model is undefined at `p`.
    #[inline]
    pub fn project_unbounded(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        match self.model {
            ProjectionModel::Pinhole => {
                if !(p.z > 0.0) {
                    return None;
                }
                Some(Vector2::new(
                    self.fx * p.x / p.z + self.cx,
                    self.fy * p.y / p.z + self.cy,
                ))
            }
            ProjectionModel::Spherical => {
                let rho = (p.x * p.x + p.y * p.y).sqrt();
                if rho == 0.0 && p.z == 0.0 {
                    return None;
                }
                let az = p.y.atan2(p.x);
                let el = p.z.atan2(rho);
                Some(Vector2::new(self.fx * az + self.cx, self.fy * el + self.cy))
            }
        }
    }

    /// Projects `p`; `None` when it falls outside the image, behind a pinhole
    /// camera, or outside the valid depth range. Spherical columns wrap with
    /// period `2π·|fx|`.
    pub fn project(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return None;
        }
        if !self.depth_in_range(self.depth_of(p)) {
            return None;
        }
        let mut u = self.project_unbounded(p)?;
        if self.model == ProjectionModel::Spherical {
            let period = 2.0 * PI * self.fx.abs();
            let w = self.width as f64;
            if u.x < 0.0 {
                u.x += period;
            } else if u.x >= w {
                u.x -= period;
            }
            // exactly one period away can land on w after rounding
            if u.x >= w && (u.x - w) < 1e-9 * w {
                u.x = 0.0;
            }
        }
        self.contains(&u).then_some(u)
    }

    /// Point at pixel `u` with depth (pinhole) or range (spherical) `d`.
    pub fn unproject(&self, u: &Vector2<f64>, d: f64) -> Result<Vector3<f64>> {
        if !self.depth_in_range(d) {
            return Err(Error::InvalidDepth {
                depth: d,
                min: self.depth_min,
                max: self.depth_max,
            });
        }
        Ok(self.unproject_unchecked(u, d))
    }

    #[inline]
    pub(crate) fn unproject_unchecked(&self, u: &Vector2<f64>, d: f64) -> Vector3<f64> {
        match self.model {
            ProjectionModel::Pinhole => Vector3::new((u.x - self.cx) / self.fx * d, (u.y - self.cy) / self.fy * d, d),
            ProjectionModel::Spherical => {
                let az = (u.x - self.cx) / self.fx;
                let el = (u.y - self.cy) / self.fy;
                let (se, ce) = el.sin_cos();
                let (sa, ca) = az.sin_cos();
                Vector3::new(ce * ca * d, ce * sa * d, se * d)
            }
        }
    }

    /// Unit-depth ray direction through `u` (not normalized for pinhole).
    pub fn ray(&self, u: &Vector2<f64>) -> Vector3<f64> {
        self.unproject_unchecked(u, 1.0)
    }

    /// `∂project/∂p` at `p`.
    pub fn projective_jacobian(&self, p: &Vector3<f64>) -> Result<Matrix2x3<f64>> {
        match self.model {
            ProjectionModel::Pinhole => {
                // v = K p; the third row of K is [0 0 1] so v_z = p_z
                let vz = p.z;
                if vz.abs() < 1e-12 {
                    return Err(Error::SingularJacobian { point: [p.x, p.y, p.z] });
                }
                let vx = self.fx * p.x + self.cx * p.z;
                let vy = self.fy * p.y + self.cy * p.z;
                let inv = 1.0 / (vz * vz);
                let dphi = Matrix2x3::new(vz, 0.0, -vx, 0.0, vz, -vy) * inv;
                let k = nalgebra::Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0);
                Ok(dphi * k)
            }
            ProjectionModel::Spherical => {
                let rho2 = p.x * p.x + p.y * p.y;
                if rho2 < 1e-24 {
                    return Err(Error::SingularJacobian { point: [p.x, p.y, p.z] });
                }
                let rho = rho2.sqrt();
                let r2 = rho2 + p.z * p.z;
                Ok(Matrix2x3::new(
                    self.fx * -p.y / rho2,
                    self.fx * p.x / rho2,
                    0.0,
                    self.fy * (-p.x * p.z / rho) / r2,
                    self.fy * (-p.y * p.z / rho) / r2,
                    self.fy * rho / r2,
                ))
            }
        }
    }
}

/// Rigid mounting of a sensor on the platform: `p_platform = offset · p_sensor`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SensorExtrinsics {
    pub offset: Pose,
}

impl SensorExtrinsics {
    pub fn new(offset: Pose) -> Self {
        SensorExtrinsics { offset }
    }

    pub fn identity() -> Self {
        SensorExtrinsics::default()
    }
}
