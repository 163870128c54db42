//! Rigid transforms in SE(3) and the minimal perturbation used by the solver.
//!
//! A perturbation is `[dt, dq]` where `dq` is the imaginary part of a unit
//! quaternion whose real part is non-negative. Perturbations are applied on
//! the right: `X ⊞ Δx = X · exp(Δx)`.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3, Vector6};

use crate::error::{Error, Result};

/// Number of compositions after which a pose chain is projected back onto SO(3).
const REORTHONORMALIZE_EVERY: u32 = 1000;

/// Skew-symmetric matrix such that `skew(p) * q == p.cross(&q)`.
#[inline]
pub fn skew(p: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -p.z, p.y, p.z, 0.0, -p.x, -p.y, p.x, 0.0)
}

/// Closest rotation to `m` in the Frobenius sense (polar decomposition).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Matrix3::identity(),
    };
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// An element of SE(3): `p ↦ R p + t`.
#[derive(Clone, Copy)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    chain: u32,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            chain: 0,
        }
    }

    /// Builds a pose, projecting `rotation` onto SO(3).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation: nearest_rotation(&rotation),
            translation,
            chain: 0,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Pose {
            translation,
            ..Pose::identity()
        }
    }

    pub fn from_quaternion(translation: Vector3<f64>, q: UnitQuaternion<f64>) -> Self {
        Pose {
            rotation: q.to_rotation_matrix().into_inner(),
            translation,
            chain: 0,
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rot = match nalgebra::Unit::try_new(*axis, 1e-15) {
            Some(unit) => Rotation3::from_axis_angle(&unit, angle).into_inner(),
            None => Matrix3::identity(),
        };
        Pose {
            rotation: rot,
            translation,
            chain: 0,
        }
    }

    /// Rotation from a rotation vector (axis scaled by angle).
    pub fn from_rotation_vector(rotvec: &Vector3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation: Rotation3::new(*rotvec).into_inner(),
            translation,
            chain: 0,
        }
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Self {
        Pose::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    #[inline]
    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    #[inline]
    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    #[inline]
    pub fn transform(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
            chain: self.chain,
        }
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        let chain = self.chain.saturating_add(other.chain).saturating_add(1);
        let rotation = self.rotation * other.rotation;
        let translation = self.rotation * other.translation + self.translation;
        if chain >= REORTHONORMALIZE_EVERY {
            Pose {
                rotation: nearest_rotation(&rotation),
                translation,
                chain: 0,
            }
        } else {
            Pose {
                rotation,
                translation,
                chain,
            }
        }
    }

    pub fn orthonormalized(&self) -> Pose {
        Pose::new(self.rotation, self.translation)
    }

    /// `self · exp(v)`.
    pub fn boxplus(&self, v: &Perturbation) -> Result<Pose> {
        Ok(self.compose(&v.exp()?))
    }

    /// Magnitude of the rotation in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let angle = c.acos();
        if angle < 1e-4 {
            // acos loses precision near zero; use the skew part instead.
            let w = Vector3::new(
                self.rotation[(2, 1)] - self.rotation[(1, 2)],
                self.rotation[(0, 2)] - self.rotation[(2, 0)],
                self.rotation[(1, 0)] - self.rotation[(0, 1)],
            );
            (0.5 * w.norm()).asin()
        } else {
            angle
        }
    }

    /// Inverse of [`Perturbation::exp`] on its image; the quaternion is taken
    /// with non-negative real part. Returns an error for half turns, where the
    /// imaginary part reaches unit norm.
    pub fn log(&self) -> Result<Perturbation> {
        let mut q = self.quaternion().into_inner();
        if q.w < 0.0 {
            q = -q;
        }
        let v = Perturbation {
            dt: self.translation,
            dq: q.imag(),
        };
        let norm = v.dq.norm();
        if norm >= 1.0 {
            return Err(Error::InvalidPerturbation { norm });
        }
        Ok(v)
    }

    /// Largest absolute difference across the 12 entries of `[R | t]`.
    pub fn max_abs_diff(&self, other: &Pose) -> f64 {
        let dr = (self.rotation - other.rotation).amax();
        let dt = (self.translation - other.translation).amax();
        dr.max(dt)
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a Pose> for &'a Pose {
    type Output = Pose;
    fn mul(self, rhs: &'a Pose) -> Pose {
        self.compose(rhs)
    }
}

impl fmt::Debug for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.quaternion();
        f.debug_struct("Pose")
            .field("t", &[self.translation.x, self.translation.y, self.translation.z])
            .field("q_xyzw", &[q.i, q.j, q.k, q.w])
            .finish()
    }
}

/// `X_j⁻¹ X_i`: maps points from frame `i` into frame `j`.
pub fn relative(xi: &Pose, xj: &Pose) -> Pose {
    xj.inverse().compose(xi)
}

/// Minimal pose increment `[dt, dq]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Perturbation {
    pub dt: Vector3<f64>,
    pub dq: Vector3<f64>,
}

impl Perturbation {
    pub fn new(dt: Vector3<f64>, dq: Vector3<f64>) -> Self {
        Perturbation { dt, dq }
    }

    pub fn zero() -> Self {
        Perturbation::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Perturbation {
            dt: v.fixed_rows::<3>(0).into_owned(),
            dq: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.dt);
        v.fixed_rows_mut::<3>(3).copy_from(&self.dq);
        v
    }

    /// The pose with rotation `R(dq)` and translation `dt`.
    pub fn exp(&self) -> Result<Pose> {
        let n2 = self.dq.norm_squared();
        if !(n2 < 1.0) {
            return Err(Error::InvalidPerturbation { norm: n2.sqrt() });
        }
        if n2 == 0.0 {
            return Ok(Pose::from_translation(self.dt));
        }
        let w = (1.0 - n2).sqrt();
        let q = UnitQuaternion::new_unchecked(Quaternion::new(w, self.dq.x, self.dq.y, self.dq.z));
        Ok(Pose {
            rotation: q.to_rotation_matrix().into_inner(),
            translation: self.dt,
            chain: 0,
        })
    }
}
