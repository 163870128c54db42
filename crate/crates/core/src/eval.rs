//! Trajectory accuracy: timestamp association, Horn alignment and ATE RMSE.

use nalgebra::{Matrix3, Matrix4, Quaternion, SymmetricEigen, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Pose;

pub const DEFAULT_MAX_DT: f64 = 0.02;

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    entries: Vec<(f64, Pose)>,
}

impl Trajectory {
    /// Builds a trajectory; timestamps must be finite and strictly increasing.
    pub fn new(entries: Vec<(f64, Pose)>) -> Result<Self> {
        for (k, (t, _)) in entries.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::Trajectory(format!("entry {k}: non-finite timestamp")));
            }
        }
        for (k, w) in entries.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Trajectory(format!(
                    "timestamps not strictly increasing at entry {}: {} after {}",
                    k + 1,
                    w[1].0,
                    w[0].0
                )));
            }
        }
        Ok(Trajectory { entries })
    }

    pub fn from_poses(timestamps: &[f64], poses: &[Pose]) -> Result<Self> {
        assert_eq!(timestamps.len(), poses.len());
        Trajectory::new(timestamps.iter().copied().zip(poses.iter().copied()).collect())
    }

    pub fn entries(&self) -> &[(f64, Pose)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.entries.iter().map(|e| e.1).collect()
    }

    /// Left-multiplies every pose by `g`.
    pub fn transformed(&self, g: &Pose) -> Trajectory {
        Trajectory {
            entries: self.entries.iter().map(|(t, p)| (*t, g * p)).collect(),
        }
    }
}

/// Greedy one-to-one association by nearest timestamp. Candidate pairs within
/// `max_dt` are taken in order of increasing `|dt|`; the result is sorted by
/// estimate index.
pub fn associate(est: &Trajectory, reference: &Trajectory, max_dt: f64) -> Result<Vec<(usize, usize)>> {
    if est.is_empty() || reference.is_empty() {
        return Err(Error::NoAssociation { max_dt });
    }
    let rts = reference.timestamps();
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, (t, _)) in est.entries().iter().enumerate() {
        // references are sorted; only a window around t can match
        let lo = rts.partition_point(|&r| r < t - max_dt);
        for (j, &r) in rts.iter().enumerate().skip(lo) {
            if r > t + max_dt {
                break;
            }
            let dt = (r - t).abs();
            if dt <= max_dt {
                candidates.push((dt, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_est = vec![false; est.len()];
    let mut used_ref = vec![false; reference.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_est[i] && !used_ref[j] {
            used_est[i] = true;
            used_ref[j] = true;
            pairs.push((i, j));
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoAssociation { max_dt });
    }
    pairs.sort_unstable();
    Ok(pairs)
}

/// Closed-form rigid alignment (Horn's unit-quaternion method): the pose `g`
/// minimizing `Σ ‖ref_k − g(est_k)‖²`.
pub fn horn_align(est: &[Vector3<f64>], reference: &[Vector3<f64>]) -> Result<Pose> {
    if est.len() != reference.len() {
        return Err(Error::DegenerateAlignment(format!(
            "{} estimated vs {} reference points",
            est.len(),
            reference.len()
        )));
    }
    if est.len() < 3 {
        return Err(Error::DegenerateAlignment(format!(
            "need at least 3 point pairs, got {}",
            est.len()
        )));
    }
    let n = est.len() as f64;
    let ce = est.iter().sum::<Vector3<f64>>() / n;
    let cr = reference.iter().sum::<Vector3<f64>>() / n;

    let mut spread = Matrix3::zeros();
    let mut m = Matrix3::zeros();
    for (e, r) in est.iter().zip(reference) {
        let (a, b) = (e - ce, r - cr);
        spread += a * a.transpose();
        m += a * b.transpose();
    }
    check_non_collinear(&spread)?;
    check_non_collinear(&{
        let mut s = Matrix3::zeros();
        for r in reference {
            let b = r - cr;
            s += b * b.transpose();
        }
        s
    })?;

    let (sxx, sxy, sxz) = (m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let (syx, syy, syz) = (m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let (szx, szy, szz) = (m[(2, 0)], m[(2, 1)], m[(2, 2)]);
    #[rustfmt::skip]
    let nmat = Matrix4::new(
        sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,
        syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,
        szx - sxz,       sxy + syx,        -sxx + syy - szz, syz + szy,
        sxy - syx,       szx + sxz,        syz + szy,        -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(nmat);
    let best = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(best);
    let q = UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]));
    let r = q.to_rotation_matrix().into_inner();
    let t = cr - r * ce;
    Ok(Pose::new(r, t))
}

fn check_non_collinear(spread: &Matrix3<f64>) -> Result<()> {
    let ev = SymmetricEigen::new(*spread).eigenvalues;
    let mut sorted = [ev[0], ev[1], ev[2]];
    sorted.sort_by(f64::total_cmp);
    if !(sorted[2] > 0.0) {
        return Err(Error::DegenerateAlignment("all points coincide".into()));
    }
    if sorted[1] <= 1e-12 * sorted[2] {
        return Err(Error::DegenerateAlignment("points are collinear".into()));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct AteReport {
    /// Translational RMSE after alignment (meters).
    pub rmse: f64,
    /// Mean rotation error after alignment (radians); auxiliary.
    pub mean_rotation_error: f64,
    pub pairs: usize,
    /// Transform applied to the estimate.
    pub alignment: Pose,
}

/// RMSE of translational differences after SE(3) alignment of `est` onto
/// `reference`.
pub fn ate(est: &Trajectory, reference: &Trajectory, max_dt: f64) -> Result<AteReport> {
    let pairs = associate(est, reference, max_dt)?;
    let pe: Vec<Vector3<f64>> = pairs.iter().map(|&(i, _)| *est.entries()[i].1.translation()).collect();
    let pr: Vec<Vector3<f64>> = pairs
        .iter()
        .map(|&(_, j)| *reference.entries()[j].1.translation())
        .collect();
    let g = horn_align(&pe, &pr)?;
    let mut sq = 0.0;
    let mut rot = 0.0;
    for &(i, j) in &pairs {
        let aligned = g * est.entries()[i].1;
        let refp = reference.entries()[j].1;
        sq += (aligned.translation() - refp.translation()).norm_squared();
        rot += crate::geometry::relative(&aligned, &refp).rotation_angle();
    }
    let n = pairs.len() as f64;
    Ok(AteReport {
        rmse: (sq / n).sqrt(),
        mean_rotation_error: rot / n,
        pairs: pairs.len(),
        alignment: g,
    })
}

pub fn ate_rmse(est: &Trajectory, reference: &Trajectory) -> Result<f64> {
    ate(est, reference, DEFAULT_MAX_DT).map(|r| r.rmse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        Pose::from_axis_angle(
            &axis,
            rng.random_range(-3.0..3.0),
            Vector3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            ),
        )
    }

    fn random_trajectory(rng: &mut ChaCha8Rng, n: usize) -> Trajectory {
        let entries = (0..n).map(|k| (k as f64 * 0.1, random_pose(rng))).collect();
        Trajectory::new(entries).unwrap()
    }

    #[test]
    fn association_identity_shift_and_disjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_trajectory(&mut rng, 6);
        assert_eq!(
            associate(&a, &a, 0.02).unwrap(),
            (0..6).map(|k| (k, k)).collect::<Vec<_>>()
        );
        let shifted = Trajectory::new(a.entries().iter().map(|(t, p)| (t + 0.005, *p)).collect()).unwrap();
        assert_eq!(associate(&shifted, &a, 0.02).unwrap().len(), 6);
        let later = Trajectory::new(a.entries().iter().map(|(t, p)| (t + 100.0, *p)).collect()).unwrap();
        assert!(matches!(associate(&later, &a, 0.02), Err(Error::NoAssociation { .. })));
    }

    #[test]
    fn association_uses_each_reference_once() {
        let p = Pose::identity();
        let est = Trajectory::new(vec![(1.000, p), (1.004, p)]).unwrap();
        let reference = Trajectory::new(vec![(1.003, p)]).unwrap();
        assert_eq!(associate(&est, &reference, 0.02).unwrap(), vec![(1, 0)]);
    }

    #[test]
    fn horn_recovers_identity_and_rigid_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Vector3<f64>> = (0..10)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                )
            })
            .collect();
        let g = horn_align(&pts, &pts).unwrap();
        assert!(g.max_abs_diff(&Pose::identity()) < 1e-12);
        for _ in 0..20 {
            let x = random_pose(&mut rng);
            let moved: Vec<_> = pts.iter().map(|p| x.transform(p)).collect();
            let g = horn_align(&pts, &moved).unwrap();
            assert!(g.max_abs_diff(&x) < 1e-10, "{g:?} vs {x:?}");
        }
    }

    #[test]
    fn horn_rejects_degenerate_sets() {
        let line: Vec<_> = (0..5).map(|k| Vector3::new(k as f64, 2.0 * k as f64, 0.0)).collect();
        assert!(matches!(horn_align(&line, &line), Err(Error::DegenerateAlignment(_))));
        let same = vec![Vector3::new(1.0, 1.0, 1.0); 4];
        assert!(horn_align(&same, &same).is_err());
        assert!(horn_align(&line[..2], &line[..2]).is_err());
    }

    /// Residual of aligning `est` onto `reference` with `g`.
    fn alignment_cost(g: &Pose, est: &[Vector3<f64>], reference: &[Vector3<f64>]) -> f64 {
        est.iter()
            .zip(reference)
            .map(|(e, r)| (r - g.transform(e)).norm_squared())
            .sum()
    }

    #[test]
    fn horn_beats_grid_search_on_planar_toy() {
        // three points in the xy-plane, reference rotated about z by 0.3 rad,
        // shifted and perturbed by noise
        let est = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 2.0, 0.0),
        ];
        let truth = Pose::from_axis_angle(&Vector3::z(), 0.3, Vector3::new(0.5, -0.2, 0.0));
        let noise = [
            Vector3::new(0.02, -0.01, 0.0),
            Vector3::new(-0.015, 0.01, 0.0),
            Vector3::new(0.0, 0.02, 0.0),
        ];
        let reference: Vec<_> = est.iter().zip(&noise).map(|(p, n)| truth.transform(p) + n).collect();
        let g = horn_align(&est, &reference).unwrap();
        let horn_cost = alignment_cost(&g, &est, &reference);

        // brute force over planar rigid motions; the optimum stays planar
        let mut best = f64::INFINITY;
        let steps = 60;
        for a in 0..=steps {
            let angle = 0.25 + 0.1 * a as f64 / steps as f64;
            for bx in 0..=steps {
                let tx = 0.4 + 0.2 * bx as f64 / steps as f64;
                for by in 0..=steps {
                    let ty = -0.3 + 0.2 * by as f64 / steps as f64;
                    let cand = Pose::from_axis_angle(&Vector3::z(), angle, Vector3::new(tx, ty, 0.0));
                    best = best.min(alignment_cost(&cand, &est, &reference));
                }
            }
        }
        assert!(horn_cost <= best + 1e-12);
        // grid resolution ~ 1.7e-3 rad / 3.3e-3 m bounds the gap
        assert!(best - horn_cost < 1e-4, "grid {best} vs horn {horn_cost}");
    }

    #[test]
    fn horn_is_no_worse_than_random_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let est: Vec<_> = (0..8)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                )
            })
            .collect();
        let x = random_pose(&mut rng);
        let reference: Vec<_> = est
            .iter()
            .map(|p| {
                x.transform(p)
                    + Vector3::new(
                        rng.random_range(-0.1..0.1),
                        rng.random_range(-0.1..0.1),
                        rng.random_range(-0.1..0.1),
                    )
            })
            .collect();
        let g = horn_align(&est, &reference).unwrap();
        let c = alignment_cost(&g, &est, &reference);
        for _ in 0..100 {
            let small = Pose::from_axis_angle(
                &Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ),
                rng.random_range(-0.05..0.05),
                Vector3::new(
                    rng.random_range(-0.05..0.05),
                    rng.random_range(-0.05..0.05),
                    rng.random_range(-0.05..0.05),
                ),
            );
            assert!(c <= alignment_cost(&(small * g), &est, &reference) + 1e-12);
            assert!(c <= alignment_cost(&random_pose(&mut rng), &est, &reference));
        }
    }

    #[test]
    fn ate_zero_for_rigidly_moved_copy_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_trajectory(&mut rng, 12);
        assert_eq!(ate_rmse(&a, &a).unwrap(), 0.0_f64.max(ate_rmse(&a, &a).unwrap()));
        assert!(ate_rmse(&a, &a).unwrap() < 1e-12);
        for _ in 0..10 {
            let g = random_pose(&mut rng);
            assert!(ate_rmse(&a.transformed(&g), &a).unwrap() < 1e-9);
        }
        let b = Trajectory::new(
            a.entries()
                .iter()
                .map(|(t, p)| {
                    let jitter = Vector3::new(
                        rng.random_range(-0.1..0.1),
                        rng.random_range(-0.1..0.1),
                        rng.random_range(-0.1..0.1),
                    );
                    (*t, Pose::from_quaternion(p.translation() + jitter, p.quaternion()))
                })
                .collect(),
        )
        .unwrap();
        let ab = ate_rmse(&a, &b).unwrap();
        let ba = ate_rmse(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn common_offset_is_removed_by_alignment() {
        let reference = Trajectory::new(vec![
            (0.0, Pose::from_translation(Vector3::new(0.0, 0.0, 0.0))),
            (1.0, Pose::from_translation(Vector3::new(1.0, 0.0, 0.0))),
            (2.0, Pose::from_translation(Vector3::new(1.0, 1.0, 0.0))),
        ])
        .unwrap();
        let shift = Pose::from_translation(Vector3::new(0.01, 0.0, 0.0));
        assert!(ate_rmse(&reference.transformed(&shift), &reference).unwrap() < 1e-12);
        // without alignment the same estimate would be 1 cm off everywhere
        let raw: f64 = reference
            .poses()
            .iter()
            .map(|p| ((shift * *p).translation() - p.translation()).norm_squared())
            .sum::<f64>()
            / 3.0;
        assert!((raw.sqrt() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn ate_of_uniformly_scaled_tetrahedron() {
        // a regular tetrahedron on the unit sphere, estimate scaled by 1.1:
        // by symmetry the best rigid fit is the identity, leaving every
        // vertex 0.1 m off, so RMSE = 0.1
        let s = 1.0 / 3f64.sqrt();
        let verts = [
            Vector3::new(s, s, s),
            Vector3::new(s, -s, -s),
            Vector3::new(-s, s, -s),
            Vector3::new(-s, -s, s),
        ];
        let mk = |k: f64| {
            Trajectory::new(
                verts
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (i as f64, Pose::from_translation(v * k)))
                    .collect(),
            )
            .unwrap()
        };
        let r = ate(&mk(1.1), &mk(1.0), DEFAULT_MAX_DT).unwrap();
        assert!((r.rmse - 0.1).abs() < 1e-12, "{}", r.rmse);
        assert!(r.alignment.max_abs_diff(&Pose::identity()) < 1e-12);
        assert_eq!(r.pairs, 4);
    }

    #[test]
    fn trajectory_requires_increasing_timestamps() {
        let p = Pose::identity();
        assert!(Trajectory::new(vec![(1.0, p), (1.0, p)]).is_err());
        assert!(Trajectory::new(vec![(2.0, p), (1.0, p)]).is_err());
        assert!(Trajectory::new(vec![(f64::NAN, p)]).is_err());
    }
}
