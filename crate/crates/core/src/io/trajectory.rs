//! Trajectory text files: `timestamp tx ty tz qx qy qz qw` per line, `#`
//! starts a comment line.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::geometry::Pose;

/// Parses trajectory text. `name` labels errors.
pub fn parse_trajectory(text: &str, name: &str) -> Result<Trajectory> {
    let mut entries: Vec<(f64, Pose)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let mut vals = [0.0f64; 8];
        let mut fields = line.split_whitespace();
        for (k, v) in vals.iter_mut().enumerate() {
            let f = fields
                .next()
                .ok_or_else(|| Error::parse(name, lineno, format!("expected 8 fields, found {k}")))?;
            *v = f
                .parse()
                .map_err(|_| Error::parse(name, lineno, format!("invalid number `{f}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(name, lineno, format!("non-finite value `{f}`")));
            }
        }
        if fields.next().is_some() {
            return Err(Error::parse(name, lineno, "expected 8 fields, found more"));
        }
        let q = Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
        let norm = q.norm();
        if !(norm > 1e-6) || (norm - 1.0).abs() > 1e-3 {
            return Err(Error::parse(name, lineno, format!("quaternion norm {norm} is not 1")));
        }
        let t = vals[0];
        if let Some((prev, _)) = entries.last() {
            if !(t > *prev) {
                return Err(Error::Trajectory(format!(
                    "{name}:{lineno}: timestamp {t} does not follow {prev}"
                )));
            }
        }
        let pose = Pose::from_quaternion(
            Vector3::new(vals[1], vals[2], vals[3]),
            UnitQuaternion::from_quaternion(q),
        );
        entries.push((t, pose));
    }
    Trajectory::new(entries)
}

/// Shortest round-trip representation of every value.
pub fn format_trajectory(traj: &Trajectory) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for (t, p) in traj.entries() {
        let tr = p.translation();
        let q = p.quaternion();
        let q = q.quaternion();
        // canonical sign keeps output stable for q and -q
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            t,
            tr.x,
            tr.y,
            tr.z,
            s * q.i,
            s * q.j,
            s * q.k,
            s * q.w
        )
        .unwrap();
    }
    out
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile {
                path: path.to_path_buf(),
                what: "trajectory".into(),
            }
        } else {
            Error::io(path, e)
        }
    })?;
    parse_trajectory(&text, &path.display().to_string())
}

pub fn save_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    std::fs::write(path, format_trajectory(traj)).map_err(|e| Error::io(path, e))
}
