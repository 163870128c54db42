//! Dataset manifest (TOML) and dataset loading.
//!
//! Paths in the manifest are relative to the manifest's directory. The
//! schema is documented in `docs/formats.md`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::raster::{decode_depth, decode_intensity};
use super::trajectory::load_trajectory;
use crate::ba::SolverConfig;
use crate::cue::{build_pyramid, Grid, NormalConfig, PyramidConfig};
use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::geometry::Pose;
use crate::graph::{FrameNode, GraphCriteria};
use crate::sensor::{Intrinsics, ProjectionModel, SensorExtrinsics};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtrinsicsEntry {
    #[serde(default)]
    pub translation: [f64; 3],
    /// `[qx, qy, qz, qw]`
    #[serde(default = "identity_quaternion")]
    pub rotation: [f64; 4],
}

fn identity_quaternion() -> [f64; 4] {
    [0.0, 0.0, 0.0, 1.0]
}

impl Default for ExtrinsicsEntry {
    fn default() -> Self {
        ExtrinsicsEntry {
            translation: [0.0; 3],
            rotation: identity_quaternion(),
        }
    }
}

impl ExtrinsicsEntry {
    pub fn from_pose(p: &Pose) -> Self {
        let q = p.quaternion();
        let t = p.translation();
        ExtrinsicsEntry {
            translation: [t.x, t.y, t.z],
            rotation: [q.i, q.j, q.k, q.w],
        }
    }

    pub fn to_pose(&self) -> Result<Pose> {
        let [x, y, z, w] = self.rotation;
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !(n.is_finite() && (n - 1.0).abs() <= 1e-3) || self.translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("invalid extrinsics {self:?}")));
        }
        Ok(Pose::from_quaternion(
            Vector3::from(self.translation),
            UnitQuaternion::from_quaternion(q),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorEntry {
    pub id: String,
    /// Meters per raw depth unit.
    pub depth_scale: f64,
    /// Defaults to `<id>/intensity`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity_dir: Option<PathBuf>,
    /// Defaults to `<id>/depth`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_dir: Option<PathBuf>,
    pub intrinsics: Intrinsics,
    #[serde(default)]
    pub extrinsics: ExtrinsicsEntry,
}

impl SensorEntry {
    pub fn intensity_dir(&self) -> PathBuf {
        self.intensity_dir
            .clone()
            .unwrap_or_else(|| Path::new(&self.id).join("intensity"))
    }

    pub fn depth_dir(&self) -> PathBuf {
        self.depth_dir
            .clone()
            .unwrap_or_else(|| Path::new(&self.id).join("depth"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Initial pose guesses.
    pub trajectory: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groundtruth: Option<PathBuf>,
    /// Pyramid scales, coarsest first.
    #[serde(default = "default_scales")]
    pub scales: Vec<f64>,
    /// Seconds; largest image/trajectory timestamp difference accepted.
    #[serde(default = "default_tolerance")]
    pub timestamp_tolerance: f64,
    #[serde(default)]
    pub normals: NormalConfig,
    #[serde(default)]
    pub graph: GraphCriteria,
    #[serde(default)]
    pub solver: SolverConfig,
    pub sensors: Vec<SensorEntry>,
}

fn default_scales() -> Vec<f64> {
    PyramidConfig::default().scales
}

fn default_tolerance() -> f64 {
    1e-4
}

impl Manifest {
    /// Parses and validates manifest text; `name` labels errors.
    pub fn parse(text: &str, name: &str) -> Result<Manifest> {
        let m: Manifest = toml::from_str(text).map_err(|e| Error::Manifest {
            path: name.to_string(),
            message: e.to_string(),
        })?;
        m.validate().map_err(|e| Error::Manifest {
            path: name.to_string(),
            message: match e {
                Error::Config(s) => s,
                other => other.to_string(),
            },
        })?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile {
                    path: path.to_path_buf(),
                    what: "manifest".into(),
                }
            } else {
                Error::io(path, e)
            }
        })?;
        Manifest::parse(&text, &path.display().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest is always representable in TOML")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn pyramid_config(&self) -> PyramidConfig {
        PyramidConfig {
            scales: self.scales.clone(),
            normals: self.normals,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sensors.is_empty() {
            return Err(Error::Config("no sensors declared".into()));
        }
        if self.sensors.len() > 2 {
            return Err(Error::Config(format!(
                "at most two sensors supported, got {}",
                self.sensors.len()
            )));
        }
        let mut ids = BTreeSet::new();
        for s in &self.sensors {
            if s.id.is_empty() || !ids.insert(s.id.as_str()) {
                return Err(Error::Config(format!("sensor id `{}` is empty or repeated", s.id)));
            }
            if !(s.depth_scale > 0.0 && s.depth_scale.is_finite()) {
                return Err(Error::Config(format!(
                    "sensor `{}`: depth_scale must be positive, got {}",
                    s.id, s.depth_scale
                )));
            }
            s.intrinsics
                .validate()
                .map_err(|e| Error::Config(format!("sensor `{}`: {e}", s.id)))?;
            s.extrinsics
                .to_pose()
                .map_err(|e| Error::Config(format!("sensor `{}`: {e}", s.id)))?;
        }
        if self.sensors.len() == 2 && self.fusion_pair().is_none() {
            return Err(Error::Config(
                "two sensors must be one pinhole and one spherical".into(),
            ));
        }
        if !(self.timestamp_tolerance >= 0.0 && self.timestamp_tolerance.is_finite()) {
            return Err(Error::Config("timestamp_tolerance must be non-negative".into()));
        }
        self.pyramid_config().validate()?;
        self.solver.validate()?;
        let g = &self.graph;
        if !(g.max_angle > 0.0 && g.max_translation > 0.0 && (0.0..=1.0).contains(&g.min_overlap_ratio)) {
            return Err(Error::Config(format!("invalid graph criteria {g:?}")));
        }
        Ok(())
    }

    /// Indices of the (pinhole, spherical) sensors when two are declared.
    pub fn fusion_pair(&self) -> Option<(usize, usize)> {
        if self.sensors.len() != 2 {
            return None;
        }
        let model = |k: usize| self.sensors[k].intrinsics.model;
        match (model(0), model(1)) {
            (ProjectionModel::Pinhole, ProjectionModel::Spherical) => Some((0, 1)),
            (ProjectionModel::Spherical, ProjectionModel::Pinhole) => Some((1, 0)),
            _ => None,
        }
    }
}

/// Frames of one sensor, in trajectory order.
#[derive(Debug, Clone)]
pub struct SensorFrames {
    pub id: String,
    pub intrinsics: Intrinsics,
    pub extrinsics: SensorExtrinsics,
    pub nodes: Vec<FrameNode>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub trajectory: Trajectory,
    pub groundtruth: Option<Trajectory>,
    pub sensors: Vec<SensorFrames>,
}

/// Image timestamps found in `dir`, from file stems that parse as numbers.
fn list_images(dir: &Path) -> Result<Vec<(f64, PathBuf)>> {
    let rd = std::fs::read_dir(dir).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile {
                path: dir.to_path_buf(),
                what: "image directory".into(),
            }
        } else {
            Error::io(dir, e)
        }
    })?;
    let mut out = Vec::new();
    for entry in rd {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        if let Some(t) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<f64>().ok())
        {
            out.push((t, path));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

fn nearest(images: &[(f64, PathBuf)], t: f64, tol: f64) -> Option<&PathBuf> {
    let k = images.partition_point(|(s, _)| *s < t);
    [k.checked_sub(1), Some(k)]
        .into_iter()
        .flatten()
        .filter_map(|i| images.get(i))
        .filter(|(s, _)| (s - t).abs() <= tol)
        .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
        .map(|(_, p)| p)
}

/// File name used for a frame image.
pub fn image_file_name(timestamp: f64) -> String {
    format!("{timestamp:.6}.png")
}

fn read_bytes(path: &Path, what: &str) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile {
                path: path.to_path_buf(),
                what: what.to_string(),
            }
        } else {
            Error::io(path, e)
        }
    })
}

fn check_dims(path: &Path, img: &Grid<f64>, k: &Intrinsics) -> Result<()> {
    if img.width() != k.width || img.height() != k.height {
        return Err(Error::DimensionMismatch {
            path: path.to_path_buf(),
            expected_w: k.width,
            expected_h: k.height,
            actual_w: img.width(),
            actual_h: img.height(),
        });
    }
    Ok(())
}

fn raster_error(path: &Path, e: Error) -> Error {
    match e {
        Error::Raster(m) => Error::Raster(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Loads one frame's intensity and depth rasters.
pub fn load_frame(intensity: &Path, depth: &Path, sensor: &SensorEntry) -> Result<(Grid<f64>, Grid<f64>)> {
    let k = &sensor.intrinsics;
    let img = decode_intensity(&read_bytes(intensity, "intensity image")?).map_err(|e| raster_error(intensity, e))?;
    check_dims(intensity, &img, k)?;
    let dep =
        decode_depth(&read_bytes(depth, "depth image")?, sensor.depth_scale).map_err(|e| raster_error(depth, e))?;
    check_dims(depth, &dep, k)?;
    Ok((img, dep))
}

/// Reads the manifest, trajectory and every frame, building cue pyramids.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = Manifest::load(manifest_path)?;
    let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    load_dataset_with(manifest, root)
}

/// Like [`load_dataset`] with an already parsed (possibly edited) manifest;
/// relative paths resolve against `root`.
pub fn load_dataset_with(manifest: Manifest, root: PathBuf) -> Result<Dataset> {
    manifest.validate()?;
    let trajectory = load_trajectory(&root.join(&manifest.trajectory))?;
    let groundtruth = manifest
        .groundtruth
        .as_ref()
        .map(|g| load_trajectory(&root.join(g)))
        .transpose()?;
    let pyr_cfg = manifest.pyramid_config();

    let mut sensors = Vec::new();
    for s in &manifest.sensors {
        let idir = root.join(s.intensity_dir());
        let ddir = root.join(s.depth_dir());
        let intensity_files = list_images(&idir)?;
        let depth_files = list_images(&ddir)?;
        let tol = manifest.timestamp_tolerance;
        let mut jobs = Vec::with_capacity(trajectory.len());
        for (row, (t, pose)) in trajectory.entries().iter().enumerate() {
            let find = |files: &[(f64, PathBuf)], dir: &Path, what: &str| {
                nearest(files, *t, tol).cloned().ok_or_else(|| Error::MissingFile {
                    path: dir.join(image_file_name(*t)),
                    what: format!("{what} for sensor `{}`, trajectory row {} (t = {t})", s.id, row + 1),
                })
            };
            let ip = find(&intensity_files, &idir, "intensity image")?;
            let dp = find(&depth_files, &ddir, "depth image")?;
            jobs.push((row, *t, *pose, ip, dp));
        }
        let nodes = jobs
            .into_par_iter()
            .map(|(row, t, pose, ip, dp)| {
                let (img, dep) = load_frame(&ip, &dp, s)?;
                let pyramid = build_pyramid(&img, &dep, &s.intrinsics, &pyr_cfg)?;
                Ok(FrameNode {
                    id: row,
                    timestamp: t,
                    sensor_id: s.id.clone(),
                    pose_guess: pose,
                    pyramid,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        sensors.push(SensorFrames {
            id: s.id.clone(),
            intrinsics: s.intrinsics,
            extrinsics: SensorExtrinsics::new(s.extrinsics.to_pose()?),
            nodes,
        });
    }
    Ok(Dataset {
        root,
        manifest,
        trajectory,
        groundtruth,
        sensors,
    })
}
