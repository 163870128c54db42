//! Ray-cast renderer for scenes of axis-aligned boxes and planes, and the
//! synthetic dataset writer built on it.

use std::path::Path;

use nalgebra::{Matrix3, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cue::Grid;
use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::geometry::Pose;
use crate::io::manifest::{image_file_name, ExtrinsicsEntry, Manifest, SensorEntry, MANIFEST_FILE};
use crate::io::raster::{encode_depth, encode_intensity};
use crate::io::trajectory::save_trajectory;
use crate::sensor::Intrinsics;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub albedo: f64,
}

/// Infinite plane `normal · x = offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneSpec {
    pub normal: [f64; 3],
    pub offset: f64,
    pub albedo: f64,
}

/// One sinusoidal albedo modulation term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextureTerm {
    pub amplitude: f64,
    /// rad/m
    pub frequency: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub boxes: Vec<BoxSpec>,
    #[serde(default)]
    pub planes: Vec<PlaneSpec>,
    /// World direction pointing towards the light.
    #[serde(default = "default_light")]
    pub light: [f64; 3],
    #[serde(default = "default_ambient")]
    pub ambient: f64,
    #[serde(default = "default_texture")]
    pub texture: Vec<TextureTerm>,
}

fn default_light() -> [f64; 3] {
    [0.3, -0.8, -0.5]
}

fn default_ambient() -> f64 {
    0.35
}

fn default_texture() -> Vec<TextureTerm> {
    vec![
        TextureTerm {
            amplitude: 0.3,
            frequency: 2.0,
            phase: 0.0,
        },
        TextureTerm {
            amplitude: 0.2,
            frequency: 5.0,
            phase: 1.3,
        },
        TextureTerm {
            amplitude: 0.1,
            frequency: 11.0,
            phase: 2.1,
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Distance along the unit ray.
    pub distance: f64,
    pub point: Vector3<f64>,
    /// Unit normal facing the ray origin.
    pub normal: Vector3<f64>,
    pub albedo: f64,
}

const MIN_DISTANCE: f64 = 1e-9;

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.boxes.is_empty() && self.planes.is_empty() {
            return Err(Error::Config("scene has no surfaces".into()));
        }
        for b in &self.boxes {
            if (0..3).any(|a| !(b.min[a] < b.max[a])) {
                return Err(Error::Config(format!("box min {:?} not below max {:?}", b.min, b.max)));
            }
        }
        for p in &self.planes {
            let n = Vector3::from(p.normal).norm();
            if !(n > 1e-12 && n.is_finite() && p.offset.is_finite()) {
                return Err(Error::Config(format!("plane with invalid normal {:?}", p.normal)));
            }
        }
        let l = Vector3::from(self.light).norm();
        if !(l > 1e-12 && l.is_finite()) {
            return Err(Error::Config("light direction must be non-zero".into()));
        }
        if !(0.0..=1.0).contains(&self.ambient) {
            return Err(Error::Config(format!("ambient {} outside [0, 1]", self.ambient)));
        }
        Ok(())
    }

    /// Nearest intersection of the ray `origin + t·dir` (`dir` unit) with
    /// any surface; box faces are hit from either side.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut consider = |t: f64, normal: Vector3<f64>, albedo: f64| {
            if t > MIN_DISTANCE && best.is_none_or(|b| t < b.distance) {
                let n = if normal.dot(dir) > 0.0 { -normal } else { normal };
                best = Some(Hit {
                    distance: t,
                    point: origin + dir * t,
                    normal: n,
                    albedo,
                });
            }
        };
        for b in &self.boxes {
            for axis in 0..3 {
                if dir[axis] == 0.0 {
                    continue;
                }
                for v in [b.min[axis], b.max[axis]] {
                    let t = (v - origin[axis]) / dir[axis];
                    let p = origin + dir * t;
                    let inside = (0..3)
                        .filter(|&a| a != axis)
                        .all(|a| p[a] >= b.min[a] - 1e-12 && p[a] <= b.max[a] + 1e-12);
                    if inside {
                        let mut n = Vector3::zeros();
                        n[axis] = 1.0;
                        consider(t, n, b.albedo);
                    }
                }
            }
        }
        for pl in &self.planes {
            let n = Vector3::from(pl.normal);
            let scale = n.norm();
            let n = n / scale;
            let denom = n.dot(dir);
            if denom.abs() < 1e-15 {
                continue;
            }
            let t = (pl.offset / scale - n.dot(origin)) / denom;
            consider(t, n, pl.albedo);
        }
        best
    }

    pub fn albedo_at(&self, hit: &Hit) -> f64 {
        let p = hit.point;
        let modulation: f64 = self
            .texture
            .iter()
            .map(|t| {
                let f = t.frequency;
                t.amplitude
                    * ((f * p.x + t.phase).sin()
                        + (f * p.y + 2.0 * t.phase + 1.0).sin()
                        + (f * p.z + 3.0 * t.phase + 2.0).sin())
                    / 3.0
            })
            .sum();
        hit.albedo * (1.0 + modulation)
    }

    /// Albedo under a fixed Lambert light, clamped to `[0, 1]`.
    pub fn shade(&self, hit: &Hit) -> f64 {
        let l = Vector3::from(self.light).normalize();
        let lambert = hit.normal.dot(&l).max(0.0);
        (self.albedo_at(hit) * (self.ambient + (1.0 - self.ambient) * lambert)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub intensity: Grid<f64>,
    /// Depth (pinhole) or range (spherical); 0 where nothing valid is hit.
    pub depth: Grid<f64>,
    /// Analytic normals in the sensor frame; zero where invalid.
    pub normals: Grid<Vector3<f64>>,
}

/// Renders the view of a sensor whose pose in the world is `sensor_pose`.
pub fn render(scene: &SceneSpec, k: &Intrinsics, sensor_pose: &Pose) -> RenderedFrame {
    let r: &Matrix3<f64> = sensor_pose.rotation();
    let origin = *sensor_pose.translation();
    let pixels: Vec<(f64, f64, Vector3<f64>)> = (0..k.width * k.height)
        .into_par_iter()
        .map(|idx| {
            let (x, y) = (idx % k.width, idx / k.width);
            let ray = k.ray(&Vector2::new(x as f64, y as f64)).normalize();
            match scene.intersect(&origin, &(r * ray)) {
                Some(hit) => {
                    let d = k.depth_of(&(ray * hit.distance));
                    if k.depth_in_range(d) {
                        (scene.shade(&hit), d, r.transpose() * hit.normal)
                    } else {
                        (scene.shade(&hit), 0.0, Vector3::zeros())
                    }
                }
                None => (0.0, 0.0, Vector3::zeros()),
            }
        })
        .collect();
    let (w, h) = (k.width, k.height);
    RenderedFrame {
        intensity: Grid::from_vec(w, h, pixels.iter().map(|p| p.0).collect()),
        depth: Grid::from_vec(w, h, pixels.iter().map(|p| p.1).collect()),
        normals: Grid::from_vec(w, h, pixels.iter().map(|p| p.2).collect()),
    }
}

/// Gaussian pose noise: per-axis `sigma_t` on translation and per-axis
/// `sigma_r` on the rotation vector, applied on the right. The first pose is
/// kept when `keep_first` is set.
pub fn perturb_trajectory(
    traj: &Trajectory,
    sigma_t: f64,
    sigma_r: f64,
    seed: u64,
    keep_first: bool,
) -> Result<Trajectory> {
    let nt = Normal::new(0.0, sigma_t).map_err(|e| Error::Config(format!("sigma_t: {e}")))?;
    let nr = Normal::new(0.0, sigma_r).map_err(|e| Error::Config(format!("sigma_r: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = traj
        .entries()
        .iter()
        .enumerate()
        .map(|(k, (t, p))| {
            let dt = Vector3::new(nt.sample(&mut rng), nt.sample(&mut rng), nt.sample(&mut rng));
            let dr = Vector3::new(nr.sample(&mut rng), nr.sample(&mut rng), nr.sample(&mut rng));
            if k == 0 && keep_first {
                (*t, *p)
            } else {
                (*t, *p * Pose::from_rotation_vector(&dr, dt))
            }
        })
        .collect();
    Trajectory::new(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseEntry {
    pub timestamp: f64,
    pub translation: [f64; 3],
    /// `[qx, qy, qz, qw]`
    pub rotation: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    /// Meters.
    pub sigma_t: f64,
    /// Radians.
    pub sigma_r: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Everything needed to generate a dataset: scene, sensors, ground-truth
/// poses and an optional perturbation for the initial guess.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub scene: SceneSpec,
    pub sensors: Vec<SensorEntry>,
    pub poses: Vec<PoseEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
}

impl SynthSpec {
    pub fn parse(text: &str, name: &str) -> Result<SynthSpec> {
        let spec: SynthSpec = toml::from_str(text).map_err(|e| Error::Manifest {
            path: name.to_string(),
            message: e.to_string(),
        })?;
        spec.scene.validate()?;
        spec.groundtruth()?;
        if spec.sensors.is_empty() {
            return Err(Error::Config("scene spec declares no sensors".into()));
        }
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec is always representable in TOML")
    }

    pub fn groundtruth(&self) -> Result<Trajectory> {
        let entries = self
            .poses
            .iter()
            .map(|p| {
                let e = ExtrinsicsEntry {
                    translation: p.translation,
                    rotation: p.rotation,
                };
                Ok((p.timestamp, e.to_pose()?))
            })
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(entries)
    }

    /// The built-in box room: a textured room with two boxes inside, ten
    /// poses on a gentle arc, an RGB-D camera (128×96) and a LiDAR panorama
    /// (256×64) mounted with its z axis up.
    pub fn box_room() -> SynthSpec {
        let scene = SceneSpec {
            boxes: vec![
                BoxSpec {
                    min: [-2.0, -1.2, -2.0],
                    max: [2.0, 1.3, 3.0],
                    albedo: 0.7,
                },
                BoxSpec {
                    min: [-1.2, 0.5, 1.2],
                    max: [-0.4, 1.3, 2.0],
                    albedo: 0.5,
                },
                BoxSpec {
                    min: [0.6, -0.2, 1.8],
                    max: [1.3, 0.6, 2.4],
                    albedo: 0.6,
                },
            ],
            planes: vec![],
            light: default_light(),
            ambient: default_ambient(),
            texture: default_texture(),
        };
        SynthSpec {
            scene,
            sensors: vec![box_room_camera(), box_room_lidar()],
            poses: box_room_trajectory(10),
            perturbation: None,
            scales: None,
        }
    }
}

pub fn box_room_camera() -> SensorEntry {
    SensorEntry {
        id: "rgbd".into(),
        depth_scale: 1e-4,
        intensity_dir: None,
        depth_dir: None,
        intrinsics: Intrinsics::pinhole(100.0, 100.0, 63.5, 47.5, 128, 96),
        extrinsics: ExtrinsicsEntry::default(),
    }
}

pub fn box_room_lidar() -> SensorEntry {
    // lidar x forward = camera z, y left = camera -x, z up = camera -y
    let r = Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0);
    SensorEntry {
        id: "lidar".into(),
        depth_scale: 2e-4,
        intensity_dir: None,
        depth_dir: None,
        intrinsics: Intrinsics::spherical_panorama(256, 64, 1.2),
        extrinsics: ExtrinsicsEntry::from_pose(&Pose::new(r, Vector3::new(0.0, -0.1, 0.0))),
    }
}

pub fn box_room_trajectory(n: usize) -> Vec<PoseEntry> {
    (0..n)
        .map(|k| {
            let s = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
            let yaw = -0.15 + 0.3 * s;
            let pitch = 0.05 * (2.0 * std::f64::consts::PI * s).sin();
            let p = Pose::from_rotation_vector(
                &Vector3::new(pitch, yaw, 0.0),
                Vector3::new(-0.45 + 0.9 * s, 0.05 * (std::f64::consts::PI * s).sin(), -0.2 + 0.4 * s),
            );
            let e = ExtrinsicsEntry::from_pose(&p);
            PoseEntry {
                timestamp: 0.1 * k as f64,
                translation: e.translation,
                rotation: e.rotation,
            }
        })
        .collect()
}

/// Renders every sensor at every ground-truth pose and writes a dataset
/// directory: manifest, trajectory (the perturbed guess when a perturbation
/// is given, otherwise ground truth), `groundtruth.txt` and the rasters.
pub fn generate_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<Manifest> {
    spec.scene.validate()?;
    let gt = spec.groundtruth()?;
    let guess = match &spec.perturbation {
        Some(p) => perturb_trajectory(&gt, p.sigma_t, p.sigma_r, p.seed, true)?,
        None => gt.clone(),
    };
    let manifest = Manifest {
        trajectory: "trajectory.txt".into(),
        groundtruth: Some("groundtruth.txt".into()),
        scales: spec
            .scales
            .clone()
            .unwrap_or_else(|| crate::cue::PyramidConfig::default().scales),
        timestamp_tolerance: 1e-4,
        normals: Default::default(),
        graph: Default::default(),
        solver: Default::default(),
        sensors: spec.sensors.clone(),
    };
    manifest.validate()?;

    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(out_dir)?;
    for s in &spec.sensors {
        let idir = out_dir.join(s.intensity_dir());
        let ddir = out_dir.join(s.depth_dir());
        mkdir(&idir)?;
        mkdir(&ddir)?;
        let offset = s.extrinsics.to_pose()?;
        for (t, pose) in gt.entries() {
            let frame = render(&spec.scene, &s.intrinsics, &(*pose * offset));
            let name = image_file_name(*t);
            let ipath = idir.join(&name);
            std::fs::write(&ipath, encode_intensity(&frame.intensity)?).map_err(|e| Error::io(&ipath, e))?;
            let dpath = ddir.join(&name);
            std::fs::write(&dpath, encode_depth(&frame.depth, s.depth_scale)?).map_err(|e| Error::io(&dpath, e))?;
        }
    }
    save_trajectory(&guess, &out_dir.join("trajectory.txt"))?;
    save_trajectory(&gt, &out_dir.join("groundtruth.txt"))?;
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
