use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{estimate_normals, CueImage, Grid, NormalConfig};
use crate::error::{Error, Result};
use crate::sensor::Intrinsics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PyramidConfig {
    /// Resolution of each level relative to the input, coarsest first.
    pub scales: Vec<f64>,
    pub normals: NormalConfig,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        PyramidConfig {
            scales: vec![0.125, 0.25, 0.5],
            normals: NormalConfig::default(),
        }
    }
}

impl PyramidConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::Config("pyramid needs at least one scale".into()));
        }
        for w in self.scales.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Config(format!(
                    "pyramid scales must be strictly increasing, got {:?}",
                    self.scales
                )));
            }
        }
        if self.scales.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            return Err(Error::Config(format!(
                "pyramid scales must lie in (0, 1], got {:?}",
                self.scales
            )));
        }
        Ok(())
    }
}

/// Per-frame stack of cue images, coarsest level first.
#[derive(Debug, Clone)]
pub struct CuePyramid {
    levels: Vec<CueImage>,
}

impl CuePyramid {
    pub fn from_levels(levels: Vec<CueImage>) -> Self {
        CuePyramid { levels }
    }

    pub fn levels(&self) -> &[CueImage] {
        &self.levels
    }

    pub fn level(&self, index: usize) -> &CueImage {
        &self.levels[index]
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn coarsest(&self) -> &CueImage {
        &self.levels[0]
    }

    pub fn finest(&self) -> &CueImage {
        self.levels.last().expect("pyramid has at least one level")
    }

    pub fn scales(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.scale()).collect()
    }

    /// Keeps only the `n` finest levels.
    pub fn truncated_to_finest(&self, n: usize) -> CuePyramid {
        let skip = self.levels.len().saturating_sub(n);
        CuePyramid {
            levels: self.levels[skip..].to_vec(),
        }
    }
}

/// Builds the multi-cue pyramid of one frame.
///
/// Normals are estimated once at full resolution. Each level is then
/// downsampled from the full-resolution channels over its pixel footprint:
/// intensity by mean, depth by the lower median of valid samples, normals by
/// mean followed by renormalization.
pub fn build_pyramid(
    intensity: &Grid<f64>,
    depth: &Grid<f64>,
    k: &Intrinsics,
    cfg: &PyramidConfig,
) -> Result<CuePyramid> {
    cfg.validate()?;
    k.validate()?;
    if intensity.width() != k.width
        || intensity.height() != k.height
        || depth.width() != k.width
        || depth.height() != k.height
    {
        return Err(Error::Config(format!(
            "image size {}x{} / {}x{} does not match intrinsics {}x{}",
            intensity.width(),
            intensity.height(),
            depth.width(),
            depth.height(),
            k.width,
            k.height
        )));
    }
    let depth = depth.map(|&d| if d.is_finite() && k.depth_in_range(d) { d } else { 0.0 });
    let normals = estimate_normals(&depth, k, &cfg.normals);

    let levels = cfg
        .scales
        .iter()
        .map(|&s| downsample(intensity, &depth, &normals, k, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(CuePyramid { levels })
}

fn footprint(index: usize, scale: f64, limit: usize) -> (usize, usize) {
    let start = ((index as f64) / scale).floor() as usize;
    let end = (((index + 1) as f64) / scale).floor() as usize;
    let start = start.min(limit - 1);
    (start, end.clamp(start + 1, limit))
}

fn downsample(
    intensity: &Grid<f64>,
    depth: &Grid<f64>,
    normals: &Grid<Vector3<f64>>,
    k: &Intrinsics,
    scale: f64,
) -> Result<CueImage> {
    let lk = k.scaled(scale);
    if lk.width < 2 || lk.height < 2 {
        return Err(Error::Config(format!(
            "scale {scale} gives a {}x{} level, too small",
            lk.width, lk.height
        )));
    }
    if scale == 1.0 {
        return Ok(CueImage::from_channels(lk, scale, intensity, depth, normals));
    }

    type Px = (f64, f64, Vector3<f64>);
    let rows: Vec<Vec<Px>> = (0..lk.height)
        .into_par_iter()
        .map(|y| {
            let (y0, y1) = footprint(y, scale, k.height);
            let mut depths = Vec::new();
            (0..lk.width)
                .map(|x| {
                    let (x0, x1) = footprint(x, scale, k.width);
                    let mut isum = 0.0;
                    let mut icount = 0usize;
                    let mut nsum = Vector3::zeros();
                    let mut ncount = 0usize;
                    depths.clear();
                    for sy in y0..y1 {
                        for sx in x0..x1 {
                            let i = *intensity.get(sx, sy);
                            if i.is_finite() {
                                isum += i;
                                icount += 1;
                            }
                            let d = *depth.get(sx, sy);
                            if d > 0.0 {
                                depths.push(d);
                            }
                            let n = *normals.get(sx, sy);
                            if n.norm_squared() > 0.0 {
                                nsum += n;
                                ncount += 1;
                            }
                        }
                    }
                    let i = if icount > 0 { isum / icount as f64 } else { 0.0 };
                    if depths.is_empty() || ncount == 0 {
                        return (i, 0.0, Vector3::zeros());
                    }
                    depths.sort_by(f64::total_cmp);
                    let d = depths[(depths.len() - 1) / 2];
                    let mean = nsum / ncount as f64;
                    let norm = mean.norm();
                    if norm < 0.5 {
                        return (i, d, Vector3::zeros());
                    }
                    let n = mean / norm;
                    let ray = lk.ray(&Vector2::new(x as f64, y as f64));
                    if n.dot(&ray) >= 0.0 {
                        return (i, d, Vector3::zeros());
                    }
                    (i, d, n)
                })
                .collect()
        })
        .collect();

    let flat: Vec<Px> = rows.into_iter().flatten().collect();
    let li = Grid::from_vec(lk.width, lk.height, flat.iter().map(|p| p.0).collect());
    let ld = Grid::from_vec(lk.width, lk.height, flat.iter().map(|p| p.1).collect());
    let ln = Grid::from_vec(lk.width, lk.height, flat.iter().map(|p| p.2).collect());
    Ok(CueImage::from_channels(lk, scale, &li, &ld, &ln))
}
