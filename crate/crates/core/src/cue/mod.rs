//! Five-channel cue images (intensity, depth, normal xyz) with precomputed
//! central-difference gradients and bilinear sampling.

mod normals;
mod pyramid;

use nalgebra::{Vector2, Vector3};

use crate::sensor::Intrinsics;

pub use normals::{estimate_normals, NormalConfig};
pub use pyramid::{build_pyramid, CuePyramid, PyramidConfig};

/// Largest inverse-depth second difference, relative to the pixel's own
/// inverse depth, at which a pixel still yields residuals.
pub const MAX_INVERSE_DEPTH_CURVATURE: f64 = 0.1;

pub const NUM_CUES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Intensity = 0,
    Depth = 1,
    NormalX = 2,
    NormalY = 3,
    NormalZ = 4,
}

impl Channel {
    pub const ALL: [Channel; NUM_CUES] = [
        Channel::Intensity,
        Channel::Depth,
        Channel::NormalX,
        Channel::NormalY,
        Channel::NormalZ,
    ];
}

/// Row-major 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "grid data length mismatch");
        Grid { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

/// Interpolated channel values and their image gradients `[∂/∂x, ∂/∂y]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CueSample {
    pub values: [f64; NUM_CUES],
    pub gradients: [[f64; 2]; NUM_CUES],
}

impl CueSample {
    pub fn normal(&self) -> Vector3<f64> {
        Vector3::new(self.values[2], self.values[3], self.values[4])
    }
}

/// Anything the residual can be evaluated against: a continuous field of
/// cue values with gradients.
pub trait CueSampler {
    fn sample_all(&self, u: &Vector2<f64>) -> Option<CueSample>;
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    values: [f64; NUM_CUES],
    gradients: [[f64; 2]; NUM_CUES],
    /// Pixel has valid depth and normal.
    valid: bool,
    /// Valid, off the 1-px border, and all four neighbours valid, so the
    /// central-difference gradient is defined.
    usable: bool,
}

/// One pyramid level: cue channels on a pixel grid plus matching intrinsics.
#[derive(Debug, Clone)]
pub struct CueImage {
    intrinsics: Intrinsics,
    scale: f64,
    cells: Vec<Cell>,
}

impl CueImage {
    /// Assembles an image from raw channels. Depth `<= 0` (or non-finite, or
    /// outside the sensor range) marks a pixel invalid; a zero normal marks an
    /// invalid normal.
    pub fn from_channels(
        intrinsics: Intrinsics,
        scale: f64,
        intensity: &Grid<f64>,
        depth: &Grid<f64>,
        normals: &Grid<Vector3<f64>>,
    ) -> Self {
        let (w, h) = (intrinsics.width, intrinsics.height);
        assert!(
            intensity.width() == w && intensity.height() == h,
            "intensity grid does not match intrinsics"
        );
        assert!(depth.width() == w && depth.height() == h);
        assert!(normals.width() == w && normals.height() == h);

        let mut cells: Vec<Cell> = (0..w * h)
            .map(|i| {
                let d = depth.data()[i];
                let n = normals.data()[i];
                let depth_ok = d.is_finite() && intrinsics.depth_in_range(d);
                let normal_ok = n.iter().all(|c| c.is_finite()) && n.norm_squared() > 0.0;
                let valid = depth_ok && normal_ok;
                let (d, n) = if valid { (d, n) } else { (0.0, Vector3::zeros()) };
                Cell {
                    values: [intensity.data()[i], d, n.x, n.y, n.z],
                    gradients: [[0.0; 2]; NUM_CUES],
                    valid,
                    usable: false,
                }
            })
            .collect();

        for y in 1..h.saturating_sub(1) {
            for x in 1..w.saturating_sub(1) {
                let i = y * w + x;
                let (l, r, t, b) = (i - 1, i + 1, i - w, i + w);
                if !(cells[i].valid && cells[l].valid && cells[r].valid && cells[t].valid && cells[b].valid) {
                    continue;
                }
                // inverse depth is affine across a plane, so a large second
                // difference marks an occlusion boundary or a sharp crease
                let inv = |k: usize| 1.0 / cells[k].values[1];
                let limit = MAX_INVERSE_DEPTH_CURVATURE * inv(i);
                if (inv(l) + inv(r) - 2.0 * inv(i)).abs() > limit || (inv(t) + inv(b) - 2.0 * inv(i)).abs() > limit {
                    continue;
                }
                let mut g = [[0.0; 2]; NUM_CUES];
                for (c, gc) in g.iter_mut().enumerate() {
                    gc[0] = 0.5 * (cells[r].values[c] - cells[l].values[c]);
                    gc[1] = 0.5 * (cells[b].values[c] - cells[t].values[c]);
                }
                cells[i].gradients = g;
                cells[i].usable = true;
            }
        }
        CueImage {
            intrinsics,
            scale,
            cells,
        }
    }

    #[inline]
    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    /// Resolution relative to the full-size input image.
    #[inline]
    pub fn scale(&self) -> f64 {
        self.scale
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    #[inline]
    fn cell(&self, x: usize, y: usize) -> &Cell {
        &self.cells[y * self.intrinsics.width + x]
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize, channel: Channel) -> f64 {
        self.cell(x, y).values[channel as usize]
    }

    #[inline]
    pub fn intensity(&self, x: usize, y: usize) -> f64 {
        self.cell(x, y).values[0]
    }

    /// Depth or range in meters, `None` when invalid.
    #[inline]
    pub fn depth(&self, x: usize, y: usize) -> Option<f64> {
        let c = self.cell(x, y);
        c.valid.then_some(c.values[1])
    }

    #[inline]
    pub fn normal(&self, x: usize, y: usize) -> Option<Vector3<f64>> {
        let c = self.cell(x, y);
        c.valid.then(|| Vector3::new(c.values[2], c.values[3], c.values[4]))
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.cell(x, y).valid
    }

    /// Valid with a defined gradient; only these pixels yield residuals.
    #[inline]
    pub fn is_usable(&self, x: usize, y: usize) -> bool {
        self.cell(x, y).usable
    }

    #[inline]
    pub fn gradient(&self, x: usize, y: usize, channel: Channel) -> Option<[f64; 2]> {
        let c = self.cell(x, y);
        c.usable.then_some(c.gradients[channel as usize])
    }

    pub fn valid_count(&self) -> usize {
        self.cells.iter().filter(|c| c.valid).count()
    }

    /// Bilinear sample of one channel and its gradient.
    pub fn sample(&self, u: &Vector2<f64>, channel: Channel) -> Option<(f64, [f64; 2])> {
        self.sample_all(u)
            .map(|s| (s.values[channel as usize], s.gradients[channel as usize]))
    }
}

impl CueSampler for CueImage {
    fn sample_all(&self, u: &Vector2<f64>) -> Option<CueSample> {
        if !(u.x >= 0.0 && u.y >= 0.0) {
            return None;
        }
        let (w, h) = (self.width(), self.height());
        let x0 = u.x.floor();
        let y0 = u.y.floor();
        let ax = u.x - x0;
        let ay = u.y - y0;
        let (x0, y0) = (x0 as usize, y0 as usize);
        if x0 >= w || y0 >= h {
            return None;
        }
        let x1 = if ax > 0.0 { x0 + 1 } else { x0 };
        let y1 = if ay > 0.0 { y0 + 1 } else { y0 };
        if x1 >= w || y1 >= h {
            return None;
        }
        let taps = [
            (x0, y0, (1.0 - ax) * (1.0 - ay)),
            (x1, y0, ax * (1.0 - ay)),
            (x0, y1, (1.0 - ax) * ay),
            (x1, y1, ax * ay),
        ];
        let mut out = CueSample {
            values: [0.0; NUM_CUES],
            gradients: [[0.0; 2]; NUM_CUES],
        };
        for &(x, y, wt) in &taps {
            if wt == 0.0 {
                continue;
            }
            let c = self.cell(x, y);
            if !c.usable {
                return None;
            }
            for k in 0..NUM_CUES {
                out.values[k] += wt * c.values[k];
                out.gradients[k][0] += wt * c.gradients[k][0];
                out.gradients[k][1] += wt * c.gradients[k][1];
            }
        }
        Some(out)
    }
}
