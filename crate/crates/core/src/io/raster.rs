//! Single-channel PNG rasters for intensity and depth.
//!
//! Intensity: 8- or 16-bit grayscale, normalized to `[0, 1]`.
//! Depth: 16-bit grayscale, `meters = raw × depth_scale`, raw 0 = invalid.

use std::io::Cursor;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma};

use crate::cue::Grid;
use crate::error::{Error, Result};

fn decode(bytes: &[u8]) -> Result<DynamicImage> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| Error::Raster(e.to_string()))
}

pub fn decode_intensity(bytes: &[u8]) -> Result<Grid<f64>> {
    match decode(bytes)? {
        DynamicImage::ImageLuma8(img) => {
            let (w, h) = img.dimensions();
            Ok(Grid::from_vec(
                w as usize,
                h as usize,
                img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
            ))
        }
        DynamicImage::ImageLuma16(img) => {
            let (w, h) = img.dimensions();
            Ok(Grid::from_vec(
                w as usize,
                h as usize,
                img.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect(),
            ))
        }
        other => Err(Error::Raster(format!(
            "intensity must be single-channel 8 or 16 bit, got {:?}",
            other.color()
        ))),
    }
}

pub fn decode_depth(bytes: &[u8], depth_scale: f64) -> Result<Grid<f64>> {
    match decode(bytes)? {
        DynamicImage::ImageLuma16(img) => {
            let (w, h) = img.dimensions();
            Ok(Grid::from_vec(
                w as usize,
                h as usize,
                img.into_raw().into_iter().map(|v| v as f64 * depth_scale).collect(),
            ))
        }
        other => Err(Error::Raster(format!(
            "depth must be single-channel 16 bit, got {:?}",
            other.color()
        ))),
    }
}

fn encode_luma16(w: usize, h: usize, data: Vec<u16>) -> Result<Vec<u8>> {
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, data).ok_or_else(|| Error::Raster("buffer size".into()))?;
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Raster(e.to_string()))?;
    Ok(out.into_inner())
}

/// 16-bit encoding; values are clamped to `[0, 1]`.
pub fn encode_intensity(img: &Grid<f64>) -> Result<Vec<u8>> {
    let data = img
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    encode_luma16(img.width(), img.height(), data)
}

/// Non-finite, non-positive or unrepresentable depths are written as 0.
pub fn encode_depth(depth: &Grid<f64>, depth_scale: f64) -> Result<Vec<u8>> {
    if !(depth_scale > 0.0) {
        return Err(Error::Config(format!(
            "depth scale must be positive, got {depth_scale}"
        )));
    }
    let data = depth
        .data()
        .iter()
        .map(|&d| {
            let raw = (d / depth_scale).round();
            if d.is_finite() && raw >= 1.0 && raw <= u16::MAX as f64 {
                raw as u16
            } else {
                0
            }
        })
        .collect();
    encode_luma16(depth.width(), depth.height(), data)
}
