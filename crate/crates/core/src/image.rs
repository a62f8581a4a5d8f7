//! Single-channel raster types and the resampling kernels shared by
//! preprocessing and augmentation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ITU-R BT.601 luma weights for RGB to grayscale conversion.
pub const LUMA_BT601: [f32; 3] = [0.299, 0.587, 0.114];

/// Normalized grayscale intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        if let Some((i, p)) = pixels
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::Validation(format!(
                "pixel {i} has intensity {p}, expected a value in [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    /// Divides 8-bit intensities by 255.
    pub fn from_u8(width: usize, height: usize, raw: &[u8]) -> Result<Self> {
        check_dims(width, height, raw.len())?;
        let pixels = raw.iter().map(|&v| f32::from(v) / 255.0).collect();
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Divides 16-bit intensities by 65535.
    pub fn from_u16(width: usize, height: usize, raw: &[u16]) -> Result<Self> {
        check_dims(width, height, raw.len())?;
        let pixels = raw.iter().map(|&v| f32::from(v) / 65535.0).collect();
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Converts interleaved 8-bit RGB to normalized luma.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        check_dims(width, height, rgb.len() / 3)?;
        if rgb.len() % 3 != 0 {
            return Err(Error::Contract(format!(
                "RGB buffer length {} is not a multiple of 3",
                rgb.len()
            )));
        }
        let pixels = rgb
            .chunks_exact(3)
            .map(|c| {
                let y = LUMA_BT601[0] * f32::from(c[0])
                    + LUMA_BT601[1] * f32::from(c[1])
                    + LUMA_BT601[2] * f32::from(c[2]);
                (y / 255.0).clamp(0.0, 1.0)
            })
            .collect();
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Bilinear resize to `width`×`height` (half-pixel centers, edge clamped).
    pub fn resize_bilinear(&self, width: usize, height: usize) -> GrayImage {
        GrayImage {
            width,
            height,
            pixels: resize_bilinear(&self.pixels, self.width, self.height, width, height),
        }
    }
}

/// A strictly binary label map. Every pixel is exactly 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        if let Some((i, v)) = pixels.iter().enumerate().find(|(_, v)| **v > 1) {
            return Err(Error::Validation(format!(
                "mask pixel {i} has value {v}, expected 0 or 1"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn count_ones(&self) -> usize {
        self.pixels.iter().filter(|&&v| v == 1).count()
    }

    pub fn foreground_fraction(&self) -> f64 {
        self.count_ones() as f64 / self.pixels.len() as f64
    }

    pub fn same_shape<T: Shaped>(&self, other: &T) -> bool {
        self.width == other.dims().0 && self.height == other.dims().1
    }

    /// Nearest-neighbor resize; never produces intermediate values.
    pub fn resize_nearest(&self, width: usize, height: usize) -> BinaryMask {
        BinaryMask {
            width,
            height,
            pixels: resize_nearest(&self.pixels, self.width, self.height, width, height),
        }
    }
}

/// Per-pixel foreground probabilities as produced by a segmentation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(width, height, values.len())?;
        if let Some((i, p)) = values
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::Validation(format!(
                "probability {i} is {p}, expected a value in [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn constant(width: usize, height: usize, p: f64) -> Result<Self> {
        Self::new(width, height, vec![p; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl From<&BinaryMask> for ProbabilityMap {
    fn from(mask: &BinaryMask) -> Self {
        ProbabilityMap {
            width: mask.width,
            height: mask.height,
            values: mask.pixels.iter().map(|&v| f64::from(v)).collect(),
        }
    }
}

/// Anything with a `(width, height)` raster shape.
pub trait Shaped {
    fn dims(&self) -> (usize, usize);
}

impl Shaped for GrayImage {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

impl Shaped for BinaryMask {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

impl Shaped for ProbabilityMap {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

pub(crate) fn check_same_shape<A: Shaped, B: Shaped>(a: &A, b: &B, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        let (aw, ah) = a.dims();
        let (bw, bh) = b.dims();
        return Err(Error::Contract(format!(
            "{what}: shape {aw}x{ah} does not match {bw}x{bh}"
        )));
    }
    Ok(())
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Contract(format!(
            "raster dimensions must be positive, got {width}x{height}"
        )));
    }
    if width * height != len {
        return Err(Error::Contract(format!(
            "buffer holds {len} values but {width}x{height} needs {}",
            width * height
        )));
    }
    Ok(())
}

pub(crate) fn floor(v: f64) -> f64 {
    libm::floor(v)
}

/// Bilinear resize of a single plane with half-pixel centers.
pub fn resize_bilinear(src: &[f32], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f32> {
    let sx = sw as f64 / dw as f64;
    let sy = sh as f64 / dh as f64;
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = floor(fy) as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let wy = fy - y0 as f64;
        for x in 0..dw {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = floor(fx) as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let wx = fx - x0 as f64;
            let top = f64::from(src[y0 * sw + x0]) * (1.0 - wx) + f64::from(src[y0 * sw + x1]) * wx;
            let bot = f64::from(src[y1 * sw + x0]) * (1.0 - wx) + f64::from(src[y1 * sw + x1]) * wx;
            out.push((top * (1.0 - wy) + bot * wy) as f32);
        }
    }
    out
}

/// Nearest-neighbor resize of a single plane with half-pixel centers.
pub fn resize_nearest<T: Copy>(src: &[T], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let sy = (((y as f64 + 0.5) * sh as f64 / dh as f64) as usize).min(sh - 1);
        for x in 0..dw {
            let sx = (((x as f64 + 0.5) * sw as f64 / dw as f64) as usize).min(sw - 1);
            out.push(src[sy * sw + sx]);
        }
    }
    out
}

/// Samples `src` at a fractional position with bilinear weights. Neighbors
/// outside the raster contribute the fill value 0.
pub(crate) fn sample_bilinear_zero(src: &[f32], w: usize, h: usize, fx: f64, fy: f64) -> f32 {
    let x0 = floor(fx);
    let y0 = floor(fy);
    let wx = fx - x0;
    let wy = fy - y0;
    let at = |x: f64, y: f64| -> f64 {
        if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
            0.0
        } else {
            f64::from(src[y as usize * w + x as usize])
        }
    };
    let v = at(x0, y0) * (1.0 - wx) * (1.0 - wy)
        + at(x0 + 1.0, y0) * wx * (1.0 - wy)
        + at(x0, y0 + 1.0) * (1.0 - wx) * wy
        + at(x0 + 1.0, y0 + 1.0) * wx * wy;
    v.clamp(0.0, 1.0) as f32
}

/// Samples the nearest pixel, or 0 when the rounded position falls outside.
pub(crate) fn sample_nearest_zero(src: &[u8], w: usize, h: usize, fx: f64, fy: f64) -> u8 {
    let x = libm::round(fx);
    let y = libm::round(fy);
    if x < 0.0 || y < 0.0 || x >= w as f64 || y >= h as f64 {
        0
    } else {
        src[y as usize * w + x as usize]
    }
}
