//! Geometric augmentations applied identically to an image and its mask.
//!
//! Transforms use inverse mapping about the raster center
//! `((w-1)/2, (h-1)/2)`. Images are resampled bilinearly, masks by nearest
//! neighbor followed by re-binarization, and anything mapped from outside
//! the raster is filled with 0.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{binarize_mask, Sample};
use crate::error::{Error, Result};
use crate::image::{sample_bilinear_zero, sample_nearest_zero, GrayImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationKind {
    #[default]
    None,
    HorizontalFlip,
    Rotation,
    Scaling,
}

impl AugmentationKind {
    pub fn label(self) -> &'static str {
        match self {
            AugmentationKind::None => "None",
            AugmentationKind::HorizontalFlip => "Horizontal Flip",
            AugmentationKind::Rotation => "Rotation",
            AugmentationKind::Scaling => "Random Scaling",
        }
    }
}

/// Whether augmented copies extend the training set or replace the
/// originals they were derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentationPlacement {
    #[default]
    Append,
    InPlace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationSpec {
    pub kind: AugmentationKind,
    /// Share of the training split that receives a transformed copy.
    pub fraction: f64,
    pub rotation_range_deg: (f64, f64),
    pub scale_range: (f64, f64),
    pub seed: u64,
    pub placement: AugmentationPlacement,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            kind: AugmentationKind::None,
            fraction: 0.5,
            rotation_range_deg: (-15.0, 15.0),
            scale_range: (0.8, 1.2),
            seed: 0,
            placement: AugmentationPlacement::Append,
        }
    }
}

impl AugmentationSpec {
    pub fn new(kind: AugmentationKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::Config(format!(
                "augmentation fraction {} is outside [0, 1]",
                self.fraction
            )));
        }
        let (lo, hi) = self.rotation_range_deg;
        if !(lo <= hi && lo >= -180.0 && hi <= 180.0) {
            return Err(Error::Config(format!(
                "rotation range [{lo}, {hi}] must be an ordered interval inside [-180, 180]"
            )));
        }
        let (lo, hi) = self.scale_range;
        if !(lo <= hi && lo > 0.0 && hi <= 4.0) {
            return Err(Error::Config(format!(
                "scale range [{lo}, {hi}] must be an ordered interval inside (0, 4]"
            )));
        }
        Ok(())
    }

    /// Number of training samples that get transformed.
    pub fn selected_count(&self, n: usize) -> usize {
        if self.kind == AugmentationKind::None {
            0
        } else {
            libm::floor(self.fraction * n as f64) as usize
        }
    }
}

/// Mirrors image and mask about the vertical axis.
pub fn hflip(sample: &Sample) -> Sample {
    let w = sample.width();
    let h = sample.height();
    let mut img = Vec::with_capacity(w * h);
    let mut mask = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in (0..w).rev() {
            img.push(sample.image.get(x, y));
            mask.push(f32::from(sample.mask.get(x, y)));
        }
    }
    rebuild(sample, "_hflip", img, &mask)
}

/// Rotates image and mask by `angle_deg` about the center.
pub fn rotate(sample: &Sample, angle_deg: f64) -> Sample {
    let theta = angle_deg.to_radians();
    let (sin, cos) = (libm::sin(theta), libm::cos(theta));
    remap(sample, "_rot", |dx, dy| (cos * dx + sin * dy, -sin * dx + cos * dy))
}

/// Scales content about the center by `factor`, cropping (factor > 1) or
/// zero-padding (factor < 1) back to the original size.
///
/// # Panics
/// If `factor` is not a positive finite number.
pub fn rescale(sample: &Sample, factor: f64) -> Sample {
    assert!(
        factor.is_finite() && factor > 0.0,
        "scale factor must be positive, got {factor}"
    );
    remap(sample, "_scale", |dx, dy| (dx / factor, dy / factor))
}

/// Inverse-maps every output pixel through `to_source`, which receives the
/// offset from the center and returns the source offset from the center.
fn remap(sample: &Sample, suffix: &str, to_source: impl Fn(f64, f64) -> (f64, f64)) -> Sample {
    let w = sample.width();
    let h = sample.height();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let src_img = sample.image.pixels();
    let src_mask = sample.mask.pixels();
    let mut img = Vec::with_capacity(w * h);
    let mut mask = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = to_source(x as f64 - cx, y as f64 - cy);
            let (sx, sy) = (sx + cx, sy + cy);
            img.push(sample_bilinear_zero(src_img, w, h, sx, sy));
            mask.push(f32::from(sample_nearest_zero(src_mask, w, h, sx, sy)));
        }
    }
    rebuild(sample, suffix, img, &mask)
}

fn rebuild(sample: &Sample, suffix: &str, img: Vec<f32>, mask: &[f32]) -> Sample {
    let w = sample.width();
    let h = sample.height();
    let mut id = String::with_capacity(sample.id.len() + suffix.len());
    id.push_str(&sample.id);
    id.push_str(suffix);
    Sample {
        id,
        image: GrayImage::new(w, h, img).expect("resampling stays inside [0, 1]"),
        mask: binarize_mask(mask, w, h).expect("nearest-neighbor mask values are 0 or 1"),
        tumor_type: sample.tumor_type,
    }
}

/// One selected training sample and the parameter drawn for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationDraw {
    pub index: usize,
    /// Angle in degrees for rotation, factor for scaling, unused for flips.
    pub parameter: f64,
}

/// All random draws for `spec` over a training set of size `n`, in
/// ascending index order. Pure function of `(n, spec)`.
pub fn plan_augmentation(n: usize, spec: &AugmentationSpec) -> Result<Vec<AugmentationDraw>> {
    spec.validate()?;
    let count = spec.selected_count(n);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut chosen = rand::seq::index::sample(&mut rng, n, count).into_vec();
    chosen.sort_unstable();
    Ok(chosen
        .into_iter()
        .map(|index| {
            let parameter = match spec.kind {
                AugmentationKind::Rotation => {
                    let (lo, hi) = spec.rotation_range_deg;
                    rng.random_range(lo..=hi)
                }
                AugmentationKind::Scaling => {
                    let (lo, hi) = spec.scale_range;
                    rng.random_range(lo..=hi)
                }
                AugmentationKind::HorizontalFlip | AugmentationKind::None => 0.0,
            };
            AugmentationDraw { index, parameter }
        })
        .collect())
}

fn transform(sample: &Sample, kind: AugmentationKind, parameter: f64) -> Sample {
    match kind {
        AugmentationKind::None => sample.clone(),
        AugmentationKind::HorizontalFlip => hflip(sample),
        AugmentationKind::Rotation => rotate(sample, parameter),
        AugmentationKind::Scaling => rescale(sample, parameter),
    }
}

/// Augments `floor(fraction * |train|)` randomly chosen training samples.
///
/// With [`AugmentationPlacement::Append`] the transformed copies are added
/// after the originals; with `InPlace` they replace them.
pub fn apply_augmentation(train: Vec<Sample>, spec: &AugmentationSpec) -> Result<Vec<Sample>> {
    if spec.kind == AugmentationKind::None {
        spec.validate()?;
        return Ok(train);
    }
    let plan = plan_augmentation(train.len(), spec)?;
    match spec.placement {
        AugmentationPlacement::Append => {
            let extra: Vec<Sample> = plan
                .iter()
                .map(|d| transform(&train[d.index], spec.kind, d.parameter))
                .collect();
            let mut out = train;
            out.extend(extra);
            Ok(out)
        }
        AugmentationPlacement::InPlace => {
            let mut out = train;
            for d in &plan {
                out[d.index] = transform(&out[d.index], spec.kind, d.parameter);
            }
            Ok(out)
        }
    }
}
