//! Samples, preprocessing, deterministic splits and the synthetic corpus.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{check_same_shape, resize_nearest, BinaryMask, GrayImage};

/// Values at or above `1 - BINARIZE_EPSILON` count as foreground. Half of
/// one 8-bit quantum after division by 255.
pub const BINARIZE_EPSILON: f32 = 1.0 / 510.0;

/// Smallest corpus that still yields three non-empty splits.
pub const MIN_SPLIT_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TumorType {
    Meningioma,
    Glioma,
    Pituitary,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub image: GrayImage,
    pub mask: BinaryMask,
    pub tumor_type: Option<TumorType>,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: GrayImage, mask: BinaryMask) -> Result<Self> {
        check_same_shape(&image, &mask, "sample image vs mask")?;
        Ok(Self {
            id: id.into(),
            image,
            mask,
            tumor_type: None,
        })
    }

    pub fn with_tumor_type(mut self, tumor_type: TumorType) -> Self {
        self.tumor_type = Some(tumor_type);
        self
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }
}

/// Maps normalized mask intensities to `{0, 1}`. Anything short of full
/// intensity (within [`BINARIZE_EPSILON`]) becomes background.
pub fn binarize_mask(raw: &[f32], width: usize, height: usize) -> Result<BinaryMask> {
    if let Some((i, v)) = raw
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::Validation(format!(
            "raw mask value {v} at index {i} is outside [0, 1]; check normalization"
        )));
    }
    let pixels = raw
        .iter()
        .map(|&v| u8::from(v >= 1.0 - BINARIZE_EPSILON))
        .collect();
    BinaryMask::new(width, height, pixels)
}

/// Brings a decoded image/mask pair to `target_size`×`target_size`.
///
/// The image is resized bilinearly. The mask (already divided by its bit
/// depth) is resized nearest-neighbor and then binarized.
pub fn preprocess_pair(
    id: impl Into<String>,
    image: &GrayImage,
    raw_mask: &GrayImage,
    target_size: usize,
) -> Result<Sample> {
    if target_size == 0 {
        return Err(Error::Config("target size must be positive".into()));
    }
    let image = image.resize_bilinear(target_size, target_size);
    let mask_plane = resize_nearest(
        raw_mask.pixels(),
        raw_mask.width(),
        raw_mask.height(),
        target_size,
        target_size,
    );
    let mask = binarize_mask(&mask_plane, target_size, target_size)?;
    Sample::new(id, image, mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplits {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    pub seed: u64,
}

impl DatasetSplits {
    pub fn ids(&self) -> SplitIds {
        let ids = |s: &[Sample]| s.iter().map(|x| x.id.clone()).collect();
        SplitIds {
            seed: self.seed,
            train: ids(&self.train),
            val: ids(&self.val),
            test: ids(&self.test),
        }
    }
}

/// Id-level description of a split, enough to recreate it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIds {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// `(train, val, test)` sizes: train takes `floor(0.6 n)`, the remainder is
/// halved with val taking the floor. 3064 gives (1838, 613, 613).
pub fn split_sizes(n: usize) -> Result<(usize, usize, usize)> {
    if n < MIN_SPLIT_SAMPLES {
        return Err(Error::Config(format!(
            "need at least {MIN_SPLIT_SAMPLES} samples for a 60/20/20 split, got {n}"
        )));
    }
    let train = n * 6 / 10;
    let val = (n - train) / 2;
    Ok((train, val, n - train - val))
}

/// Shuffled index partition underlying [`split_dataset`].
pub fn split_indices(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let (n_train, n_val, _) = split_sizes(n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = order.split_off(n_train + n_val);
    let val = order.split_off(n_train);
    Ok((order, val, test))
}

/// Seeded 60/20/20 partition. Ids must be unique.
pub fn split_dataset(samples: Vec<Sample>, seed: u64) -> Result<DatasetSplits> {
    let mut seen = BTreeSet::new();
    for s in &samples {
        if !seen.insert(s.id.as_str()) {
            return Err(Error::Validation(format!("duplicate sample id {:?}", s.id)));
        }
    }
    let (train_idx, val_idx, test_idx) = split_indices(samples.len(), seed)?;
    let mut slots: Vec<Option<Sample>> = samples.into_iter().map(Some).collect();
    let mut take = |idx: Vec<usize>| -> Vec<Sample> {
        idx.into_iter()
            .map(|i| slots[i].take().expect("split indices are a permutation"))
            .collect()
    };
    Ok(DatasetSplits {
        train: take(train_idx),
        val: take(val_idx),
        test: take(test_idx),
        seed,
    })
}

/// Reassembles splits from a saved id manifest.
pub fn split_from_ids(samples: Vec<Sample>, ids: &SplitIds) -> Result<DatasetSplits> {
    let mut by_id: alloc::collections::BTreeMap<String, Sample> =
        samples.into_iter().map(|s| (s.id.clone(), s)).collect();
    let mut take = |list: &[String]| -> Result<Vec<Sample>> {
        list.iter()
            .map(|id| {
                by_id
                    .remove(id)
                    .ok_or_else(|| Error::Contract(format!("manifest id {id:?} not in dataset")))
            })
            .collect()
    };
    Ok(DatasetSplits {
        train: take(&ids.train)?,
        val: take(&ids.val)?,
        test: take(&ids.test)?,
        seed: ids.seed,
    })
}

/// Upper bound on the foreground share of a synthetic sample.
pub const SYNTHETIC_MAX_FOREGROUND: f64 = 0.15;
const SYNTHETIC_MIN_FOREGROUND: f64 = 0.01;

/// Noisy dark scans with zero to two bright elliptical "lesions".
///
/// The mask is exactly the union of ellipse interiors, and the ellipses are
/// sized so foreground stays at or below 15% of the raster.
pub fn generate_synthetic_dataset(n: usize, size: usize, seed: u64) -> Result<Vec<Sample>> {
    if n == 0 {
        return Err(Error::Config("synthetic corpus needs at least one sample".into()));
    }
    if size < 16 {
        return Err(Error::Config(format!(
            "synthetic image size must be at least 16 px, got {size}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| synthetic_sample(&mut rng, format!("synth_{i:05}"), size))
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    intensity: f32,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = (dx * self.cos + dy * self.sin) / self.a;
        let v = (-dx * self.sin + dy * self.cos) / self.b;
        u * u + v * v <= 1.0
    }
}

fn synthetic_sample(rng: &mut ChaCha8Rng, id: String, size: usize) -> Result<Sample> {
    let count: usize = rng.random_range(0..=2);
    let total = (size * size) as f64;
    let ellipses = loop {
        let ellipses: Vec<Ellipse> = (0..count)
            .map(|_| draw_ellipse(rng, size, count))
            .collect();
        let covered = (0..size * size)
            .filter(|&p| {
                let (x, y) = ((p % size) as f64, (p / size) as f64);
                ellipses.iter().any(|e| e.contains(x, y))
            })
            .count();
        if covered as f64 / total <= SYNTHETIC_MAX_FOREGROUND {
            break ellipses;
        }
    };

    let background: f32 = rng.random_range(0.05..0.15);
    let mut pixels = Vec::with_capacity(size * size);
    let mut mask = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let noise: f32 = rng.random_range(-0.05..0.05);
            let hit = ellipses
                .iter()
                .find(|e| e.contains(x as f64, y as f64));
            let base = hit.map_or(background, |e| e.intensity);
            pixels.push((base + noise).clamp(0.0, 1.0));
            mask.push(u8::from(hit.is_some()));
        }
    }
    let image = GrayImage::new(size, size, pixels)?;
    let mask = BinaryMask::new(size, size, mask)?;
    Sample::new(id, image, mask)
}

fn draw_ellipse(rng: &mut ChaCha8Rng, size: usize, count: usize) -> Ellipse {
    let s = size as f64;
    let area_frac =
        rng.random_range(SYNTHETIC_MIN_FOREGROUND..=SYNTHETIC_MAX_FOREGROUND / count as f64);
    let aspect: f64 = rng.random_range(0.6..=1.0);
    let a = libm::sqrt(area_frac * s * s / (core::f64::consts::PI * aspect));
    let b = a * aspect;
    let margin = a + 1.0;
    let cx = rng.random_range(margin..=s - 1.0 - margin);
    let cy = rng.random_range(margin..=s - 1.0 - margin);
    let theta: f64 = rng.random_range(0.0..core::f64::consts::PI);
    Ellipse {
        cx,
        cy,
        a,
        b,
        cos: libm::cos(theta),
        sin: libm::sin(theta),
        intensity: rng.random_range(0.65..0.95),
    }
}
