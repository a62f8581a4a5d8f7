//! Image/mask files on disk.
//!
//! A dataset directory holds `images/<id>.png` and `masks/<id>.png`. Every
//! image must have a mask with the same stem and vice versa.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};
use tumorseg_core::dataset::preprocess_pair;
use tumorseg_core::{BinaryMask, GrayImage, Sample};

use crate::error::{Error, Result};

pub const IMAGES_DIR: &str = "images";
pub const MASKS_DIR: &str = "masks";

/// Decodes any supported raster to normalized grayscale. 8- and 16-bit
/// single-channel data keep their full precision; anything else goes
/// through BT.601 luma on 8-bit RGB.
pub fn read_gray(path: &Path) -> Result<GrayImage> {
    if !path.exists() {
        return Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        });
    }
    let decoded = image::open(path).map_err(|source| match source {
        image::ImageError::IoError(e) => Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
        other => Error::Decode {
            path: path.to_path_buf(),
            source: other,
        },
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let img = match decoded {
        DynamicImage::ImageLuma8(b) => GrayImage::from_u8(w, h, b.as_raw()),
        DynamicImage::ImageLuma16(b) => GrayImage::from_u16(w, h, b.as_raw()),
        DynamicImage::ImageLumaA8(_) => GrayImage::from_u8(w, h, decoded.to_luma8().as_raw()),
        DynamicImage::ImageLumaA16(_) => GrayImage::from_u16(w, h, decoded.to_luma16().as_raw()),
        other => GrayImage::from_rgb8(w, h, other.to_rgb8().as_raw()),
    }?;
    Ok(img)
}

pub fn load_sample(image_path: &Path, mask_path: &Path, target_size: usize) -> Result<Sample> {
    let id = image_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Dataset(format!("{} has no usable file stem", image_path.display())))?;
    let image = read_gray(image_path)?;
    let mask = read_gray(mask_path)?;
    Ok(preprocess_pair(id, &image, &mask, target_size)?)
}

fn png_stems(dir: &Path) -> Result<BTreeSet<String>> {
    let mut stems = BTreeSet::new();
    for entry in fs::read_dir(dir).map_err(Error::io(dir))? {
        let path = entry.map_err(Error::io(dir))?.path();
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !is_png {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            stems.insert(stem.to_owned());
        }
    }
    Ok(stems)
}

/// Pairs `images/*.png` with `masks/*.png` by stem, sorted by id.
pub fn dataset_pairs(root: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let images = root.join(IMAGES_DIR);
    let masks = root.join(MASKS_DIR);
    let image_ids = png_stems(&images)?;
    let mask_ids = png_stems(&masks)?;
    let orphan_images: Vec<_> = image_ids.difference(&mask_ids).cloned().collect();
    let orphan_masks: Vec<_> = mask_ids.difference(&image_ids).cloned().collect();
    if !orphan_images.is_empty() || !orphan_masks.is_empty() {
        return Err(Error::Dataset(format!(
            "unpaired files under {}: images without masks {:?}, masks without images {:?}",
            root.display(),
            orphan_images,
            orphan_masks
        )));
    }
    if image_ids.is_empty() {
        return Err(Error::Dataset(format!("no PNG images in {}", images.display())));
    }
    Ok(image_ids
        .into_iter()
        .map(|id| {
            let img = images.join(format!("{id}.png"));
            let mask = masks.join(format!("{id}.png"));
            (id, img, mask)
        })
        .collect())
}

pub fn load_dataset(root: &Path, target_size: usize) -> Result<Vec<Sample>> {
    let pairs = dataset_pairs(root)?;
    log::info!("loading {} samples from {}", pairs.len(), root.display());
    pairs
        .iter()
        .map(|(_, img, mask)| load_sample(img, mask, target_size))
        .collect()
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(Error::io(parent))?;
    }
    Ok(())
}

fn save_luma8(path: &Path, w: usize, h: usize, data: Vec<u8>) -> Result<()> {
    ensure_parent(path)?;
    let buf: ImageBuffer<Luma<u8>, _> = ImageBuffer::from_raw(w as u32, h as u32, data)
        .expect("buffer length matches dimensions");
    buf.save(path).map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })
}

/// 8-bit grayscale PNG, intensities rounded to the nearest quantum.
pub fn save_gray(path: &Path, image: &GrayImage) -> Result<()> {
    let data = image
        .pixels()
        .iter()
        .map(|&p| (p * 255.0).round() as u8)
        .collect();
    save_luma8(path, image.width(), image.height(), data)
}

/// Mask PNG with foreground 255 and background 0.
pub fn save_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let data = mask.pixels().iter().map(|&m| m * 255).collect();
    save_luma8(path, mask.width(), mask.height(), data)
}

/// Writes samples in the dataset directory layout.
pub fn write_dataset(root: &Path, samples: &[Sample]) -> Result<()> {
    for s in samples {
        save_gray(&root.join(IMAGES_DIR).join(format!("{}.png", s.id)), &s.image)?;
        save_mask(&root.join(MASKS_DIR).join(format!("{}.png", s.id)), &s.mask)?;
    }
    Ok(())
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, contents).map_err(Error::io(path))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(Error::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn write_l8(path: &Path, w: u32, h: u32, v: u8) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        ImageBuffer::<Luma<u8>, _>::from_pixel(w, h, Luma([v])).save(path).unwrap();
    }

    #[test]
    fn full_intensity_pair() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("images/a.png");
        let mask = dir.path().join("masks/a.png");
        write_l8(&img, 256, 256, 255);
        write_l8(&mask, 256, 256, 255);
        let s = load_sample(&img, &mask, 256).unwrap();
        assert_eq!(s.id, "a");
        assert!(s.image.pixels().iter().all(|&p| p == 1.0));
        assert!(s.mask.pixels().iter().all(|&m| m == 1));
    }

    #[test]
    fn mid_gray_and_resize() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("images/b.png");
        let mask = dir.path().join("masks/b.png");
        write_l8(&img, 512, 512, 128);
        write_l8(&mask, 512, 512, 0);
        let s = load_sample(&img, &mask, 256).unwrap();
        assert_eq!((s.width(), s.height()), (256, 256));
        assert!((s.image.get(10, 10) - 128.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn sixteen_bit_and_rgb_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let p16 = dir.path().join("x16.png");
        ImageBuffer::<Luma<u16>, _>::from_pixel(4, 4, Luma([65535u16])).save(&p16).unwrap();
        assert!(read_gray(&p16).unwrap().pixels().iter().all(|&p| p == 1.0));
        let prgb = dir.path().join("rgb.png");
        RgbImage::from_pixel(4, 4, Rgb([255, 0, 0])).save(&prgb).unwrap();
        let g = read_gray(&prgb).unwrap();
        assert!((g.get(0, 0) - 0.299).abs() < 1e-3);
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_gray(Path::new("/nonexistent/q.png")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/q.png"));
    }

    #[test]
    fn unpaired_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_l8(&dir.path().join("images/a.png"), 8, 8, 0);
        write_l8(&dir.path().join("masks/a.png"), 8, 8, 0);
        write_l8(&dir.path().join("images/b.png"), 8, 8, 0);
        let err = dataset_pairs(dir.path()).unwrap_err();
        assert!(err.to_string().contains("\"b\""), "{err}");
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let samples = tumorseg_core::dataset::generate_synthetic_dataset(3, 32, 1).unwrap();
        write_dataset(dir.path(), &samples).unwrap();
        let back = load_dataset(dir.path(), 32).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in samples.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.mask, b.mask);
            let err = a
                .image
                .pixels()
                .iter()
                .zip(b.image.pixels())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f32::max);
            assert!(err <= 0.5 / 255.0 + 1e-6);
        }
    }
}
