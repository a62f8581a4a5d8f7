//! Prediction/ground-truth overlays on the grayscale input.
//!
//! With base gray level `g = round(255 · pixel)`, every channel of a tinted
//! pixel is `round((1 − OPACITY) · g + OPACITY · tint)` where the tint is
//! green `(0, 255, 0)` for prediction only, blue `(0, 0, 255)` for ground
//! truth only and cyan `(0, 255, 255)` where they overlap. Untinted pixels
//! are `(g, g, g)`.

use image::{Rgb, RgbImage};
use tumorseg_core::{BinaryMask, Error as CoreError, GrayImage};

use crate::error::Result;

pub const OPACITY: f64 = 0.5;
pub const PRED_TINT: [u8; 3] = [0, 255, 0];
pub const GT_TINT: [u8; 3] = [0, 0, 255];
pub const OVERLAP_TINT: [u8; 3] = [0, 255, 255];

pub fn blend(gray: u8, tint: [u8; 3]) -> [u8; 3] {
    tint.map(|t| ((1.0 - OPACITY) * f64::from(gray) + OPACITY * f64::from(t)).round() as u8)
}

pub fn render_overlay(image: &GrayImage, gt: &BinaryMask, pred: &BinaryMask) -> Result<RgbImage> {
    let (w, h) = (image.width(), image.height());
    if (gt.width(), gt.height()) != (w, h) || (pred.width(), pred.height()) != (w, h) {
        return Err(CoreError::Contract(format!(
            "overlay shapes differ: image {w}x{h}, gt {}x{}, prediction {}x{}",
            gt.width(),
            gt.height(),
            pred.width(),
            pred.height()
        ))
        .into());
    }
    let mut out = RgbImage::new(w as u32, h as u32);
    for (i, ((&p, &g), &m)) in image
        .pixels()
        .iter()
        .zip(gt.pixels())
        .zip(pred.pixels())
        .enumerate()
    {
        let gray = (p * 255.0).round() as u8;
        let rgb = match (m, g) {
            (1, 1) => blend(gray, OVERLAP_TINT),
            (1, _) => blend(gray, PRED_TINT),
            (_, 1) => blend(gray, GT_TINT),
            _ => [gray; 3],
        };
        out.put_pixel((i % w) as u32, (i / w) as u32, Rgb(rgb));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (GrayImage, BinaryMask) {
        let img = GrayImage::new(4, 1, vec![0.0, 0.2, 0.6, 1.0]).unwrap();
        let gt = BinaryMask::new(4, 1, vec![1, 1, 0, 0]).unwrap();
        (img, gt)
    }

    #[test]
    fn agreement_is_cyan_only() {
        let (img, gt) = fixture();
        let out = render_overlay(&img, &gt, &gt).unwrap();
        assert_eq!(out.get_pixel(0, 0).0, [0, 128, 128]);
        assert_eq!(out.get_pixel(1, 0).0, [26, 153, 153]);
        assert_eq!(out.get_pixel(2, 0).0, [153; 3]);
    }

    #[test]
    fn missed_tumor_is_blue_only() {
        let (img, gt) = fixture();
        let out = render_overlay(&img, &gt, &BinaryMask::zeros(4, 1)).unwrap();
        for x in 0..2 {
            let [r, g, b] = out.get_pixel(x, 0).0;
            assert!(r == g && b > g);
        }
    }

    #[test]
    fn blend_formula_oracle() {
        let (img, gt) = fixture();
        let pred = BinaryMask::new(4, 1, vec![0, 0, 1, 0]).unwrap();
        let out = render_overlay(&img, &gt, &pred).unwrap();
        // g = round(0.6 · 255) = 153; green channel = round(0.5·153 + 0.5·255) = 204.
        assert_eq!(out.get_pixel(2, 0).0, [77, 204, 77]);
        assert_eq!(out.get_pixel(3, 0).0, [255; 3]);
    }

    #[test]
    fn background_pixels_keep_the_base() {
        let samples = tumorseg_core::dataset::generate_synthetic_dataset(3, 32, 5).unwrap();
        for s in &samples {
            let pred = s.mask.resize_nearest(32, 32);
            let out = render_overlay(&s.image, &s.mask, &pred).unwrap();
            for (i, &p) in s.image.pixels().iter().enumerate() {
                if s.mask.pixels()[i] == 0 {
                    let g = (p * 255.0).round() as u8;
                    assert_eq!(out.get_pixel((i % 32) as u32, (i / 32) as u32).0, [g; 3]);
                }
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let (img, gt) = fixture();
        assert!(render_overlay(&img, &gt, &BinaryMask::zeros(2, 2)).is_err());
    }
}
