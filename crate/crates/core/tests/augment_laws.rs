use proptest::prelude::*;
use tumorseg_core::augment::{hflip, rescale, rotate};
use tumorseg_core::dataset::generate_synthetic_dataset;
use tumorseg_core::{BinaryMask, GrayImage, Sample};

/// Image intensities equal the mask, so geometry can be compared directly.
fn mirror_fixture(seed: u64) -> Sample {
    let s = &generate_synthetic_dataset(1, 48, seed).unwrap()[0];
    let mask = if s.mask.count_ones() == 0 {
        let px = (0..48 * 48).map(|p| u8::from((p % 48) < 20 && (p / 48) > 10)).collect();
        BinaryMask::new(48, 48, px).unwrap()
    } else {
        s.mask.clone()
    };
    let img = mask.pixels().iter().map(|&m| f32::from(m)).collect();
    Sample::new("m", GrayImage::new(48, 48, img).unwrap(), mask).unwrap()
}

/// Pixels outside the frame count as background, matching the zero fill.
fn near_boundary(mask: &BinaryMask, x: usize, y: usize) -> bool {
    let v = mask.get(x, y);
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    (-1..=1)
        .flat_map(|dx| (-1..=1).map(move |dy| (x as isize + dx, y as isize + dy)))
        .any(|(nx, ny)| {
            let n = if (0..w).contains(&nx) && (0..h).contains(&ny) {
                mask.get(nx as usize, ny as usize)
            } else {
                0
            };
            n != v
        })
}

/// The nearest source pixel is one of the four bilinear taps and carries at
/// least a quarter of the weight, so a mask pixel of 1 implies image ≥ 0.25
/// and 0 implies image ≤ 0.75. Away from mask edges the two agree exactly.
fn assert_joint(out: &Sample) {
    let w = out.width();
    for (i, (&p, &m)) in out.image.pixels().iter().zip(out.mask.pixels()).enumerate() {
        if m == 1 {
            assert!(p >= 0.25 - 1e-6, "pixel {i}: mask 1, image {p}");
        } else {
            assert!(p <= 0.75 + 1e-6, "pixel {i}: mask 0, image {p}");
        }
        if u8::from(p >= 0.5) != m {
            assert!(near_boundary(&out.mask, i % w, i / w), "pixel {i} disagrees away from an edge");
        }
    }
}

#[test]
fn flip_of_mirror_fixture_stays_identical() {
    let s = mirror_fixture(1);
    let f = hflip(&s);
    let as_img: Vec<f32> = f.mask.pixels().iter().map(|&m| f32::from(m)).collect();
    assert_eq!(f.image.pixels(), &as_img[..]);
    assert_eq!(hflip(&f).mask, s.mask);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotation_keeps_image_and_mask_aligned(seed in 0u64..1000, angle in -15.0f64..=15.0) {
        let out = rotate(&mirror_fixture(seed), angle);
        prop_assert!(out.mask.pixels().iter().all(|&m| m <= 1));
        assert_joint(&out);
    }

    #[test]
    fn scaling_keeps_image_and_mask_aligned(seed in 0u64..1000, factor in 0.8f64..=1.2) {
        let out = rescale(&mirror_fixture(seed), factor);
        prop_assert!(out.mask.pixels().iter().all(|&m| m <= 1));
        assert_joint(&out);
    }

    #[test]
    fn identity_parameters(seed in 0u64..1000) {
        let s = &generate_synthetic_dataset(1, 32, seed).unwrap()[0];
        let r = rotate(s, 0.0);
        let c = rescale(s, 1.0);
        prop_assert_eq!(&r.image, &s.image);
        prop_assert_eq!(&r.mask, &s.mask);
        prop_assert_eq!(&c.image, &s.image);
        prop_assert_eq!(&c.mask, &s.mask);
    }
}
