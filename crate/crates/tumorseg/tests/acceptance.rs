//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tumorseg::campaign::{run_campaign, ExperimentOutcome};
use tumorseg::config::preset;
use tumorseg_core::augment::{hflip, rescale, rotate};
use tumorseg_core::dataset::{generate_synthetic_dataset, split_dataset, split_sizes};
use tumorseg_core::loss::{focal_loss, focal_loss_gradient};
use tumorseg_core::metrics::{compute_metrics, confusion_counts};
use tumorseg_core::optim::AdamConfig;
use tumorseg_core::tensor::Tensor4;
use tumorseg_core::trainer::{tally_samples, BatchStepper};
use tumorseg_core::unet::{build_unet, LayerGraph};
use tumorseg_core::{BinaryMask, FocalParams, GrayImage, Sample, UNetConfig};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_probs(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let pred = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
    let target = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
    (pred, target)
}

fn focal_scalar() -> Check {
    let fl = focal_loss(&[0.9], &[1.0], &FocalParams::new(0.25, 2.0).unwrap()).map_err(|e| e.to_string())?;
    let diff = (fl - 2.6341e-4).abs();
    ensure(diff <= 1e-8, || format!("FL = {fl:e}, off by {diff:e}"))?;
    Ok(format!("FL = {fl:.6e}, |diff| = {diff:.1e}"))
}

fn bce_limit() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = FocalParams::new(1.0, 0.0).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=256);
        let (p, y) = random_probs(&mut rng, n);
        let bce = p
            .iter()
            .zip(&y)
            .map(|(&p, &y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
            .sum::<f64>()
            / n as f64;
        worst = worst.max((focal_loss(&p, &y, &params).unwrap() - bce).abs());
    }
    ensure(worst < 1e-6, || format!("max |FL - BCE| = {worst:e}"))?;
    Ok(format!("max |FL - BCE| = {worst:.1e} over 1000 tensors"))
}

fn gradient_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (a, g) in [(0.25, 2.0), (2.0, 0.75), (1.0, 0.0)] {
        let params = FocalParams::new(a, g).unwrap();
        for _ in 0..10 {
            let (p, y) = random_probs(&mut rng, 64);
            let grad = focal_loss_gradient(&p, &y, &params).unwrap();
            for i in 0..64 {
                let (mut up, mut down) = (p.clone(), p.clone());
                up[i] += h;
                down[i] -= h;
                let fd = (focal_loss(&up, &y, &params).unwrap() - focal_loss(&down, &y, &params).unwrap())
                    / (2.0 * h);
                worst = worst.max((grad[i] - fd).abs() / grad[i].abs().max(fd.abs()));
            }
        }
    }
    ensure(worst < 1e-3, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.1e}"))
}

fn random_mask(rng: &mut ChaCha8Rng) -> BinaryMask {
    let d = [0.0, 0.05, 0.3, 0.7, 1.0][rng.random_range(0..5)];
    BinaryMask::new(16, 16, (0..256).map(|_| u8::from(rng.random_bool(d))).collect()).unwrap()
}

fn metric_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut identity_err = 0.0f64;
    for k in 0..500 {
        let (p, g) = (random_mask(&mut rng), random_mask(&mut rng));
        let (mut tp, mut fp, mut fne, mut tn) = (0u64, 0u64, 0u64, 0u64);
        for y in 0..16 {
            for x in 0..16 {
                match (p.get(x, y), g.get(x, y)) {
                    (1, 1) => tp += 1,
                    (1, 0) => fp += 1,
                    (0, 1) => fne += 1,
                    _ => tn += 1,
                }
            }
        }
        let both_empty = tp + fp + fne == 0;
        let ratio = |n: u64, d: u64| match (d, both_empty) {
            (0, true) => 1.0,
            (0, false) => 0.0,
            _ => n as f64 / d as f64,
        };
        let expected = [
            (tp + tn) as f64 / 256.0,
            ratio(tp, tp + fp),
            ratio(tp, tp + fne),
            ratio(tp, tp + fp + fne),
            ratio(2 * tp, 2 * tp + fp + fne),
        ];
        let m = compute_metrics(&confusion_counts(&p, &g).unwrap());
        let got = [m.accuracy, m.precision, m.recall, m.iou, m.dice];
        ensure(got == expected, || format!("pair {k}: {got:?} vs {expected:?}"))?;
        identity_err = identity_err.max((m.dice - 2.0 * m.iou / (1.0 + m.iou)).abs());
    }
    ensure(identity_err < 1e-12, || format!("dice/iou identity off by {identity_err:e}"))?;
    Ok(format!("500 pairs exact, dice/iou identity error {identity_err:.1e}"))
}

fn augmentation_laws() -> Check {
    let samples = generate_synthetic_dataset(20, 48, 5).unwrap();
    for s in &samples {
        let back = hflip(&hflip(s));
        ensure(back.image == s.image && back.mask == s.mask, || format!("{}: hflip not an involution", s.id))?;
        let r = rotate(s, 0.0);
        let c = rescale(s, 1.0);
        ensure(r.image == s.image && r.mask == s.mask, || format!("{}: rotate(0) changed pixels", s.id))?;
        ensure(c.image == s.image && c.mask == s.mask, || format!("{}: rescale(1) changed pixels", s.id))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..200 {
        let s = &samples[i % samples.len()];
        let out = if i % 2 == 0 {
            rotate(s, rng.random_range(-15.0..=15.0))
        } else {
            rescale(s, rng.random_range(0.8..=1.2))
        };
        ensure(out.mask.pixels().iter().all(|&m| m <= 1), || format!("transform {i} broke binarity"))?;
    }

    let fixture = samples.iter().find(|s| s.mask.count_ones() > 0).unwrap();
    let img: Vec<f32> = fixture.mask.pixels().iter().map(|&m| f32::from(m)).collect();
    let mirror = Sample::new("mirror", GrayImage::new(48, 48, img).unwrap(), fixture.mask.clone()).unwrap();
    let flipped = hflip(&mirror);
    let as_img: Vec<f32> = flipped.mask.pixels().iter().map(|&m| f32::from(m)).collect();
    ensure(flipped.image.pixels() == &as_img[..], || "hflip misaligned image and mask".into())?;
    let transformed = [
        rotate(&mirror, 12.0),
        rotate(&mirror, -7.5),
        rescale(&mirror, 1.15),
        rescale(&mirror, 0.85),
    ];
    for (i, out) in transformed.iter().enumerate() {
        for (&p, &m) in out.image.pixels().iter().zip(out.mask.pixels()) {
            let ok = if m == 1 { p >= 0.25 - 1e-6 } else { p <= 0.75 + 1e-6 };
            ensure(ok, || format!("joint fixture {i}: mask {m} over image {p}"))?;
        }
    }
    Ok("involution, identities, 200 binarity checks, joint fixture".into())
}

fn split_law() -> Check {
    let sizes = split_sizes(3064).map_err(|e| e.to_string())?;
    ensure(sizes == (1838, 613, 613), || format!("3064 -> {sizes:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let template = generate_synthetic_dataset(1, 16, 0).unwrap().remove(0);
    for _ in 0..50 {
        let n = rng.random_range(5..=5000);
        let seed = rng.random();
        let samples: Vec<Sample> = (0..n)
            .map(|i| Sample {
                id: format!("id{i}"),
                ..template.clone()
            })
            .collect();
        let a = split_dataset(samples.clone(), seed).map_err(|e| e.to_string())?.ids();
        let b = split_dataset(samples, seed).map_err(|e| e.to_string())?.ids();
        ensure(a == b, || format!("n={n}: not deterministic"))?;
        let all: HashSet<&String> = a.train.iter().chain(&a.val).chain(&a.test).collect();
        ensure(all.len() == n, || format!("n={n}: overlap or loss, {} unique", all.len()))?;
        let expected = split_sizes(n).unwrap();
        ensure((a.train.len(), a.val.len(), a.test.len()) == expected, || format!("n={n}: sizes"))?;
    }
    Ok("3064 -> (1838, 613, 613); 50 random sizes partitioned deterministically".into())
}

fn unet_shape_law() -> Check {
    let golden = 31_030_593;
    let mut oracle = 0;
    let mut c = 1;
    for f in [64, 128, 256, 512, 1024] {
        oracle += 9 * c * f + f + 9 * f * f + f;
        c = f;
    }
    for f in [512, 256, 128, 64] {
        oracle += 4 * c * f + f + 9 * 2 * f * f + f + 9 * f * f + f;
        c = f;
    }
    oracle += c + 1;
    ensure(oracle == golden, || format!("layer arithmetic gives {oracle}"))?;
    for size in [64, 128, 256] {
        let cfg = UNetConfig {
            input_size: size,
            ..UNetConfig::default()
        };
        let net = build_unet(&cfg, 0).map_err(|e| e.to_string())?;
        let out = net
            .forward(&Tensor4::zeros([1, size, size, 1]), None)
            .map_err(|e| e.to_string())?;
        ensure(out.shape() == [1, size, size, 1], || format!("{size}: output {:?}", out.shape()))?;
        ensure(out.data().iter().all(|&p| p > 0.0 && p < 1.0), || format!("{size}: output outside (0, 1)"))?;
        let g = LayerGraph::describe(&cfg);
        ensure(g.encoder_filters() == [64, 128, 256, 512], || format!("{size}: encoder filters"))?;
        let b = g.layer("bottleneck_conv2").unwrap().output_shape;
        ensure(b == [1024, size / 16, size / 16], || format!("{size}: bottleneck {b:?}"))?;
        ensure(net.parameter_count() == golden, || format!("{size}: {} parameters", net.parameter_count()))?;
    }
    Ok(format!("shapes preserved at 64/128/256, {golden} parameters"))
}

fn memorize_batch() -> Check {
    let samples = generate_synthetic_dataset(4, 32, 8).unwrap();
    let batch: Vec<&Sample> = samples.iter().collect();
    let mut net = build_unet(&UNetConfig::scaled(32, 4), 8).unwrap();
    let focal = FocalParams::new(0.25, 2.0).unwrap();
    let before = tally_samples(&net, &samples, &focal, 0.5).unwrap().mean_loss();
    let adam = AdamConfig {
        learning_rate: 1e-3,
        ..AdamConfig::default()
    };
    let mut stepper = BatchStepper::new(&net, focal, adam, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for step in 1..=20 {
        let t = stepper.step(&mut net, &batch, Some(&mut rng)).map_err(|e| e.to_string())?;
        ensure(t.mean_loss().is_finite(), || format!("step {step}: loss {}", t.mean_loss()))?;
        ensure(net.parameters().iter().all(|p| p.is_finite()), || format!("step {step}: non-finite weight"))?;
    }
    let after = tally_samples(&net, &samples, &focal, 0.5).unwrap().mean_loss();
    ensure(after < before, || format!("loss {before:.6} -> {after:.6}"))?;
    Ok(format!("loss {before:.6} -> {after:.6} after 20 steps"))
}

fn desk_run(tag: &str) -> Result<ExperimentOutcome, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut campaign = preset("desk").unwrap();
    campaign.output_dir = dir.path().join(tag);
    let specs = campaign.resolve().map_err(|e| e.to_string())?;
    let mut result = run_campaign(&specs, false).map_err(|e| e.to_string())?;
    result.rows.remove(0).outcome.map_err(|e| e.to_string())
}

fn desk_smoke(run: &Result<ExperimentOutcome, String>) -> Check {
    let o = run.as_ref().map_err(Clone::clone)?;
    let first = o.history.first().unwrap().train_loss;
    let last = o.history.last().unwrap().train_loss;
    ensure(o.report.dice >= 0.80, || format!("test dice {:.4}", o.report.dice))?;
    ensure(last <= 0.5 * first, || format!("train loss {first:.5} -> {last:.5}"))?;
    Ok(format!(
        "test dice {:.4}, train loss {first:.5} -> {last:.5} ({:.1}% of epoch 1)",
        o.report.dice,
        100.0 * last / first
    ))
}

fn desk_determinism(a: &Result<ExperimentOutcome, String>, b: &Result<ExperimentOutcome, String>) -> Check {
    let a = a.as_ref().map_err(Clone::clone)?;
    let b = b.as_ref().map_err(Clone::clone)?;
    let diff = a.report.max_abs_diff(&b.report);
    ensure(diff <= 1e-6, || format!("reports differ by {diff:e}"))?;
    Ok(format!("max field difference {diff:e}"))
}

fn main() {
    let started = Instant::now();
    let mut failed = 0;
    let mut total = 0;
    let mut record = |n: u32, title: &str, check: Check| {
        let (tag, detail) = match check {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        total += 1;
        println!("{tag} criterion {n:>2}: {title}: {detail}");
    };
    record(1, "focal loss scalar", focal_scalar());
    record(2, "cross-entropy limit", bce_limit());
    record(3, "focal gradient vs finite differences", gradient_check());
    record(4, "metric oracle", metric_oracle());
    record(5, "augmentation laws", augmentation_laws());
    record(6, "split law", split_law());
    record(7, "U-Net shape law", unet_shape_law());
    record(8, "end-to-end gradient sanity", memorize_batch());
    let first = desk_run("first");
    record(9, "desk-scale smoke experiment", desk_smoke(&first));
    let second = desk_run("second");
    record(10, "campaign determinism", desk_determinism(&first, &second));
    println!(
        "acceptance: {} passed, {failed} failed in {:.0}s",
        total - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
