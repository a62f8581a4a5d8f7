use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tumorseg_core::loss::{focal_loss, focal_loss_gradient};
use tumorseg_core::tensor::Tensor4;
use tumorseg_core::unet::{build_unet, LayerGraph, LayerKind};
use tumorseg_core::{FocalParams, UNet, UNetConfig};

/// Sum of k·k·c_in·c_out + c_out over every convolution and transposed
/// convolution, walking the architecture by hand.
fn param_oracle(cfg: &UNetConfig) -> usize {
    let conv = |k: usize, ci: usize, co: usize| k * k * ci * co + co;
    let k = cfg.kernel_size;
    let mut total = 0;
    let mut c = cfg.input_channels;
    for level in 0..cfg.depth {
        let f = cfg.base_filters << level;
        total += conv(k, c, f) + conv(k, f, f);
        c = f;
    }
    total += conv(k, c, cfg.bottleneck_filters) + conv(k, cfg.bottleneck_filters, cfg.bottleneck_filters);
    c = cfg.bottleneck_filters;
    for level in (0..cfg.depth).rev() {
        let f = cfg.base_filters << level;
        total += conv(cfg.pool_size, c, f);
        total += conv(k, 2 * f, f) + conv(k, f, f);
        c = f;
    }
    total + conv(1, c, 1)
}

#[test]
fn golden_parameter_counts() {
    for (cfg, golden) in [
        (UNetConfig::default(), 31_030_593),
        (UNetConfig::scaled(64, 8), 485_673),
        (UNetConfig::scaled(32, 4), 121_653),
    ] {
        assert_eq!(param_oracle(&cfg), golden);
        assert_eq!(LayerGraph::describe(&cfg).param_count(), golden);
    }
}

#[test]
fn default_architecture() {
    let cfg = UNetConfig::default();
    let g = LayerGraph::describe(&cfg);
    assert_eq!(g.encoder_filters(), vec![64, 128, 256, 512]);
    assert_eq!(g.layer("bottleneck_conv2").unwrap().output_shape, [1024, 16, 16]);
    assert_eq!(g.output_shape(), [1, 256, 256]);
}

#[test]
fn skip_shapes_match_encoder_outputs() {
    for size in [64, 128, 256] {
        let cfg = UNetConfig {
            input_size: size,
            ..UNetConfig::default()
        };
        let g = LayerGraph::describe(&cfg);
        for level in 0..cfg.depth {
            let enc = g.layer(&format!("enc{level}_conv2")).unwrap().output_shape;
            assert_eq!(enc[1], size >> level);
            let cat = g.layer(&format!("dec{level}_concat")).unwrap();
            let LayerKind::Concat { skip_shape, .. } = &cat.kind else {
                panic!("not a concat");
            };
            assert_eq!(*skip_shape, enc);
            assert_eq!(cat.input_shape[1..], enc[1..]);
        }
        assert_eq!(g.output_shape(), [1, size, size]);
    }
}

#[test]
fn forward_preserves_shape_and_range() {
    for size in [64, 128, 256] {
        let cfg = UNetConfig::scaled(size, 4);
        let net = build_unet(&cfg, 1).unwrap();
        let batch = Tensor4::zeros([2, size, size, 1]);
        let out = net.forward(&batch, None).unwrap();
        assert_eq!(out.shape(), [2, size, size, 1]);
        assert!(out.data().iter().all(|&p| p > 0.0 && p < 1.0));
    }
}

#[test]
fn inference_is_deterministic_and_dropout_is_not() {
    let cfg = UNetConfig::scaled(32, 4);
    let net = build_unet(&cfg, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let data = (0..32 * 32).map(|_| rng.random_range(0.0..1.0)).collect();
    let batch = Tensor4::from_vec([1, 32, 32, 1], data).unwrap();
    let a = net.forward(&batch, None).unwrap();
    assert_eq!(a, net.forward(&batch, None).unwrap());
    let t = net.forward(&batch, Some(&mut rng)).unwrap();
    assert_ne!(a, t);
}

#[test]
fn he_init_variance() {
    let net = build_unet(&UNetConfig::default(), 42).unwrap();
    let mut checked = 0;
    for (offset, len, fan_in) in net.weight_blocks() {
        if len < 10_000 {
            continue;
        }
        let w = &net.parameters()[offset..offset + len];
        let mean = w.iter().sum::<f64>() / len as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / len as f64;
        let expected = 2.0 / fan_in as f64;
        assert!((var / expected - 1.0).abs() < 0.2, "block at {offset}: {var} vs {expected}");
        checked += 1;
    }
    assert!(checked >= 15, "{checked}");
}

fn sample_loss(net: &UNet, input: &[f64], target: &[f64], focal: &FocalParams) -> f64 {
    let trace = net.forward_trace(input.to_vec(), None).unwrap();
    focal_loss(trace.probabilities(), target, focal).unwrap()
}

#[test]
fn end_to_end_gradient_matches_finite_differences() {
    let cfg = UNetConfig::scaled(32, 4);
    let mut net = build_unet(&cfg, 3).unwrap();
    let focal = FocalParams::new(0.25, 2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let input: Vec<f64> = (0..32 * 32).map(|_| rng.random_range(0.0..1.0)).collect();
    let target: Vec<f64> = (0..32 * 32).map(|i| f64::from(u8::from(i % 7 == 0))).collect();

    let trace = net.forward_trace(input.clone(), None).unwrap();
    let d = focal_loss_gradient(trace.probabilities(), &target, &focal).unwrap();
    let mut grads = vec![0.0; net.parameter_count()];
    net.backward(&trace, &d, &mut grads).unwrap();

    let mut probes: Vec<usize> = net
        .weight_blocks()
        .iter()
        .flat_map(|&(offset, len, _)| [offset, offset + len / 2, offset + len - 1])
        .collect();
    probes.push(net.parameter_count() - 1);
    let h = 1e-6;
    let mut compared = 0;
    for i in probes {
        let orig = net.parameters()[i];
        net.parameters_mut()[i] = orig + h;
        let up = sample_loss(&net, &input, &target, &focal);
        net.parameters_mut()[i] = orig - h;
        let down = sample_loss(&net, &input, &target, &focal);
        net.parameters_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let scale = grads[i].abs().max(fd.abs());
        if scale < 1e-9 {
            continue;
        }
        let rel = (grads[i] - fd).abs() / scale;
        assert!(rel < 1e-2, "param {i}: analytic {} vs fd {fd}", grads[i]);
        compared += 1;
    }
    assert!(compared >= 20, "only {compared} probes had a measurable gradient");
}
