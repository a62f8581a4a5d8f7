use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::LayerGraph;
use super::layers::{dropout, max_pool, max_pool_backward, relu_backward, Conv, UpConv};
use super::UNetConfig;
use crate::error::{Error, Result};
use crate::image::{GrayImage, ProbabilityMap};
use crate::tensor::Tensor4;

#[derive(Debug, Clone, PartialEq)]
struct Decoder {
    up: UpConv,
    convs: [Conv; 2],
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    encoder: Vec<[Conv; 2]>,
    bottleneck: [Conv; 2],
    /// Deepest level first.
    decoder: Vec<Decoder>,
    head: Conv,
    len: usize,
}

impl Layout {
    fn new(cfg: &UNetConfig) -> Self {
        let k = cfg.kernel_size;
        let mut alloc = Allocator(0);
        let mut c = cfg.input_channels;
        let mut encoder = Vec::with_capacity(cfg.depth);
        for level in 0..cfg.depth {
            let f = cfg.filters_at(level);
            encoder.push([alloc.conv(c, f, k), alloc.conv(f, f, k)]);
            c = f;
        }
        let b = cfg.bottleneck_filters;
        let bottleneck = [alloc.conv(c, b, k), alloc.conv(b, b, k)];
        c = b;
        let mut decoder = Vec::with_capacity(cfg.depth);
        for level in (0..cfg.depth).rev() {
            let f = cfg.filters_at(level);
            let up = alloc.up(c, f, cfg.pool_size);
            let convs = [alloc.conv(2 * f, f, k), alloc.conv(f, f, k)];
            decoder.push(Decoder { up, convs });
            c = f;
        }
        let head = alloc.conv(c, 1, 1);
        Layout {
            encoder,
            bottleneck,
            decoder,
            head,
            len: alloc.0,
        }
    }

    fn convs(&self) -> impl Iterator<Item = &Conv> {
        self.encoder
            .iter()
            .flatten()
            .chain(&self.bottleneck)
            .chain(self.decoder.iter().flat_map(|d| &d.convs))
            .chain(core::iter::once(&self.head))
    }
}

/// Hands out consecutive parameter ranges in layer order.
struct Allocator(usize);

impl Allocator {
    fn conv(&mut self, c_in: usize, c_out: usize, k: usize) -> Conv {
        let c = Conv {
            c_in,
            c_out,
            k,
            offset: self.0,
        };
        self.0 += c.param_len();
        c
    }

    fn up(&mut self, c_in: usize, c_out: usize, s: usize) -> UpConv {
        let u = UpConv {
            c_in,
            c_out,
            s,
            offset: self.0,
        };
        self.0 += u.param_len();
        u
    }
}

/// U-Net with its trainable parameters stored in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct UNet {
    config: UNetConfig,
    layout: Layout,
    params: Vec<f64>,
}

/// Builds the network and draws He-normal weights (`N(0, 2/fan_in)`,
/// zero biases) from a ChaCha8 stream seeded with `seed`.
pub fn build_unet(config: &UNetConfig, seed: u64) -> Result<UNet> {
    config.validate()?;
    let layout = Layout::new(config);
    let mut params = vec![0.0; layout.len];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = |offset: usize, len: usize, fan_in: usize| {
        let std = libm::sqrt(2.0 / fan_in as f64);
        for w in &mut params[offset..offset + len] {
            *w = std * standard_normal(&mut rng);
        }
    };
    for conv in layout.convs() {
        init(conv.offset, conv.weight_len(), conv.fan_in());
    }
    for d in &layout.decoder {
        init(d.up.offset, d.up.weight_len(), d.up.fan_in());
    }
    Ok(UNet {
        config: config.clone(),
        layout,
        params,
    })
}

/// Box-Muller draw from the standard normal distribution.
fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

struct EncoderTrace {
    a1: Vec<f64>,
    a2: Vec<f64>,
    argmax: Vec<u32>,
    drop: Option<Vec<f64>>,
    /// Pooled, post-dropout output fed to the next level.
    out: Vec<f64>,
}

struct DecoderTrace {
    /// Post-dropout concatenation fed to the first conv.
    cat: Vec<f64>,
    drop: Option<Vec<f64>>,
    a1: Vec<f64>,
    a2: Vec<f64>,
}

/// Activations of one forward pass over a single sample, kept for
/// backpropagation.
pub struct ForwardTrace {
    input: Vec<f64>,
    encoder: Vec<EncoderTrace>,
    bottleneck: [Vec<f64>; 2],
    decoder: Vec<DecoderTrace>,
    probs: Vec<f64>,
}

impl ForwardTrace {
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probabilities(self) -> Vec<f64> {
        self.probs
    }
}

impl UNet {
    /// Rebuilds a network from saved parameters.
    pub fn from_parameters(config: &UNetConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        if params.len() != layout.len {
            return Err(Error::Contract(format!(
                "config needs {} parameters, got {}",
                layout.len,
                params.len()
            )));
        }
        Ok(UNet {
            config: config.clone(),
            layout,
            params,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn graph(&self) -> LayerGraph {
        LayerGraph::describe(&self.config)
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    /// `(offset, weight count, fan_in)` of every convolution and
    /// transposed convolution, in layer order.
    pub fn weight_blocks(&self) -> Vec<(usize, usize, usize)> {
        let mut blocks: Vec<_> = self
            .layout
            .convs()
            .map(|c| (c.offset, c.weight_len(), c.fan_in()))
            .chain(
                self.layout
                    .decoder
                    .iter()
                    .map(|d| (d.up.offset, d.up.weight_len(), d.up.fan_in())),
            )
            .collect();
        blocks.sort_unstable();
        blocks
    }

    fn check_input(&self, h: usize, w: usize, c: usize) -> Result<()> {
        let n = self.config.input_size;
        if h != n || w != n {
            return Err(Error::Contract(format!(
                "model expects {n}x{n} inputs, got {w}x{h}"
            )));
        }
        if c != self.config.input_channels {
            return Err(Error::Contract(format!(
                "model expects {} input channels, got {c}",
                self.config.input_channels
            )));
        }
        Ok(())
    }

    /// Batched forward pass over a `B×H×W×C` tensor. Dropout is active only
    /// when `training` supplies an RNG.
    pub fn forward(&self, batch: &Tensor4, mut training: Option<&mut dyn RngCore>) -> Result<Tensor4> {
        let [b, h, w, c] = batch.shape();
        self.check_input(h, w, c)?;
        let mut out = Vec::with_capacity(b * h * w);
        for i in 0..b {
            let chw = hwc_to_chw(batch.item(i), h, w, c);
            let trace = self.trace(chw, reborrow(&mut training));
            out.extend(trace.probs);
        }
        Tensor4::from_vec([b, h, w, 1], out)
    }

    /// Inference on one image.
    pub fn predict(&self, image: &GrayImage) -> Result<ProbabilityMap> {
        self.check_input(image.height(), image.width(), 1)?;
        let input = image.pixels().iter().map(|&p| f64::from(p)).collect();
        let probs = self.trace(input, None).probs;
        ProbabilityMap::new(image.width(), image.height(), probs)
    }

    /// Forward pass over one `C×H×W` sample keeping every activation.
    pub fn forward_trace(
        &self,
        input: Vec<f64>,
        training: Option<&mut dyn RngCore>,
    ) -> Result<ForwardTrace> {
        let n = self.config.input_size;
        if input.len() != self.config.input_channels * n * n {
            return Err(Error::Contract(format!(
                "sample has {} values, expected {}",
                input.len(),
                self.config.input_channels * n * n
            )));
        }
        Ok(self.trace(input, training))
    }

    fn trace(&self, input: Vec<f64>, mut rng: Option<&mut dyn RngCore>) -> ForwardTrace {
        let cfg = &self.config;
        let p = &self.params;
        let rate = cfg.dropout_rate;
        let mut size = cfg.input_size;
        let mut encoder: Vec<EncoderTrace> = Vec::with_capacity(cfg.depth);
        for convs in &self.layout.encoder {
            let x = encoder.last().map_or(&input, |e| &e.out);
            let a1 = convs[0].forward(p, x, size, size, true);
            let a2 = convs[1].forward(p, &a1, size, size, true);
            let (mut out, argmax) = max_pool(&a2, convs[1].c_out, size, size, cfg.pool_size);
            let drop = match reborrow(&mut rng) {
                Some(r) if rate > 0.0 => Some(dropout(&mut out, rate, r)),
                _ => None,
            };
            size /= cfg.pool_size;
            encoder.push(EncoderTrace {
                a1,
                a2,
                argmax,
                drop,
                out,
            });
        }
        let x = encoder.last().map_or(&input, |e| &e.out);
        let b1 = self.layout.bottleneck[0].forward(p, x, size, size, true);
        let b2 = self.layout.bottleneck[1].forward(p, &b1, size, size, true);

        let mut decoder: Vec<DecoderTrace> = Vec::with_capacity(cfg.depth);
        for (j, dec) in self.layout.decoder.iter().enumerate() {
            let level = cfg.depth - 1 - j;
            let x = decoder.last().map_or(&b2, |d| &d.a2);
            let mut cat = dec.up.forward(p, x, size, size);
            size *= cfg.pool_size;
            cat.extend_from_slice(&encoder[level].a2);
            let drop = match reborrow(&mut rng) {
                Some(r) if rate > 0.0 => Some(dropout(&mut cat, rate, r)),
                _ => None,
            };
            let a1 = dec.convs[0].forward(p, &cat, size, size, true);
            let a2 = dec.convs[1].forward(p, &a1, size, size, true);
            decoder.push(DecoderTrace { cat, drop, a1, a2 });
        }
        let last = decoder.last().map_or(&b2, |d| &d.a2);
        let mut probs = self.layout.head.forward(p, last, size, size, false);
        probs.iter_mut().for_each(|z| *z = sigmoid(*z));
        ForwardTrace {
            input,
            encoder,
            bottleneck: [b1, b2],
            decoder,
            probs,
        }
    }

    /// Accumulates `∂L/∂params` into `grads` given `∂L/∂probabilities`.
    pub fn backward(&self, trace: &ForwardTrace, d_probs: &[f64], grads: &mut [f64]) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::Contract(format!(
                "gradient buffer has {} entries, model has {}",
                grads.len(),
                self.params.len()
            )));
        }
        if d_probs.len() != trace.probs.len() {
            return Err(Error::Contract(format!(
                "output gradient has {} entries, expected {}",
                d_probs.len(),
                trace.probs.len()
            )));
        }
        let cfg = &self.config;
        let p = &self.params;
        let ps = cfg.pool_size;
        let full = cfg.input_size;
        let level_size = |level: usize| full / ps.pow(level as u32);

        let d_logits: Vec<f64> = d_probs
            .iter()
            .zip(&trace.probs)
            .map(|(g, &y)| g * y * (1.0 - y))
            .collect();
        let last = trace.decoder.last().map_or(&trace.bottleneck[1], |d| &d.a2);
        let mut d = self
            .layout
            .head
            .backward(p, grads, last, &d_logits, full, full, true)
            .expect("input gradient requested");

        let mut d_skip: Vec<Vec<f64>> = vec![Vec::new(); cfg.depth];
        for (j, dec) in self.layout.decoder.iter().enumerate().rev() {
            let level = cfg.depth - 1 - j;
            let size = level_size(level);
            let tr = &trace.decoder[j];
            relu_backward(&mut d, &tr.a2);
            let mut d1 = dec.convs[1]
                .backward(p, grads, &tr.a1, &d, size, size, true)
                .expect("input gradient requested");
            relu_backward(&mut d1, &tr.a1);
            let mut d_cat = dec.convs[0]
                .backward(p, grads, &tr.cat, &d1, size, size, true)
                .expect("input gradient requested");
            if let Some(mask) = &tr.drop {
                d_cat.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
            }
            let skip = d_cat.split_off(dec.up.c_out * size * size);
            d_skip[level] = skip;
            let below = size / ps;
            let x = if j == 0 {
                &trace.bottleneck[1]
            } else {
                &trace.decoder[j - 1].a2
            };
            d = dec.up.backward(p, grads, x, &d_cat, below, below);
        }

        let size = level_size(cfg.depth);
        let [b1, b2] = &trace.bottleneck;
        relu_backward(&mut d, b2);
        let mut d1 = self.layout.bottleneck[1]
            .backward(p, grads, b1, &d, size, size, true)
            .expect("input gradient requested");
        relu_backward(&mut d1, b1);
        let x = trace.encoder.last().map_or(&trace.input, |e| &e.out);
        let mut d = self.layout.bottleneck[0]
            .backward(p, grads, x, &d1, size, size, true)
            .expect("input gradient requested");

        for (level, convs) in self.layout.encoder.iter().enumerate().rev() {
            let size = level_size(level);
            let tr = &trace.encoder[level];
            if let Some(mask) = &tr.drop {
                d.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
            }
            let mut d2 = max_pool_backward(&d, &tr.argmax, tr.a2.len());
            d2.iter_mut().zip(&d_skip[level]).for_each(|(g, s)| *g += s);
            relu_backward(&mut d2, &tr.a2);
            let mut d1 = convs[1]
                .backward(p, grads, &tr.a1, &d2, size, size, true)
                .expect("input gradient requested");
            relu_backward(&mut d1, &tr.a1);
            let x = if level == 0 {
                &trace.input
            } else {
                &trace.encoder[level - 1].out
            };
            match convs[0].backward(p, grads, x, &d1, size, size, level > 0) {
                Some(next) => d = next,
                None => break,
            }
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

fn hwc_to_chw(item: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    if c == 1 {
        return item.to_vec();
    }
    let mut out = vec![0.0; item.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out[(ch * h + y) * w + x] = item[(y * w + x) * c + ch];
            }
        }
    }
    out
}

/// Shortens the borrow of an optional RNG so it can be passed on repeatedly.
pub(crate) fn reborrow<'a>(rng: &'a mut Option<&mut dyn RngCore>) -> Option<&'a mut dyn RngCore> {
    match rng {
        Some(r) => Some(&mut **r),
        None => None,
    }
}
