use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::UNetConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerKind {
    Input,
    Conv { kernel: usize, relu: bool },
    MaxPool { size: usize },
    Dropout { rate: f64 },
    TransposedConv { kernel: usize, stride: usize },
    /// Concatenates the named encoder skip tensor after the current one.
    Concat { skip: String, skip_shape: [usize; 3] },
    Sigmoid,
}

/// One node of the layer graph. Shapes are `[channels, height, width]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerInfo {
    pub name: String,
    pub kind: LayerKind,
    pub input_shape: [usize; 3],
    pub output_shape: [usize; 3],
    pub params: usize,
}

/// Ordered description of the network, derived from a [`UNetConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGraph {
    pub layers: Vec<LayerInfo>,
}

impl LayerGraph {
    pub fn describe(cfg: &UNetConfig) -> Self {
        let mut b = Builder {
            layers: Vec::new(),
            shape: [cfg.input_channels, cfg.input_size, cfg.input_size],
        };
        b.push("input", LayerKind::Input, b.shape, 0);
        let k = cfg.kernel_size;
        let mut skips = Vec::new();
        for level in 0..cfg.depth {
            let f = cfg.filters_at(level);
            b.conv(format!("enc{level}_conv1"), f, k, true);
            b.conv(format!("enc{level}_conv2"), f, k, true);
            skips.push((format!("enc{level}_conv2"), b.shape));
            let [c, h, w] = b.shape;
            let p = cfg.pool_size;
            b.push(
                format!("enc{level}_pool"),
                LayerKind::MaxPool { size: p },
                [c, h / p, w / p],
                0,
            );
            b.push(
                format!("enc{level}_dropout"),
                LayerKind::Dropout {
                    rate: cfg.dropout_rate,
                },
                b.shape,
                0,
            );
        }
        b.conv("bottleneck_conv1".into(), cfg.bottleneck_filters, k, true);
        b.conv("bottleneck_conv2".into(), cfg.bottleneck_filters, k, true);
        for level in (0..cfg.depth).rev() {
            let f = cfg.filters_at(level);
            let s = cfg.pool_size;
            let [c, h, w] = b.shape;
            b.push(
                format!("dec{level}_upconv"),
                LayerKind::TransposedConv {
                    kernel: s,
                    stride: s,
                },
                [f, h * s, w * s],
                s * s * c * f + f,
            );
            let (skip, skip_shape) = skips[level].clone();
            let [c, h, w] = b.shape;
            b.push(
                format!("dec{level}_concat"),
                LayerKind::Concat { skip, skip_shape },
                [c + skip_shape[0], h, w],
                0,
            );
            b.push(
                format!("dec{level}_dropout"),
                LayerKind::Dropout {
                    rate: cfg.dropout_rate,
                },
                b.shape,
                0,
            );
            b.conv(format!("dec{level}_conv1"), f, k, true);
            b.conv(format!("dec{level}_conv2"), f, k, true);
        }
        b.conv("head_conv".into(), 1, 1, false);
        b.push("head_sigmoid", LayerKind::Sigmoid, b.shape, 0);
        LayerGraph { layers: b.layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.params).sum()
    }

    pub fn layer(&self, name: &str) -> Option<&LayerInfo> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn output_shape(&self) -> [usize; 3] {
        self.layers.last().map_or([0; 3], |l| l.output_shape)
    }

    /// Output channel count of each encoder block's second convolution.
    pub fn encoder_filters(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter(|l| l.name.starts_with("enc") && l.name.ends_with("_conv2"))
            .map(|l| l.output_shape[0])
            .collect()
    }
}

struct Builder {
    layers: Vec<LayerInfo>,
    shape: [usize; 3],
}

impl Builder {
    fn push(&mut self, name: impl Into<String>, kind: LayerKind, out: [usize; 3], params: usize) {
        self.layers.push(LayerInfo {
            name: name.into(),
            kind,
            input_shape: self.shape,
            output_shape: out,
            params,
        });
        self.shape = out;
    }

    fn conv(&mut self, name: String, filters: usize, k: usize, relu: bool) {
        let [c, h, w] = self.shape;
        self.push(
            name,
            LayerKind::Conv { kernel: k, relu },
            [filters, h, w],
            k * k * c * filters + filters,
        );
    }
}
