//! U-Net encoder/decoder for binary segmentation.
//!
//! Encoder blocks are two same-padded ReLU convolutions, max pooling and
//! dropout. The bottleneck is two convolutions. Decoder blocks upsample with
//! a stride-`pool_size` transposed convolution, concatenate the matching
//! encoder output, apply dropout, then two ReLU convolutions. A 1×1
//! convolution with sigmoid produces per-pixel probabilities. There is no
//! batch normalization.

mod graph;
pub(crate) mod layers;
pub(crate) mod model;

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use graph::{LayerGraph, LayerInfo, LayerKind};
pub use model::{build_unet, ForwardTrace, UNet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UNetConfig {
    pub input_size: usize,
    pub input_channels: usize,
    pub base_filters: usize,
    pub depth: usize,
    pub bottleneck_filters: usize,
    pub kernel_size: usize,
    pub dropout_rate: f64,
    pub pool_size: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            input_size: 256,
            input_channels: 1,
            base_filters: 64,
            depth: 4,
            bottleneck_filters: 1024,
            kernel_size: 3,
            dropout_rate: 0.3,
            pool_size: 2,
        }
    }
}

impl UNetConfig {
    /// Default architecture scaled to `input_size` and `base_filters`, with
    /// the bottleneck kept at `base_filters · 2^depth`.
    pub fn scaled(input_size: usize, base_filters: usize) -> Self {
        let d = Self::default();
        Self {
            input_size,
            base_filters,
            bottleneck_filters: base_filters << d.depth,
            ..d
        }
    }

    /// Filters of encoder/decoder level `level` (0 = full resolution).
    pub fn filters_at(&self, level: usize) -> usize {
        self.base_filters << level
    }

    pub fn bottleneck_size(&self) -> usize {
        self.input_size / self.pool_size.pow(self.depth as u32)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: alloc::string::String| Err(Error::Config(msg));
        if self.depth == 0 || self.base_filters == 0 || self.input_channels == 0 {
            return err(format!(
                "depth, base_filters and input_channels must be positive (got {}, {}, {})",
                self.depth, self.base_filters, self.input_channels
            ));
        }
        if self.pool_size < 2 {
            return err(format!("pool_size must be at least 2, got {}", self.pool_size));
        }
        if self.kernel_size % 2 == 0 {
            return err(format!(
                "kernel_size must be odd for same padding, got {}",
                self.kernel_size
            ));
        }
        let Some(factor) = self
            .pool_size
            .checked_pow(self.depth as u32)
            .filter(|f| *f <= self.input_size)
        else {
            return err(format!(
                "input_size {} is smaller than pool_size^depth",
                self.input_size
            ));
        };
        if self.input_size % factor != 0 {
            return err(format!(
                "input_size {} is not divisible by pool_size^depth = {factor}",
                self.input_size
            ));
        }
        if self.bottleneck_filters != self.base_filters << self.depth {
            return err(format!(
                "bottleneck_filters {} must equal base_filters * 2^depth = {}",
                self.bottleneck_filters,
                self.base_filters << self.depth
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return err(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            ));
        }
        Ok(())
    }
}
