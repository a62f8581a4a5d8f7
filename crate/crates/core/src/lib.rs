//! Core algorithms for binary tumor segmentation experiments.
//!
//! Everything here is pure computation over in-memory buffers: image
//! preprocessing math, deterministic dataset splits and synthetic corpora,
//! joint image/mask augmentation, focal loss and its gradient, confusion
//! based metrics, a U-Net with hand-written backward pass, Adam, and the
//! fixed-schedule trainer. The crate only needs `alloc`; the default `std`
//! feature turns on runtime CPU feature detection in the GEMM kernels.
//!
//! File IO, image decoding, reports and the CLI live in the `tumorseg`
//! crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod augment;
pub mod dataset;
pub mod error;
pub mod image;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod tensor;
pub mod trainer;
pub mod unet;

pub use augment::{AugmentationKind, AugmentationPlacement, AugmentationSpec};
pub use dataset::{DatasetSplits, Sample, TumorType};
pub use error::{Error, Result};
pub use image::{BinaryMask, GrayImage, ProbabilityMap};
pub use loss::{AlphaMode, FocalParams};
pub use metrics::{ConfusionCounts, MetricReport, MetricValues};
pub use trainer::{EpochRecord, OptimizerConfig, Segmenter, TrainingConfig, TrainingHistory, TrainingObserver};
pub use unet::{UNet, UNetConfig};
