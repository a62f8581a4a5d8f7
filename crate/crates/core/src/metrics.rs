//! Confusion-count based segmentation metrics.
//!
//! Dataset-level numbers are micro-averaged: counts are pooled over every
//! pixel of every sample and the formulas are applied once.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{check_same_shape, BinaryMask, ProbabilityMap};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

impl core::ops::Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            true_pos: self.true_pos + o.true_pos,
            false_pos: self.false_pos + o.false_pos,
            false_neg: self.false_neg + o.false_neg,
            true_neg: self.true_neg + o.true_neg,
        }
    }
}

impl core::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// Metric values from one set of counts.
///
/// `precision_undefined` / `recall_undefined` flag a zero denominator that
/// was reported as 0.0 because the other mask was non-empty. When both
/// masks are empty every ratio is 1.0 and neither flag is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub iou: f64,
    pub dice: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

/// One evaluated model: the columns of the result tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Thresholded pixel accuracy.
    pub accuracy: f64,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub iou: f64,
    pub dice: f64,
}

impl MetricReport {
    pub fn from_values(values: &MetricValues, loss: f64) -> Self {
        Self {
            accuracy: values.accuracy,
            loss,
            precision: values.precision,
            recall: values.recall,
            iou: values.iou,
            dice: values.dice,
        }
    }

    /// Values in column order: accuracy, loss, precision, recall, iou, dice.
    pub fn columns(&self) -> [f64; 6] {
        [
            self.accuracy,
            self.loss,
            self.precision,
            self.recall,
            self.iou,
            self.dice,
        ]
    }

    pub fn max_abs_diff(&self, other: &MetricReport) -> f64 {
        self.columns()
            .iter()
            .zip(other.columns())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!(
            "decision threshold must lie in (0, 1), got {threshold}"
        )));
    }
    Ok(())
}

/// `1` where `pred >= threshold`.
pub fn binarize_prediction(pred: &ProbabilityMap, threshold: f64) -> Result<BinaryMask> {
    check_threshold(threshold)?;
    let pixels = pred
        .values()
        .iter()
        .map(|&p| u8::from(p >= threshold))
        .collect();
    BinaryMask::new(pred.width(), pred.height(), pixels)
}

pub fn confusion_counts(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionCounts> {
    check_same_shape(pred, gt, "confusion counts")?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.pixels().iter().zip(gt.pixels()) {
        match (p, g) {
            (1, 1) => c.true_pos += 1,
            (1, _) => c.false_pos += 1,
            (_, 1) => c.false_neg += 1,
            _ => c.true_neg += 1,
        }
    }
    Ok(c)
}

/// Applies the metric formulas to one set of counts.
pub fn compute_metrics(c: &ConfusionCounts) -> MetricValues {
    let tp = c.true_pos as f64;
    let fp = c.false_pos as f64;
    let fn_ = c.false_neg as f64;
    let total = c.total() as f64;
    let accuracy = if c.total() == 0 {
        1.0
    } else {
        (tp + c.true_neg as f64) / total
    };
    if c.true_pos + c.false_pos + c.false_neg == 0 {
        // Both masks empty: perfect agreement.
        return MetricValues {
            accuracy,
            precision: 1.0,
            recall: 1.0,
            iou: 1.0,
            dice: 1.0,
            precision_undefined: false,
            recall_undefined: false,
        };
    }
    let ratio = |num: f64, den: f64| if den == 0.0 { (0.0, true) } else { (num / den, false) };
    let (precision, precision_undefined) = ratio(tp, tp + fp);
    let (recall, recall_undefined) = ratio(tp, tp + fn_);
    MetricValues {
        accuracy,
        precision,
        recall,
        iou: tp / (tp + fp + fn_),
        dice: 2.0 * tp / (2.0 * tp + fp + fn_),
        precision_undefined,
        recall_undefined,
    }
}

/// Micro-pooled metrics plus the per-image means as a secondary summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetrics {
    pub counts: ConfusionCounts,
    pub micro: MetricValues,
    /// Mean of per-image Dice, reported alongside, never in place of, `micro`.
    pub per_image_mean_dice: f64,
    pub per_image_mean_iou: f64,
    pub per_image: Vec<ConfusionCounts>,
}

pub fn evaluate_dataset(
    pred_maps: &[ProbabilityMap],
    gt_masks: &[BinaryMask],
    threshold: f64,
) -> Result<DatasetMetrics> {
    if pred_maps.is_empty() {
        return Err(Error::Contract("cannot evaluate an empty dataset".into()));
    }
    if pred_maps.len() != gt_masks.len() {
        return Err(Error::Contract(format!(
            "{} prediction maps but {} ground-truth masks",
            pred_maps.len(),
            gt_masks.len()
        )));
    }
    let per_image = pred_maps
        .iter()
        .zip(gt_masks)
        .map(|(p, g)| confusion_counts(&binarize_prediction(p, threshold)?, g))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(per_image))
}

/// Pools per-image counts into [`DatasetMetrics`].
pub fn summarize(per_image: Vec<ConfusionCounts>) -> DatasetMetrics {
    let counts: ConfusionCounts = per_image.iter().copied().sum();
    let n = per_image.len().max(1) as f64;
    let (dice_sum, iou_sum) = per_image.iter().fold((0.0, 0.0), |(d, i), c| {
        let m = compute_metrics(c);
        (d + m.dice, i + m.iou)
    });
    DatasetMetrics {
        counts,
        micro: compute_metrics(&counts),
        per_image_mean_dice: dice_sum / n,
        per_image_mean_iou: iou_sum / n,
        per_image,
    }
}
