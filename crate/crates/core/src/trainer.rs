//! Fixed-schedule training and test-set evaluation.
//!
//! Training always runs the configured number of epochs; there is no early
//! stopping. The weights left in the model are the last epoch's. Observers
//! get a callback per batch (for id audits) and per epoch (for history
//! persistence and best-validation checkpoints).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{apply_augmentation, AugmentationSpec};
use crate::dataset::{DatasetSplits, Sample};
use crate::error::{Error, Result};
use crate::image::{GrayImage, ProbabilityMap};
use crate::loss::FocalParams;
use crate::metrics::{evaluate_dataset, DatasetMetrics, MetricReport, DEFAULT_THRESHOLD};
use crate::optim::{Adam, AdamConfig};
use crate::unet::model::reborrow;
use crate::unet::UNet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let d = AdamConfig::default();
        OptimizerConfig::Adam {
            beta1: d.beta1,
            beta2: d.beta2,
            epsilon: d.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub eval_threshold: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            learning_rate: 1e-4,
            epochs: 200,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            eval_threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.eval_threshold > 0.0 && self.eval_threshold < 1.0) {
            return Err(Error::Config(format!(
                "eval_threshold must lie in (0, 1), got {}",
                self.eval_threshold
            )));
        }
        let OptimizerConfig::Adam {
            beta1,
            beta2,
            epsilon,
        } = self.optimizer;
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0) {
            return Err(Error::Config(format!(
                "Adam needs beta1, beta2 in [0, 1) and epsilon > 0, got {beta1}, {beta2}, {epsilon}"
            )));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        let OptimizerConfig::Adam {
            beta1,
            beta2,
            epsilon,
        } = self.optimizer;
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1,
            beta2,
            epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first(&self) -> Option<&EpochRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// Epoch record with the lowest validation loss (earliest on ties).
    pub fn best_val(&self) -> Option<&EpochRecord> {
        self.records
            .iter()
            .fold(None, |best: Option<&EpochRecord>, r| match best {
                Some(b) if b.val_loss <= r.val_loss => Some(b),
                _ => Some(r),
            })
    }
}

/// Hooks into the training loop. All methods default to no-ops.
pub trait TrainingObserver {
    /// The final training list, after augmentation.
    fn on_training_set(&mut self, _ids: &[&str]) -> Result<()> {
        Ok(())
    }

    /// Sample ids about to contribute to one weight update.
    fn on_batch(&mut self, _epoch: usize, _batch: usize, _ids: &[&str]) -> Result<()> {
        Ok(())
    }

    /// `improved` is set when this epoch's validation loss is the lowest so far.
    fn on_epoch_end(&mut self, _record: &EpochRecord, _model: &UNet, _improved: bool) -> Result<()> {
        Ok(())
    }
}

/// Observer that does nothing.
pub struct NoopObserver;

impl TrainingObserver for NoopObserver {}

/// Per-pixel foreground probabilities for one image.
pub trait Segmenter {
    fn predict(&self, image: &GrayImage) -> Result<ProbabilityMap>;
}

impl Segmenter for UNet {
    fn predict(&self, image: &GrayImage) -> Result<ProbabilityMap> {
        UNet::predict(self, image)
    }
}

/// Loss and thresholded-accuracy totals over a set of pixels.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PixelTally {
    pub loss_sum: f64,
    pub correct: u64,
    pub pixels: u64,
}

impl PixelTally {
    pub fn mean_loss(&self) -> f64 {
        self.loss_sum / self.pixels.max(1) as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.pixels.max(1) as f64
    }

    fn add(&mut self, o: PixelTally) {
        self.loss_sum += o.loss_sum;
        self.correct += o.correct;
        self.pixels += o.pixels;
    }

    fn record(&mut self, focal: &FocalParams, threshold: f64, p: f64, fg: bool) {
        self.loss_sum += focal.pixel_loss(p, fg);
        self.correct += u64::from((p >= threshold) == fg);
        self.pixels += 1;
    }
}

/// One optimizer over one model: forward, focal-loss gradient, backward,
/// Adam update.
pub struct BatchStepper {
    optimizer: Adam,
    grads: Vec<f64>,
    focal: FocalParams,
    threshold: f64,
}

impl BatchStepper {
    pub fn new(model: &UNet, focal: FocalParams, adam: AdamConfig, threshold: f64) -> Self {
        Self {
            optimizer: Adam::new(adam, model.parameter_count()),
            grads: vec![0.0; model.parameter_count()],
            focal,
            threshold,
        }
    }

    /// Runs one update on `batch` and returns the batch's pixel tally
    /// (computed on the pre-update forward pass). Non-finite losses or
    /// gradients abort before the weights change.
    pub fn step(
        &mut self,
        model: &mut UNet,
        batch: &[&Sample],
        mut dropout: Option<&mut dyn RngCore>,
    ) -> Result<PixelTally> {
        if batch.is_empty() {
            return Err(Error::Contract("empty training batch".into()));
        }
        self.grads.iter_mut().for_each(|g| *g = 0.0);
        let elems: usize = batch.iter().map(|s| s.mask.pixels().len()).sum();
        let scale = 1.0 / elems as f64;
        let mut tally = PixelTally::default();
        for sample in batch {
            let input = sample.image.pixels().iter().map(|&p| f64::from(p)).collect();
            let trace = model.forward_trace(input, reborrow(&mut dropout))?;
            let probs = trace.probabilities();
            let mut d_probs = Vec::with_capacity(probs.len());
            for (&p, &m) in probs.iter().zip(sample.mask.pixels()) {
                let fg = m == 1;
                tally.record(&self.focal, self.threshold, p, fg);
                d_probs.push(self.focal.pixel_grad(p, fg) * scale);
            }
            model.backward(&trace, &d_probs, &mut self.grads)?;
        }
        if !tally.loss_sum.is_finite() {
            return Err(Error::Divergence {
                epoch: 0,
                batch: 0,
                detail: format!("batch loss is {}", tally.mean_loss()),
            });
        }
        if let Some(i) = self.grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                epoch: 0,
                batch: 0,
                detail: format!("gradient of parameter {i} is {}", self.grads[i]),
            });
        }
        self.optimizer.step(model.parameters_mut(), &self.grads);
        Ok(tally)
    }
}

/// Inference-mode loss and accuracy over `samples`.
pub fn tally_samples<S: Segmenter + ?Sized>(
    model: &S,
    samples: &[Sample],
    focal: &FocalParams,
    threshold: f64,
) -> Result<PixelTally> {
    let mut tally = PixelTally::default();
    for s in samples {
        let probs = model.predict(&s.image)?;
        for (&p, &m) in probs.values().iter().zip(s.mask.pixels()) {
            tally.record(focal, threshold, p, m == 1);
        }
    }
    Ok(tally)
}

/// Trains `model` in place for exactly `cfg.epochs` epochs.
///
/// Augmentation is applied once to the training split before the first
/// epoch. Batches are reshuffled every epoch from a ChaCha8 stream seeded
/// with `cfg.seed`, which also drives dropout.
pub fn train(
    model: &mut UNet,
    splits: &DatasetSplits,
    focal: &FocalParams,
    aug: &AugmentationSpec,
    cfg: &TrainingConfig,
    observer: &mut dyn TrainingObserver,
) -> Result<TrainingHistory> {
    cfg.validate()?;
    focal.validate()?;
    if splits.train.is_empty() || splits.val.is_empty() {
        return Err(Error::Contract(
            "training needs non-empty train and validation splits".into(),
        ));
    }
    let train_set = apply_augmentation(splits.train.clone(), aug)?;
    {
        let ids: Vec<&str> = train_set.iter().map(|s| s.id.as_str()).collect();
        observer.on_training_set(&ids)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stepper = BatchStepper::new(model, *focal, cfg.adam(), cfg.eval_threshold);
    let mut history = TrainingHistory::default();
    let mut best_val = f64::INFINITY;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_tally = PixelTally::default();
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let ids: Vec<&str> = batch.iter().map(|s| s.id.as_str()).collect();
            observer.on_batch(epoch, b + 1, &ids)?;
            let tally = stepper
                .step(model, &batch, Some(&mut rng))
                .map_err(|e| match e {
                    Error::Divergence { detail, .. } => Error::Divergence {
                        epoch,
                        batch: b + 1,
                        detail,
                    },
                    other => other,
                })?;
            epoch_tally.add(tally);
        }
        let val = tally_samples(model, &splits.val, focal, cfg.eval_threshold)?;
        let record = EpochRecord {
            epoch,
            train_loss: epoch_tally.mean_loss(),
            train_accuracy: epoch_tally.accuracy(),
            val_loss: val.mean_loss(),
            val_accuracy: val.accuracy(),
        };
        if !record.val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: 0,
                detail: format!("validation loss is {}", record.val_loss),
            });
        }
        let improved = record.val_loss < best_val;
        if improved {
            best_val = record.val_loss;
        }
        observer.on_epoch_end(&record, model, improved)?;
        history.records.push(record);
    }
    Ok(history)
}

/// Test-set evaluation with the full metric breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricReport,
    pub metrics: DatasetMetrics,
}

/// Inference over `test`: mean focal loss on raw probabilities plus
/// micro-pooled metrics at `threshold`.
pub fn evaluate<S: Segmenter + ?Sized>(
    model: &S,
    test: &[Sample],
    focal: &FocalParams,
    threshold: f64,
) -> Result<MetricReport> {
    evaluate_detailed(model, test, focal, threshold).map(|e| e.report)
}

pub fn evaluate_detailed<S: Segmenter + ?Sized>(
    model: &S,
    test: &[Sample],
    focal: &FocalParams,
    threshold: f64,
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::Contract("cannot evaluate on an empty test set".into()));
    }
    focal.validate()?;
    let mut loss_sum = 0.0;
    let mut pixels = 0usize;
    let mut maps = Vec::with_capacity(test.len());
    for s in test {
        let probs = model.predict(&s.image)?;
        for (&p, &m) in probs.values().iter().zip(s.mask.pixels()) {
            loss_sum += focal.pixel_loss(p, m == 1);
        }
        pixels += probs.values().len();
        maps.push(probs);
    }
    let masks: Vec<_> = test.iter().map(|s| s.mask.clone()).collect();
    let metrics = evaluate_dataset(&maps, &masks, threshold)?;
    let report = MetricReport::from_values(&metrics.micro, loss_sum / pixels as f64);
    Ok(Evaluation { report, metrics })
}

/// Strips augmentation suffixes to recover the id a sample derives from.
pub fn source_id(id: &str) -> &str {
    let mut id = id;
    loop {
        let stripped = ["_hflip", "_rot", "_scale"]
            .iter()
            .find_map(|s| id.strip_suffix(s));
        match stripped {
            Some(base) => id = base,
            None => return id,
        }
    }
}

/// Observer that records every id used for a weight update.
#[derive(Debug, Default, Clone)]
pub struct IdAudit {
    pub training_set: Vec<String>,
    pub updated_with: alloc::collections::BTreeSet<String>,
}

impl TrainingObserver for IdAudit {
    fn on_training_set(&mut self, ids: &[&str]) -> Result<()> {
        self.training_set = ids.iter().map(|s| String::from(*s)).collect();
        Ok(())
    }

    fn on_batch(&mut self, _epoch: usize, _batch: usize, ids: &[&str]) -> Result<()> {
        self.updated_with.extend(ids.iter().map(|s| String::from(*s)));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        TrainingConfig::default().validate().unwrap();
        for bad in [
            TrainingConfig {
                batch_size: 0,
                ..TrainingConfig::default()
            },
            TrainingConfig {
                learning_rate: 0.0,
                ..TrainingConfig::default()
            },
            TrainingConfig {
                epochs: 0,
                ..TrainingConfig::default()
            },
            TrainingConfig {
                eval_threshold: 1.0,
                ..TrainingConfig::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn adam_defaults() {
        let a = TrainingConfig::default().adam();
        assert_eq!((a.learning_rate, a.beta1, a.beta2, a.epsilon), (1e-4, 0.9, 0.999, 1e-7));
    }

    #[test]
    fn source_id_strips_suffixes() {
        assert_eq!(source_id("img_7_hflip"), "img_7");
        assert_eq!(source_id("a_rot_hflip"), "a");
        assert_eq!(source_id("plain"), "plain");
    }

    #[test]
    fn best_val_prefers_earliest_minimum() {
        let rec = |epoch, val_loss| EpochRecord {
            epoch,
            train_loss: 1.0,
            train_accuracy: 0.5,
            val_loss,
            val_accuracy: 0.5,
        };
        let h = TrainingHistory {
            records: vec![rec(1, 0.5), rec(2, 0.2), rec(3, 0.2), rec(4, 0.3)],
        };
        assert_eq!(h.best_val().unwrap().epoch, 2);
    }
}
