//! Focal loss `FL(p_t) = -alpha * (1 - p_t)^gamma * ln(p_t)` and its
//! analytic gradient, mean-reduced over every element.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Predictions are clamped into `[PROB_EPSILON, 1 - PROB_EPSILON]` before
/// the logarithm.
pub const PROB_EPSILON: f64 = 1e-7;

/// How `alpha` weights the two classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// One constant `alpha` multiplies every pixel's loss.
    #[default]
    Symmetric,
    /// `alpha` for foreground pixels and `1 - alpha` for background;
    /// requires `alpha < 1`.
    ClassConditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
    #[serde(default)]
    pub alpha_mode: AlphaMode,
}

impl FocalParams {
    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        let p = Self {
            alpha,
            gamma,
            alpha_mode: AlphaMode::Symmetric,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!(
                "focal alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::Config(format!(
                "focal gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if self.alpha_mode == AlphaMode::ClassConditional && self.alpha >= 1.0 {
            return Err(Error::Config(format!(
                "class-conditional alpha must be below 1, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    fn weight(&self, foreground: bool) -> f64 {
        match (self.alpha_mode, foreground) {
            (AlphaMode::Symmetric, _) | (AlphaMode::ClassConditional, true) => self.alpha,
            (AlphaMode::ClassConditional, false) => 1.0 - self.alpha,
        }
    }

    /// Loss of a single element, `pred` clamped, `foreground` the label.
    pub fn pixel_loss(&self, pred: f64, foreground: bool) -> f64 {
        let p = pred.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
        let pt = if foreground { p } else { 1.0 - p };
        -self.weight(foreground) * pow(1.0 - pt, self.gamma) * libm::log(pt)
    }

    /// `d pixel_loss / d pred`. Zero where the clamp is active.
    pub fn pixel_grad(&self, pred: f64, foreground: bool) -> f64 {
        if !(PROB_EPSILON..=1.0 - PROB_EPSILON).contains(&pred) {
            return 0.0;
        }
        let pt = if foreground { pred } else { 1.0 - pred };
        let q = 1.0 - pt;
        let focusing = if self.gamma == 0.0 {
            0.0
        } else {
            self.gamma * pow(q, self.gamma - 1.0) * libm::log(pt)
        };
        let d_pt = self.weight(foreground) * (focusing - pow(q, self.gamma) / pt);
        if foreground {
            d_pt
        } else {
            -d_pt
        }
    }
}

fn pow(base: f64, exp: f64) -> f64 {
    if exp == 0.0 {
        1.0
    } else if exp == 1.0 {
        base
    } else if exp == 2.0 {
        base * base
    } else {
        libm::pow(base, exp)
    }
}

fn check_inputs(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::Contract(format!(
            "prediction has {} elements but target has {}",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Contract("focal loss of an empty tensor".into()));
    }
    if let Some((i, t)) = target
        .iter()
        .enumerate()
        .find(|(_, &t)| t != 0.0 && t != 1.0)
    {
        return Err(Error::Validation(format!(
            "target element {i} is {t}, expected 0 or 1"
        )));
    }
    Ok(())
}

/// Mean focal loss over all elements of equally shaped, flattened tensors.
pub fn focal_loss(pred: &[f64], target: &[f64], params: &FocalParams) -> Result<f64> {
    check_inputs(pred, target)?;
    params.validate()?;
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| params.pixel_loss(p, t == 1.0))
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Elementwise gradient of [`focal_loss`] with respect to `pred`.
pub fn focal_loss_gradient(pred: &[f64], target: &[f64], params: &FocalParams) -> Result<Vec<f64>> {
    check_inputs(pred, target)?;
    params.validate()?;
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| params.pixel_grad(p, t == 1.0) / n)
        .collect())
}
