//! Per-sample classification losses (BCE, Focal, Varifocal), IoU/GIoU
//! regression losses, and their derivatives with respect to the predicted
//! score.
//!
//! Predicted scores are clamped to `[EPS, 1 - EPS]` before any logarithm, so
//! every loss is total. The derivatives are those of the unclamped
//! expressions evaluated at the clamped point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{giou, iou, BoundingBox};

pub const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl From<bool> for Label {
    fn from(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalConfig {
    pub alpha: f64,
    pub gamma: f64,
}

impl FocalConfig {
    /// alpha 0.25, gamma 2.
    pub const FOCAL_DEFAULT: Self = Self {
        alpha: 0.25,
        gamma: 2.0,
    };
    /// alpha 0.75, gamma 2.
    pub const VARIFOCAL_DEFAULT: Self = Self {
        alpha: 0.75,
        gamma: 2.0,
    };

    pub fn new(alpha: f64, gamma: f64) -> Result<Self> {
        let cfg = Self { alpha, gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be finite and non-negative, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarifocalSample {
    pub y_hat: f64,
    /// IoU-valued target quality; 0 marks a negative sample.
    pub q: f64,
}

impl VarifocalSample {
    pub fn new(y_hat: f64, q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidConfig(format!(
                "q must lie in [0, 1], got {q}"
            )));
        }
        if y_hat.is_nan() {
            return Err(Error::InvalidConfig("predicted score is NaN".into()));
        }
        Ok(Self { y_hat, q })
    }
}

#[inline]
fn clamp_score(y_hat: f64) -> f64 {
    y_hat.clamp(EPS, 1.0 - EPS)
}

pub fn bce_loss(y_hat: f64, y: Label) -> f64 {
    let p = clamp_score(y_hat);
    match y {
        Label::Positive => -p.ln(),
        Label::Negative => -(1.0 - p).ln(),
    }
}

pub fn bce_grad(y_hat: f64, y: Label) -> f64 {
    let p = clamp_score(y_hat);
    match y {
        Label::Positive => -1.0 / p,
        Label::Negative => 1.0 / (1.0 - p),
    }
}

pub fn focal_loss(y_hat: f64, y: Label, cfg: &FocalConfig) -> f64 {
    let p = clamp_score(y_hat);
    let FocalConfig { alpha, gamma } = *cfg;
    match y {
        Label::Positive => -alpha * (1.0 - p).powf(gamma) * p.ln(),
        Label::Negative => -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln(),
    }
}

pub fn focal_grad(y_hat: f64, y: Label, cfg: &FocalConfig) -> f64 {
    let p = clamp_score(y_hat);
    let FocalConfig { alpha, gamma } = *cfg;
    match y {
        Label::Positive => {
            // d/dp of -a (1-p)^g ln p
            let w = (1.0 - p).powf(gamma);
            let dw = if gamma == 0.0 {
                0.0
            } else {
                -gamma * (1.0 - p).powf(gamma - 1.0)
            };
            -alpha * (dw * p.ln() + w / p)
        }
        Label::Negative => negative_focal_grad(p, 1.0 - alpha, gamma),
    }
}

/// d/dp of `-weight * p^g * ln(1 - p)`.
fn negative_focal_grad(p: f64, weight: f64, gamma: f64) -> f64 {
    let w = p.powf(gamma);
    let dw = if gamma == 0.0 {
        0.0
    } else {
        gamma * p.powf(gamma - 1.0)
    };
    -weight * (dw * (1.0 - p).ln() - w / (1.0 - p))
}

/// Positives (`q > 0`) get BCE against the soft target `q`, weighted by `q`;
/// negatives get focal down-weighting `alpha * y_hat^gamma`.
pub fn varifocal_loss(s: &VarifocalSample, cfg: &FocalConfig) -> f64 {
    let p = clamp_score(s.y_hat);
    let q = s.q;
    if q > 0.0 {
        -q * (q * p.ln() + (1.0 - q) * (1.0 - p).ln())
    } else {
        -cfg.alpha * p.powf(cfg.gamma) * (1.0 - p).ln()
    }
}

pub fn varifocal_grad(s: &VarifocalSample, cfg: &FocalConfig) -> f64 {
    let p = clamp_score(s.y_hat);
    let q = s.q;
    if q > 0.0 {
        -q * (q / p - (1.0 - q) / (1.0 - p))
    } else {
        negative_focal_grad(p, cfg.alpha, cfg.gamma)
    }
}

pub fn iou_loss(pred: &BoundingBox, gt: &BoundingBox) -> f64 {
    1.0 - iou(pred, gt)
}

pub fn giou_loss(pred: &BoundingBox, gt: &BoundingBox) -> f64 {
    1.0 - giou(pred, gt)
}

/// Central difference `(f(x + h) - f(x - h)) / 2h`.
pub fn finite_diff_grad<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

/// Folds per-sample losses. The mean of an empty batch is 0.
pub fn reduce(losses: impl IntoIterator<Item = f64>, how: Reduction) -> f64 {
    let (sum, n) = losses
        .into_iter()
        .fold((0.0, 0usize), |(s, n), l| (s + l, n + 1));
    match how {
        Reduction::Sum => sum,
        Reduction::Mean if n == 0 => 0.0,
        Reduction::Mean => sum / n as f64,
    }
}
