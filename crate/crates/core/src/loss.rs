//! Segmentation losses with analytic gradients w.r.t. the predicted
//! foreground probability: BCE, focal, normalized focal and soft IoU.
//!
//! For the pixel-wise losses `p` is the probability of the true class:
//! `pred` where the target is set, `1 - pred` elsewhere, clamped to
//! `[eps, 1 - eps]`. BCE and focal use sum reduction.

use serde::{Deserialize, Serialize};

use crate::error::{check_shape, Error, Result};
use crate::types::{BinaryMask, ProbMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    Focal,
    Nfl,
    SoftIou,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    pub gamma: f64,
    pub eps: f64,
    /// Treat the NFL normalizer as a constant when differentiating.
    pub detach_normalizer: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::Nfl,
            gamma: 2.0,
            eps: 1e-12,
            detach_normalizer: true,
        }
    }
}

impl LossConfig {
    pub fn with_kind(kind: LossKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::InvalidArgument(format!("eps must be in (0, 0.5), got {}", self.eps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// dL/dpred, row-major, same shape as the prediction.
    pub grad: Vec<f64>,
}

/// Dispatches on `cfg.kind`.
pub fn compute(pred: &ProbMap, target: &BinaryMask, cfg: &LossConfig) -> Result<LossResult> {
    match cfg.kind {
        LossKind::Bce => bce(pred, target, cfg),
        LossKind::Focal => focal(pred, target, cfg),
        LossKind::Nfl => nfl(pred, target, cfg),
        LossKind::SoftIou => soft_iou(pred, target, cfg),
    }
}

fn prepare(pred: &ProbMap, target: &BinaryMask, cfg: &LossConfig) -> Result<()> {
    cfg.validate()?;
    check_shape(pred.dims(), target.dims())
}

/// (p, dp/dpred) for one pixel.
#[inline]
fn true_class(pred: f64, y: bool, eps: f64) -> (f64, f64) {
    let p = if y { pred } else { 1.0 - pred };
    (p.clamp(eps, 1.0 - eps), if y { 1.0 } else { -1.0 })
}

pub fn bce(pred: &ProbMap, target: &BinaryMask, cfg: &LossConfig) -> Result<LossResult> {
    prepare(pred, target, cfg)?;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(pred.data().len());
    for (&x, &y) in pred.data().iter().zip(target.data()) {
        let (p, dp) = true_class(x, y, cfg.eps);
        value += -p.ln();
        grad.push(dp * (-1.0 / p));
    }
    Ok(LossResult { value, grad })
}

/// Per-pixel focal terms: (weight (1-p)^γ, loss w·(-ln p), d loss / d pred,
/// d weight / d pred).
fn focal_terms(pred: &ProbMap, target: &BinaryMask, cfg: &LossConfig) -> Vec<(f64, f64, f64, f64)> {
    let g = cfg.gamma;
    pred.data()
        .iter()
        .zip(target.data())
        .map(|(&x, &y)| {
            let (p, dp) = true_class(x, y, cfg.eps);
            let q = 1.0 - p;
            let w = q.powf(g);
            let dw_dp = -g * q.powf(g - 1.0);
            let term = w * (-p.ln());
            let dterm_dp = g * q.powf(g - 1.0) * p.ln() + w * (-1.0 / p);
            (w, term, dp * dterm_dp, dp * dw_dp)
        })
        .collect()
}

pub fn focal(pred: &ProbMap, target: &BinaryMask, cfg: &LossConfig) -> Result<LossResult> {
    prepare(pred, target, cfg)?;
    let terms = focal_terms(pred, target, cfg);
    Ok(LossResult {
        value: terms.iter().map(|t| t.1).sum(),
        grad: terms.iter().map(|t| t.2).collect(),
    })
}

/// Total focal weight `P = Σ (1 - p)^γ`.
pub fn focal_normalizer(pred: &ProbMap, target: &BinaryMask, cfg: &LossConfig) -> Result<f64> {
    prepare(pred, target, cfg)?;
    Ok(focal_terms(pred, target, cfg).iter().map(|t| t.0).sum())
}

/// Focal weights divided by their total; they sum to one.
pub fn nfl_weights(pred: &ProbMap, target: &BinaryMask, cfg: &LossConfig) -> Result<Vec<f64>> {
    prepare(pred, target, cfg)?;
    let terms = focal_terms(pred, target, cfg);
    let total = checked_normalizer(terms.iter().map(|t| t.0).sum())?;
    Ok(terms.iter().map(|t| t.0 / total).collect())
}

fn checked_normalizer(total: f64) -> Result<f64> {
    if total > 0.0 && total.is_finite() {
        Ok(total)
    } else {
        Err(Error::DegenerateNormalizer(total))
    }
}

/// Normalized focal loss `Σ (1-p)^γ (-ln p) / P`.
///
/// With `detach_normalizer` (the default) the gradient treats `P` as a
/// constant, so it is exactly the focal gradient scaled by `1/P`. Otherwise
/// the quotient rule through `P` is included.
pub fn nfl(pred: &ProbMap, target: &BinaryMask, cfg: &LossConfig) -> Result<LossResult> {
    prepare(pred, target, cfg)?;
    let terms = focal_terms(pred, target, cfg);
    let total = checked_normalizer(terms.iter().map(|t| t.0).sum())?;
    let focal_sum: f64 = terms.iter().map(|t| t.1).sum();
    let value = focal_sum / total;
    let grad = if cfg.detach_normalizer {
        terms.iter().map(|t| t.2 / total).collect()
    } else {
        terms
            .iter()
            .map(|t| t.2 / total - value / total * t.3)
            .collect()
    };
    Ok(LossResult { value, grad })
}

/// NFL value with an externally supplied normalizer. Holding the normalizer
/// fixed makes this the function whose gradient [`nfl`] reports when the
/// normalizer is detached.
pub fn nfl_with_normalizer(pred: &ProbMap, target: &BinaryMask, cfg: &LossConfig, normalizer: f64) -> Result<f64> {
    prepare(pred, target, cfg)?;
    let normalizer = checked_normalizer(normalizer)?;
    Ok(focal_terms(pred, target, cfg).iter().map(|t| t.1).sum::<f64>() / normalizer)
}

/// `1 - Σ pred·y / Σ (pred + y - pred·y)` on raw probabilities.
pub fn soft_iou(pred: &ProbMap, target: &BinaryMask, cfg: &LossConfig) -> Result<LossResult> {
    prepare(pred, target, cfg)?;
    if target.is_empty() {
        return Err(Error::EmptyMask("soft IoU needs a nonempty target".into()));
    }
    let (mut inter, mut union) = (0.0, 0.0);
    for (&x, &y) in pred.data().iter().zip(target.data()) {
        let y = if y { 1.0 } else { 0.0 };
        inter += x * y;
        union += x + y - x * y;
    }
    if union <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let grad = target
        .data()
        .iter()
        .map(|&y| {
            let y = if y { 1.0 } else { 0.0 };
            -(y * union - inter * (1.0 - y)) / (union * union)
        })
        .collect();
    Ok(LossResult {
        value: 1.0 - inter / union,
        grad,
    })
}
