//! A per-pixel logistic model over the same guidance the network input
//! carries (click encodings and previous mask) plus a few color cues. Small
//! enough to train on a laptop with the full click-simulation pipeline.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{logistic, Predictor, PredictorInput, WithoutMaskGuidance};
use crate::datasets::Dataset;
use crate::encoding::{click_seeds, dt_channel, EncodingConfig, DEFAULT_DT_CAP};
use crate::error::{Error, Result};
use crate::loss::{self, LossConfig};
use crate::par::{self, Parallelism};
use crate::sampling::{generate_training_interaction, SamplingConfig};
use crate::types::{BinaryMask, Polarity, ProbMap};

pub const MODEL_VERSION: u32 = 1;
pub const NUM_FEATURES: usize = 8;
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "bias",
    "dt_pos",
    "dt_neg",
    "prev_mask",
    "color_dist_pos",
    "color_dist_neg",
    "disk_pos",
    "disk_neg",
];

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatherweightModel {
    pub weights: [f64; NUM_FEATURES],
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    feature_names: Vec<String>,
    weights: Vec<f64>,
}

impl Default for FeatherweightModel {
    fn default() -> Self {
        Self {
            weights: [0.0; NUM_FEATURES],
        }
    }
}

fn mean_color(input: &PredictorInput<'_>, polarity: Polarity) -> Result<Option<[f64; 3]>> {
    let (h, w) = input.dims();
    let seeds = click_seeds(input.clicks, polarity, h, w)?;
    if seeds.is_empty() {
        return Ok(None);
    }
    let mut acc = [0.0; 3];
    for &(r, c) in &seeds {
        let px = input.image.get(r, c);
        for k in 0..3 {
            acc[k] += px[k] as f64 / 255.0;
        }
    }
    let n = seeds.len() as f64;
    Ok(Some([acc[0] / n, acc[1] / n, acc[2] / n]))
}

/// Per-pixel feature vectors in [`FEATURE_NAMES`] order.
///
/// Distance features are `1 - min(d, 255)/255` to the nearest click of the
/// polarity (0 without clicks). Color distances are Euclidean in [0,1]-scaled
/// RGB divided by √3, relative to the mean color under the clicks of the
/// polarity (1 without clicks). The disk features are the input's guidance
/// channels as given.
pub fn features(input: &PredictorInput<'_>) -> Result<Vec<[f64; NUM_FEATURES]>> {
    input.validate()?;
    let (h, w) = input.dims();
    let dt_pos = dt_channel(&click_seeds(input.clicks, Polarity::Positive, h, w)?, h, w, DEFAULT_DT_CAP);
    let dt_neg = dt_channel(&click_seeds(input.clicks, Polarity::Negative, h, w)?, h, w, DEFAULT_DT_CAP);
    let pos_color = mean_color(input, Polarity::Positive)?;
    let neg_color = mean_color(input, Polarity::Negative)?;
    let color_dist = |px: [u8; 3], reference: Option<[f64; 3]>| match reference {
        None => 1.0,
        Some(m) => {
            let s: f64 = (0..3).map(|k| (px[k] as f64 / 255.0 - m[k]).powi(2)).sum();
            s.sqrt() / SQRT_3
        }
    };
    let prev = input.prev_mask.data();
    Ok((0..h * w)
        .map(|i| {
            let px = input.image.data()[i];
            [
                1.0,
                dt_pos.data()[i],
                dt_neg.data()[i],
                if prev[i] { 1.0 } else { 0.0 },
                color_dist(px, pos_color),
                color_dist(px, neg_color),
                input.guidance.pos.data()[i],
                input.guidance.neg.data()[i],
            ]
        })
        .collect())
}

impl FeatherweightModel {
    pub fn new(weights: [f64; NUM_FEATURES]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("non-finite model weight".into()));
        }
        Ok(Self { weights })
    }

    pub fn predict_features(&self, feats: &[[f64; NUM_FEATURES]], height: usize, width: usize) -> Result<ProbMap> {
        let data = feats
            .iter()
            .map(|f| logistic(f.iter().zip(&self.weights).map(|(a, b)| a * b).sum()))
            .collect();
        ProbMap::from_vec_clamped(height, width, data)
    }

    /// Chain rule from dL/dp to dL/dweights through the logistic.
    pub fn weight_gradient(feats: &[[f64; NUM_FEATURES]], prob: &ProbMap, dl_dp: &[f64]) -> [f64; NUM_FEATURES] {
        let mut g = [0.0; NUM_FEATURES];
        for ((f, &p), &d) in feats.iter().zip(prob.data()).zip(dl_dp) {
            let s = d * p * (1.0 - p);
            for k in 0..NUM_FEATURES {
                g[k] += s * f[k];
            }
        }
        g
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile {
            version: MODEL_VERSION,
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            weights: self.weights.to_vec(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.version != MODEL_VERSION {
            return Err(Error::InvalidArgument(format!(
                "model version {} not supported (expected {MODEL_VERSION})",
                file.version
            )));
        }
        if file.feature_names != FEATURE_NAMES {
            return Err(Error::InvalidArgument(format!(
                "unexpected feature names {:?}",
                file.feature_names
            )));
        }
        let weights: [f64; NUM_FEATURES] = file
            .weights
            .try_into()
            .map_err(|w: Vec<f64>| Error::InvalidArgument(format!("expected 8 weights, got {}", w.len())))?;
        Self::new(weights)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl Predictor for FeatherweightModel {
    fn name(&self) -> String {
        "featherweight".into()
    }

    fn predict(&self, input: &PredictorInput<'_>) -> Result<ProbMap> {
        let (h, w) = input.dims();
        self.predict_features(&features(input)?, h, w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub sampling: SamplingConfig,
    pub loss: LossConfig,
    pub encoding: EncodingConfig,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Feed the model's previous prediction back as guidance. When false the
    /// previous-mask feature is always zero in training (the ablation).
    pub use_prev_mask: bool,
    pub seed: u64,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sampling: SamplingConfig::default(),
            loss: LossConfig::default(),
            encoding: EncodingConfig::default(),
            learning_rate: 0.5,
            epochs: 8,
            batch_size: 8,
            use_prev_mask: true,
            seed: 0,
            parallelism: Parallelism::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Mean loss over each epoch's samples.
    pub epoch_losses: Vec<f64>,
    /// Mean loss of each optimizer step.
    pub step_losses: Vec<f64>,
}

struct SampleOutcome {
    loss: f64,
    grad: [f64; NUM_FEATURES],
}

fn train_sample(model: &FeatherweightModel, dataset: &Dataset, index: usize, cfg: &TrainConfig, seed: u64) -> Result<SampleOutcome> {
    let inst = &dataset.instances[index];
    let image = dataset.image(&inst.image_id)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interaction = if cfg.use_prev_mask {
        generate_training_interaction(&inst.mask, image, model, &cfg.sampling, &cfg.encoding, &mut rng)?
    } else {
        generate_training_interaction(&inst.mask, image, &WithoutMaskGuidance(model), &cfg.sampling, &cfg.encoding, &mut rng)?
    };
    let prev = if cfg.use_prev_mask {
        interaction.prev_mask
    } else {
        BinaryMask::new(inst.mask.height(), inst.mask.width())
    };
    let input = PredictorInput::new(image, &interaction.clicks, &prev, &cfg.encoding)?;
    let feats = features(&input)?;
    let (h, w) = input.dims();
    let prob = model.predict_features(&feats, h, w)?;
    let l = loss::compute(&prob, &inst.mask, &cfg.loss)?;
    Ok(SampleOutcome {
        loss: l.value,
        grad: FeatherweightModel::weight_gradient(&feats, &prob, &l.grad),
    })
}

/// Mini-batch gradient descent from zero weights. Each sample's clicks are
/// simulated afresh against the current model; sample `k` of epoch `e` uses
/// the RNG stream `seed + 1 + e·n + k` (stream `seed` shuffles the epochs).
/// Batch gradients are reduced in index order, so results do not depend on
/// the parallelism setting.
pub fn train_featherweight(dataset: &Dataset, cfg: &TrainConfig) -> Result<(FeatherweightModel, TrainingLog)> {
    if dataset.instances.is_empty() {
        return Err(Error::Dataset("cannot train on an empty dataset".into()));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidArgument("batch_size and learning_rate must be positive".into()));
    }
    cfg.loss.validate()?;
    cfg.sampling.validate()?;

    let n = dataset.instances.len();
    let mut model = FeatherweightModel::default();
    let mut log = TrainingLog::default();
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let base = cfg.seed.wrapping_add(1 + (epoch * n + b * cfg.batch_size) as u64);
            let outcomes = par::map_indexed(batch, cfg.parallelism, |k, &idx| {
                train_sample(&model, dataset, idx, cfg, base.wrapping_add(k as u64))
            });
            let mut grad = [0.0; NUM_FEATURES];
            let mut batch_loss = 0.0;
            for outcome in outcomes {
                let outcome = outcome?;
                batch_loss += outcome.loss;
                for k in 0..NUM_FEATURES {
                    grad[k] += outcome.grad[k];
                }
            }
            let m = batch.len() as f64;
            batch_loss /= m;
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    step,
                    loss: batch_loss,
                });
            }
            for k in 0..NUM_FEATURES {
                model.weights[k] -= cfg.learning_rate * grad[k] / m;
            }
            log.step_losses.push(batch_loss);
            epoch_loss += batch_loss * m;
            step += 1;
        }
        log.epoch_losses.push(epoch_loss / n as f64);
        log::debug!("epoch {epoch}: loss {:.5} weights {:?}", epoch_loss / n as f64, model.weights);
    }
    Ok((model, log))
}
