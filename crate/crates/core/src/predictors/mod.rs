//! The predictor contract and its implementations.
//!
//! Every predictor consumes the same input: the RGB image, the positive and
//! negative click channels, and the binarized mask from the previous
//! interaction (empty on the first one). It returns a probability map of the
//! same spatial shape.

mod featherweight;
mod geodesic;
mod remote;

use std::sync::Arc;

pub use featherweight::{
    train_featherweight, FeatherweightModel, TrainConfig, TrainingLog, FEATURE_NAMES, MODEL_VERSION,
};
pub use geodesic::{geodesic_distances, GeodesicConfig, GeodesicPredictor};
pub use remote::{decode_f32_plane, encode_f32_plane, PredictRequest, PredictResponse, RemotePredictor};

use crate::encoding::{EncodingConfig, GuidanceChannels};
use crate::error::{check_shape, Error, Result};
use crate::types::{BinaryMask, Click, ColorImage, ProbMap};

/// One prediction request.
///
/// `clicks` is the click history the guidance channels were encoded from.
/// Predictors that need click coordinates (geodesic seeds, click colors) read
/// them here; the encoded channels are what a network would see.
#[derive(Debug, Clone)]
pub struct PredictorInput<'a> {
    pub image: &'a ColorImage,
    pub clicks: &'a [Click],
    pub guidance: GuidanceChannels,
    pub prev_mask: &'a BinaryMask,
}

impl<'a> PredictorInput<'a> {
    /// Encodes `clicks` with `encoding` and checks all shapes.
    pub fn new(image: &'a ColorImage, clicks: &'a [Click], prev_mask: &'a BinaryMask, encoding: &EncodingConfig) -> Result<Self> {
        let (h, w) = image.dims();
        check_shape((h, w), prev_mask.dims())?;
        let guidance = encoding.encode(clicks, h, w)?;
        Ok(Self {
            image,
            clicks,
            guidance,
            prev_mask,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    /// Checks the shape invariants and that there is something to segment:
    /// at least one positive click or a nonempty previous mask.
    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        check_shape(dims, self.guidance.pos.dims())?;
        check_shape(dims, self.guidance.neg.dims())?;
        check_shape(dims, self.prev_mask.dims())?;
        for c in self.clicks {
            c.check_bounds(dims.0, dims.1)?;
        }
        let has_positive = self.guidance.pos.data().iter().any(|&v| v > 0.0)
            || self.clicks.iter().any(|c| c.polarity.is_positive());
        if !has_positive && self.prev_mask.is_empty() {
            return Err(Error::Precondition(
                "no positive click and an empty previous mask".into(),
            ));
        }
        Ok(())
    }
}

pub trait Predictor: Send + Sync {
    fn name(&self) -> String;

    fn predict(&self, input: &PredictorInput<'_>) -> Result<ProbMap>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn name(&self) -> String {
        (**self).name()
    }

    fn predict(&self, input: &PredictorInput<'_>) -> Result<ProbMap> {
        (**self).predict(input)
    }
}

impl<P: Predictor + ?Sized> Predictor for Arc<P> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn predict(&self, input: &PredictorInput<'_>) -> Result<ProbMap> {
        (**self).predict(input)
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn predict(&self, input: &PredictorInput<'_>) -> Result<ProbMap> {
        (**self).predict(input)
    }
}

/// Supplies a predictor for each evaluated instance. Ordinary predictors
/// serve every instance; the oracle needs the instance's ground truth.
pub trait PredictorFactory: Sync {
    fn name(&self) -> String;

    fn bind<'a>(&'a self, gt: &BinaryMask) -> Box<dyn Predictor + 'a>;
}

impl<P: Predictor> PredictorFactory for P {
    fn name(&self) -> String {
        Predictor::name(self)
    }

    fn bind<'a>(&'a self, _gt: &BinaryMask) -> Box<dyn Predictor + 'a> {
        Box::new(self)
    }
}

/// Returns the configured ground truth; used to verify harnesses.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    gt: BinaryMask,
}

impl OraclePredictor {
    pub fn new(gt: BinaryMask) -> Self {
        Self { gt }
    }
}

impl Predictor for OraclePredictor {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn predict(&self, input: &PredictorInput<'_>) -> Result<ProbMap> {
        input.validate()?;
        check_shape(input.dims(), self.gt.dims())?;
        Ok(self.gt.to_prob())
    }
}

/// Binds an [`OraclePredictor`] to each instance's ground truth.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleFactory;

impl PredictorFactory for OracleFactory {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn bind<'a>(&'a self, gt: &BinaryMask) -> Box<dyn Predictor + 'a> {
        Box::new(OraclePredictor::new(gt.clone()))
    }
}

/// Predicts the same probability everywhere. `ConstantPredictor::new(0.0)` is
/// the "never segments anything" baseline.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPredictor {
    value: f64,
}

impl ConstantPredictor {
    pub fn new(value: f64) -> Self {
        Self {
            value: value.clamp(0.0, 1.0),
        }
    }
}

impl Predictor for ConstantPredictor {
    fn name(&self) -> String {
        format!("constant:{}", self.value)
    }

    fn predict(&self, input: &PredictorInput<'_>) -> Result<ProbMap> {
        input.validate()?;
        let (h, w) = input.dims();
        Ok(ProbMap::constant(h, w, self.value))
    }
}

/// Wraps a predictor so it always sees an empty previous mask: the
/// no-mask-guidance ablation.
#[derive(Debug, Clone)]
pub struct WithoutMaskGuidance<P>(pub P);

impl<P: Predictor> Predictor for WithoutMaskGuidance<P> {
    fn name(&self) -> String {
        format!("{}-nomask", self.0.name())
    }

    fn predict(&self, input: &PredictorInput<'_>) -> Result<ProbMap> {
        let empty = BinaryMask::new(input.prev_mask.height(), input.prev_mask.width());
        let stripped = PredictorInput {
            prev_mask: &empty,
            ..input.clone()
        };
        self.0.predict(&stripped)
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
