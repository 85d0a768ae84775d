//! Click-based interactive segmentation.
//!
//! The crate is organised around the interaction loop of a click-driven
//! segmenter: user clicks are encoded into guidance channels, a predictor turns
//! image + guidance + previous mask into a probability map, and the map is
//! binarized into the mask that guides the next step. On top of that loop sit
//! the click simulators used for training and evaluation, the loss family, the
//! NoC evaluation harness and dataset tooling.

pub mod datasets;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod imageproc;
pub mod loss;
pub mod par;
pub mod predictors;
pub mod rle;
pub mod sampling;
pub mod session;
pub mod types;

pub use error::{Error, Result};
pub use par::Parallelism;
pub use session::InteractionState;
pub use types::{BinaryMask, Click, ColorImage, Polarity, ProbMap};
