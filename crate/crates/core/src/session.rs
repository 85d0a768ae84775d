//! The single-object interaction session: click history, the mask fed back as
//! guidance, and an undo stack.

use std::sync::Arc;

use crate::error::{check_shape, Error, Result};
use crate::types::{BinaryMask, Click, ColorImage, ProbMap};

pub const DEFAULT_BINARIZE_THRESHOLD: f64 = 0.5;

/// Strict thresholding: a pixel is foreground iff `p > threshold`, so an
/// uninformative p = 0.5 map at the default threshold is empty.
pub fn binarize(p: &ProbMap, threshold: f64) -> BinaryMask {
    let data = p.data().iter().map(|&v| v > threshold).collect();
    BinaryMask::from_vec(p.height(), p.width(), data).expect("same length as the source map")
}

#[derive(Debug, Clone, PartialEq)]
struct Snapshot {
    clicks: Vec<Click>,
    prev_mask: BinaryMask,
}

#[derive(Debug, Clone)]
pub struct InteractionState {
    image: Arc<ColorImage>,
    clicks: Vec<Click>,
    prev_mask: BinaryMask,
    history: Vec<Snapshot>,
    binarize_threshold: f64,
}

impl PartialEq for InteractionState {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.image, &other.image) || self.image == other.image)
            && self.clicks == other.clicks
            && self.prev_mask == other.prev_mask
            && self.history == other.history
            && self.binarize_threshold.to_bits() == other.binarize_threshold.to_bits()
    }
}

impl InteractionState {
    /// Starts a session. Without an external mask the guidance mask is empty;
    /// with one, the session starts in correction mode on top of it.
    pub fn new(image: Arc<ColorImage>, external_mask: Option<BinaryMask>) -> Result<Self> {
        let prev_mask = match external_mask {
            Some(mask) => {
                check_shape(image.dims(), mask.dims())?;
                mask
            }
            None => BinaryMask::new(image.height(), image.width()),
        };
        Ok(Self {
            image,
            clicks: Vec::new(),
            prev_mask,
            history: Vec::new(),
            binarize_threshold: DEFAULT_BINARIZE_THRESHOLD,
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "binarize threshold {threshold} outside (0, 1)"
            )));
        }
        self.binarize_threshold = threshold;
        Ok(self)
    }

    pub fn image(&self) -> &Arc<ColorImage> {
        &self.image
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }

    pub fn clicks(&self) -> &[Click] {
        &self.clicks
    }

    pub fn prev_mask(&self) -> &BinaryMask {
        &self.prev_mask
    }

    pub fn binarize_threshold(&self) -> f64 {
        self.binarize_threshold
    }

    pub fn depth(&self) -> usize {
        self.history.len()
    }

    /// Validates `click` and returns it with the order index it would get if
    /// pushed now.
    pub fn next_click(&self, click: Click) -> Result<Click> {
        let (h, w) = self.dims();
        click.check_bounds(h, w)?;
        Ok(click.with_order(self.clicks.len()))
    }

    /// Appends a click together with the prediction it produced. The state is
    /// left untouched on error.
    pub fn push_click(&mut self, click: Click, prediction: &ProbMap) -> Result<&Click> {
        let click = self.next_click(click)?;
        check_shape(self.dims(), prediction.dims())?;
        let next_mask = binarize(prediction, self.binarize_threshold);
        self.history.push(Snapshot {
            clicks: self.clicks.clone(),
            prev_mask: std::mem::replace(&mut self.prev_mask, next_mask),
        });
        self.clicks.push(click);
        Ok(self.clicks.last().expect("just pushed"))
    }

    pub fn undo(&mut self) -> Result<()> {
        let snapshot = self.history.pop().ok_or(Error::NothingToUndo)?;
        self.clicks = snapshot.clicks;
        self.prev_mask = snapshot.prev_mask;
        Ok(())
    }
}
