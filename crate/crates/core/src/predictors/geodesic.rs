//! Classical geodesic segmenter: multi-source shortest paths over the
//! 8-connected pixel grid, with edges made expensive by color change.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{logistic, Predictor, PredictorInput};
use crate::encoding::click_seeds;
use crate::error::{Error, Result};
use crate::par::{self, Parallelism};
use crate::types::{ColorImage, Polarity, ProbMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodesicConfig {
    /// Weight of the color gradient (colors scaled to [0, 1]).
    pub beta: f64,
    /// Softness of the logistic over the distance difference, in pixels.
    pub temperature: f64,
    /// Seed the virtual ring around the image as background when there are
    /// no negative clicks.
    pub border_as_negative: bool,
    /// Logit added where the previous mask is set.
    pub logit_bias: f64,
    /// Starting distance of previous-mask pixels used as object seeds when
    /// there is no positive click (mask correction mode).
    pub mask_seed_offset: f64,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for GeodesicConfig {
    fn default() -> Self {
        Self {
            beta: 50.0,
            temperature: 5.0,
            border_as_negative: true,
            logit_bias: 1.0,
            mask_seed_offset: 20.0,
            parallelism: Parallelism::default(),
        }
    }
}

impl GeodesicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    idx: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // min-heap on distance, then on index
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NEIGHBORS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Geodesic distance from a set of seeds `(row, col, initial distance)`.
/// Edge cost is `spatial length × (1 + beta·‖Δcolor‖₂)` with colors scaled
/// to [0, 1]. Unreachable pixels (no seeds) are `INFINITY`.
pub fn geodesic_distances(image: &ColorImage, seeds: &[(usize, usize, f64)], beta: f64) -> Vec<f64> {
    let (h, w) = image.dims();
    let mut dist = vec![f64::INFINITY; h * w];
    let mut heap = BinaryHeap::new();
    for &(r, c, d0) in seeds {
        let idx = r * w + c;
        if d0 < dist[idx] {
            dist[idx] = d0;
            heap.push(Entry { dist: d0, idx });
        }
    }
    let color = |idx: usize| {
        let p = image.data()[idx];
        [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0]
    };
    while let Some(Entry { dist: d, idx }) = heap.pop() {
        if d > dist[idx] {
            continue;
        }
        let (r, c) = ((idx / w) as isize, (idx % w) as isize);
        let here = color(idx);
        for &(dr, dc) in &NEIGHBORS {
            let (nr, nc) = (r + dr, c + dc);
            if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                continue;
            }
            let n = nr as usize * w + nc as usize;
            let there = color(n);
            let dcol = ((here[0] - there[0]).powi(2) + (here[1] - there[1]).powi(2) + (here[2] - there[2]).powi(2)).sqrt();
            let len = if dr != 0 && dc != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
            let nd = d + len * (1.0 + beta * dcol);
            if nd < dist[n] {
                dist[n] = nd;
                heap.push(Entry { dist: nd, idx: n });
            }
        }
    }
    dist
}

#[derive(Debug, Clone, Default)]
pub struct GeodesicPredictor {
    pub config: GeodesicConfig,
}

impl GeodesicPredictor {
    pub fn new(config: GeodesicConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }
}

impl Predictor for GeodesicPredictor {
    fn name(&self) -> String {
        "geodesic".into()
    }

    fn predict(&self, input: &PredictorInput<'_>) -> Result<ProbMap> {
        input.validate()?;
        let cfg = &self.config;
        let (h, w) = input.dims();

        let mut pos: Vec<(usize, usize, f64)> = click_seeds(input.clicks, Polarity::Positive, h, w)?
            .into_iter()
            .map(|(r, c)| (r, c, 0.0))
            .collect();
        if pos.is_empty() {
            pos = input
                .prev_mask
                .pixels()
                .map(|(r, c)| (r, c, cfg.mask_seed_offset))
                .collect();
        }
        let mut neg: Vec<(usize, usize, f64)> = click_seeds(input.clicks, Polarity::Negative, h, w)?
            .into_iter()
            .map(|(r, c)| (r, c, 0.0))
            .collect();
        if neg.is_empty() && cfg.border_as_negative {
            // one unit step in from a virtual ring just outside the image
            for r in 0..h {
                for c in 0..w {
                    if r == 0 || c == 0 || r + 1 == h || c + 1 == w {
                        neg.push((r, c, 1.0));
                    }
                }
            }
        }

        let (d_pos, d_neg) = par::join(
            cfg.parallelism,
            || geodesic_distances(input.image, &pos, cfg.beta),
            || geodesic_distances(input.image, &neg, cfg.beta),
        );

        let prev = input.prev_mask.data();
        let data = (0..h * w)
            .map(|i| {
                let diff = match (d_neg[i].is_finite(), d_pos[i].is_finite()) {
                    (true, true) => (d_neg[i] - d_pos[i]) / cfg.temperature,
                    (false, true) => f64::INFINITY,
                    (true, false) => f64::NEG_INFINITY,
                    (false, false) => 0.0,
                };
                let bias = if prev[i] { cfg.logit_bias } else { 0.0 };
                logistic(diff + bias)
            })
            .collect();
        ProbMap::from_vec_clamped(h, w, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::EncodingConfig;
    use crate::imageproc::iou;
    use crate::session::binarize;
    use crate::types::{BinaryMask, Click};

    fn run(p: &GeodesicPredictor, img: &ColorImage, clicks: &[Click], prev: &BinaryMask) -> ProbMap {
        let input = PredictorInput::new(img, clicks, prev, &EncodingConfig::default()).unwrap();
        p.predict(&input).unwrap()
    }

    #[test]
    fn uniform_image_decreases_along_rays() {
        let img = ColorImage::new(31, 37, [120, 80, 200]);
        let prev = BinaryMask::new(31, 37);
        let p = run(&GeodesicPredictor::default(), &img, &[Click::positive(12, 20)], &prev);
        for &(dr, dc) in &NEIGHBORS {
            let (mut r, mut c) = (12isize, 20isize);
            let mut last = p.get(12, 20);
            loop {
                r += dr;
                c += dc;
                if r < 0 || c < 0 || r >= 31 || c >= 37 {
                    break;
                }
                let v = p.get(r as usize, c as usize);
                assert!(v <= last, "ray ({dr},{dc}) rises at ({r},{c})");
                last = v;
            }
        }
        assert!(p.get(12, 20) > 0.5);
    }

    #[test]
    fn equidistant_pixel_is_half() {
        let img = ColorImage::new(9, 9, [0, 0, 0]);
        let prev = BinaryMask::new(9, 9);
        let p = run(
            &GeodesicPredictor::default(),
            &img,
            &[Click::positive(4, 1), Click::negative(4, 7)],
            &prev,
        );
        assert!((p.get(4, 4) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn segments_high_contrast_square() {
        let gt = BinaryMask::from_fn(64, 64, |r, c| (20..44).contains(&r) && (16..40).contains(&c));
        let img = ColorImage::from_fn(64, 64, |r, c| if gt.get(r, c) { [0, 0, 0] } else { [255, 255, 255] });
        let prev = BinaryMask::new(64, 64);
        let p = run(&GeodesicPredictor::default(), &img, &[Click::positive(31, 27)], &prev);
        assert!(iou(&binarize(&p, 0.5), &gt).unwrap() >= 0.95);
    }

    #[test]
    fn flip_equivariance() {
        let img = ColorImage::from_fn(20, 23, |r, c| [(r * 13 % 255) as u8, (c * 29 % 255) as u8, ((r * c) % 255) as u8]);
        let prev = BinaryMask::from_fn(20, 23, |r, c| r > 10 && c < 8);
        let clicks = [Click::positive(5, 6), Click::negative(15, 19), Click::positive(9, 0)];
        let flipped: Vec<Click> = clicks.iter().map(|c| Click { col: 22 - c.col, ..*c }).collect();
        let g = GeodesicPredictor::default();
        let a = run(&g, &img, &clicks, &prev);
        let b = run(&g, &img.flip_horizontal(), &flipped, &prev.flip_horizontal());
        assert_eq!(a.flip_horizontal(), b);
    }

    #[test]
    fn positive_clicks_win_on_border() {
        let img = ColorImage::new(10, 10, [50, 50, 50]);
        let prev = BinaryMask::new(10, 10);
        let p = run(&GeodesicPredictor::default(), &img, &[Click::positive(0, 0), Click::positive(9, 5)], &prev);
        assert!(p.get(0, 0) > 0.5 && p.get(9, 5) > 0.5);
    }

    #[test]
    fn mask_only_input_corrects_with_negative_click() {
        // external mask covers an object and a spurious blob of another color
        let img = ColorImage::from_fn(40, 40, |r, c| {
            if (5..15).contains(&r) && (5..15).contains(&c) {
                [200, 30, 30]
            } else if (25..35).contains(&r) && (25..35).contains(&c) {
                [30, 30, 200]
            } else {
                [240, 240, 240]
            }
        });
        let object = BinaryMask::from_fn(40, 40, |r, c| (5..15).contains(&r) && (5..15).contains(&c));
        let blob = BinaryMask::from_fn(40, 40, |r, c| (25..35).contains(&r) && (25..35).contains(&c));
        let prev = object.or(&blob).unwrap();
        let p = run(&GeodesicPredictor::default(), &img, &[Click::negative(30, 30)], &prev);
        let mask = binarize(&p, 0.5);
        assert!(mask.and(&blob).unwrap().is_empty());
        assert!(mask.contains(&object));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(GeodesicPredictor::new(GeodesicConfig { temperature: 0.0, ..Default::default() }).is_err());
        assert!(GeodesicPredictor::new(GeodesicConfig { beta: -1.0, ..Default::default() }).is_err());
    }
}
