//! Click simulation.
//!
//! * [`simulate_eval_click`]: the deterministic evaluation clicker. It targets
//!   the largest erroneous region and clicks the pixel farthest from its
//!   boundary.
//! * [`sample_random_clicks`]: the random initial clicks of a training sample.
//! * [`sample_iterative_click`]: a training click drawn uniformly from the
//!   largest erroneous region after eroding it to a quarter of its area.
//! * [`generate_training_interaction`]: random clicks followed by up to
//!   `n_iters_max` iterative clicks produced against the current model, with
//!   the model's own binarized output fed back as the previous mask.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::EncodingConfig;
use crate::error::{check_shape, Error, Result};
use crate::imageproc::{connected_components, distance_transform, erode_to_quarter, interior_distance, Connectivity};
use crate::predictors::{Predictor, PredictorInput};
use crate::session::{binarize, DEFAULT_BINARIZE_THRESHOLD};
use crate::types::{BinaryMask, Click, ColorImage, Polarity};

/// Connectivity used for erroneous regions everywhere.
pub const ERROR_CONNECTIVITY: Connectivity = Connectivity::Eight;

/// Outer radius of the background ring negative clicks are drawn from.
pub const NEGATIVE_RING_WIDTH: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n_iters_max: usize,
    pub max_random_pos: usize,
    pub max_random_neg: usize,
    pub boundary_margin: usize,
    pub min_click_gap: usize,
    pub rng_seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_iters_max: 3,
            max_random_pos: 10,
            max_random_neg: 10,
            boundary_margin: 5,
            min_click_gap: 10,
            rng_seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_random_pos == 0 {
            return Err(Error::InvalidArgument("max_random_pos must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorRegions {
    pub false_negative: BinaryMask,
    pub false_positive: BinaryMask,
}

pub fn error_regions(pred: &BinaryMask, gt: &BinaryMask) -> Result<ErrorRegions> {
    Ok(ErrorRegions {
        false_negative: gt.minus(pred)?,
        false_positive: pred.minus(gt)?,
    })
}

/// The single largest 8-connected error region, with the polarity a click on
/// it should have. Ties on area go to the region whose first pixel comes
/// first in row-major order.
pub fn largest_error_region(pred: &BinaryMask, gt: &BinaryMask) -> Result<Option<(BinaryMask, Polarity)>> {
    let errors = error_regions(pred, gt)?;
    let mut best: Option<(usize, usize, Polarity, BinaryMask)> = None;
    for (mask, polarity) in [
        (&errors.false_negative, Polarity::Positive),
        (&errors.false_positive, Polarity::Negative),
    ] {
        let cc = connected_components(mask, ERROR_CONNECTIVITY);
        let Some(label) = cc.largest() else { continue };
        let (area, first) = (cc.area(label), cc.first_pixel(label));
        let better = match &best {
            None => true,
            Some((ba, bf, _, _)) => area > *ba || (area == *ba && first < *bf),
        };
        if better {
            best = Some((area, first, polarity, cc.region_mask(label)));
        }
    }
    Ok(best.map(|(_, _, p, m)| (m, p)))
}

/// Row-major-first pixel maximizing the interior distance of `region`.
pub fn region_center(region: &BinaryMask) -> Option<(usize, usize)> {
    let dist = interior_distance(region);
    let mut best: Option<(f64, usize)> = None;
    for (i, &d) in dist.data().iter().enumerate() {
        if region.data()[i] && best.map_or(true, |(bd, _)| d > bd) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| (i / region.width(), i % region.width()))
}

/// Next evaluation click: the center of the largest erroneous region, positive
/// on a false negative and negative on a false positive. `None` iff the
/// prediction already equals the ground truth. The click's `order` is 0.
pub fn simulate_eval_click(pred: &BinaryMask, gt: &BinaryMask) -> Result<Option<Click>> {
    let Some((region, polarity)) = largest_error_region(pred, gt)? else {
        return Ok(None);
    };
    let (row, col) = region_center(&region).expect("error regions are nonempty");
    Ok(Some(Click::new(row, col, polarity)))
}

/// Training click: uniform over the largest erroneous region eroded to a
/// quarter of its area.
pub fn sample_iterative_click<R: Rng + ?Sized>(pred: &BinaryMask, gt: &BinaryMask, rng: &mut R) -> Result<Option<Click>> {
    let Some((region, polarity)) = largest_error_region(pred, gt)? else {
        return Ok(None);
    };
    let eroded = erode_to_quarter(&region)?;
    let pixels: Vec<(usize, usize)> = eroded.pixels().collect();
    let (row, col) = pixels[rng.random_range(0..pixels.len())];
    Ok(Some(Click::new(row, col, polarity)))
}

/// Picks up to `k` distinct pixels, preferring ones at least `gap` apart from
/// all previously picked pixels. If the gap cannot be honoured the remainder
/// is filled with distinct pixels regardless of spacing.
fn pick_spaced<R: Rng + ?Sized>(candidates: &[(usize, usize)], k: usize, gap: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.shuffle(rng);
    let gap2 = (gap * gap) as i64;
    let far_enough = |p: (usize, usize), chosen: &[(usize, usize)]| {
        chosen.iter().all(|&q| {
            let dr = p.0 as i64 - q.0 as i64;
            let dc = p.1 as i64 - q.1 as i64;
            dr * dr + dc * dc >= gap2
        })
    };
    let mut chosen = Vec::with_capacity(k);
    let mut used = vec![false; candidates.len()];
    for (slot, &i) in order.iter().enumerate() {
        if chosen.len() == k {
            break;
        }
        if far_enough(candidates[i], &chosen) {
            chosen.push(candidates[i]);
            used[slot] = true;
        }
    }
    for (slot, &i) in order.iter().enumerate() {
        if chosen.len() == k {
            break;
        }
        if !used[slot] {
            chosen.push(candidates[i]);
        }
    }
    chosen
}

/// Random initial clicks for one training sample.
///
/// Draws `k_pos ~ U{1..max_random_pos}` positive clicks from object pixels at
/// least `boundary_margin` inside the object (all object pixels when none
/// qualify), and `k_neg ~ U{0..max_random_neg}` negative clicks from the
/// background ring `[boundary_margin, 40]` px around the object (any
/// background pixel when the ring is empty). Clicks of one polarity are kept
/// `min_click_gap` apart where possible. Positives come first in the order.
pub fn sample_random_clicks<R: Rng + ?Sized>(gt: &BinaryMask, cfg: &SamplingConfig, rng: &mut R) -> Result<Vec<Click>> {
    cfg.validate()?;
    if gt.is_empty() {
        return Err(Error::EmptyMask("random clicks need a nonempty object".into()));
    }
    let margin = cfg.boundary_margin as f64;

    let inner = interior_distance(gt);
    let mut pos_candidates: Vec<(usize, usize)> = gt
        .pixels()
        .filter(|&(r, c)| inner.get(r, c) >= margin)
        .collect();
    if pos_candidates.is_empty() {
        pos_candidates = gt.pixels().collect();
    }

    let outer = distance_transform(gt);
    let background = gt.not();
    let mut neg_candidates: Vec<(usize, usize)> = background
        .pixels()
        .filter(|&(r, c)| (margin..=NEGATIVE_RING_WIDTH).contains(&outer.get(r, c)))
        .collect();
    if neg_candidates.is_empty() {
        neg_candidates = background.pixels().collect();
    }

    let k_pos = rng.random_range(1..=cfg.max_random_pos);
    let k_neg = rng.random_range(0..=cfg.max_random_neg);
    let pos = pick_spaced(&pos_candidates, k_pos, cfg.min_click_gap, rng);
    let neg = if neg_candidates.is_empty() {
        Vec::new()
    } else {
        pick_spaced(&neg_candidates, k_neg, cfg.min_click_gap, rng)
    };

    Ok(pos
        .into_iter()
        .map(|(r, c)| Click::positive(r, c))
        .chain(neg.into_iter().map(|(r, c)| Click::negative(r, c)))
        .enumerate()
        .map(|(i, c)| c.with_order(i))
        .collect())
}

/// Clicks and guidance mask for one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingInteraction {
    pub clicks: Vec<Click>,
    /// Mask in force for the next prediction; empty when no iteration ran.
    pub prev_mask: BinaryMask,
    /// Iterations drawn for this sample.
    pub iterations_drawn: usize,
    /// Iterative clicks actually added (fewer when the model became exact).
    pub iterative_clicks: usize,
}

/// Random clicks followed by `m ~ U{0..n_iters_max}` rounds of
/// predict → binarize → iterative click. Nothing is cached between calls.
pub fn generate_training_interaction<R, P>(
    gt: &BinaryMask,
    image: &ColorImage,
    predictor: &P,
    sampling: &SamplingConfig,
    encoding: &EncodingConfig,
    rng: &mut R,
) -> Result<TrainingInteraction>
where
    R: Rng + ?Sized,
    P: Predictor + ?Sized,
{
    check_shape(image.dims(), gt.dims())?;
    let clicks = sample_random_clicks(gt, sampling, rng)?;
    let iterations = rng.random_range(0..=sampling.n_iters_max);
    refine_interaction(gt, image, predictor, encoding, clicks, iterations, rng)
}

/// The iterative part of [`generate_training_interaction`], for a fixed
/// iteration count.
pub fn refine_interaction<R, P>(
    gt: &BinaryMask,
    image: &ColorImage,
    predictor: &P,
    encoding: &EncodingConfig,
    mut clicks: Vec<Click>,
    iterations: usize,
    rng: &mut R,
) -> Result<TrainingInteraction>
where
    R: Rng + ?Sized,
    P: Predictor + ?Sized,
{
    let (h, w) = gt.dims();
    let mut prev_mask = BinaryMask::new(h, w);
    let mut added = 0;
    for _ in 0..iterations {
        let input = PredictorInput::new(image, &clicks, &prev_mask, encoding)?;
        let prob = predictor.predict(&input)?;
        let pred = binarize(&prob, DEFAULT_BINARIZE_THRESHOLD);
        let next = sample_iterative_click(&pred, gt, rng)?;
        prev_mask = pred;
        match next {
            Some(click) => {
                clicks.push(click.with_order(clicks.len()));
                added += 1;
            }
            None => break,
        }
    }
    Ok(TrainingInteraction {
        clicks,
        prev_mask,
        iterations_drawn: iterations,
        iterative_clicks: added,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::imageproc::erode;
    use crate::predictors::{ConstantPredictor, OraclePredictor};

    fn square(h: usize, w: usize, r0: usize, c0: usize, side: usize) -> BinaryMask {
        BinaryMask::from_fn(h, w, |r, c| {
            (r0..r0 + side).contains(&r) && (c0..c0 + side).contains(&c)
        })
    }

    #[test]
    fn error_region_algebra() {
        let gt = square(10, 10, 2, 2, 4);
        let e = error_regions(&gt, &gt).unwrap();
        assert!(e.false_negative.is_empty() && e.false_positive.is_empty());

        let e = error_regions(&BinaryMask::new(10, 10), &gt).unwrap();
        assert_eq!(e.false_negative, gt);
        assert!(e.false_positive.is_empty());

        let big = square(10, 10, 1, 1, 6);
        let e = error_regions(&big, &gt).unwrap();
        assert_eq!(e.false_positive, big.minus(&gt).unwrap());
        assert!(e.false_negative.is_empty());

        assert!(error_regions(&gt, &BinaryMask::new(3, 3)).is_err());
    }

    #[test]
    fn eval_click_centered_square() {
        let gt = square(32, 32, 10, 10, 11);
        let c = simulate_eval_click(&BinaryMask::new(32, 32), &gt).unwrap().unwrap();
        assert_eq!((c.row, c.col, c.polarity), (15, 15, Polarity::Positive));
        assert_eq!(simulate_eval_click(&gt, &gt).unwrap(), None);
    }

    #[test]
    fn eval_click_picks_largest_fp_blob() {
        let gt = BinaryMask::new(20, 20);
        // 30 px blob (5x6) and 10 px blob (2x5)
        let pred = BinaryMask::from_fn(20, 20, |r, c| {
            ((12..17).contains(&r) && (10..16).contains(&c)) || ((1..3).contains(&r) && (1..6).contains(&c))
        });
        let blob30 = BinaryMask::from_fn(20, 20, |r, c| (12..17).contains(&r) && (10..16).contains(&c));
        let c = simulate_eval_click(&pred, &gt).unwrap().unwrap();
        assert_eq!(c.polarity, Polarity::Negative);
        assert!(blob30.get(c.row, c.col));
    }

    #[test]
    fn eval_click_ties_break_row_major() {
        // two identical FN blobs; the upper-left one wins
        let gt = BinaryMask::from_fn(12, 12, |r, c| {
            ((1..4).contains(&r) && (1..4).contains(&c)) || ((7..10).contains(&r) && (7..10).contains(&c))
        });
        let c = simulate_eval_click(&BinaryMask::new(12, 12), &gt).unwrap().unwrap();
        assert_eq!((c.row, c.col), (2, 2));
        // a flat 2x4 region: several pixels tie on interior distance
        let gt = square(8, 8, 2, 2, 2).or(&square(8, 8, 2, 4, 2)).unwrap();
        let c = simulate_eval_click(&BinaryMask::new(8, 8), &gt).unwrap().unwrap();
        assert_eq!((c.row, c.col), (2, 2));
    }

    #[test]
    fn random_clicks_single_pixel_fallback() {
        let mut gt = BinaryMask::new(9, 9);
        gt.set(4, 6, true);
        let cfg = SamplingConfig { max_random_pos: 1, max_random_neg: 0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let clicks = sample_random_clicks(&gt, &cfg, &mut rng).unwrap();
        assert_eq!(clicks, vec![Click::positive(4, 6)]);
    }

    #[test]
    fn random_clicks_deterministic() {
        let gt = square(40, 40, 10, 10, 20);
        let cfg = SamplingConfig::default();
        let a = sample_random_clicks(&gt, &cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = sample_random_clicks(&gt, &cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
        assert!(sample_random_clicks(&BinaryMask::new(4, 4), &cfg, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn random_clicks_respect_object() {
        let gt = square(40, 40, 10, 10, 20);
        let cfg = SamplingConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut saw_neg = false;
        for _ in 0..1000 {
            let clicks = sample_random_clicks(&gt, &cfg, &mut rng).unwrap();
            let k_pos = clicks.iter().filter(|c| c.polarity.is_positive()).count();
            assert!((1..=10).contains(&k_pos));
            for c in &clicks {
                assert_eq!(gt.get(c.row, c.col), c.polarity.is_positive());
                saw_neg |= !c.polarity.is_positive();
            }
            assert_eq!(clicks.iter().map(|c| c.order).collect::<Vec<_>>(), (0..clicks.len()).collect::<Vec<_>>());
        }
        assert!(saw_neg);
    }

    #[test]
    fn iterative_click_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let gt = square(10, 10, 2, 2, 4);
        assert_eq!(sample_iterative_click(&gt, &gt, &mut rng).unwrap(), None);

        let mut one = BinaryMask::new(10, 10);
        one.set(7, 1, true);
        let c = sample_iterative_click(&BinaryMask::new(10, 10), &one, &mut rng).unwrap().unwrap();
        assert_eq!((c.row, c.col, c.polarity), (7, 1, Polarity::Positive));
    }

    #[test]
    fn iterative_click_uniform_in_quarter() {
        let gt = square(12, 12, 2, 2, 8);
        let inner = square(12, 12, 4, 4, 4);
        let pred = BinaryMask::new(12, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 16];
        let n = 10_000;
        for _ in 0..n {
            let c = sample_iterative_click(&pred, &gt, &mut rng).unwrap().unwrap();
            assert!(inner.get(c.row, c.col));
            counts[(c.row - 4) * 4 + (c.col - 4)] += 1;
        }
        let expected = n as f64 / 16.0;
        let chi2: f64 = counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        // chi-square, 15 dof, p = 0.001
        assert!(chi2 < 37.70, "chi2 = {chi2}");
    }

    #[test]
    fn no_iterations_means_empty_prev_mask() {
        let gt = square(24, 24, 6, 6, 12);
        let img = ColorImage::new(24, 24, [0, 0, 0]);
        let cfg = SamplingConfig { n_iters_max: 0, ..Default::default() };
        let oracle = OraclePredictor::new(gt.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut rng2 = ChaCha8Rng::seed_from_u64(9);
        let t = generate_training_interaction(&gt, &img, &oracle, &cfg, &EncodingConfig::default(), &mut rng).unwrap();
        assert!(t.prev_mask.is_empty());
        assert_eq!(t.iterations_drawn, 0);
        assert_eq!(t.clicks, sample_random_clicks(&gt, &cfg, &mut rng2).unwrap());
    }

    #[test]
    fn oracle_stops_iterating() {
        let gt = square(24, 24, 6, 6, 12);
        let img = ColorImage::new(24, 24, [0, 0, 0]);
        let oracle = OraclePredictor::new(gt.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clicks = vec![Click::positive(12, 12)];
        let t = refine_interaction(&gt, &img, &oracle, &EncodingConfig::default(), clicks.clone(), 3, &mut rng).unwrap();
        assert_eq!(t.clicks, clicks);
        assert_eq!(t.iterative_clicks, 0);
        assert_eq!(t.prev_mask, gt);
    }

    #[test]
    fn empty_predictor_gets_iterative_clicks() {
        let gt = square(24, 24, 6, 6, 12);
        let img = ColorImage::new(24, 24, [0, 0, 0]);
        let empty = ConstantPredictor::new(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = refine_interaction(&gt, &img, &empty, &EncodingConfig::default(), vec![Click::positive(12, 12)], 3, &mut rng).unwrap();
        assert_eq!(t.clicks.len(), 4);
        assert_eq!(t.iterative_clicks, 3);
        let inner = erode(&erode(&erode(&gt)));
        for c in &t.clicks[1..] {
            assert!(inner.get(c.row, c.col) && c.polarity.is_positive());
            assert_eq!(c.order, t.clicks.iter().position(|x| x == c).unwrap());
        }
    }

    #[test]
    fn training_interaction_deterministic() {
        let gt = square(24, 24, 4, 5, 13);
        let img = ColorImage::new(24, 24, [9, 9, 9]);
        let p = ConstantPredictor::new(0.2);
        let cfg = SamplingConfig::default();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            generate_training_interaction(&gt, &img, &p, &cfg, &EncodingConfig::default(), &mut rng).unwrap()
        };
        assert_eq!(run(77), run(77));
    }

    fn blob_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
        (4..14usize, 4..14usize).prop_flat_map(|(h, w)| {
            (
                prop::collection::vec(prop::bool::weighted(0.4), h * w),
                prop::collection::vec(prop::bool::weighted(0.4), h * w),
            )
                .prop_map(move |(a, b)| (BinaryMask::from_vec(h, w, a).unwrap(), BinaryMask::from_vec(h, w, b).unwrap()))
        })
    }

    proptest! {
        #[test]
        fn clicks_land_on_correct_side((pred, gt) in blob_pair(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for click in [simulate_eval_click(&pred, &gt).unwrap(), sample_iterative_click(&pred, &gt, &mut rng).unwrap()].into_iter().flatten() {
                prop_assert_eq!(gt.get(click.row, click.col), click.polarity.is_positive());
                prop_assert_ne!(pred.get(click.row, click.col), gt.get(click.row, click.col));
            }
            prop_assert_eq!(simulate_eval_click(&pred, &gt).unwrap().is_none(), pred == gt);
            prop_assert_eq!(simulate_eval_click(&pred, &gt).unwrap(), simulate_eval_click(&pred, &gt).unwrap());
        }

        #[test]
        fn eval_clicker_terminates_against_oracle((_, gt) in blob_pair()) {
            // each click reveals gt on its error region; the loop must end
            let mut pred = BinaryMask::new(gt.height(), gt.width());
            let mut steps = 0;
            while let Some((region, _)) = largest_error_region(&pred, &gt).unwrap() {
                let c = simulate_eval_click(&pred, &gt).unwrap().unwrap();
                prop_assert!(region.get(c.row, c.col));
                for (r, col) in region.pixels() {
                    pred.set(r, col, gt.get(r, col));
                }
                steps += 1;
                prop_assert!(steps <= gt.height() * gt.width());
            }
            prop_assert!(simulate_eval_click(&pred, &gt).unwrap().is_none());
        }
    }
}
