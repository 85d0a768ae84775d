//! NoC evaluation.
//!
//! Each instance starts from an empty prediction. The clicker places the next
//! click at the center of the largest erroneous region, the predictor sees
//! all clicks so far plus its own previous binarized output, and the loop
//! stops once the IoU reaches the highest threshold or the click budget is
//! spent. Instances that never reach a threshold count as `max_clicks` for it.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::encoding::EncodingConfig;
use crate::error::{Error, Result};
use crate::imageproc::iou;
use crate::par::{self, Parallelism};
use crate::predictors::{PredictorFactory, PredictorInput};
use crate::sampling::simulate_eval_click;
use crate::session::binarize;
use crate::types::{BinaryMask, Click, ColorImage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub max_clicks: usize,
    pub binarize_threshold: f64,
    pub encoding: EncodingConfig,
    /// Feed the previous binarized prediction back to the predictor. Off is
    /// the no-guidance ablation: the predictor always sees an empty mask.
    pub use_prev_mask: bool,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: vec![0.85, 0.90],
            max_clicks: 20,
            binarize_threshold: 0.5,
            encoding: EncodingConfig::default(),
            use_prev_mask: true,
            parallelism: Parallelism::default(),
        }
    }
}

impl EvalConfig {
    /// The convergence setting: 100-click budget.
    pub fn convergence() -> Self {
        Self {
            max_clicks: 100,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::InvalidArgument("at least one IoU threshold is required".into()));
        }
        if let Some(t) = self.iou_thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::InvalidArgument(format!("IoU threshold {t} outside (0, 1)")));
        }
        if self.max_clicks == 0 {
            return Err(Error::InvalidArgument("max_clicks must be at least 1".into()));
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(Error::InvalidArgument("binarize threshold outside (0, 1)".into()));
        }
        self.encoding.validate()
    }

    fn target(&self) -> f64 {
        self.iou_thresholds.iter().copied().fold(f64::MIN, f64::max)
    }
}

/// Threshold key as used in reports: two decimals, e.g. `"0.90"`.
pub fn threshold_key(t: f64) -> String {
    format!("{t:.2}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEval {
    pub id: String,
    /// Clicks needed per threshold; `max_clicks` when never reached.
    pub noc: BTreeMap<String, usize>,
    /// IoU after each click.
    pub iou_trace: Vec<f64>,
    pub clicks: Vec<Click>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl InstanceEval {
    /// Whether `threshold` was reached within the first `budget` clicks.
    pub fn reached_within(&self, threshold: f64, budget: usize) -> bool {
        self.error.is_none() && self.iou_trace.iter().take(budget).any(|&v| v >= threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    /// Mean clicks-to-threshold, failures counted at the cap.
    pub noc: BTreeMap<String, f64>,
    /// Instances not reaching the highest threshold within 20 clicks.
    pub ge20: usize,
    /// Same within 100 clicks; `None` when the budget was below 100.
    pub ge100: Option<usize>,
    pub mean_iou_curve: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub predictor: String,
    pub instances: Vec<InstanceEval>,
    pub aggregates: Aggregates,
}

fn noc_from_trace(trace: &[f64], thresholds: &[f64], max_clicks: usize) -> BTreeMap<String, usize> {
    thresholds
        .iter()
        .map(|&t| {
            let k = trace
                .iter()
                .position(|&v| v >= t)
                .map_or(max_clicks, |i| i + 1);
            (threshold_key(t), k)
        })
        .collect()
}

/// Runs the click loop on one instance. Predictor failures end the loop; the
/// record keeps the trace so far, carries the error and counts as failed.
pub fn evaluate_instance(
    id: &str,
    image: &ColorImage,
    gt: &BinaryMask,
    predictor: &dyn PredictorFactory,
    cfg: &EvalConfig,
) -> Result<InstanceEval> {
    cfg.validate()?;
    if gt.is_empty() {
        return Err(Error::instance(id, "ground truth is empty"));
    }
    if image.dims() != gt.dims() {
        return Err(Error::instance(id, "image and mask sizes differ"));
    }
    let bound = predictor.bind(gt);
    let (h, w) = gt.dims();
    let empty = BinaryMask::new(h, w);
    let mut pred = BinaryMask::new(h, w);
    let mut clicks: Vec<Click> = Vec::new();
    let mut trace = Vec::new();
    let mut error = None;
    let target = cfg.target();

    while clicks.len() < cfg.max_clicks {
        let Some(click) = simulate_eval_click(&pred, gt)? else {
            break;
        };
        clicks.push(click.with_order(clicks.len()));
        let prev = if cfg.use_prev_mask { &pred } else { &empty };
        let outcome = PredictorInput::new(image, &clicks, prev, &cfg.encoding).and_then(|input| bound.predict(&input));
        let prob = match outcome {
            Ok(p) => p,
            Err(e) => {
                log::error!("instance {id}: predictor failed after {} clicks: {e}", clicks.len());
                error = Some(e.to_string());
                break;
            }
        };
        pred = binarize(&prob, cfg.binarize_threshold);
        let score = iou(&pred, gt)?;
        trace.push(score);
        if score >= target {
            break;
        }
    }

    let noc = if error.is_some() {
        cfg.iou_thresholds
            .iter()
            .map(|&t| (threshold_key(t), cfg.max_clicks))
            .collect()
    } else {
        noc_from_trace(&trace, &cfg.iou_thresholds, cfg.max_clicks)
    };
    Ok(InstanceEval {
        id: id.to_string(),
        noc,
        iou_trace: trace,
        clicks,
        error,
    })
}

/// Mean IoU after k = 1..=max_clicks clicks. Instances that stopped early
/// carry their last IoU forward (0 if they have none).
pub fn mean_iou_curve(instances: &[InstanceEval], max_clicks: usize) -> Vec<f64> {
    if instances.is_empty() {
        return vec![0.0; max_clicks];
    }
    (0..max_clicks)
        .map(|k| {
            let total: f64 = instances
                .iter()
                .map(|inst| {
                    inst.iou_trace
                        .get(k)
                        .or(inst.iou_trace.last())
                        .copied()
                        .unwrap_or(0.0)
                })
                .sum();
            total / instances.len() as f64
        })
        .collect()
}

pub fn aggregate(instances: &[InstanceEval], cfg: &EvalConfig) -> Aggregates {
    let n = instances.len().max(1) as f64;
    let noc = cfg
        .iou_thresholds
        .iter()
        .map(|&t| {
            let key = threshold_key(t);
            let sum: usize = instances.iter().map(|i| i.noc[&key]).sum();
            (key, sum as f64 / n)
        })
        .collect();
    let target = cfg.target();
    let failing = |budget: usize| instances.iter().filter(|i| !i.reached_within(target, budget)).count();
    Aggregates {
        noc,
        ge20: failing(20),
        ge100: (cfg.max_clicks >= 100).then(|| failing(100)),
        mean_iou_curve: mean_iou_curve(instances, cfg.max_clicks),
    }
}

/// Evaluates every instance separately, in dataset order.
pub fn run_noc(dataset: &Dataset, predictor: &dyn PredictorFactory, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Dataset("cannot evaluate an empty dataset".into()));
    }
    let records = par::map_indexed(&dataset.instances, cfg.parallelism, |_, inst| {
        let image = dataset.image(&inst.image_id)?;
        evaluate_instance(&inst.instance_id, image, &inst.mask, predictor, cfg)
    });
    let instances: Vec<InstanceEval> = records.into_iter().collect::<Result<_>>()?;
    let aggregates = aggregate(&instances, cfg);
    Ok(EvalReport {
        config: cfg.clone(),
        predictor: predictor.name(),
        instances,
        aggregates,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Mean IoU curve, as stored in the aggregates.
    pub fn mean_iou_curve(&self) -> &[f64] {
        &self.aggregates.mean_iou_curve
    }

    /// NoC at `threshold`, if it was evaluated.
    pub fn noc(&self, threshold: f64) -> Option<f64> {
        self.aggregates.noc.get(&threshold_key(threshold)).copied()
    }

    /// One row per instance: id, NoC per threshold, clicks used, final IoU,
    /// error.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let keys: Vec<String> = self.config.iou_thresholds.iter().map(|&t| threshold_key(t)).collect();
        let mut header = vec!["id".to_string()];
        header.extend(keys.iter().map(|k| format!("noc@{k}")));
        header.extend(["clicks".into(), "final_iou".into(), "error".into()]);
        w.write_record(&header)?;
        for inst in &self.instances {
            let mut row = vec![inst.id.clone()];
            row.extend(keys.iter().map(|k| inst.noc[k].to_string()));
            row.push(inst.iou_trace.len().to_string());
            row.push(inst.iou_trace.last().map_or(String::new(), |v| format!("{v:.6}")));
            row.push(inst.error.clone().unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("csv output", e))?;
        Ok(())
    }
}

/// Largest single-step decrease of a curve (0 for a non-decreasing curve).
pub fn max_step_drop(curve: &[f64]) -> f64 {
    curve
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{make_synthetic_suite_sized, SuiteKind};
    use crate::predictors::{ConstantPredictor, GeodesicPredictor, OracleFactory, Predictor, WithoutMaskGuidance};
    use crate::types::ProbMap;

    fn suite(n: usize) -> Dataset {
        make_synthetic_suite_sized(SuiteKind::TwoColorShapes, n, 21, 48).unwrap()
    }

    #[test]
    fn oracle_needs_one_click() {
        let report = run_noc(&suite(10), &OracleFactory, &EvalConfig::default()).unwrap();
        assert_eq!(report.noc(0.90), Some(1.0));
        assert_eq!(report.noc(0.85), Some(1.0));
        assert_eq!(report.aggregates.ge20, 0);
        assert!(report.mean_iou_curve().iter().all(|&v| v == 1.0));
        assert_eq!(report.mean_iou_curve().len(), 20);
    }

    #[test]
    fn empty_predictor_hits_cap() {
        let cfg = EvalConfig::default();
        let report = run_noc(&suite(4), &ConstantPredictor::new(0.0), &cfg).unwrap();
        for inst in &report.instances {
            assert!(inst.noc.values().all(|&k| k == 20));
            assert_eq!(inst.iou_trace.len(), 20);
        }
        assert_eq!(report.aggregates.ge20, 4);
        assert_eq!(report.aggregates.ge100, None);
    }

    #[test]
    fn trace_contract() {
        let cfg = EvalConfig::default();
        let report = run_noc(&suite(6), &GeodesicPredictor::default(), &cfg).unwrap();
        for inst in &report.instances {
            assert!(inst.iou_trace.len() <= cfg.max_clicks);
            let last = *inst.iou_trace.last().unwrap();
            assert_eq!(last >= 0.9, inst.noc["0.90"] <= inst.iou_trace.len() && inst.reached_within(0.9, 20));
            assert!(inst.noc["0.85"] <= inst.noc["0.90"]);
            assert!((1..=cfg.max_clicks).contains(&inst.noc["0.90"]));
        }
        assert!(report.noc(0.85).unwrap() <= report.noc(0.90).unwrap());
    }

    #[test]
    fn single_instance_curve_is_padded_trace() {
        let inst = InstanceEval {
            id: "x".into(),
            noc: BTreeMap::new(),
            iou_trace: vec![0.2, 0.5, 0.95],
            clicks: vec![],
            error: None,
        };
        assert_eq!(mean_iou_curve(&[inst], 5), vec![0.2, 0.5, 0.95, 0.95, 0.95]);
    }

    #[test]
    fn failing_predictor_counts_at_cap() {
        struct Failing;
        impl Predictor for Failing {
            fn name(&self) -> String {
                "failing".into()
            }
            fn predict(&self, _: &PredictorInput<'_>) -> Result<ProbMap> {
                Err(Error::MalformedResponse("boom".into()))
            }
        }
        let report = run_noc(&suite(2), &Failing, &EvalConfig::default()).unwrap();
        for inst in &report.instances {
            assert!(inst.error.as_deref().unwrap().contains("boom"));
            assert_eq!(inst.noc["0.90"], 20);
        }
        assert_eq!(report.aggregates.ge20, 2);
    }

    #[test]
    fn ablation_switch_runs() {
        let cfg = EvalConfig {
            use_prev_mask: false,
            max_clicks: 5,
            ..Default::default()
        };
        let report = run_noc(&suite(3), &GeodesicPredictor::default(), &cfg).unwrap();
        assert_eq!(report.instances.len(), 3);
        let wrapped = run_noc(&suite(3), &WithoutMaskGuidance(GeodesicPredictor::default()), &EvalConfig { max_clicks: 5, ..Default::default() }).unwrap();
        assert_eq!(wrapped.instances, report.instances);
    }

    #[test]
    fn csv_has_row_per_instance() {
        let report = run_noc(&suite(3), &OracleFactory, &EvalConfig::default()).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("id,noc@0.85,noc@0.90,clicks,final_iou,error"));
    }

    #[test]
    fn bad_configs() {
        let d = suite(1);
        for cfg in [
            EvalConfig { iou_thresholds: vec![], ..Default::default() },
            EvalConfig { iou_thresholds: vec![1.0], ..Default::default() },
            EvalConfig { max_clicks: 0, ..Default::default() },
        ] {
            assert!(run_noc(&d, &OracleFactory, &cfg).is_err());
        }
        assert!(run_noc(&Dataset::default(), &OracleFactory, &EvalConfig::default()).is_err());
    }

    #[test]
    fn step_drop() {
        assert_eq!(max_step_drop(&[0.1, 0.5, 0.4, 0.9, 0.6]), 0.30000000000000004);
        assert_eq!(max_step_drop(&[0.1, 0.2]), 0.0);
    }
}
