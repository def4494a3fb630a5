//! Detection scoring: greedy matching, all-points interpolated AP, mAP over
//! classes and IoU thresholds, and latency/FPS.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{canonical_order, iou, Detection, GroundTruthBox};

/// The ten thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedDetection {
    pub score: f64,
    pub true_positive: bool,
    /// Index into the ground-truth slice when matched.
    pub gt_index: Option<usize>,
}

/// Result of matching one image's detections of one class.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchOutcome {
    /// In processing order (canonical: score descending).
    pub detections: Vec<MatchedDetection>,
    pub gt_matched: Vec<bool>,
}

impl MatchOutcome {
    pub fn flags(&self) -> Vec<bool> {
        self.detections.iter().map(|d| d.true_positive).collect()
    }

    pub fn true_positives(&self) -> usize {
        self.detections.iter().filter(|d| d.true_positive).count()
    }
}

/// Greedy matching for a single image and class. Each detection, highest
/// score first, takes the unmatched ground truth it overlaps most, provided
/// that IoU is at least `iou_threshold`.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
) -> MatchOutcome {
    let mut ordered: Vec<&Detection> = dets.iter().collect();
    ordered.sort_by(|a, b| canonical_order(a, b));

    let mut gt_matched = vec![false; gts.len()];
    let detections = ordered
        .into_iter()
        .map(|d| {
            let best = gts
                .iter()
                .enumerate()
                .filter(|(i, _)| !gt_matched[*i])
                .map(|(i, g)| (i, iou(&d.bbox, &g.bbox)))
                .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
                    Some((_, bv)) if bv >= v => acc,
                    _ => Some((i, v)),
                });
            match best {
                Some((i, v)) if v >= iou_threshold => {
                    gt_matched[i] = true;
                    MatchedDetection {
                        score: d.score,
                        true_positive: true,
                        gt_index: Some(i),
                    }
                }
                _ => MatchedDetection {
                    score: d.score,
                    true_positive: false,
                    gt_index: None,
                },
            }
        })
        .collect();

    MatchOutcome {
        detections,
        gt_matched,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApValue {
    pub value: f64,
    /// False when there was neither ground truth nor any detection; `value`
    /// is then reported as 0.
    pub defined: bool,
}

/// Area under the precision envelope of a score-ordered TP/FP list.
///
/// Recall only moves at true positives, by `1 / num_gt` each time, so the
/// integral is `sum over TPs of max(precision at or after that rank) / num_gt`.
pub fn average_precision(flags: &[bool], num_gt: usize) -> ApValue {
    if num_gt == 0 {
        return ApValue {
            value: 0.0,
            defined: !flags.is_empty(),
        };
    }
    let mut tp = 0usize;
    let precision: Vec<f64> = flags
        .iter()
        .enumerate()
        .map(|(i, &hit)| {
            tp += hit as usize;
            tp as f64 / (i + 1) as f64
        })
        .collect();

    let mut envelope = 0.0f64;
    let mut sum = 0.0;
    for (p, &hit) in precision.iter().zip(flags).rev() {
        envelope = envelope.max(*p);
        if hit {
            sum += envelope;
        }
    }
    ApValue {
        value: (sum / num_gt as f64).clamp(0.0, 1.0),
        defined: true,
    }
}

pub fn mean_average_precision(per_class_ap: &[f64]) -> Result<f64> {
    if per_class_ap.is_empty() {
        return Err(Error::InvalidConfig("mAP needs at least one class".into()));
    }
    Ok(per_class_ap.iter().sum::<f64>() / per_class_ap.len() as f64)
}

/// Mean of `evaluate` over [`coco_thresholds`].
pub fn map_50_95<F: FnMut(f64) -> f64>(mut evaluate: F) -> f64 {
    let t = coco_thresholds();
    t.iter().map(|&th| evaluate(th)).sum::<f64>() / t.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub latency_ms: f64,
    pub fps: f64,
}

pub fn latency_stats(per_image_ms: &[f64]) -> Result<LatencyStats> {
    if per_image_ms.is_empty() {
        return Err(Error::InvalidConfig("no timings supplied".into()));
    }
    if let Some(bad) = per_image_ms.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidConfig(format!(
            "timings must be positive and finite, got {bad}"
        )));
    }
    let latency_ms = per_image_ms.iter().sum::<f64>() / per_image_ms.len() as f64;
    Ok(LatencyStats {
        latency_ms,
        fps: 1000.0 / latency_ms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Count classes that have detections but no ground truth as AP 0 in the
    /// mean instead of leaving them out.
    pub count_absent_classes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    /// One AP per evaluated threshold, same order as `EvalReport::thresholds`.
    pub ap: Vec<f64>,
    pub num_detections: usize,
    pub num_ground_truths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub per_class: BTreeMap<u32, ClassReport>,
    /// mAP at each threshold.
    pub map: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub map_50: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub map_50_95: Option<f64>,
    pub num_detections: usize,
    pub num_ground_truths: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub latency_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fps: Option<f64>,
}

impl EvalReport {
    pub fn with_latency(mut self, stats: LatencyStats) -> Self {
        self.latency_ms = Some(stats.latency_ms);
        self.fps = Some(stats.fps);
        self
    }
}

/// Scores one image's detections against its ground truth at each threshold.
pub fn evaluate(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    thresholds: &[f64],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if thresholds.is_empty() {
        return Err(Error::InvalidConfig("no IoU thresholds given".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidConfig(format!(
            "IoU threshold {t} outside [0, 1]"
        )));
    }

    let classes: BTreeSet<u32> = dets
        .iter()
        .map(|d| d.class_id)
        .chain(gts.iter().map(|g| g.class_id))
        .collect();

    let mut per_class = BTreeMap::new();
    for &class in &classes {
        let cd: Vec<Detection> = dets
            .iter()
            .filter(|d| d.class_id == class)
            .copied()
            .collect();
        let cg: Vec<GroundTruthBox> = gts
            .iter()
            .filter(|g| g.class_id == class)
            .copied()
            .collect();
        let ap = thresholds
            .iter()
            .map(|&t| average_precision(&match_detections(&cd, &cg, t).flags(), cg.len()).value)
            .collect();
        per_class.insert(
            class,
            ClassReport {
                ap,
                num_detections: cd.len(),
                num_ground_truths: cg.len(),
            },
        );
    }

    let counted: Vec<&ClassReport> = per_class
        .values()
        .filter(|c| c.num_ground_truths > 0 || opts.count_absent_classes)
        .collect();
    let map = (0..thresholds.len())
        .map(|ti| {
            let aps: Vec<f64> = counted.iter().map(|c| c.ap[ti]).collect();
            mean_average_precision(&aps)
        })
        .collect::<Result<Vec<f64>>>()
        .map_err(|_| Error::InvalidConfig("no class has ground truth to score against".into()))?;

    let map_50 = thresholds.iter().position(|&t| t == 0.5).map(|i| map[i]);
    let map_50_95 = (thresholds == coco_thresholds().as_slice())
        .then(|| map.iter().sum::<f64>() / map.len() as f64);

    Ok(EvalReport {
        thresholds: thresholds.to_vec(),
        per_class,
        map,
        map_50,
        map_50_95,
        num_detections: dets.len(),
        num_ground_truths: gts.len(),
        latency_ms: None,
        fps: None,
    })
}
