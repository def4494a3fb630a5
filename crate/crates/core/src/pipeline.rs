//! Sliced inference end to end: plan, crop, detect each tile on a bounded
//! worker pool, remap, merge with NMS, and optionally score the result.

use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{Detector, DownscalingDetector};
use crate::error::{Error, Result};
use crate::geometry::{Detection, GroundTruthBox};
use crate::image::RasterImage;
use crate::metrics::{evaluate, latency_stats, EvalOptions, EvalReport};
use crate::nms::{greedy_nms, remap_tile_detections, NmsConfig};
use crate::slicing::{compute_slice_plan, extract_tile, DEFAULT_OVERLAP_RATIO, DEFAULT_TILE_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Sliced,
    Direct,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Sliced => "sliced",
            Mode::Direct => "direct",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub tile_size: usize,
    pub overlap_ratio: f64,
    pub nms: NmsConfig,
    pub workers: usize,
    pub mode: Mode,
    /// Sliced mode: also run the detector on the whole image and merge its
    /// output with the tiles before NMS.
    pub full_image_pass: bool,
    /// Direct mode: shrink the image so its longer side is `tile_size`
    /// before detection, modelling a fixed-input-size detector.
    pub direct_downscale: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tile_size: DEFAULT_TILE_SIZE,
            overlap_ratio: DEFAULT_OVERLAP_RATIO,
            nms: NmsConfig::default(),
            workers: 1,
            mode: Mode::Sliced,
            full_image_pass: false,
            direct_downscale: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be >= 1".into()));
        }
        if self.tile_size == 0 {
            return Err(Error::InvalidConfig("tile size must be positive".into()));
        }
        self.nms.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Global frame, post-NMS, canonical order.
    pub detections: Vec<Detection>,
    /// Time spent inside each detector call, row-major tile order.
    pub tile_ms: Vec<f64>,
    /// Wall-clock time of the whole run.
    pub total_ms: f64,
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn timed_detect<D: Detector>(
    det: &D,
    image: &RasterImage,
    serial: Option<&Mutex<()>>,
) -> Result<(Vec<Detection>, f64)> {
    let _guard = serial.map(|m| m.lock().unwrap_or_else(|e| e.into_inner()));
    let start = Instant::now();
    let out = det.detect(image)?;
    Ok((out, elapsed_ms(start)))
}

pub fn run_sliced<D: Detector>(
    image: &RasterImage,
    det: &D,
    cfg: &PipelineConfig,
) -> Result<RunResult> {
    cfg.validate()?;
    let start = Instant::now();
    let plan = compute_slice_plan(
        image.width(),
        image.height(),
        cfg.tile_size,
        cfg.overlap_ratio,
    )?;
    let serial = (!det.concurrent()).then(|| Mutex::new(()));

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Result<(Vec<Detection>, f64)>> = pool.install(|| {
        plan.tiles
            .par_iter()
            .map(|tile| {
                let crop = extract_tile(image, tile)?;
                timed_detect(det, &crop, serial.as_ref()).map_err(|e| Error::Detector {
                    row: tile.row,
                    col: tile.col,
                    message: e.to_string(),
                })
            })
            .collect()
    });

    let mut per_tile = Vec::with_capacity(plan.tiles.len());
    let mut tile_ms = Vec::with_capacity(plan.tiles.len());
    for (tile, outcome) in plan.tiles.iter().zip(outcomes) {
        let (dets, ms) = outcome?;
        per_tile.push((*tile, dets));
        tile_ms.push(ms);
    }

    let mut global = remap_tile_detections(&per_tile, &plan)?;
    if cfg.full_image_pass {
        let (full, ms) = timed_detect(det, image, None).map_err(|e| Error::Detector {
            row: usize::MAX,
            col: usize::MAX,
            message: format!("full-image pass: {e}"),
        })?;
        global.extend(full);
        tile_ms.push(ms);
    }
    let detections = greedy_nms(&global, &cfg.nms);

    Ok(RunResult {
        detections,
        tile_ms,
        total_ms: elapsed_ms(start),
    })
}

/// One detector call on the whole image, then NMS.
pub fn run_direct<D: Detector>(
    image: &RasterImage,
    det: &D,
    cfg: &PipelineConfig,
) -> Result<RunResult> {
    cfg.validate()?;
    let start = Instant::now();
    let fail = |e: Error| Error::Detector {
        row: 0,
        col: 0,
        message: e.to_string(),
    };
    let (raw, ms) = if cfg.direct_downscale {
        timed_detect(&DownscalingDetector::new(det, cfg.tile_size), image, None)
    } else {
        timed_detect(det, image, None)
    }
    .map_err(fail)?;
    Ok(RunResult {
        detections: greedy_nms(&raw, &cfg.nms),
        tile_ms: vec![ms],
        total_ms: elapsed_ms(start),
    })
}

/// Dispatches on `cfg.mode`.
pub fn run<D: Detector>(image: &RasterImage, det: &D, cfg: &PipelineConfig) -> Result<RunResult> {
    match cfg.mode {
        Mode::Sliced => run_sliced(image, det, cfg),
        Mode::Direct => run_direct(image, det, cfg),
    }
}

/// Scores a run against ground truth and attaches its latency and FPS.
pub fn evaluate_run(
    result: &RunResult,
    gts: &[GroundTruthBox],
    thresholds: &[f64],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let report = evaluate(&result.detections, gts, thresholds, opts)?;
    Ok(match latency_stats(&[result.total_ms]) {
        Ok(stats) => report.with_latency(stats),
        Err(_) => report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{render_scene, ColorClassMap, SyntheticDetector};
    use crate::geometry::BoundingBox;

    struct Failing;

    impl Detector for Failing {
        fn detect(&self, image: &RasterImage) -> Result<Vec<Detection>> {
            if image.pixel(0, 0) == [1, 1, 1] {
                Err(Error::InvalidConfig("boom".into()))
            } else {
                Ok(vec![])
            }
        }
    }

    #[test]
    fn failing_tile_is_identified() {
        let mut img = RasterImage::filled(1000, 700, [0, 0, 0]).unwrap();
        img.set_pixel(360, 60, [1, 1, 1]);
        let err = run_sliced(&img, &Failing, &PipelineConfig::default()).unwrap_err();
        assert!(
            matches!(err, Error::Detector { row: 1, col: 1, .. }),
            "{err}"
        );
    }

    #[test]
    fn single_tile_equals_direct_call() {
        let cmap = ColorClassMap::palette(2).unwrap();
        let rects = [
            (BoundingBox::new(10.0, 10.0, 40.0, 30.0), 0),
            (BoundingBox::new(100.0, 200.0, 150.0, 260.0), 1),
        ];
        let (img, _) = render_scene(640, 640, &rects, &cmap).unwrap();
        let det = SyntheticDetector::new(cmap);
        let cfg = PipelineConfig::default();
        let sliced = run_sliced(&img, &det, &cfg).unwrap();
        assert_eq!(sliced.tile_ms.len(), 1);
        assert_eq!(sliced.detections, det.detect(&img).unwrap());
        assert_eq!(
            run_direct(&img, &det, &cfg).unwrap().detections,
            sliced.detections
        );
    }

    #[test]
    fn rejects_zero_workers() {
        let img = RasterImage::filled(10, 10, [0, 0, 0]).unwrap();
        let cfg = PipelineConfig {
            workers: 0,
            ..PipelineConfig::default()
        };
        let det = SyntheticDetector::new(ColorClassMap::palette(1).unwrap());
        assert!(run_sliced(&img, &det, &cfg).is_err());
    }

    #[test]
    fn full_image_pass_adds_one_call() {
        let cmap = ColorClassMap::palette(1).unwrap();
        let rects = [(BoundingBox::new(600.0, 10.0, 700.0, 40.0), 0)];
        let (img, _) = render_scene(1000, 640, &rects, &cmap).unwrap();
        let det = SyntheticDetector::new(cmap);
        let cfg = PipelineConfig {
            full_image_pass: true,
            ..PipelineConfig::default()
        };
        let r = run_sliced(&img, &det, &cfg).unwrap();
        assert_eq!(r.tile_ms.len(), 3);
        // the object is whole in the full-image view
        assert!(r.detections.contains(&Detection::new(rects[0].0, 0, 1.0)));
    }
}
