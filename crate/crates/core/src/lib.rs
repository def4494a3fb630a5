//! Slicing-aided object detection for very large images.
//!
//! A large image is cut into overlapping fixed-size tiles, each tile goes
//! through a [`Detector`](detector::Detector), the per-tile boxes are mapped
//! back to image coordinates and duplicates from the overlaps are removed
//! with greedy NMS. Alongside the pipeline sit COCO-style AP/mAP scoring,
//! the focal-family classification losses, and reference kernels for
//! channel-attention gating and three-level feature fusion.
//!
//! A synthetic colour-blob detector and seeded scene generator provide an
//! exact oracle for the whole pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod detector;
pub mod error;
pub mod geometry;
pub mod image;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod nms;
pub mod numerics;
pub mod pipeline;
pub mod scene;
pub mod slicing;

pub use detector::{ColorClassMap, Detector, DownscalingDetector, SyntheticDetector};
pub use error::{Error, Result};
pub use geometry::{giou, iou, BoundingBox, Detection, GroundTruthBox};
pub use image::RasterImage;
pub use metrics::EvalReport;
pub use nms::NmsConfig;
pub use pipeline::{run_direct, run_sliced, PipelineConfig, RunResult};
pub use slicing::{compute_slice_plan, SlicePlan, TileSpec};
