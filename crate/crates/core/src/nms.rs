//! Greedy non-maximum suppression and the cross-tile merger.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{canonical_order, iou, Detection};
use crate::slicing::{remap_box, SlicePlan, TileSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmsConfig {
    /// Pairs strictly above this IoU are duplicates.
    pub iou_threshold: f64,
    /// Only suppress within a class.
    pub class_aware: bool,
    /// Detections scoring below this are dropped before suppression.
    pub score_threshold: f64,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            class_aware: true,
            score_threshold: 0.05,
        }
    }
}

impl NmsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "NMS IoU threshold must lie in (0, 1], got {}",
                self.iou_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::InvalidConfig(format!(
                "score threshold must lie in [0, 1], got {}",
                self.score_threshold
            )));
        }
        Ok(())
    }
}

pub fn greedy_nms(dets: &[Detection], cfg: &NmsConfig) -> Vec<Detection> {
    let mut pool: Vec<Detection> = dets
        .iter()
        .filter(|d| d.score >= cfg.score_threshold)
        .copied()
        .collect();
    pool.sort_by(canonical_order);

    let mut suppressed = vec![false; pool.len()];
    let mut kept = Vec::new();
    for i in 0..pool.len() {
        if suppressed[i] {
            continue;
        }
        let head = pool[i];
        kept.push(head);
        for j in i + 1..pool.len() {
            if suppressed[j] {
                continue;
            }
            let other = &pool[j];
            if cfg.class_aware && other.class_id != head.class_id {
                continue;
            }
            if iou(&head.bbox, &other.bbox) > cfg.iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    kept
}

/// Maps per-tile detections into the global frame and deduplicates them.
///
/// Entries may arrive in any order; they are concatenated in row-major tile
/// order before suppression.
pub fn merge_tile_detections(
    per_tile: &[(TileSpec, Vec<Detection>)],
    plan: &SlicePlan,
    cfg: &NmsConfig,
) -> Result<Vec<Detection>> {
    Ok(greedy_nms(&remap_tile_detections(per_tile, plan)?, cfg))
}

/// Global-frame detections of all tiles, concatenated in row-major tile
/// order. Tiles must belong to `plan`.
pub fn remap_tile_detections(
    per_tile: &[(TileSpec, Vec<Detection>)],
    plan: &SlicePlan,
) -> Result<Vec<Detection>> {
    let mut entries: Vec<&(TileSpec, Vec<Detection>)> = per_tile.iter().collect();
    for (tile, _) in &entries {
        if plan.tile(tile.row, tile.col) != Some(tile) {
            return Err(Error::UnknownTile {
                row: tile.row,
                col: tile.col,
            });
        }
    }
    entries.sort_by_key(|(t, _)| (t.row, t.col));

    let mut global = Vec::new();
    for (tile, dets) in entries {
        for d in dets {
            let bbox = remap_box(&d.bbox, tile)?;
            global.push(Detection { bbox, ..*d });
        }
    }
    Ok(global)
}
