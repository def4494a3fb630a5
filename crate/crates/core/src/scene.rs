//! Seeded synthetic scenes for end-to-end checks.
//!
//! Objects are placed so that no rectangle crosses a tile edge of the slice
//! plan: on each axis a rectangle sits inside a single "cell" between
//! consecutive tile edges. Every tile therefore sees each object whole or
//! not at all, and objects inside overlap strips are seen whole by every
//! tile sharing the strip. Greedy NMS then removes the duplicates exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detector::{render_scene, validate_oracle_scene, ColorClassMap};
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, GroundTruthBox};
use crate::image::RasterImage;
use crate::slicing::{compute_slice_plan, SlicePlan};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    pub objects: usize,
    pub classes: usize,
    pub min_side: usize,
    pub max_side: usize,
    /// Objects that must lie across the middle of a tile overlap strip.
    pub straddling: usize,
    /// Minimum empty pixels between any two objects.
    pub gap: usize,
    pub tile_size: usize,
    pub overlap_ratio: f64,
}

impl SceneParams {
    pub fn new(width: usize, height: usize, objects: usize) -> Self {
        Self {
            width,
            height,
            objects,
            classes: 6,
            min_side: 10,
            max_side: 48,
            straddling: 0,
            gap: 4,
            tile_size: crate::slicing::DEFAULT_TILE_SIZE,
            overlap_ratio: crate::slicing::DEFAULT_OVERLAP_RATIO,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub rects: Vec<(BoundingBox, u32)>,
    pub cmap: ColorClassMap,
}

impl Scene {
    pub fn render(&self) -> Result<(RasterImage, Vec<GroundTruthBox>)> {
        render_scene(self.width, self.height, &self.rects, &self.cmap)
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    start: usize,
    end: usize,
    /// Number of tiles covering the cell on this axis.
    cover: usize,
}

fn axis_cells(origins: &[usize], size: usize, extent: usize) -> Vec<Cell> {
    let mut edges: Vec<usize> = origins
        .iter()
        .flat_map(|&o| [o, o + size])
        .chain([0, extent])
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
        .windows(2)
        .map(|w| Cell {
            start: w[0],
            end: w[1],
            cover: origins
                .iter()
                .filter(|&&o| o <= w[0] && w[1] <= o + size)
                .count(),
        })
        .collect()
}

/// Number of plan tiles that contain `b` entirely.
pub fn tiles_containing(plan: &SlicePlan, b: &BoundingBox) -> usize {
    plan.tiles
        .iter()
        .filter(|t| {
            let r = t.global_rect();
            r.x1 <= b.x1 && r.y1 <= b.y1 && b.x2 <= r.x2 && b.y2 <= r.y2
        })
        .count()
}

/// Number of plan tiles whose rectangle cuts through `b`.
pub fn tiles_cutting(plan: &SlicePlan, b: &BoundingBox) -> usize {
    plan.tiles
        .iter()
        .filter(|t| {
            let r = t.global_rect();
            let inside = r.x1 <= b.x1 && r.y1 <= b.y1 && b.x2 <= r.x2 && b.y2 <= r.y2;
            !inside && r.intersection(b).is_some()
        })
        .count()
}

const MAX_ATTEMPTS: usize = 20_000;

pub fn generate_scene(seed: u64, p: &SceneParams) -> Result<Scene> {
    if p.classes == 0 || p.min_side == 0 || p.min_side > p.max_side {
        return Err(Error::InvalidConfig(format!(
            "need classes >= 1 and 1 <= min_side <= max_side, got {} / {}..{}",
            p.classes, p.min_side, p.max_side
        )));
    }
    if p.straddling > p.objects {
        return Err(Error::InvalidConfig(
            "more straddling objects than objects".into(),
        ));
    }
    let cmap = ColorClassMap::palette(p.classes)?;
    let plan = compute_slice_plan(p.width, p.height, p.tile_size, p.overlap_ratio)?;
    let tile_w = plan.tiles[0].width;
    let tile_h = plan.tiles[0].height;
    let xcells = axis_cells(&plan.x_origins(), tile_w, p.width);
    let ycells = axis_cells(&plan.y_origins(), tile_h, p.height);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rects: Vec<(BoundingBox, u32)> = Vec::with_capacity(p.objects);

    for i in 0..p.objects {
        let straddle = i < p.straddling;
        let mut placed = None;
        for _ in 0..MAX_ATTEMPTS {
            let cx = xcells[rng.gen_range(0..xcells.len())];
            let cy = ycells[rng.gen_range(0..ycells.len())];
            // which axis has to cross the middle of its overlap strip
            let (seam_x, seam_y) = if straddle {
                match (cx.cover > 1, cy.cover > 1) {
                    (false, false) => continue,
                    (true, false) => (true, false),
                    (false, true) => (false, true),
                    (true, true) => {
                        let x = rng.gen_bool(0.5);
                        (x, !x)
                    }
                }
            } else {
                (false, false)
            };
            let Some((x0, x1)) = place_on_axis(&mut rng, cx, p, seam_x) else {
                continue;
            };
            let Some((y0, y1)) = place_on_axis(&mut rng, cy, p, seam_y) else {
                continue;
            };
            let clear = rects.iter().all(|(r, _)| {
                let g = p.gap as f64;
                x1 as f64 + g <= r.x1
                    || r.x2 + g <= x0 as f64
                    || y1 as f64 + g <= r.y1
                    || r.y2 + g <= y0 as f64
            });
            if clear {
                placed = Some(BoundingBox::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64));
                break;
            }
        }
        let b = placed.ok_or_else(|| {
            Error::InvalidConfig(format!(
                "could not place object {i} of {} in a {}x{} scene",
                p.objects, p.width, p.height
            ))
        })?;
        let class = rng.gen_range(0..p.classes) as u32;
        rects.push((b, class));
    }
    validate_oracle_scene(&rects)?;

    Ok(Scene {
        width: p.width,
        height: p.height,
        rects,
        cmap,
    })
}

fn place_on_axis(
    rng: &mut ChaCha8Rng,
    cell: Cell,
    p: &SceneParams,
    cross_middle: bool,
) -> Option<(usize, usize)> {
    let room = cell.end - cell.start;
    if cross_middle && room < 2 {
        return None;
    }
    let min = if cross_middle {
        p.min_side.max(2)
    } else {
        p.min_side
    };
    let max = p.max_side.min(room);
    if min > max {
        return None;
    }
    let side = rng.gen_range(min..=max);
    let (lo, hi) = if cross_middle {
        let mid = cell.start + room / 2;
        (
            (mid + 1).saturating_sub(side).max(cell.start),
            (mid - 1).min(cell.end - side),
        )
    } else {
        (cell.start, cell.end - side)
    };
    if lo > hi {
        return None;
    }
    let start = rng.gen_range(lo..=hi);
    Some((start, start + side))
}
