//! Overlapping tile plans for large images and tile/global coordinate maps.
//!
//! On each axis tile origins are `0, stride, 2 * stride, ...` with
//! `stride = tile_size - floor(overlap_ratio * tile_size)`; the last origin
//! is pulled back to `extent - tile_size` so every tile has the full tile
//! size and ends on the image edge. An axis no longer than `tile_size` gets
//! one tile spanning the whole extent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::image::RasterImage;

/// Default tile edge in pixels.
pub const DEFAULT_TILE_SIZE: usize = 640;
/// Default fraction of the tile edge shared by neighbouring tiles.
pub const DEFAULT_OVERLAP_RATIO: f64 = 0.2;
/// How far a tile-local box may poke past its tile before it is rejected
/// rather than clipped.
pub const DEFAULT_REMAP_TOLERANCE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileSpec {
    pub row: usize,
    pub col: usize,
    pub origin_x: usize,
    pub origin_y: usize,
    pub width: usize,
    pub height: usize,
}

impl TileSpec {
    /// The tile rectangle in the global frame.
    pub fn global_rect(&self) -> BoundingBox {
        BoundingBox::new(
            self.origin_x as f64,
            self.origin_y as f64,
            (self.origin_x + self.width) as f64,
            (self.origin_y + self.height) as f64,
        )
    }

    pub fn contains_pixel(&self, x: usize, y: usize) -> bool {
        (self.origin_x..self.origin_x + self.width).contains(&x)
            && (self.origin_y..self.origin_y + self.height).contains(&y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicePlan {
    pub image_width: usize,
    pub image_height: usize,
    pub tile_size: usize,
    pub overlap_ratio: f64,
    pub stride: usize,
    /// Row-major.
    pub tiles: Vec<TileSpec>,
}

impl SlicePlan {
    pub fn rows(&self) -> usize {
        self.tiles.last().map_or(0, |t| t.row + 1)
    }

    pub fn cols(&self) -> usize {
        self.tiles.last().map_or(0, |t| t.col + 1)
    }

    pub fn tile(&self, row: usize, col: usize) -> Option<&TileSpec> {
        let cols = self.cols();
        if col >= cols {
            return None;
        }
        self.tiles.get(row * cols + col)
    }

    /// Origins along x, one per column.
    pub fn x_origins(&self) -> Vec<usize> {
        self.tiles
            .iter()
            .filter(|t| t.row == 0)
            .map(|t| t.origin_x)
            .collect()
    }

    /// Origins along y, one per row.
    pub fn y_origins(&self) -> Vec<usize> {
        self.tiles
            .iter()
            .filter(|t| t.col == 0)
            .map(|t| t.origin_y)
            .collect()
    }
}

fn axis_origins(extent: usize, tile: usize, stride: usize) -> (Vec<usize>, usize) {
    if extent <= tile {
        return (vec![0], extent);
    }
    let mut origins = Vec::new();
    let mut o = 0;
    while o + tile < extent {
        origins.push(o);
        o += stride;
    }
    let last = extent - tile;
    if origins.last() != Some(&last) {
        origins.push(last);
    }
    (origins, tile)
}

pub fn compute_slice_plan(
    image_width: usize,
    image_height: usize,
    tile_size: usize,
    overlap_ratio: f64,
) -> Result<SlicePlan> {
    if image_width == 0 || image_height == 0 {
        return Err(Error::InvalidConfig(format!(
            "image dimensions must be positive, got {image_width}x{image_height}"
        )));
    }
    if tile_size == 0 {
        return Err(Error::InvalidConfig("tile size must be positive".into()));
    }
    if !(0.0..1.0).contains(&overlap_ratio) {
        return Err(Error::InvalidConfig(format!(
            "overlap ratio must lie in [0, 1), got {overlap_ratio}"
        )));
    }
    let overlap_px = (overlap_ratio * tile_size as f64).floor() as usize;
    let stride = tile_size.saturating_sub(overlap_px);
    if stride == 0 {
        return Err(Error::InvalidConfig(format!(
            "overlap ratio {overlap_ratio} leaves no stride for tile size {tile_size}"
        )));
    }

    let (xs, tile_w) = axis_origins(image_width, tile_size, stride);
    let (ys, tile_h) = axis_origins(image_height, tile_size, stride);
    let tiles = ys
        .iter()
        .enumerate()
        .flat_map(|(row, &oy)| {
            xs.iter().enumerate().map(move |(col, &ox)| TileSpec {
                row,
                col,
                origin_x: ox,
                origin_y: oy,
                width: tile_w,
                height: tile_h,
            })
        })
        .collect();

    Ok(SlicePlan {
        image_width,
        image_height,
        tile_size,
        overlap_ratio,
        stride,
        tiles,
    })
}

/// Maps a tile-local box into the global frame.
pub fn remap_box(b: &BoundingBox, tile: &TileSpec) -> Result<BoundingBox> {
    remap_box_with_tolerance(b, tile, DEFAULT_REMAP_TOLERANCE)
}

/// Like [`remap_box`]; boxes overshooting the tile by at most `tolerance`
/// pixels are clipped to it first, larger overshoots are rejected.
pub fn remap_box_with_tolerance(
    b: &BoundingBox,
    tile: &TileSpec,
    tolerance: f64,
) -> Result<BoundingBox> {
    b.validate()?;
    let (w, h) = (tile.width as f64, tile.height as f64);
    if b.x1 < -tolerance || b.y1 < -tolerance || b.x2 > w + tolerance || b.y2 > h + tolerance {
        return Err(Error::OutOfBounds(format!(
            "box {:?} exceeds {}x{} tile ({}, {}) by more than {tolerance}px",
            b.to_array(),
            tile.width,
            tile.height,
            tile.row,
            tile.col
        )));
    }
    let clipped = BoundingBox::new(
        b.x1.clamp(0.0, w),
        b.y1.clamp(0.0, h),
        b.x2.clamp(0.0, w),
        b.y2.clamp(0.0, h),
    );
    Ok(clipped.translate(tile.origin_x as f64, tile.origin_y as f64))
}

/// Global frame to tile-local frame. No bounds check.
pub fn inverse_remap_box(b: &BoundingBox, tile: &TileSpec) -> BoundingBox {
    b.translate(-(tile.origin_x as f64), -(tile.origin_y as f64))
}

pub fn extract_tile(image: &RasterImage, tile: &TileSpec) -> Result<RasterImage> {
    image.crop(tile.origin_x, tile.origin_y, tile.width, tile.height)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tile_when_image_fits() {
        let p = compute_slice_plan(640, 640, 640, 0.2).unwrap();
        assert_eq!(p.tiles.len(), 1);
        assert_eq!((p.tiles[0].origin_x, p.tiles[0].origin_y), (0, 0));
        assert_eq!(p.stride, 512);
    }

    #[test]
    fn small_image_gets_one_short_tile() {
        let p = compute_slice_plan(300, 200, 640, 0.2).unwrap();
        assert_eq!(p.tiles.len(), 1);
        assert_eq!((p.tiles[0].width, p.tiles[0].height), (300, 200));
    }

    #[test]
    fn last_origin_is_clamped() {
        let p = compute_slice_plan(1000, 640, 640, 0.2).unwrap();
        assert_eq!(p.x_origins(), vec![0, 360]);
        assert_eq!(p.y_origins(), vec![0]);
    }

    #[test]
    fn large_scene_plan() {
        let p = compute_slice_plan(3826, 3473, 640, 0.2).unwrap();
        assert_eq!((p.cols(), p.rows()), (8, 7));
        assert_eq!(p.tiles.len(), 56);
        assert_eq!(*p.x_origins().last().unwrap(), 3186);
        assert_eq!(*p.y_origins().last().unwrap(), 2833);
        assert_eq!(p.tile(6, 7), p.tiles.last());
        assert!(p.tile(0, 8).is_none());
    }

    #[test]
    fn rejects_bad_config() {
        assert!(compute_slice_plan(0, 10, 5, 0.2).is_err());
        assert!(compute_slice_plan(10, 10, 0, 0.2).is_err());
        assert!(compute_slice_plan(10, 10, 5, 1.0).is_err());
        assert!(compute_slice_plan(10, 10, 5, -0.1).is_err());
        assert!(compute_slice_plan(10, 10, 5, f64::NAN).is_err());
    }

    fn tile_at(x: usize, y: usize) -> TileSpec {
        TileSpec {
            row: 0,
            col: 0,
            origin_x: x,
            origin_y: y,
            width: 640,
            height: 640,
        }
    }

    #[test]
    fn remap_examples() {
        let r = remap_box(&BoundingBox::new(10.0, 10.0, 50.0, 50.0), &tile_at(512, 0)).unwrap();
        assert_eq!(r, BoundingBox::new(522.0, 10.0, 562.0, 50.0));

        let full = BoundingBox::new(0.0, 0.0, 640.0, 640.0);
        assert_eq!(remap_box(&full, &tile_at(0, 0)).unwrap(), full);

        let r = remap_box(
            &BoundingBox::new(100.5, 7.25, 120.5, 30.0),
            &tile_at(3186, 2833),
        )
        .unwrap();
        assert_eq!(r, BoundingBox::new(3286.5, 2840.25, 3306.5, 2863.0));
    }

    #[test]
    fn remap_clips_within_tolerance_and_rejects_beyond() {
        let t = tile_at(100, 0);
        let r = remap_box(&BoundingBox::new(-0.5, 0.0, 640.75, 10.0), &t).unwrap();
        assert_eq!(r, BoundingBox::new(100.0, 0.0, 740.0, 10.0));
        assert!(remap_box(&BoundingBox::new(-1.5, 0.0, 10.0, 10.0), &t).is_err());
        assert!(remap_box(&BoundingBox::new(0.0, 0.0, 10.0, 642.0), &t).is_err());
    }

    #[test]
    fn extract_tile_pixels() {
        let mut img = RasterImage::filled(8, 8, [0, 0, 0]).unwrap();
        img.set_pixel(3, 5, [7, 8, 9]);
        let one = TileSpec {
            row: 0,
            col: 0,
            origin_x: 3,
            origin_y: 5,
            width: 1,
            height: 1,
        };
        assert_eq!(extract_tile(&img, &one).unwrap().data(), &[7, 8, 9]);
        let whole = TileSpec {
            origin_x: 0,
            origin_y: 0,
            width: 8,
            height: 8,
            ..one
        };
        assert_eq!(extract_tile(&img, &whole).unwrap(), img);
        let outside = TileSpec {
            origin_x: 4,
            width: 5,
            ..whole
        };
        assert!(extract_tile(&img, &outside).is_err());
    }
}
