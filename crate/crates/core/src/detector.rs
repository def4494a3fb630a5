//! Detector contract plus the synthetic scene renderer and colour-blob
//! detector used as an exact oracle for the slicing pipeline.
//!
//! A scene is a background-filled canvas with axis-aligned rectangles
//! painted in per-class colours. Rasterization is half-open: a rectangle
//! covers pixels `[floor(x1), ceil(x2)) x [floor(y1), ceil(y2))`. The
//! detector inverts this by labelling 4-connected components of exactly
//! matching colour.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{canonical_order, BoundingBox, Detection, GroundTruthBox};
use crate::image::{RasterImage, Rgb};

/// Anything that turns an image into detections in that image's own frame.
///
/// Returned boxes must lie within the image (1 px tolerance) and identical
/// input bytes must give identical output.
pub trait Detector: Send + Sync {
    fn detect(&self, image: &RasterImage) -> Result<Vec<Detection>>;

    /// Whether `detect` may be called from several threads at once. When
    /// false the pipeline serializes calls.
    fn concurrent(&self) -> bool {
        true
    }
}

impl<D: Detector + ?Sized> Detector for &D {
    fn detect(&self, image: &RasterImage) -> Result<Vec<Detection>> {
        (**self).detect(image)
    }

    fn concurrent(&self) -> bool {
        (**self).concurrent()
    }
}

impl<D: Detector + ?Sized> Detector for Box<D> {
    fn detect(&self, image: &RasterImage) -> Result<Vec<Detection>> {
        (**self).detect(image)
    }

    fn concurrent(&self) -> bool {
        (**self).concurrent()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassColor {
    pub id: u32,
    pub color: Rgb,
}

/// Class colours and the background colour of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawColorClassMap")]
pub struct ColorClassMap {
    background: Rgb,
    classes: Vec<ClassColor>,
}

#[derive(Deserialize)]
struct RawColorClassMap {
    background: Rgb,
    classes: Vec<ClassColor>,
}

impl TryFrom<RawColorClassMap> for ColorClassMap {
    type Error = Error;

    fn try_from(raw: RawColorClassMap) -> Result<Self> {
        ColorClassMap::new(raw.background, raw.classes)
    }
}

const PALETTE: [Rgb; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [170, 110, 40],
];

impl ColorClassMap {
    pub fn new(background: Rgb, classes: Vec<ClassColor>) -> Result<Self> {
        let mut colors = HashSet::from([background]);
        let mut ids = HashSet::new();
        for c in &classes {
            if !colors.insert(c.color) {
                return Err(Error::InvalidConfig(format!(
                    "class {} reuses colour {:?}",
                    c.id, c.color
                )));
            }
            if !ids.insert(c.id) {
                return Err(Error::InvalidConfig(format!("duplicate class id {}", c.id)));
            }
        }
        Ok(Self {
            background,
            classes,
        })
    }

    /// Classes `0..n` over a dark grey background, `n <= 12`.
    pub fn palette(n: usize) -> Result<Self> {
        if n > PALETTE.len() {
            return Err(Error::InvalidConfig(format!(
                "built-in palette has {} colours, asked for {n}",
                PALETTE.len()
            )));
        }
        let classes = PALETTE[..n]
            .iter()
            .enumerate()
            .map(|(i, &color)| ClassColor {
                id: i as u32,
                color,
            })
            .collect();
        Self::new([32, 32, 32], classes)
    }

    pub fn background(&self) -> Rgb {
        self.background
    }

    pub fn classes(&self) -> &[ClassColor] {
        &self.classes
    }

    pub fn color_of(&self, class_id: u32) -> Option<Rgb> {
        self.classes
            .iter()
            .find(|c| c.id == class_id)
            .map(|c| c.color)
    }

    pub fn class_of(&self, color: Rgb) -> Option<u32> {
        self.classes.iter().find(|c| c.color == color).map(|c| c.id)
    }
}

/// Pixel extent `[x0, x1) x [y0, y1)` covered by a box.
pub fn pixel_extent(b: &BoundingBox) -> (i64, i64, i64, i64) {
    (
        b.x1.floor() as i64,
        b.y1.floor() as i64,
        b.x2.ceil() as i64,
        b.y2.ceil() as i64,
    )
}

/// Paints `rects` in order over the background and returns the image with
/// one ground truth per rectangle at its rasterized extent.
pub fn render_scene(
    width: usize,
    height: usize,
    rects: &[(BoundingBox, u32)],
    cmap: &ColorClassMap,
) -> Result<(RasterImage, Vec<GroundTruthBox>)> {
    let mut img = RasterImage::filled(width, height, cmap.background())?;
    let mut gts = Vec::with_capacity(rects.len());
    for (b, class_id) in rects {
        b.validate()?;
        let color = cmap
            .color_of(*class_id)
            .ok_or_else(|| Error::InvalidConfig(format!("class {class_id} has no colour")))?;
        let (x0, y0, x1, y1) = pixel_extent(b);
        if x0 < 0 || y0 < 0 || x1 > width as i64 || y1 > height as i64 {
            return Err(Error::OutOfBounds(format!(
                "rect {:?} leaves the {width}x{height} canvas",
                b.to_array()
            )));
        }
        if x1 <= x0 || y1 <= y0 {
            return Err(Error::InvalidBox(format!(
                "rect {:?} covers no pixels",
                b.to_array()
            )));
        }
        img.fill_rect(x0 as usize, y0 as usize, x1 as usize, y1 as usize, color);
        gts.push(GroundTruthBox::new(
            BoundingBox::new(x0 as f64, y0 as f64, x1 as f64, y1 as f64),
            *class_id,
        ));
    }
    Ok((img, gts))
}

/// Checks that a rectangle set renders to one component per rectangle: no
/// two rasterized rectangles overlap, and same-class rectangles do not share
/// an edge.
pub fn validate_oracle_scene(rects: &[(BoundingBox, u32)]) -> Result<()> {
    let ext: Vec<_> = rects.iter().map(|(b, _)| pixel_extent(b)).collect();
    let overlaps = |a: (i64, i64, i64, i64), b: (i64, i64, i64, i64)| {
        a.0 < b.2 && b.0 < a.2 && a.1 < b.3 && b.1 < a.3
    };
    for i in 0..rects.len() {
        for j in i + 1..rects.len() {
            let (a, b) = (ext[i], ext[j]);
            if overlaps(a, b) {
                return Err(Error::InvalidConfig(format!("rects {i} and {j} overlap")));
            }
            if rects[i].1 == rects[j].1 {
                let grow_x = (a.0 - 1, a.1, a.2 + 1, a.3);
                let grow_y = (a.0, a.1 - 1, a.2, a.3 + 1);
                if overlaps(grow_x, b) || overlaps(grow_y, b) {
                    return Err(Error::InvalidConfig(format!(
                        "same-class rects {i} and {j} touch"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Default area (px) at which a blob's score saturates at 1.
pub const DEFAULT_AREA_SCALE: f64 = 1024.0;

/// One detection per 4-connected single-colour blob, with score
/// `clamp(area / area_scale, 0.5, 1)`. Output is in canonical order.
pub fn synthetic_detect(
    image: &RasterImage,
    cmap: &ColorClassMap,
    area_scale: f64,
) -> Vec<Detection> {
    let (w, h) = (image.width(), image.height());
    let data = image.data();
    let background = cmap.background();
    let mut visited = vec![false; w * h];
    let mut stack = Vec::new();
    let mut out = Vec::new();

    for start in 0..w * h {
        if visited[start] {
            continue;
        }
        let color: Rgb = data[3 * start..3 * start + 3].try_into().unwrap();
        if color == background {
            continue;
        }
        let Some(class_id) = cmap.class_of(color) else {
            continue;
        };

        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut area = 0usize;
        visited[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            area += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            let mut visit = |j: usize| {
                if !visited[j] && data[3 * j..3 * j + 3] == color {
                    visited[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }

        let score = (area as f64 / area_scale).min(1.0).clamp(0.5, 1.0);
        out.push(Detection::new(
            BoundingBox::new(x0 as f64, y0 as f64, (x1 + 1) as f64, (y1 + 1) as f64),
            class_id,
            score,
        ));
    }
    out.sort_by(canonical_order);
    out
}

/// [`synthetic_detect`] behind the [`Detector`] trait.
#[derive(Debug, Clone)]
pub struct SyntheticDetector {
    pub cmap: ColorClassMap,
    pub area_scale: f64,
}

impl SyntheticDetector {
    pub fn new(cmap: ColorClassMap) -> Self {
        Self {
            cmap,
            area_scale: DEFAULT_AREA_SCALE,
        }
    }
}

impl Detector for SyntheticDetector {
    fn detect(&self, image: &RasterImage) -> Result<Vec<Detection>> {
        Ok(synthetic_detect(image, &self.cmap, self.area_scale))
    }
}

/// Models a fixed-input-size detector: images whose longer side exceeds
/// `max_side` are shrunk (aspect preserved, nearest neighbour) before
/// detection and the boxes scaled back.
#[derive(Debug, Clone)]
pub struct DownscalingDetector<D> {
    pub inner: D,
    pub max_side: usize,
}

impl<D> DownscalingDetector<D> {
    pub fn new(inner: D, max_side: usize) -> Self {
        Self { inner, max_side }
    }
}

/// Target size for shrinking `w x h` so the longer side is `max_side`.
pub fn downscaled_dims(w: usize, h: usize, max_side: usize) -> (usize, usize) {
    let long = w.max(h);
    if long <= max_side {
        return (w, h);
    }
    let s = max_side as f64 / long as f64;
    let scale = |v: usize| ((v as f64 * s).round() as usize).clamp(1, max_side);
    (scale(w), scale(h))
}

impl<D: Detector> Detector for DownscalingDetector<D> {
    fn detect(&self, image: &RasterImage) -> Result<Vec<Detection>> {
        if self.max_side == 0 {
            return Err(Error::InvalidConfig("max_side must be positive".into()));
        }
        let (w, h) = (image.width(), image.height());
        let (dw, dh) = downscaled_dims(w, h, self.max_side);
        if (dw, dh) == (w, h) {
            return self.inner.detect(image);
        }
        let small = image.resize_nearest(dw, dh)?;
        let (sx, sy) = (w as f64 / dw as f64, h as f64 / dh as f64);
        let (fw, fh) = (w as f64, h as f64);
        Ok(self
            .inner
            .detect(&small)?
            .into_iter()
            .map(|d| {
                let b = d.bbox.scale(sx, sy);
                let bbox = BoundingBox::new(
                    b.x1.clamp(0.0, fw),
                    b.y1.clamp(0.0, fh),
                    b.x2.clamp(0.0, fw),
                    b.y2.clamp(0.0, fh),
                );
                Detection { bbox, ..d }
            })
            .collect())
    }

    fn concurrent(&self) -> bool {
        self.inner.concurrent()
    }
}
