//! File formats: binary PPM (P6, maxval 255), canonical JSON, and the
//! annotation / detection / timing schemas.
//!
//! Canonical JSON means object keys sorted, shortest round-trip float
//! formatting, two-space indentation and a trailing newline, so identical
//! values always serialize to identical bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Detection, GroundTruthBox};
use crate::image::RasterImage;
use crate::numerics::Tensor3;
use crate::pipeline::{Mode, RunResult};

pub fn encode_ppm(image: &RasterImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.data());
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RasterImage> {
    let err = |offset: usize, message: String| Error::Ppm { offset, message };
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(err(0, format!("expected magic \"P6\", found {found:?}")));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (k, name) in ["width", "height", "maxval"].iter().enumerate() {
        // whitespace and comments before each field
        let ws_start = pos;
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while !matches!(bytes.get(pos), None | Some(b'\n') | Some(b'\r')) {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        if pos == ws_start {
            return Err(err(pos, format!("expected whitespace before {name}")));
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(err(pos, format!("expected decimal {name}")));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap();
        fields[k] = text
            .parse()
            .map_err(|_| err(start, format!("{name} {text} out of range")))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(err(2, format!("zero dimension {width}x{height}")));
    }
    if maxval != 255 {
        return Err(err(pos, format!("unsupported maxval {maxval}, only 255")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(err(pos, "expected one whitespace byte after maxval".into())),
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or_else(|| err(2, "image dimensions overflow".into()))?;
    let data = &bytes[pos..];
    if data.len() < need {
        return Err(err(
            bytes.len(),
            format!(
                "truncated pixel data: need {need} bytes, have {}",
                data.len()
            ),
        ));
    }
    if data.len() > need {
        return Err(err(
            pos + need,
            format!("{} trailing bytes after pixel data", data.len() - need),
        ));
    }
    RasterImage::from_raw(width, height, data.to_vec())
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}

pub fn write_ppm(image: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(image)).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor3> {
    let path = path.as_ref();
    Tensor3::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_tensor(t: &Tensor3, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, t.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json::Value keeps object keys in a BTreeMap
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_canonical_json(value)?).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRef {
    pub path: String,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedObject {
    pub class: u32,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationFile {
    pub image: ImageRef,
    pub objects: Vec<AnnotatedObject>,
}

fn check_bbox(kind: &'static str, i: usize, bbox: &[f64; 4], image: &ImageRef) -> Result<()> {
    let b = BoundingBox::from(*bbox);
    let fail = |message: String| Error::Format { kind, message };
    b.validate().map_err(|e| fail(format!("object {i}: {e}")))?;
    if b.x1 < 0.0 || b.y1 < 0.0 || b.x2 > image.width as f64 || b.y2 > image.height as f64 {
        return Err(fail(format!(
            "object {i}: bbox {bbox:?} outside {}x{} image",
            image.width, image.height
        )));
    }
    Ok(())
}

impl AnnotationFile {
    pub fn new(image: ImageRef, gts: &[GroundTruthBox]) -> Self {
        let objects = gts
            .iter()
            .map(|g| AnnotatedObject {
                class: g.class_id,
                bbox: g.bbox.to_array(),
            })
            .collect();
        Self { image, objects }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, o) in self.objects.iter().enumerate() {
            check_bbox("annotation", i, &o.bbox, &self.image)?;
        }
        Ok(())
    }

    pub fn ground_truths(&self) -> Vec<GroundTruthBox> {
        self.objects
            .iter()
            .map(|o| GroundTruthBox::new(o.bbox.into(), o.class))
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let a: Self = read_json(path)?;
        a.validate()?;
        Ok(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectedObject {
    pub class: u32,
    pub bbox: [f64; 4],
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionMeta {
    pub mode: Mode,
    pub tile_size: usize,
    pub overlap: f64,
    pub nms_iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionFile {
    pub image: ImageRef,
    pub objects: Vec<DetectedObject>,
    pub meta: DetectionMeta,
}

impl DetectionFile {
    pub fn new(image: ImageRef, dets: &[Detection], meta: DetectionMeta) -> Self {
        let objects = dets
            .iter()
            .map(|d| DetectedObject {
                class: d.class_id,
                bbox: d.bbox.to_array(),
                score: d.score,
            })
            .collect();
        Self {
            image,
            objects,
            meta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, o) in self.objects.iter().enumerate() {
            check_bbox("detection", i, &o.bbox, &self.image)?;
            if !(0.0..=1.0).contains(&o.score) {
                return Err(Error::Format {
                    kind: "detection",
                    message: format!("object {i}: score {} outside [0, 1]", o.score),
                });
            }
        }
        Ok(())
    }

    pub fn detections(&self) -> Vec<Detection> {
        self.objects
            .iter()
            .map(|o| Detection::new(o.bbox.into(), o.class, o.score))
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let d: Self = read_json(path)?;
        d.validate()?;
        Ok(d)
    }
}

/// Timings of one run, kept apart from the detections so those stay
/// reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingFile {
    pub tile_ms: Vec<f64>,
    pub total_ms: f64,
}

impl From<&RunResult> for TimingFile {
    fn from(r: &RunResult) -> Self {
        Self {
            tile_ms: r.tile_ms.clone(),
            total_ms: r.total_ms,
        }
    }
}
