//! 8-bit RGB raster carrier.

use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

/// Row-major interleaved RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidConfig(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        let data = color.repeat(width * height);
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidConfig(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != 3 * width * height {
            return Err(Error::DimMismatch(format!(
                "expected {} bytes for {width}x{height} RGB, got {}",
                3 * width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, c: Rgb) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&c);
    }

    /// Paints the half-open pixel rectangle `[x0, x1) x [y0, y1)`.
    pub fn fill_rect(&mut self, x0: usize, y0: usize, x1: usize, y1: usize, c: Rgb) {
        let x1 = x1.min(self.width);
        let y1 = y1.min(self.height);
        for y in y0..y1 {
            let row = 3 * y * self.width;
            for x in x0..x1 {
                self.data[row + 3 * x..row + 3 * x + 3].copy_from_slice(&c);
            }
        }
    }

    /// Pixel-exact crop of `[x, x + w) x [y, y + h)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::OutOfBounds(format!(
                "crop {w}x{h} at ({x}, {y}) exceeds {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(3 * w * h);
        for row in y..y + h {
            let start = 3 * (row * self.width + x);
            data.extend_from_slice(&self.data[start..start + 3 * w]);
        }
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }

    /// Nearest-neighbour resample with `src = floor(dst * src_extent / dst_extent)`.
    pub fn resize_nearest(&self, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::InvalidConfig(format!(
                "resize target must be positive, got {w}x{h}"
            )));
        }
        if w == self.width && h == self.height {
            return Ok(self.clone());
        }
        let xs: Vec<usize> = (0..w).map(|dx| dx * self.width / w).collect();
        let mut data = Vec::with_capacity(3 * w * h);
        for dy in 0..h {
            let sy = dy * self.height / h;
            for &sx in &xs {
                let i = 3 * (sy * self.width + sx);
                data.extend_from_slice(&self.data[i..i + 3]);
            }
        }
        Ok(Self {
            width: w,
            height: h,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_raw_checks_length() {
        assert!(RasterImage::from_raw(2, 2, vec![0; 11]).is_err());
        assert!(RasterImage::from_raw(2, 2, vec![0; 12]).is_ok());
        assert!(RasterImage::from_raw(0, 2, vec![]).is_err());
    }

    #[test]
    fn crop_bounds() {
        let img = RasterImage::filled(4, 3, [1, 2, 3]).unwrap();
        assert!(img.crop(2, 0, 3, 1).is_err());
        assert!(img.crop(0, 0, 0, 1).is_err());
        assert_eq!(img.crop(1, 1, 3, 2).unwrap().data().len(), 18);
    }

    #[test]
    fn resize_nearest_upsamples_blocks() {
        let mut img = RasterImage::filled(2, 1, [0, 0, 0]).unwrap();
        img.set_pixel(1, 0, [9, 9, 9]);
        let up = img.resize_nearest(4, 2).unwrap();
        assert_eq!(up.pixel(0, 1), [0, 0, 0]);
        assert_eq!(up.pixel(1, 0), [0, 0, 0]);
        assert_eq!(up.pixel(2, 0), [9, 9, 9]);
        assert_eq!(up.pixel(3, 1), [9, 9, 9]);
    }
}
