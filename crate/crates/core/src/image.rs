//! Single-channel real-valued image container and its file I/O.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major 2-D field of real samples.
///
/// Used for luminance images (samples in `[0, 255]`) as well as for
/// fingerprints and residuals, which may take any finite value.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("empty image {width}x{height}")));
        }
        if samples.len() != width * height {
            return Err(Error::Shape(format!(
                "{} samples for a {width}x{height} image",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(GrayImage {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        GrayImage {
            width,
            height,
            samples: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        GrayImage {
            width,
            height,
            samples,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.samples[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.samples[y * self.width + x] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            samples: self.samples.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copies the `w`x`h` region whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<GrayImage> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::invalid(format!(
                "crop {w}x{h}+{x}+{y} outside {}x{} image",
                self.width, self.height
            )));
        }
        let mut samples = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            samples.extend_from_slice(&self.samples[start..start + w]);
        }
        Ok(GrayImage {
            width: w,
            height: h,
            samples,
        })
    }

    /// Largest centered crop whose sides are multiples of 8.
    pub fn center_crop_to_blocks(&self) -> Result<GrayImage> {
        let w = self.width / 8 * 8;
        let h = self.height / 8 * 8;
        if w == 0 || h == 0 {
            return Err(Error::invalid(format!(
                "{}x{} image is smaller than one 8x8 block",
                self.width, self.height
            )));
        }
        self.crop((self.width - w) / 2, (self.height - h) / 2, w, h)
    }

    /// Bilinear resampling with pixel centers aligned between source and target grids.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> GrayImage {
        assert!(width > 0 && height > 0, "empty target size");
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        GrayImage::from_fn(width, height, |x, y| {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
            let x0 = fx.floor() as usize;
            let y0 = fy.floor() as usize;
            let x1 = (x0 + 1).min(self.width - 1);
            let y1 = (y0 + 1).min(self.height - 1);
            let ax = fx - x0 as f64;
            let ay = fy - y0 as f64;
            let top = self.get(x0, y0) * (1.0 - ax) + self.get(x1, y0) * ax;
            let bottom = self.get(x0, y1) * (1.0 - ax) + self.get(x1, y1) * ax;
            top * (1.0 - ay) + bottom * ay
        })
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Elementwise difference `self - other`.
    pub fn sub(&self, other: &GrayImage) -> Result<GrayImage> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "{:?} minus {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(GrayImage {
            width: self.width,
            height: self.height,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Loads any PNG or JPEG file as 8-bit luminance using the BT.601 luma weights.
    pub fn load(path: impl AsRef<Path>) -> Result<GrayImage> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| Error::from(e).at_path(path))?;
        Ok(Self::from_dynamic(&img))
    }

    pub fn from_dynamic(img: &image::DynamicImage) -> GrayImage {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        let samples = rgb
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                (0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)).round()
            })
            .collect();
        GrayImage {
            width: w as usize,
            height: h as usize,
            samples,
        }
    }

    /// Loads an image and brings it to the training resolution.
    pub fn load_training(path: impl AsRef<Path>, side: usize) -> Result<GrayImage> {
        let img = Self::load(path)?;
        if img.dims() == (side, side) {
            Ok(img)
        } else {
            Ok(img.resize_bilinear(side, side).map(f64::round))
        }
    }

    /// Rounds and clamps to 8 bits.
    pub fn to_luma8(&self) -> image::GrayImage {
        let buf = self
            .samples
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        image::GrayImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer length matches dimensions")
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_luma8()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::from(e).at_path(path))
    }

    /// Writes a little-endian greyscale portable float map. Rows are stored
    /// bottom-to-top, as the format requires.
    pub fn write_pfm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::with_capacity(32 + self.samples.len() * 4);
        write!(out, "Pf\n{} {}\n-1.0\n", self.width, self.height)?;
        for row in (0..self.height).rev() {
            for &v in &self.samples[row * self.width..(row + 1) * self.width] {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        fs::write(path, out).map_err(|e| Error::from(e).at_path(path))
    }

    pub fn read_pfm(path: impl AsRef<Path>) -> Result<GrayImage> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
        Self::parse_pfm(&bytes).map_err(|e| e.at_path(path))
    }

    pub fn parse_pfm(bytes: &[u8]) -> Result<GrayImage> {
        let bad = |m: &str| Error::invalid(format!("PFM: {m}"));
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header"))?);
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        if fields[0] != "Pf" {
            return Err(bad("only greyscale 'Pf' maps are supported"));
        }
        let width: usize = fields[1].parse().map_err(|_| bad("width"))?;
        let height: usize = fields[2].parse().map_err(|_| bad("height"))?;
        let scale: f64 = fields[3].parse().map_err(|_| bad("scale"))?;
        let raster = bytes.get(pos..).ok_or_else(|| bad("missing raster"))?;
        if raster.len() != width * height * 4 {
            return Err(bad("raster size does not match header"));
        }
        let mut samples = vec![0.0; width * height];
        for (i, chunk) in raster.chunks_exact(4).enumerate() {
            let arr = [chunk[0], chunk[1], chunk[2], chunk[3]];
            let v = if scale < 0.0 {
                f32::from_le_bytes(arr)
            } else {
                f32::from_be_bytes(arr)
            };
            let (row, col) = (height - 1 - i / width, i % width);
            samples[row * width + col] = f64::from(v);
        }
        GrayImage::new(width, height, samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_samples() {
        assert!(GrayImage::new(2, 1, vec![0.0, f64::NAN]).is_err());
        assert!(GrayImage::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn center_crop_keeps_block_multiple() {
        let img = GrayImage::from_fn(21, 17, |x, y| (x + 100 * y) as f64);
        let c = img.center_crop_to_blocks().unwrap();
        assert_eq!(c.dims(), (16, 16));
        assert_eq!(c.get(0, 0), img.get(2, 0));
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = GrayImage::from_fn(9, 7, |x, y| (x * 3 + y) as f64);
        assert_eq!(img.resize_bilinear(9, 7), img);
        let c = GrayImage::filled(40, 30, 77.0).resize_bilinear(13, 11);
        assert!(c.samples().iter().all(|&v| (v - 77.0).abs() < 1e-12));
    }

    #[test]
    fn pfm_roundtrip_is_exact_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pfm");
        let img = GrayImage::from_fn(5, 3, |x, y| x as f64 * 0.25 - y as f64 * 1.5);
        img.write_pfm(&p).unwrap();
        assert_eq!(GrayImage::read_pfm(&p).unwrap(), img);
    }

    #[test]
    fn bt601_luma() {
        let mut rgb = image::RgbImage::new(1, 1);
        rgb.put_pixel(0, 0, image::Rgb([200, 100, 50]));
        let g = GrayImage::from_dynamic(&image::DynamicImage::ImageRgb8(rgb));
        assert_eq!(g.get(0, 0), (0.299f64 * 200.0 + 0.587 * 100.0 + 0.114 * 50.0).round());
    }
}
