//! Synthetic textures and splice fixtures standing in for real photographs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::jpeg_sim::{self, CompressionClassRegistry};

/// Random texture with smooth shading, gratings, sharp-edged shapes, blurred
/// noise and sensor-like grain. Samples are integers in `[0, 255]`.
pub fn texture<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R) -> GrayImage {
    let (wf, hf) = (width as f64, height as f64);
    let mut img = vec![128.0 + rng.random_range(-30.0..30.0); width * height];

    // low-frequency shading
    for _ in 0..3 {
        let (fx, fy) = (rng.random_range(0.0..1.5) / wf, rng.random_range(0.0..1.5) / hf);
        let (amp, phase) = (rng.random_range(5.0..30.0), rng.random_range(0.0..std::f64::consts::TAU));
        for y in 0..height {
            for x in 0..width {
                img[y * width + x] +=
                    amp * (std::f64::consts::TAU * (fx * x as f64 + fy * y as f64) + phase).cos();
            }
        }
    }

    // oriented gratings
    for _ in 0..rng.random_range(1..4) {
        let freq = rng.random_range(0.03..0.4);
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let (amp, phase) = (rng.random_range(3.0..20.0), rng.random_range(0.0..std::f64::consts::TAU));
        let (c, s) = (theta.cos() * freq, theta.sin() * freq);
        for y in 0..height {
            for x in 0..width {
                img[y * width + x] +=
                    amp * (std::f64::consts::TAU * (c * x as f64 + s * y as f64) + phase).sin();
            }
        }
    }

    // flat shapes with sharp edges
    for _ in 0..rng.random_range(4..14) {
        let offset = rng.random_range(-45.0..45.0);
        let cx = rng.random_range(0.0..wf);
        let cy = rng.random_range(0.0..hf);
        let r = rng.random_range(4.0..wf.min(hf) / 4.0);
        let disk = rng.random_bool(0.5);
        for y in 0..height {
            for x in 0..width {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let inside = if disk {
                    dx * dx + dy * dy < r * r
                } else {
                    dx.abs() < r && dy.abs() < 0.6 * r
                };
                if inside {
                    img[y * width + x] += offset;
                }
            }
        }
    }

    // blurred noise at one random scale
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let white: Vec<f64> = (0..width * height).map(|_| normal.sample(rng)).collect();
    let radius = rng.random_range(1..4usize);
    let blurred = box_blur(&white, width, height, radius);
    let amp = rng.random_range(4.0..16.0) * (2 * radius + 1) as f64;
    for (v, b) in img.iter_mut().zip(&blurred) {
        *v += amp * b;
    }

    // grain
    let grain = Normal::new(0.0, rng.random_range(1.5..6.0)).expect("positive sigma");
    for v in &mut img {
        *v = (*v + grain.sample(rng)).round().clamp(0.0, 255.0);
    }
    GrayImage::new(width, height, img).expect("finite samples")
}

fn box_blur(src: &[f64], width: usize, height: usize, r: usize) -> Vec<f64> {
    let pass = |src: &[f64], horizontal: bool| {
        let mut out = vec![0.0; src.len()];
        for y in 0..height {
            for x in 0..width {
                let mut sum = 0.0;
                let mut n = 0.0;
                for d in -(r as isize)..=r as isize {
                    let (xx, yy) = if horizontal {
                        (x as isize + d, y as isize)
                    } else {
                        (x as isize, y as isize + d)
                    };
                    if xx >= 0 && yy >= 0 && (xx as usize) < width && (yy as usize) < height {
                        sum += src[yy as usize * width + xx as usize];
                        n += 1.0;
                    }
                }
                out[y * width + x] = sum / n;
            }
        }
        out
    };
    pass(&pass(src, true), false)
}

/// Axis-aligned rectangle in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

/// A pristine image, its spliced counterpart and the splice mask.
#[derive(Clone, Debug, PartialEq)]
pub struct SpliceFixture {
    /// The source compressed once with the host class.
    pub pristine: GrayImage,
    /// `pristine` with `region` replaced by the same content compressed with
    /// the region class.
    pub spliced: GrayImage,
    /// 1 inside the pasted rectangle, 0 elsewhere.
    pub mask: GrayImage,
    pub region: Rect,
    pub host_class: String,
    pub region_class: String,
}

/// Draws a rectangle covering between `min_frac` and `max_frac` of the image.
pub fn random_rect<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    min_frac: f64,
    max_frac: f64,
    rng: &mut R,
) -> Rect {
    let frac = rng.random_range(min_frac..=max_frac);
    let aspect: f64 = rng.random_range(0.5f64..2.0);
    let area = frac * (width * height) as f64;
    let w = ((area * aspect).sqrt().round() as usize).clamp(1, width);
    let h = ((area / w as f64).round() as usize).clamp(1, height);
    Rect {
        x: rng.random_range(0..=width - w),
        y: rng.random_range(0..=height - h),
        width: w,
        height: h,
    }
}

/// Builds a splice fixture from `source`, which must have sides that are
/// multiples of 8. Host and region classes are distinct uniform draws.
pub fn splice_fixture<R: Rng + ?Sized>(
    source: &GrayImage,
    registry: &CompressionClassRegistry,
    rng: &mut R,
) -> Result<SpliceFixture> {
    if registry.len() < 2 {
        return Err(Error::invalid("splicing needs at least two compression classes"));
    }
    let tables = registry.tables();
    let host = rng.random_range(0..tables.len());
    let mut other = rng.random_range(0..tables.len() - 1);
    if other >= host {
        other += 1;
    }
    let pristine = jpeg_sim::compress(source, &tables[host])?;
    let alt = jpeg_sim::compress(source, &tables[other])?;
    let (w, h) = source.dims();
    let region = random_rect(w, h, 0.1, 0.4, rng);
    let mut spliced = pristine.clone();
    let mut mask = GrayImage::filled(w, h, 0.0);
    for y in region.y..region.y + region.height {
        for x in region.x..region.x + region.width {
            spliced.set(x, y, alt.get(x, y));
            mask.set(x, y, 1.0);
        }
    }
    Ok(SpliceFixture {
        pristine,
        spliced,
        mask,
        region,
        host_class: tables[host].label().to_string(),
        region_class: tables[other].label().to_string(),
    })
}

/// `count` textures from one seed; texture `i` depends only on `(seed, i)`.
pub fn textures(count: usize, width: usize, height: usize, seed: u64) -> Vec<GrayImage> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            texture(width, height, &mut rng)
        })
        .collect()
}

/// `count` splice fixtures on `side`x`side` textures; fixture `i` depends
/// only on `(seed, i)`.
pub fn fixture_set(
    count: usize,
    side: usize,
    registry: &CompressionClassRegistry,
    seed: u64,
) -> Result<Vec<SpliceFixture>> {
    if side == 0 || side % 8 != 0 {
        return Err(Error::invalid(format!("fixture side {side} is not a positive multiple of 8")));
    }
    textures(count, side, side, seed)
        .iter()
        .enumerate()
        .map(|(i, src)| {
            let mut rng = ChaCha8Rng::seed_from_u64(!seed ^ (i as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
            splice_fixture(src, registry, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn texture_is_integral_and_in_range() {
        let t = texture(64, 40, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(t.dims(), (64, 40));
        assert!(t.samples().iter().all(|&v| v == v.round() && (0.0..=255.0).contains(&v)));
        let (lo, hi) = t.min_max();
        assert!(hi - lo > 20.0);
    }

    #[test]
    fn textures_are_reproducible() {
        assert_eq!(textures(2, 32, 32, 5), textures(2, 32, 32, 5));
        assert_ne!(textures(1, 32, 32, 5), textures(1, 32, 32, 6));
    }

    #[test]
    fn mask_is_exactly_the_rectangle() {
        let reg = CompressionClassRegistry::from_qfs(&[30, 90]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = texture(96, 80, &mut rng);
        let f = splice_fixture(&src, &reg, &mut rng).unwrap();
        assert_ne!(f.host_class, f.region_class);
        let frac = f.region.area() as f64 / (96.0 * 80.0);
        assert!((0.09..=0.41).contains(&frac), "{frac}");
        for y in 0..80 {
            for x in 0..96 {
                let inside = f.region.contains(x, y);
                assert_eq!(f.mask.get(x, y), if inside { 1.0 } else { 0.0 });
                if !inside {
                    assert_eq!(f.spliced.get(x, y), f.pristine.get(x, y));
                }
            }
        }
    }
}
