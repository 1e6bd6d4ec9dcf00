//! JPEG compression simulation and quantization-table handling.
//!
//! Compression is modelled as the lossy part of baseline JPEG only: level
//! shift, 8x8 DCT, quantization with a [`QuantTable`], dequantization,
//! inverse DCT. Entropy coding is lossless and therefore skipped.

pub mod dct;
pub mod dqt;
pub mod tables;

pub use dqt::{encode_dqt_segment, minimal_jpeg, parse_dqt, parse_dqt_detailed, ParsedTable};
pub use tables::{
    nearest_standard_qf, qf_to_table, CompressionClassRegistry, QuantTable, TableOrigin,
    STD_LUMINANCE, TRAINING_QFS,
};

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Quantizes and reconstructs every 8x8 block of `img`.
///
/// Quantized coefficients and output samples are rounded to the nearest
/// integer (ties to even). Output samples are clamped to `[0, 255]`, like a
/// baseline decoder would emit them.
pub fn compress(img: &GrayImage, table: &QuantTable) -> Result<GrayImage> {
    let (w, h) = img.dims();
    if w % 8 != 0 || h % 8 != 0 {
        return Err(Error::invalid(format!(
            "{w}x{h} image is not a whole number of 8x8 blocks"
        )));
    }
    let q: [f64; 64] = table.values().map(f64::from);
    let mut out = img.clone();
    let mut block = [0.0; 64];
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            for y in 0..8 {
                for x in 0..8 {
                    block[y * 8 + x] = img.get(bx + x, by + y) - 128.0;
                }
            }
            let mut coeffs = dct::forward(&block);
            for (c, &step) in coeffs.iter_mut().zip(q.iter()) {
                *c = round_nearest(*c / step) * step;
            }
            let rec = dct::inverse(&coeffs);
            for y in 0..8 {
                for x in 0..8 {
                    out.set(bx + x, by + y, round_nearest(rec[y * 8 + x] + 128.0).clamp(0.0, 255.0));
                }
            }
        }
    }
    Ok(out)
}

/// Round to nearest, ties to even, which is what the SIMD float paths of
/// libjpeg-turbo do. Values within `TIE_SNAP` of a half-integer count as
/// exact ties: the DCT of integer samples often lands on one and float
/// error must not pick the side.
#[inline]
fn round_nearest(v: f64) -> f64 {
    let twice = (2.0 * v).round();
    if (2.0 * v - twice).abs() < 2.0 * TIE_SNAP {
        (twice / 2.0).round_ties_even()
    } else {
        v.round_ties_even()
    }
}

const TIE_SNAP: f64 = 1e-9;

/// Center-crops to whole blocks, then compresses.
pub fn compress_cropped(img: &GrayImage, table: &QuantTable) -> Result<GrayImage> {
    compress(&img.center_crop_to_blocks()?, table)
}

/// `compress(img, table) - img`.
pub fn compression_noise(img: &GrayImage, table: &QuantTable) -> Result<GrayImage> {
    compress(img, table)?.sub(img)
}
