//! Simulated JPEG compression of a generated texture at several quality
//! factors: PSNR and compression-noise energy.
//!
//! cargo run --example compress_blocks

use comprint::jpeg_sim::{self, qf_to_table};
use comprint::synth;

fn main() -> comprint::Result<()> {
    let img = &synth::textures(1, 128, 128, 3)[0];
    println!("{}", qf_to_table(50)?);
    for qf in [10, 30, 50, 75, 90, 100] {
        let table = qf_to_table(qf)?;
        let noise = jpeg_sim::compression_noise(img, &table)?;
        let mse = noise.samples().iter().map(|v| v * v).sum::<f64>() / noise.samples().len() as f64;
        let psnr = if mse > 0.0 { 10.0 * (255.0f64 * 255.0 / mse).log10() } else { f64::INFINITY };
        let twice = jpeg_sim::compress(&jpeg_sim::compress(img, &table)?, &table)?;
        let once = jpeg_sim::compress(img, &table)?;
        let drift = once
            .samples()
            .iter()
            .zip(twice.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("QF {qf:>3}: PSNR {psnr:6.2} dB, noise rms {:.3}, recompression drift {drift}", mse.sqrt());
    }
    Ok(())
}
