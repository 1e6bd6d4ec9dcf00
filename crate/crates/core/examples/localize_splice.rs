//! Localizes the pasted region of a generated splice and writes the
//! heatmap. Uses the high-pass residual unless a model file is given.
//!
//! cargo run --release --example localize_splice -- [model.cprt] [out_dir]

use std::path::PathBuf;

use comprint::evaluation::{detection_statistic, max_f1, GroundTruthMask};
use comprint::fingerprint::FingerprintModel;
use comprint::jpeg_sim::CompressionClassRegistry;
use comprint::localization::{self, colormap, ComprintProvider, FingerprintProvider, HighpassProvider, LocalizationConfig};
use comprint::synth;

fn main() -> comprint::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let model = args.first().filter(|a| a.ends_with(".cprt")).map(FingerprintModel::load).transpose()?;
    let out = PathBuf::from(args.iter().find(|a| !a.ends_with(".cprt")).map_or("splice_out", |s| s.as_str()));
    std::fs::create_dir_all(&out)?;

    let registry = CompressionClassRegistry::from_qfs(&[30, 90])?;
    let fixture = synth::fixture_set(1, 256, &registry, 42)?.remove(0);
    println!(
        "host {} with a {}x{} region from {} at ({}, {})",
        fixture.host_class, fixture.region.width, fixture.region.height, fixture.region_class, fixture.region.x, fixture.region.y
    );

    let provider: Box<dyn FingerprintProvider> = match &model {
        Some(m) => Box::new(ComprintProvider { model: m }),
        None => Box::new(HighpassProvider),
    };
    let config = LocalizationConfig::desk();
    let mask = GroundTruthMask::from_image(&fixture.mask);
    for (name, img) in [("spliced", &fixture.spliced), ("pristine", &fixture.pristine)] {
        let loc = localization::localize(img, &[provider.as_ref()], &config)?;
        let heat = loc.heatmap.field();
        let score = detection_statistic(heat.samples())?;
        if name == "spliced" {
            let best = max_f1(heat, &mask)?.expect("mask has both classes");
            println!("{name}: max-F1 {:.3} at t={:.3} ({}), score {score:.3}", best.f1, best.threshold, best.orientation);
        } else {
            println!("{name}: score {score:.3}");
        }
        img.save_png(out.join(format!("{name}.png")))?;
        colormap::save_rgb(&colormap::colorize(heat, 0.0, 1.0), out.join(format!("{name}_heatmap.png")))?;
    }
    println!("wrote images to {}", out.display());
    Ok(())
}
