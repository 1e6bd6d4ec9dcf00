//! Mean max-F1 of a trained extractor alone, the high-pass residual alone
//! and both fused, on generated splices.
//!
//! cargo run --release --example fuse_providers -- model.cprt

use comprint::evaluation::{max_f1, GroundTruthMask};
use comprint::fingerprint::FingerprintModel;
use comprint::jpeg_sim::CompressionClassRegistry;
use comprint::localization::{self, ComprintProvider, FingerprintProvider, HighpassProvider, LocalizationConfig};
use comprint::synth;

fn main() -> comprint::Result<()> {
    let path = std::env::args().nth(1).expect("usage: fuse_providers model.cprt");
    let model = FingerprintModel::load(path)?;
    let comprint = ComprintProvider { model: &model };
    let registry = CompressionClassRegistry::from_qfs(&[30, 90])?;
    let fixtures = synth::fixture_set(10, 256, &registry, 77)?;
    let config = LocalizationConfig::desk();
    let sets: [(&str, Vec<&dyn FingerprintProvider>); 3] = [
        ("comprint", vec![&comprint]),
        ("highpass", vec![&HighpassProvider]),
        ("fused", vec![&comprint, &HighpassProvider]),
    ];
    for (name, providers) in sets {
        let mut total = 0.0;
        for f in &fixtures {
            let loc = localization::localize(&f.spliced, &providers, &config)?;
            let best = max_f1(loc.heatmap.field(), &GroundTruthMask::from_image(&f.mask))?.expect("two-class mask");
            total += best.f1;
        }
        println!("{name:<9} mean max-F1 {:.3}", total / fixtures.len() as f64);
    }
    Ok(())
}
