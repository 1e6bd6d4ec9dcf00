//! Writes a generated splice dataset to disk and evaluates it: per-image
//! max-F1, the mean and the fake-vs-pristine AUC.
//!
//! cargo run --release --example evaluate_fixtures -- [model.cprt]

use comprint::evaluation::evaluate_dataset;
use comprint::fingerprint::FingerprintModel;
use comprint::jpeg_sim::CompressionClassRegistry;
use comprint::localization::{ComprintProvider, FingerprintProvider, HighpassProvider, LocalizationConfig};
use comprint::synth;

fn main() -> comprint::Result<()> {
    let model = std::env::args().nth(1).map(FingerprintModel::load).transpose()?;
    let dir = std::env::temp_dir().join("comprint_fixtures");
    let (fake, masks, real) = (dir.join("fake"), dir.join("masks"), dir.join("real"));
    for d in [&fake, &masks, &real] {
        std::fs::create_dir_all(d)?;
    }
    let registry = CompressionClassRegistry::from_qfs(&[30, 90])?;
    for (i, f) in synth::fixture_set(12, 256, &registry, 5)?.iter().enumerate() {
        f.spliced.save_png(fake.join(format!("{i:02}.png")))?;
        f.mask.map(|v| 255.0 * v).save_png(masks.join(format!("{i:02}_mask.png")))?;
        f.pristine.save_png(real.join(format!("{i:02}.png")))?;
    }

    let provider: Box<dyn FingerprintProvider> = match &model {
        Some(m) => Box::new(ComprintProvider { model: m }),
        None => Box::new(HighpassProvider),
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let report = evaluate_dataset(&fake, &masks, Some(&real), &[provider.as_ref()], &LocalizationConfig::desk(), workers)?;
    print!("{}", report.to_table());
    std::fs::write(dir.join("report.txt"), report.to_text())?;
    println!("report written to {}", dir.join("report.txt").display());
    Ok(())
}
