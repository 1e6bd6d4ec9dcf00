//! Trains the desk-scale fingerprint model on generated textures.
//!
//! cargo run --release --example train_desk -- [output.cprt]

use std::time::Instant;

use comprint::fingerprint::{self, TrainingConfig};
use comprint::synth;

fn main() -> comprint::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "desk.cprt".into());
    let config = TrainingConfig {
        seed: 7,
        ..TrainingConfig::desk()
    };
    let registry = config.resolve_registry()?;
    let train = synth::textures(50, 200, 200, 1);
    let validation = synth::textures(10, 200, 200, 1_000);

    let t = Instant::now();
    let (pre, report) = fingerprint::pretrain_denoiser_with(&train, &registry, &config, |e| {
        println!("pretrain epoch {} mse {:.3e}", e.epoch, e.mean_loss)
    })?;
    let (mse, zero) = fingerprint::denoiser_mse(&pre, &validation, &registry, 48, 256, 3)?;
    println!(
        "pretrained in {:.0?}: last batch mse {:.3e}, validation mse {mse:.3e} vs zero predictor {zero:.3e}",
        t.elapsed(),
        report.batch_loss.last().copied().unwrap_or(f64::NAN)
    );

    let t = Instant::now();
    let (model, report) =
        fingerprint::train_siamese_with(&pre, &train, &validation, &registry, &config, |e| {
            println!(
                "siamese epoch {} loss {:.4} separation {:.4}",
                e.epoch,
                e.mean_loss,
                e.separation.unwrap_or(f64::NAN)
            )
        })?;
    println!("siamese training took {:.0?}", t.elapsed());
    if let Some(v) = &report.validation {
        println!(
            "validation: separation {:.4}, Mann-Whitney p {:.2e} ({} same, {} different pairs)",
            v.separation,
            v.mann_whitney_p,
            v.same.len(),
            v.different.len()
        );
    }
    model.save(&out)?;
    println!("wrote {out}");
    Ok(())
}
