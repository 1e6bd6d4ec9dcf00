//! The compression-fingerprint extractor: network definition, the two
//! training stages and inference on whole images.

mod model;
mod pairs;
mod train;

pub use model::{Architecture, FingerprintModel, Stage, INPUT_SCALE};
pub use pairs::{make_pair, PairLabel, PatchPair};
pub use train::{
    batch_softmax, denoiser_mse, fingerprint_distance, mann_whitney_less, pair_distance,
    pretrain_denoiser, pretrain_denoiser_with, separation_statistic, siamese_loss,
    siamese_loss_and_gradient, train_siamese, train_siamese_with, EpochSummary, PretrainReport,
    PretrainSchedule, SiameseReport, TrainingConfig, ValidationStats,
};

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Smallest image side accepted by [`extract`].
pub const MIN_EXTRACT_SIDE: usize = 48;

/// Runs a Siamese-trained model over a whole image. The output has the
/// image's dimensions; any size of at least 48x48 is accepted.
pub fn extract(model: &FingerprintModel, img: &GrayImage) -> Result<GrayImage> {
    if model.stage() != Stage::SiameseTrained {
        return Err(Error::State(format!(
            "extraction needs a siamese-trained model, got {}",
            model.stage()
        )));
    }
    extract_any_stage(model, img)
}

/// [`extract`] without the training-stage check.
pub fn extract_any_stage(model: &FingerprintModel, img: &GrayImage) -> Result<GrayImage> {
    let (w, h) = img.dims();
    if w < MIN_EXTRACT_SIDE || h < MIN_EXTRACT_SIDE {
        return Err(Error::invalid(format!(
            "image {w}x{h} is smaller than {MIN_EXTRACT_SIDE}x{MIN_EXTRACT_SIDE}"
        )));
    }
    let out = model.network().infer(&train::to_tensor(&[img]))?;
    if !out.all_finite() {
        return Err(Error::DegenerateInput("non-finite fingerprint".into()));
    }
    GrayImage::new(w, h, out.data().iter().map(|&v| v as f64).collect())
}
