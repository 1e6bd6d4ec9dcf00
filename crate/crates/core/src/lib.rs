pub mod cli;
pub mod error;
pub mod evaluation;
pub mod image;
pub mod jpeg_sim;
pub mod localization;
pub mod fingerprint;
pub mod nn;
pub mod synth;

pub use error::{Error, Result};
pub use image::GrayImage;
