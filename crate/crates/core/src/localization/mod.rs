//! From fingerprints to forgery heatmaps: normalization, co-occurrence
//! features, two-class EM segmentation and fusion by feature stacking.

pub mod colormap;
mod em;
mod features;
mod heatmap;

pub use em::{
    em_segment, field_matrix, fit_gmm2, fit_gmm2_best, pca_project, EmInit, EmModel, EmOptions,
};
pub use features::{
    cooccurrence_features, cooccurrence_histograms, normalize_fingerprint, orbit_table,
    quantize_symbols, stack_features, CoocParams, FeatureComponent, FeatureField, ORBITS_T1,
    PATTERN_LEN,
};
pub use heatmap::{posterior_to_heatmap, Heatmap, WindowGrid};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};
use crate::fingerprint::{self, FingerprintModel};
use crate::image::GrayImage;

/// Anything that turns an image into a same-size fingerprint field.
pub trait FingerprintProvider: Sync {
    fn name(&self) -> &str;
    fn fingerprint(&self, img: &GrayImage) -> Result<GrayImage>;
}

/// Fingerprints from a trained extraction network.
pub struct ComprintProvider<'a> {
    pub model: &'a FingerprintModel,
}

impl FingerprintProvider for ComprintProvider<'_> {
    fn name(&self) -> &str {
        "comprint"
    }

    fn fingerprint(&self, img: &GrayImage) -> Result<GrayImage> {
        fingerprint::extract(self.model, img)
    }
}

/// Third-order horizontal derivative residual.
pub struct HighpassProvider;

impl FingerprintProvider for HighpassProvider {
    fn name(&self) -> &str {
        "highpass"
    }

    fn fingerprint(&self, img: &GrayImage) -> Result<GrayImage> {
        highpass_residual(img)
    }
}

/// `r(x, y) = I(x+1, y) - 3 I(x, y) + 3 I(x-1, y) - I(x-2, y)` along each
/// row; zero where the stencil leaves the image.
pub fn highpass_residual(img: &GrayImage) -> Result<GrayImage> {
    let (w, h) = img.dims();
    if w < 4 || h < 4 {
        return Err(Error::invalid(format!("image {w}x{h} is smaller than 4x4")));
    }
    Ok(GrayImage::from_fn(w, h, |x, y| {
        if x < 2 || x + 1 >= w {
            0.0
        } else {
            img.get(x + 1, y) - 3.0 * img.get(x, y) + 3.0 * img.get(x - 1, y) - img.get(x - 2, y)
        }
    }))
}

/// Every tunable of the localization stages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizationConfig {
    pub features: CoocParams,
    pub em: EmOptions,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        LocalizationConfig {
            features: CoocParams::default(),
            em: EmOptions::default(),
        }
    }
}

impl LocalizationConfig {
    /// Smaller windows for images of a few hundred pixels. With only a
    /// few hundred windows the mixture is fit in four principal components
    /// with a heavy ridge, so pristine images do not split into confident
    /// content clusters.
    pub fn desk() -> Self {
        LocalizationConfig {
            features: CoocParams {
                window: 32,
                stride: 8,
                ..CoocParams::default()
            },
            em: EmOptions {
                pca_dims: 4,
                regularization: 0.1,
                ..EmOptions::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.em.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
        Self::from_toml(&text).map_err(|e| e.at_path(path))
    }
}

/// Everything [`localize`] computed on the way to the heatmap.
#[derive(Clone, Debug)]
pub struct Localization {
    pub heatmap: Heatmap,
    pub fingerprints: Vec<(String, GrayImage)>,
    pub features: FeatureField,
    pub model: EmModel,
    /// Posterior of the minority component per window.
    pub cell_scores: Vec<f64>,
}

/// Fingerprints, features, EM and heatmap for one image. With several
/// providers their feature fields are stacked before segmentation.
pub fn localize(
    img: &GrayImage,
    providers: &[&dyn FingerprintProvider],
    config: &LocalizationConfig,
) -> Result<Localization> {
    if providers.is_empty() {
        return Err(Error::invalid("localization needs at least one fingerprint provider"));
    }
    config.validate()?;
    let mut fingerprints = Vec::with_capacity(providers.len());
    let mut fields = Vec::with_capacity(providers.len());
    for p in providers {
        let fp = p.fingerprint(img).stage("fingerprint")?;
        let norm = normalize_fingerprint(&fp).stage("normalize")?;
        fields.push(cooccurrence_features(&norm, &config.features, p.name()).stage("features")?);
        fingerprints.push((p.name().to_string(), fp));
    }
    let features = stack_features(&fields).stage("fusion")?;
    let (model, post0) = em_segment(&features, &config.em).stage("segmentation")?;
    let cell_scores: Vec<f64> = if model.minority() == 0 {
        post0
    } else {
        post0.into_iter().map(|p| 1.0 - p).collect()
    };
    let grid = WindowGrid {
        rows: features.rows(),
        cols: features.cols(),
        window: features.window(),
        stride: features.stride(),
    };
    let field = posterior_to_heatmap(&cell_scores, grid, img.width(), img.height()).stage("heatmap")?;
    Ok(Localization {
        heatmap: Heatmap::new(field, features.provenance_names()),
        fingerprints,
        features,
        model,
        cell_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn highpass_annihilates_quadratics() {
        let ramp = GrayImage::from_fn(10, 6, |x, y| 3.0 * x as f64 + y as f64);
        let quad = GrayImage::from_fn(10, 6, |x, y| 0.5 * (x * x) as f64 - 2.0 * x as f64 + (y * y) as f64);
        for img in [ramp, quad] {
            let r = highpass_residual(&img).unwrap();
            assert!(r.samples().iter().all(|v| v.abs() < 1e-9));
        }
        let row = GrayImage::new(5, 4, (0..20).map(|i| ((i * 7919) % 31) as f64).collect()).unwrap();
        let r = highpass_residual(&row).unwrap();
        let g = |x: usize| row.get(x, 2);
        assert_eq!(r.get(3, 2), g(4) - 3.0 * g(3) + 3.0 * g(2) - g(1));
        assert_eq!(r.get(1, 2), 0.0);
        assert_eq!(r.get(4, 2), 0.0);
        assert!(highpass_residual(&GrayImage::filled(3, 8, 0.0)).is_err());
    }

    #[test]
    fn config_roundtrip_and_overrides() {
        let c = LocalizationConfig::desk();
        assert_eq!(LocalizationConfig::from_toml(&c.to_toml()).unwrap(), c);
        let partial = LocalizationConfig::from_toml("[features]\nwindow = 64\n").unwrap();
        assert_eq!(partial.features.window, 64);
        assert_eq!(partial.features.stride, 8);
        assert!(LocalizationConfig::from_toml("[features]\nwindw = 64\n").is_err());
    }

    #[test]
    fn duplicated_provider_gives_the_same_map() {
        let labels = ["QF30".to_string(), "QF90".to_string()];
        let registry = crate::jpeg_sim::CompressionClassRegistry::from_labels(&labels, None).unwrap();
        let fx = crate::synth::fixture_set(1, 128, &registry, 8).unwrap().remove(0);
        let config = LocalizationConfig::desk();
        let one = localize(&fx.spliced, &[&HighpassProvider], &config).unwrap();
        let two = localize(&fx.spliced, &[&HighpassProvider, &HighpassProvider], &config).unwrap();
        assert_eq!(two.heatmap.provenance().len(), 2);
        assert_eq!(two.features.dim(), 2 * one.features.dim());
        let (a, b) = (one.heatmap.field().samples(), two.heatmap.field().samples());
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(a), mean(b));
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
        let corr = cov / (var(a, ma) * var(b, mb)).sqrt();
        assert!(corr >= 0.99, "correlation {corr}");
    }

    #[test]
    fn stage_names_are_attached() {
        let flat = GrayImage::filled(64, 64, 9.0);
        let err = localize(&flat, &[&HighpassProvider], &LocalizationConfig::desk()).unwrap_err();
        assert!(err.to_string().starts_with("normalize:"), "{err}");
    }
}
