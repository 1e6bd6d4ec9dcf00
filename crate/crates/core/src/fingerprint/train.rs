use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Architecture, FingerprintModel, Stage, INPUT_SCALE};
use super::pairs::{make_pair, PairLabel, PatchPair};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::jpeg_sim::{self, CompressionClassRegistry};
use crate::nn::{AdamConfig, AdamState, Mode, Network, Tensor4};

/// Length of the artifact-residual pretraining stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainSchedule {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub patches_per_batch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub architecture: Architecture,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub pairs_per_batch: usize,
    pub crop: usize,
    /// Probability that the second patch of a pair shares the first one's class.
    pub same_probability: f64,
    /// Compression class labels, e.g. `QF30`.
    pub registry: Vec<String>,
    /// Optional table file providing non-standard classes named in `registry`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_file: Option<PathBuf>,
    pub adam: AdamConfig,
    pub seed: u64,
    pub pretrain: PretrainSchedule,
    /// Pairs drawn from the validation images to score separation.
    pub validation_pairs: usize,
}

impl TrainingConfig {
    /// Full-size schedule: d=20, 50 epochs of 4000 batches of 200 pairs over
    /// the ten standard quality factors.
    pub fn full() -> Self {
        TrainingConfig {
            architecture: Architecture::FULL,
            epochs: 50,
            batches_per_epoch: 4000,
            pairs_per_batch: 200,
            crop: 48,
            same_probability: 0.5,
            registry: CompressionClassRegistry::standard().labels(),
            table_file: None,
            adam: AdamConfig::default(),
            seed: 0,
            pretrain: PretrainSchedule {
                epochs: 5,
                batches_per_epoch: 4000,
                patches_per_batch: 200,
            },
            validation_pairs: 400,
        }
    }

    /// Small schedule that trains in minutes on one CPU core.
    pub fn desk() -> Self {
        TrainingConfig {
            architecture: Architecture::DESK,
            epochs: 10,
            batches_per_epoch: 200,
            pairs_per_batch: 32,
            registry: vec!["QF30".into(), "QF90".into()],
            pretrain: PretrainSchedule {
                epochs: 1,
                batches_per_epoch: 500,
                patches_per_batch: 32,
            },
            validation_pairs: 200,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        if self.crop == 0 || self.crop % 8 != 0 {
            return Err(Error::Config(format!("crop {} must be a positive multiple of 8", self.crop)));
        }
        if self.pairs_per_batch == 0 || self.pretrain.patches_per_batch < 2 {
            return Err(Error::Config(
                "batches need at least one pair and two pretraining patches".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.same_probability) {
            return Err(Error::Config("same_probability must be in [0, 1]".into()));
        }
        if self.adam.lr <= 0.0 || self.adam.eps <= 0.0 {
            return Err(Error::Config("ADAM lr and eps must be positive".into()));
        }
        Ok(())
    }

    /// Resolves the class labels, reading `table_file` if one is set.
    pub fn resolve_registry(&self) -> Result<CompressionClassRegistry> {
        let extra = match &self.table_file {
            Some(path) => Some(CompressionClassRegistry::with_photoshop_file(path)?),
            None => None,
        };
        CompressionClassRegistry::from_labels(&self.registry, extra.as_ref())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainReport {
    /// Mean batch MSE per epoch.
    pub epoch_loss: Vec<f64>,
    pub batch_loss: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SiameseReport {
    pub epoch_loss: Vec<f64>,
    pub batch_loss: Vec<f64>,
    /// Validation separation after each epoch.
    pub separation_trace: Vec<f64>,
    /// Batches redrawn because they held no same-history pair.
    pub resampled_batches: usize,
    pub validation: Option<ValidationStats>,
}

/// Distances of held-out pairs under the final model.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationStats {
    pub same: Vec<f64>,
    pub different: Vec<f64>,
    /// Mean different-history distance minus mean same-history distance.
    pub separation: f64,
    /// One-sided Mann-Whitney p-value for "same-history distances are smaller".
    pub mann_whitney_p: f64,
}

/// Per-epoch progress callback payload.
#[derive(Clone, Debug)]
pub struct EpochSummary {
    pub stage: &'static str,
    pub epoch: usize,
    pub mean_loss: f64,
    pub separation: Option<f64>,
}

/// SplitMix64 finalizer; derives independent stream seeds.
pub(crate) fn sub_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_INIT: u64 = 1;
const STREAM_PRETRAIN: u64 = 2;
const STREAM_SIAMESE: u64 = 3;
const STREAM_VALIDATION: u64 = 4;

pub(crate) fn to_tensor(patches: &[&GrayImage]) -> Tensor4<f32> {
    let (w, h) = patches[0].dims();
    let mut data = Vec::with_capacity(patches.len() * w * h);
    for p in patches {
        data.extend(p.samples().iter().map(|&v| v as f32 / INPUT_SCALE));
    }
    Tensor4::from_vec([patches.len(), 1, h, w], data).expect("consistent patch sizes")
}

fn check_images(images: &[GrayImage], crop: usize) -> Result<()> {
    if images.is_empty() {
        return Err(Error::invalid("training needs at least one image"));
    }
    if let Some(img) = images.iter().find(|i| i.width() < crop || i.height() < crop) {
        return Err(Error::invalid(format!(
            "training image {}x{} smaller than the {crop}px crop",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// One compressed crop and its compression residual, for pretraining.
fn residual_sample(
    images: &[GrayImage],
    registry: &CompressionClassRegistry,
    crop: usize,
    seed: u64,
) -> Result<(GrayImage, GrayImage)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = &images[rng.random_range(0..images.len())];
    let x = rng.random_range(0..=img.width() - crop);
    let y = rng.random_range(0..=img.height() - crop);
    let clean = img.crop(x, y, crop, crop)?;
    let table = &registry.tables()[rng.random_range(0..registry.len())];
    let compressed = jpeg_sim::compress(&clean, table)?;
    let noise = compressed.sub(&clean)?;
    Ok((compressed, noise))
}

fn residual_batch(
    images: &[GrayImage],
    registry: &CompressionClassRegistry,
    crop: usize,
    seeds: &[u64],
) -> Result<(Tensor4<f32>, Tensor4<f32>)> {
    let samples = seeds
        .par_iter()
        .map(|&s| residual_sample(images, registry, crop, s))
        .collect::<Result<Vec<_>>>()?;
    let inputs: Vec<&GrayImage> = samples.iter().map(|s| &s.0).collect();
    let targets: Vec<&GrayImage> = samples.iter().map(|s| &s.1).collect();
    Ok((to_tensor(&inputs), to_tensor(&targets)))
}

fn mse(pred: &Tensor4<f32>, target: &Tensor4<f32>) -> f64 {
    let n = pred.data().len() as f64;
    pred.data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p as f64 - t as f64).powi(2))
        .sum::<f64>()
        / n
}

/// Trains a freshly initialized network to predict the compression residual
/// (compressed minus original) of compressed patches, with an MSE loss.
pub fn pretrain_denoiser(
    images: &[GrayImage],
    registry: &CompressionClassRegistry,
    config: &TrainingConfig,
) -> Result<(FingerprintModel, PretrainReport)> {
    pretrain_denoiser_with(images, registry, config, |_| {})
}

pub fn pretrain_denoiser_with(
    images: &[GrayImage],
    registry: &CompressionClassRegistry,
    config: &TrainingConfig,
    mut on_epoch: impl FnMut(&EpochSummary),
) -> Result<(FingerprintModel, PretrainReport)> {
    config.validate()?;
    check_images(images, config.crop)?;
    if registry.is_empty() {
        return Err(Error::invalid("empty compression registry"));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, STREAM_INIT, 0));
    let mut model = FingerprintModel::init(config.architecture, &mut init_rng)?;
    model.registry = registry.labels();
    let mut adam = AdamState::for_network(config.adam, &mut model.net);
    let sched = config.pretrain;
    let mut report = PretrainReport {
        epoch_loss: Vec::new(),
        batch_loss: Vec::new(),
    };
    let mut step = 0usize;
    for epoch in 0..sched.epochs {
        let mut total = 0.0;
        for _ in 0..sched.batches_per_epoch {
            let seeds: Vec<u64> = (0..sched.patches_per_batch)
                .map(|i| sub_seed(config.seed, STREAM_PRETRAIN, (step * sched.patches_per_batch + i) as u64))
                .collect();
            let (x, t) = residual_batch(images, registry, config.crop, &seeds)?;
            let y = model.net.forward(&x, Mode::Train)?;
            let loss = mse(&y, &t);
            if !loss.is_finite() {
                return Err(Error::TrainingDivergence { stage: "pretrain", step });
            }
            let scale = 2.0 / y.data().len() as f32;
            let dy_data = y
                .data()
                .iter()
                .zip(t.data())
                .map(|(&p, &q)| scale * (p - q))
                .collect();
            let dy = Tensor4::from_vec(y.dims(), dy_data)?;
            model.net.backward(&dy)?;
            adam.step_network(&mut model.net)?;
            if !model.net.all_finite() {
                return Err(Error::TrainingDivergence { stage: "pretrain", step });
            }
            report.batch_loss.push(loss);
            total += loss;
            step += 1;
        }
        let mean_loss = total / sched.batches_per_epoch.max(1) as f64;
        report.epoch_loss.push(mean_loss);
        on_epoch(&EpochSummary {
            stage: "pretrain",
            epoch,
            mean_loss,
            separation: None,
        });
    }
    model.stage = Stage::DenoiserPretrained;
    Ok((model, report))
}

/// Residual-prediction MSE of `model` on `count` fresh crops of `images`,
/// together with the MSE of always predicting zero.
pub fn denoiser_mse(
    model: &FingerprintModel,
    images: &[GrayImage],
    registry: &CompressionClassRegistry,
    crop: usize,
    count: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_images(images, crop)?;
    let seeds: Vec<u64> = (0..count).map(|i| sub_seed(seed, STREAM_VALIDATION, i as u64)).collect();
    let (x, t) = residual_batch(images, registry, crop, &seeds)?;
    let y = model.net.infer(&x)?;
    let zero = Tensor4::zeros(t.dims());
    Ok((mse(&y, &t), mse(&zero, &t)))
}

/// Squared Euclidean distance between two fingerprints.
pub fn fingerprint_distance(f1: &[f32], f2: &[f32]) -> f64 {
    f1.iter()
        .zip(f2)
        .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
        .sum()
}

/// Distance between the fingerprints of the two patches of `pair`, computed
/// with running batch-norm statistics.
pub fn pair_distance(model: &FingerprintModel, pair: &PatchPair) -> Result<f64> {
    if pair.k1.dims() != pair.k2.dims() {
        return Err(Error::Shape("pair patches differ in size".into()));
    }
    let f = model.net.infer(&to_tensor(&[&pair.k1, &pair.k2]))?;
    Ok(fingerprint_distance(f.sample(0), f.sample(1)))
}

/// `p(i) = exp(-d_i) / sum_n exp(-d_n)`.
pub fn batch_softmax(distances: &[f64]) -> Vec<f64> {
    let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = distances.iter().map(|&d| (min - d).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Cross-entropy of `probabilities` against the distribution uniform over
/// the same-history pairs.
pub fn siamese_loss(probabilities: &[f64], labels: &[PairLabel]) -> Result<f64> {
    if probabilities.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probabilities for {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    let same = labels.iter().filter(|l| **l == PairLabel::Same).count();
    if same == 0 {
        return Err(Error::DegenerateBatch);
    }
    let s = same as f64;
    Ok(-probabilities
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l == PairLabel::Same)
        .map(|(p, _)| p.ln() / s)
        .sum::<f64>())
}

/// Loss of a batch given its distances, and the gradient of the loss with
/// respect to each distance.
pub fn siamese_loss_and_gradient(distances: &[f64], labels: &[PairLabel]) -> Result<(f64, Vec<f64>)> {
    let p = batch_softmax(distances);
    let loss = siamese_loss(&p, labels)?;
    let s = labels.iter().filter(|l| **l == PairLabel::Same).count() as f64;
    // dL/dd_j = t_j - p_j
    let grad = p
        .iter()
        .zip(labels)
        .map(|(&pj, l)| if *l == PairLabel::Same { 1.0 / s - pj } else { -pj })
        .collect();
    Ok((loss, grad))
}

fn draw_pairs(
    images: &[GrayImage],
    registry: &CompressionClassRegistry,
    config: &TrainingConfig,
    stream: u64,
    first: u64,
    count: usize,
) -> Result<Vec<PatchPair>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, stream, first + i as u64));
            let src = &images[rng.random_range(0..images.len())];
            make_pair(src, registry, config.crop, config.same_probability, &mut rng)
        })
        .collect()
}

fn pair_distances(net: &Network<f32>, pairs: &[PatchPair]) -> Result<Vec<f64>> {
    pairs
        .chunks(64)
        .map(|chunk| {
            let patches: Vec<&GrayImage> = chunk
                .iter()
                .map(|p| &p.k1)
                .chain(chunk.iter().map(|p| &p.k2))
                .collect();
            let f = net.infer(&to_tensor(&patches))?;
            let n = chunk.len();
            Ok((0..n)
                .map(|i| fingerprint_distance(f.sample(i), f.sample(n + i)))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.concat())
}

/// Mean different-history distance minus mean same-history distance.
pub fn separation_statistic(same: &[f64], different: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    mean(different) - mean(same)
}

/// One-sided Mann-Whitney U test of "`x` tends to be smaller than `y`",
/// normal approximation with tie and continuity corrections.
pub fn mann_whitney_less(x: &[f64], y: &[f64]) -> f64 {
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    if x.is_empty() || y.is_empty() {
        return 1.0;
    }
    let mut all: Vec<(f64, bool)> = x.iter().map(|&v| (v, true)).chain(y.iter().map(|&v| (v, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = all.len();
    let mut rank_sum_x = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_sum_x += rank * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    // U counts pairs with x > y; small U supports the alternative
    let u = rank_sum_x - n1 * (n1 + 1.0) / 2.0;
    let nf = n as f64;
    let var = n1 * n2 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = (u - n1 * n2 / 2.0 + 0.5) / var.sqrt();
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn validation_stats(net: &Network<f32>, pairs: &[PatchPair]) -> Result<Option<ValidationStats>> {
    let d = pair_distances(net, pairs)?;
    let (mut same, mut different) = (Vec::new(), Vec::new());
    for (p, d) in pairs.iter().zip(d) {
        match p.label {
            PairLabel::Same => same.push(d),
            PairLabel::Different => different.push(d),
        }
    }
    if same.is_empty() || different.is_empty() {
        return Ok(None);
    }
    Ok(Some(ValidationStats {
        separation: separation_statistic(&same, &different),
        mann_whitney_p: mann_whitney_less(&same, &different),
        same,
        different,
    }))
}

/// Siamese stage: fingerprints of both patches of every pair come from one
/// shared network; distances go through the batch softmax and the
/// cross-entropy against the same-history targets.
pub fn train_siamese(
    pretrained: &FingerprintModel,
    images: &[GrayImage],
    validation: &[GrayImage],
    registry: &CompressionClassRegistry,
    config: &TrainingConfig,
) -> Result<(FingerprintModel, SiameseReport)> {
    train_siamese_with(pretrained, images, validation, registry, config, |_| {})
}

pub fn train_siamese_with(
    pretrained: &FingerprintModel,
    images: &[GrayImage],
    validation: &[GrayImage],
    registry: &CompressionClassRegistry,
    config: &TrainingConfig,
    mut on_epoch: impl FnMut(&EpochSummary),
) -> Result<(FingerprintModel, SiameseReport)> {
    config.validate()?;
    if pretrained.stage != Stage::DenoiserPretrained {
        return Err(Error::State(format!(
            "siamese training starts from a denoiser-pretrained model, got {}",
            pretrained.stage
        )));
    }
    if pretrained.arch != config.architecture {
        return Err(Error::Config("model architecture differs from the training config".into()));
    }
    check_images(images, config.crop)?;
    if !validation.is_empty() {
        check_images(validation, config.crop)?;
    }
    let mut model = pretrained.clone();
    model.registry = registry.labels();
    let val_pairs = if validation.is_empty() || config.validation_pairs == 0 {
        Vec::new()
    } else {
        draw_pairs(validation, registry, config, STREAM_VALIDATION, 0, config.validation_pairs)?
    };
    let mut adam = AdamState::for_network(config.adam, &mut model.net);
    let mut report = SiameseReport {
        epoch_loss: Vec::new(),
        batch_loss: Vec::new(),
        separation_trace: Vec::new(),
        resampled_batches: 0,
        validation: None,
    };
    let per_batch = config.pairs_per_batch;
    let mut drawn = 0u64;
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        let mut total = 0.0;
        for _ in 0..config.batches_per_epoch {
            let pairs = loop {
                let pairs = draw_pairs(images, registry, config, STREAM_SIAMESE, drawn, per_batch)?;
                drawn += per_batch as u64;
                if pairs.iter().any(|p| p.label == PairLabel::Same) {
                    break pairs;
                }
                report.resampled_batches += 1;
            };
            let labels: Vec<PairLabel> = pairs.iter().map(|p| p.label).collect();
            let patches: Vec<&GrayImage> = pairs
                .iter()
                .map(|p| &p.k1)
                .chain(pairs.iter().map(|p| &p.k2))
                .collect();
            let f = model.net.forward(&to_tensor(&patches), Mode::Train)?;
            let d: Vec<f64> = (0..per_batch)
                .map(|i| fingerprint_distance(f.sample(i), f.sample(per_batch + i)))
                .collect();
            if d.iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainingDivergence { stage: "siamese", step });
            }
            let (loss, dd) = siamese_loss_and_gradient(&d, &labels)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDivergence { stage: "siamese", step });
            }
            let mut df = Tensor4::zeros(f.dims());
            let len = f.sample_len();
            for (i, &g) in dd.iter().enumerate() {
                let g = g as f32;
                for j in 0..len {
                    let diff = f.data()[i * len + j] - f.data()[(per_batch + i) * len + j];
                    df.data_mut()[i * len + j] = 2.0 * g * diff;
                    df.data_mut()[(per_batch + i) * len + j] = -2.0 * g * diff;
                }
            }
            model.net.backward(&df)?;
            adam.step_network(&mut model.net)?;
            if !model.net.all_finite() {
                return Err(Error::TrainingDivergence { stage: "siamese", step });
            }
            report.batch_loss.push(loss);
            total += loss;
            step += 1;
        }
        let mean_loss = total / config.batches_per_epoch.max(1) as f64;
        report.epoch_loss.push(mean_loss);
        let stats = if val_pairs.is_empty() {
            None
        } else {
            validation_stats(&model.net, &val_pairs)?
        };
        let separation = stats.as_ref().map(|s| s.separation);
        if let Some(s) = separation {
            report.separation_trace.push(s);
        }
        on_epoch(&EpochSummary {
            stage: "siamese",
            epoch,
            mean_loss,
            separation,
        });
    }
    if !val_pairs.is_empty() {
        report.validation = validation_stats(&model.net, &val_pairs)?;
    }
    model.stage = Stage::SiameseTrained;
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_closed_forms() {
        assert_eq!(batch_softmax(&[1.5, 1.5]), vec![0.5, 0.5]);
        let p = batch_softmax(&[0.0, 3f64.ln()]);
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
        // large distances must not underflow to NaN
        let p = batch_softmax(&[1e4, 1e4 + 1.0]);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn loss_closed_forms() {
        use PairLabel::*;
        let n = 7;
        let p = batch_softmax(&vec![2.0; n]);
        let l = siamese_loss(&p, &vec![Same; n]).unwrap();
        assert!((l - (n as f64).ln()).abs() < 1e-12);
        let l = siamese_loss(&[0.75, 0.25], &[Same, Different]).unwrap();
        assert!((l + 0.75f64.ln()).abs() < 1e-15);
        assert!(matches!(
            siamese_loss(&[0.5, 0.5], &[Different, Different]),
            Err(Error::DegenerateBatch)
        ));
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_monotone(d in prop::collection::vec(0.0f64..50.0, 1..40)) {
            let p = batch_softmax(&d);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for i in 0..d.len() {
                for j in 0..d.len() {
                    if d[i] < d[j] {
                        prop_assert!(p[i] > p[j] || p[j] == 0.0);
                    }
                }
            }
        }

        #[test]
        fn loss_gradient_matches_finite_differences(
            d in prop::collection::vec(0.0f64..5.0, 2..12),
            same in prop::collection::vec(any::<bool>(), 12),
        ) {
            let mut labels: Vec<PairLabel> = same[..d.len()]
                .iter()
                .map(|&s| if s { PairLabel::Same } else { PairLabel::Different })
                .collect();
            labels[0] = PairLabel::Same;
            let (_, g) = siamese_loss_and_gradient(&d, &labels).unwrap();
            let h = 1e-6;
            for j in 0..d.len() {
                let mut up = d.clone();
                up[j] += h;
                let mut down = d.clone();
                down[j] -= h;
                let lu = siamese_loss(&batch_softmax(&up), &labels).unwrap();
                let ld = siamese_loss(&batch_softmax(&down), &labels).unwrap();
                prop_assert!(((lu - ld) / (2.0 * h) - g[j]).abs() < 1e-6);
            }
        }

        #[test]
        fn loss_is_permutation_invariant(d in prop::collection::vec(0.0f64..5.0, 2..10), rot in 0usize..10) {
            let labels: Vec<PairLabel> = (0..d.len())
                .map(|i| if i % 2 == 0 { PairLabel::Same } else { PairLabel::Different })
                .collect();
            let l1 = siamese_loss(&batch_softmax(&d), &labels).unwrap();
            let k = rot % d.len();
            let (mut d2, mut l2v) = (d.clone(), labels.clone());
            d2.rotate_left(k);
            l2v.rotate_left(k);
            let l2 = siamese_loss(&batch_softmax(&d2), &l2v).unwrap();
            prop_assert!((l1 - l2).abs() < 1e-12);
        }
    }

    #[test]
    fn shrinking_a_same_distance_lowers_the_loss() {
        use PairLabel::*;
        let labels = [Same, Different, Same, Different];
        let mut d = vec![3.0, 1.0, 2.0, 4.0];
        let before = siamese_loss(&batch_softmax(&d), &labels).unwrap();
        d[2] = 1.5;
        let after = siamese_loss(&batch_softmax(&d), &labels).unwrap();
        assert!(after < before);
    }

    #[test]
    fn mann_whitney_reference_values() {
        // reference: scipy.stats.mannwhitneyu(x, y, alternative="less",
        // method="asymptotic", use_continuity=True)
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [3.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        let p = mann_whitney_less(&x, &y);
        assert!((p - 0.014_050_03).abs() < 1e-7, "{p}");
        let p = mann_whitney_less(&y, &x);
        assert!(p > 0.98);
    }

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(sub_seed(1, 2, 3), sub_seed(1, 2, 4));
        assert_ne!(sub_seed(1, 2, 3), sub_seed(1, 3, 3));
        assert_eq!(sub_seed(7, 7, 7), sub_seed(7, 7, 7));
    }
}
