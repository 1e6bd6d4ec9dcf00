use std::path::Path;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::container::{ParamBlock, ParamContainer};
use crate::nn::{BatchNormLayer, ConvLayer, Layer, Network};

/// Network shape: `depth` layer groups of `kernel`x`kernel` convolutions with
/// `channels` feature maps in the hidden groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub depth: usize,
    pub channels: usize,
    pub kernel: usize,
}

impl Architecture {
    pub const FULL: Architecture = Architecture {
        depth: 20,
        channels: 64,
        kernel: 3,
    };
    pub const DESK: Architecture = Architecture {
        depth: 5,
        channels: 8,
        kernel: 3,
    };

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::invalid("network depth must be at least 2"));
        }
        if self.channels == 0 {
            return Err(Error::invalid("channel count must be positive"));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::invalid("kernel size must be odd"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    /// Freshly initialized, never trained.
    Untrained,
    DenoiserPretrained,
    SiameseTrained,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Untrained => "untrained",
            Stage::DenoiserPretrained => "denoiser-pretrained",
            Stage::SiameseTrained => "siamese-trained",
        })
    }
}

/// Pixel values are divided by this before entering the network.
pub const INPUT_SCALE: f32 = 255.0;

/// The fingerprint extraction network together with its training state.
#[derive(Clone, Debug, PartialEq)]
pub struct FingerprintModel {
    pub(crate) arch: Architecture,
    pub(crate) stage: Stage,
    pub(crate) registry: Vec<String>,
    pub(crate) net: Network<f32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    stage: Stage,
    depth: usize,
    channels: usize,
    kernel: usize,
    input_scale: f32,
    bn_momentum: f64,
    bn_eps: f64,
    registry: Vec<String>,
}

impl FingerprintModel {
    /// Kaiming-initialized network: conv+ReLU, `depth - 2` groups of
    /// conv+BN+ReLU, then a single-channel conv.
    ///
    /// Convolutions followed by batch normalization carry no bias, since the
    /// normalization's shift subsumes it.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let (c, k) = (arch.channels, arch.kernel);
        let mut layers = vec![
            Layer::Conv(ConvLayer::kaiming(1, c, k, true, rng)?),
            Layer::Relu,
        ];
        for _ in 0..arch.depth - 2 {
            layers.push(Layer::Conv(ConvLayer::kaiming(c, c, k, false, rng)?));
            layers.push(Layer::BatchNorm(BatchNormLayer::new(
                c,
                crate::nn::batchnorm::DEFAULT_MOMENTUM,
                crate::nn::batchnorm::DEFAULT_EPS,
            )?));
            layers.push(Layer::Relu);
        }
        // starts as the zero predictor
        let mut last = ConvLayer::kaiming(c, 1, k, true, rng)?;
        last.weight_mut().iter_mut().for_each(|w| *w = 0.0);
        layers.push(Layer::Conv(last));
        Ok(FingerprintModel {
            arch,
            stage: Stage::Untrained,
            registry: Vec::new(),
            net: Network::new(layers),
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    /// Labels of the compression classes seen in training.
    pub fn registry_labels(&self) -> &[String] {
        &self.registry
    }

    pub fn network(&self) -> &Network<f32> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network<f32> {
        &mut self.net
    }

    pub fn set_stage(&mut self, stage: Stage) {
        self.stage = stage;
    }

    pub fn set_registry_labels(&mut self, labels: Vec<String>) {
        self.registry = labels;
    }

    fn bn_hyper(&self) -> (f64, f64) {
        self.net
            .layers()
            .iter()
            .find_map(|l| match l {
                Layer::BatchNorm(bn) => Some((bn.momentum(), bn.eps())),
                _ => None,
            })
            .unwrap_or((
                crate::nn::batchnorm::DEFAULT_MOMENTUM,
                crate::nn::batchnorm::DEFAULT_EPS,
            ))
    }

    pub fn to_container(&self) -> ParamContainer {
        let (bn_momentum, bn_eps) = self.bn_hyper();
        let header = Header {
            stage: self.stage,
            depth: self.arch.depth,
            channels: self.arch.channels,
            kernel: self.arch.kernel,
            input_scale: INPUT_SCALE,
            bn_momentum,
            bn_eps,
            registry: self.registry.clone(),
        };
        ParamContainer {
            header: toml::to_string(&header).expect("header serializes"),
            blocks: self
                .net
                .named_tensors()
                .into_iter()
                .map(|(name, values)| ParamBlock {
                    name,
                    values: values.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_container(c: &ParamContainer) -> Result<Self> {
        let header: Header = toml::from_str(&c.header)
            .map_err(|e| Error::ModelFormat(format!("header: {e}")))?;
        if header.input_scale != INPUT_SCALE {
            return Err(Error::ModelFormat(format!(
                "unsupported input scale {}",
                header.input_scale
            )));
        }
        let arch = Architecture {
            depth: header.depth,
            channels: header.channels,
            kernel: header.kernel,
        };
        arch.validate()
            .map_err(|e| Error::ModelFormat(format!("architecture: {e}")))?;
        let mut model = FingerprintModel::init(arch, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0))?;
        for layer in model.net.layers_mut() {
            if let Layer::BatchNorm(bn) = layer {
                *bn = BatchNormLayer::new(bn.channels(), header.bn_momentum, header.bn_eps)
                    .map_err(|e| Error::ModelFormat(e.to_string()))?;
            }
        }
        let expected = model.net.named_tensors().len();
        if c.blocks.len() != expected {
            return Err(Error::ModelFormat(format!(
                "expected {expected} parameter blocks, found {}",
                c.blocks.len()
            )));
        }
        for (name, slot) in model.net.named_tensors_mut() {
            let block = c
                .block(&name)
                .ok_or_else(|| Error::ModelFormat(format!("missing block {name}")))?;
            if block.values.len() != slot.len() {
                return Err(Error::ModelFormat(format!(
                    "block {name} has {} values, expected {}",
                    block.values.len(),
                    slot.len()
                )));
            }
            slot.copy_from_slice(&block.values);
        }
        if !model.net.all_finite() {
            return Err(Error::ModelFormat("non-finite parameter".into()));
        }
        model.stage = header.stage;
        model.registry = header.registry;
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_container().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_container(&ParamContainer::from_bytes(bytes)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::from(e).at_path(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::from(e).at_path(path))?;
        Self::from_bytes(&bytes).map_err(|e| e.at_path(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layer_groups() {
        let m = FingerprintModel::init(Architecture::DESK, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let layers = m.network().layers();
        // conv relu, 3 x (conv bn relu), conv
        assert_eq!(layers.len(), 2 + 3 * 3 + 1);
        assert!(matches!(layers[0], Layer::Conv(_)));
        assert!(matches!(layers[1], Layer::Relu));
        assert!(matches!(layers[3], Layer::BatchNorm(_)));
        match layers.last().unwrap() {
            Layer::Conv(c) => assert_eq!(c.out_channels(), 1),
            _ => panic!("last layer must be a convolution"),
        }
        // no normalization directly after the first convolution
        assert!(matches!(layers[2], Layer::Conv(_)));
    }

    #[test]
    fn save_load_roundtrip_is_exact() {
        let mut m = FingerprintModel::init(Architecture::DESK, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        m.stage = Stage::SiameseTrained;
        m.registry = vec!["QF30".into(), "QF90".into()];
        if let Layer::BatchNorm(bn) = &mut m.net.layers_mut()[3] {
            bn.running_mean[0] = 0.123;
            bn.running_var[1] = 4.5;
        }
        let back = FingerprintModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.stage(), Stage::SiameseTrained);
        assert_eq!(back.registry_labels(), m.registry_labels());
    }

    #[test]
    fn rejects_mismatched_blocks() {
        let m = FingerprintModel::init(Architecture::DESK, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut c = m.to_container();
        c.blocks[0].values.pop();
        assert!(matches!(FingerprintModel::from_container(&c), Err(Error::ModelFormat(_))));
        let mut c = m.to_container();
        c.header = c.header.replace("depth = 5", "depth = 6");
        assert!(FingerprintModel::from_container(&c).is_err());
    }
}
