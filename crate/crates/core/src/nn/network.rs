use super::batchnorm::BatchNormCache;
use super::{BatchNormLayer, ConvLayer, Real, Tensor4};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Running statistics; nothing is mutated.
    Eval,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Conv(ConvLayer<T>),
    BatchNorm(BatchNormLayer<T>),
    Relu,
}

enum Cache<T> {
    Conv(Tensor4<T>),
    BatchNorm(BatchNormCache<T>),
    /// ReLU output; its positive entries mark where gradient flows.
    Relu(Tensor4<T>),
}

/// A feed-forward stack of layers.
pub struct Network<T> {
    layers: Vec<Layer<T>>,
    cache: Option<Vec<Cache<T>>>,
}

impl<T: Real> Clone for Network<T> {
    fn clone(&self) -> Self {
        Network {
            layers: self.layers.clone(),
            cache: None,
        }
    }
}

impl<T: Real> std::fmt::Debug for Network<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network").field("layers", &self.layers).finish()
    }
}

impl<T: Real> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl<T: Real> Network<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Network {
            layers,
            cache: None,
        }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        self.cache = None;
        &mut self.layers
    }

    /// Inference without caching; leaves the network untouched.
    pub fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer {
                Layer::Conv(c) => c.forward(&h)?,
                Layer::BatchNorm(bn) => {
                    // eval mode never touches the running statistics
                    let mut bn = bn.clone();
                    bn.forward(&h, Mode::Eval)?.0
                }
                Layer::Relu => relu(h),
            };
        }
        Ok(h)
    }

    /// Forward pass that caches the activations needed by [`Network::backward`].
    pub fn forward(&mut self, x: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = match layer {
                Layer::Conv(c) => {
                    let y = c.forward(&h)?;
                    caches.push(Cache::Conv(h));
                    y
                }
                Layer::BatchNorm(bn) => {
                    let (y, cache) = bn.forward(&h, mode)?;
                    caches.push(Cache::BatchNorm(cache));
                    y
                }
                Layer::Relu => {
                    let y = relu(h);
                    caches.push(Cache::Relu(y.clone()));
                    y
                }
            };
        }
        self.cache = Some(caches);
        Ok(h)
    }

    /// Back-propagates `dy` through the cached forward pass. Parameter
    /// gradients are overwritten; the gradient with respect to the network
    /// input is returned. The cache is consumed.
    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let caches = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a cached forward pass".into()))?;
        let mut g = dy.clone();
        for (layer, cache) in self.layers.iter_mut().zip(caches.iter()).rev() {
            g = match (layer, cache) {
                (Layer::Conv(c), Cache::Conv(x)) => c.backward(x, &g)?,
                (Layer::BatchNorm(bn), Cache::BatchNorm(bc)) => bn.backward(bc, &g)?,
                (Layer::Relu, Cache::Relu(y)) => {
                    if y.dims() != g.dims() {
                        return Err(Error::Shape("ReLU gradient dims".into()));
                    }
                    for (gv, &yv) in g.data_mut().iter_mut().zip(y.data()) {
                        if yv <= T::ZERO {
                            *gv = T::ZERO;
                        }
                    }
                    g
                }
                _ => unreachable!("cache built alongside layers"),
            };
        }
        Ok(g)
    }

    pub fn has_forward_cache(&self) -> bool {
        self.cache.is_some()
    }

    /// Visits every trainable parameter with its gradient, in a fixed order.
    pub fn visit_params(&mut self, mut f: impl FnMut(&str, &mut [T], &[T])) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Conv(c) => {
                    f(&format!("{i}.conv.weight"), &mut c.weight, &c.grad_weight);
                    if let (Some(b), Some(gb)) = (&mut c.bias, &c.grad_bias) {
                        f(&format!("{i}.conv.bias"), b, gb);
                    }
                }
                Layer::BatchNorm(bn) => {
                    f(&format!("{i}.bn.gamma"), &mut bn.gamma, &bn.grad_gamma);
                    f(&format!("{i}.bn.beta"), &mut bn.beta, &bn.grad_beta);
                }
                Layer::Relu => {}
            }
        }
    }

    /// Named trainable parameters followed by non-trainable state, in the
    /// order used by model files.
    pub fn named_tensors(&self) -> Vec<(String, &[T])> {
        let mut out: Vec<(String, &[T])> = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv(c) => {
                    out.push((format!("{i}.conv.weight"), &c.weight));
                    if let Some(b) = &c.bias {
                        out.push((format!("{i}.conv.bias"), b));
                    }
                }
                Layer::BatchNorm(bn) => {
                    out.push((format!("{i}.bn.gamma"), &bn.gamma));
                    out.push((format!("{i}.bn.beta"), &bn.beta));
                    out.push((format!("{i}.bn.running_mean"), &bn.running_mean));
                    out.push((format!("{i}.bn.running_var"), &bn.running_var));
                }
                Layer::Relu => {}
            }
        }
        out
    }

    /// Mutable counterpart of [`Network::named_tensors`].
    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Vec<T>)> {
        self.cache = None;
        let mut out: Vec<(String, &mut Vec<T>)> = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Conv(c) => {
                    out.push((format!("{i}.conv.weight"), &mut c.weight));
                    if let Some(b) = &mut c.bias {
                        out.push((format!("{i}.conv.bias"), b));
                    }
                }
                Layer::BatchNorm(bn) => {
                    out.push((format!("{i}.bn.gamma"), &mut bn.gamma));
                    out.push((format!("{i}.bn.beta"), &mut bn.beta));
                    out.push((format!("{i}.bn.running_mean"), &mut bn.running_mean));
                    out.push((format!("{i}.bn.running_var"), &mut bn.running_var));
                }
                Layer::Relu => {}
            }
        }
        out
    }

    /// Shapes of the trainable parameters, in [`Network::visit_params`] order.
    pub fn param_sizes(&mut self) -> Vec<usize> {
        let mut sizes = Vec::new();
        self.visit_params(|_, p, _| sizes.push(p.len()));
        sizes
    }

    pub fn param_count(&mut self) -> usize {
        self.param_sizes().iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Conv(c) => Layer::Conv(c.cast()),
                    Layer::BatchNorm(bn) => Layer::BatchNorm(bn.cast()),
                    Layer::Relu => Layer::Relu,
                })
                .collect(),
            cache: None,
        }
    }
}

fn relu<T: Real>(mut x: Tensor4<T>) -> Tensor4<T> {
    for v in x.data_mut() {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::batchnorm::{DEFAULT_EPS, DEFAULT_MOMENTUM};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_net(rng: &mut ChaCha8Rng) -> Network<f64> {
        Network::new(vec![
            Layer::Conv(ConvLayer::kaiming(1, 4, 3, true, rng).unwrap()),
            Layer::Relu,
            Layer::Conv(ConvLayer::kaiming(4, 4, 3, false, rng).unwrap()),
            Layer::BatchNorm(BatchNormLayer::new(4, DEFAULT_MOMENTUM, DEFAULT_EPS).unwrap()),
            Layer::Relu,
            Layer::Conv(ConvLayer::kaiming(4, 1, 3, true, rng).unwrap()),
        ])
    }

    #[test]
    fn linear_layer_squared_error_closed_form() {
        // y = w * x + b, loss = sum (y - t)^2, dL/dw = sum 2 (y - t) x
        let mut conv = ConvLayer::<f64>::zeros(1, 1, 1, true).unwrap();
        conv.weight[0] = 0.7;
        conv.bias.as_mut().unwrap()[0] = -0.2;
        let mut net = Network::new(vec![Layer::Conv(conv)]);
        let x = Tensor4::from_vec([1, 1, 2, 2], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let t = [0.3, 0.1, -0.4, 2.0];
        let y = net.forward(&x, Mode::Train).unwrap();
        let dy: Vec<f64> = y.data().iter().zip(t).map(|(p, t)| 2.0 * (p - t)).collect();
        let dx = net
            .backward(&Tensor4::from_vec([1, 1, 2, 2], dy.clone()).unwrap())
            .unwrap();
        let expected_w: f64 = dy.iter().zip(x.data()).map(|(g, x)| g * x).sum();
        let expected_b: f64 = dy.iter().sum();
        let Layer::Conv(c) = &net.layers()[0] else { unreachable!() };
        assert!((c.grad_weight()[0] - expected_w).abs() < 1e-12);
        assert!((c.grad_bias().unwrap()[0] - expected_b).abs() < 1e-12);
        for (g, d) in dx.data().iter().zip(&dy) {
            assert!((g - 0.7 * d).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut net = small_net(&mut rng);
        let x = Tensor4::from_vec([2, 1, 6, 6], (0..72).map(|_| rng.random()).collect()).unwrap();
        let y = net.forward(&x, Mode::Train).unwrap();
        net.backward(&Tensor4::zeros(y.dims())).unwrap();
        net.visit_params(|name, _, g| assert!(g.iter().all(|&v| v == 0.0), "{name}"));
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut net = small_net(&mut rng);
        assert!(matches!(
            net.backward(&Tensor4::zeros([1, 1, 4, 4])),
            Err(Error::State(_))
        ));
        let x = Tensor4::zeros([2, 1, 4, 4]);
        let y = net.forward(&x, Mode::Train).unwrap();
        net.backward(&y).unwrap();
        assert!(net.backward(&y).is_err());
    }

    #[test]
    fn infer_matches_eval_forward_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut net = small_net(&mut rng);
        let x = Tensor4::from_vec([3, 1, 7, 5], (0..105).map(|_| rng.random()).collect()).unwrap();
        net.forward(&x, Mode::Train).unwrap();
        let a = net.infer(&x).unwrap();
        let b = net.infer(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(net.forward(&x, Mode::Eval).unwrap(), a);
        assert_eq!(a.dims(), [3, 1, 7, 5]);
    }
}
