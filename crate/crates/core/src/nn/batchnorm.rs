use super::{Mode, Real, Tensor4};
use crate::error::{Error, Result};

/// Per-channel batch normalization with learned scale and shift.
///
/// Running statistics follow `running = momentum * running + (1 - momentum) * batch`;
/// the running variance uses the unbiased batch variance.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormLayer<T> {
    pub(crate) gamma: Vec<T>,
    pub(crate) beta: Vec<T>,
    pub(crate) running_mean: Vec<T>,
    pub(crate) running_var: Vec<T>,
    pub(crate) momentum: f64,
    pub(crate) eps: f64,
    pub(crate) grad_gamma: Vec<T>,
    pub(crate) grad_beta: Vec<T>,
}

/// Saved quantities of a forward pass needed by the backward pass.
#[derive(Clone, Debug)]
pub(crate) struct BatchNormCache<T> {
    mode: Mode,
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

pub const DEFAULT_MOMENTUM: f64 = 0.9;
pub const DEFAULT_EPS: f64 = 1e-5;

impl<T: Real> BatchNormLayer<T> {
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Result<Self> {
        if eps <= 0.0 || !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid(format!(
                "batch norm needs eps > 0 and momentum in [0, 1), got {eps}, {momentum}"
            )));
        }
        Ok(BatchNormLayer {
            gamma: vec![T::ONE; channels],
            beta: vec![T::ZERO; channels],
            running_mean: vec![T::ZERO; channels],
            running_var: vec![T::ONE; channels],
            momentum,
            eps,
            grad_gamma: vec![T::ZERO; channels],
            grad_beta: vec![T::ZERO; channels],
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn running_mean(&self) -> &[T] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[T] {
        &self.running_var
    }

    pub(crate) fn forward(
        &mut self,
        x: &Tensor4<T>,
        mode: Mode,
    ) -> Result<(Tensor4<T>, BatchNormCache<T>)> {
        let [n, c, h, w] = x.dims();
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "batch norm over {} channels got {c}",
                self.channels()
            )));
        }
        let hw = h * w;
        let count = n * hw;
        let mut out = Tensor4::zeros(x.dims());
        let mut xhat = vec![T::ZERO; x.data().len()];
        let mut inv_std = vec![T::ZERO; c];
        for ch in 0..c {
            let plane = |s: usize| &x.data()[(s * c + ch) * hw..(s * c + ch + 1) * hw];
            let (mean, var) = match mode {
                Mode::Train => {
                    if count < 2 {
                        return Err(Error::invalid("batch norm training needs >= 2 values per channel"));
                    }
                    let mut sum = 0.0;
                    for s in 0..n {
                        sum += plane(s).iter().map(|v| v.to_f64()).sum::<f64>();
                    }
                    let mean = sum / count as f64;
                    let mut sq = 0.0;
                    for s in 0..n {
                        sq += plane(s)
                            .iter()
                            .map(|v| (v.to_f64() - mean).powi(2))
                            .sum::<f64>();
                    }
                    let var = sq / count as f64;
                    let unbiased = sq / (count - 1) as f64;
                    let m = self.momentum;
                    self.running_mean[ch] =
                        T::from_f64(m * self.running_mean[ch].to_f64() + (1.0 - m) * mean);
                    self.running_var[ch] =
                        T::from_f64(m * self.running_var[ch].to_f64() + (1.0 - m) * unbiased);
                    (mean, var)
                }
                Mode::Eval => (
                    self.running_mean[ch].to_f64(),
                    self.running_var[ch].to_f64(),
                ),
            };
            let istd = 1.0 / (var + self.eps).sqrt();
            inv_std[ch] = T::from_f64(istd);
            let (mean_t, istd_t) = (T::from_f64(mean), T::from_f64(istd));
            let (g, b) = (self.gamma[ch], self.beta[ch]);
            for s in 0..n {
                let off = (s * c + ch) * hw;
                for i in off..off + hw {
                    let xh = (x.data()[i] - mean_t) * istd_t;
                    xhat[i] = xh;
                    out.data_mut()[i] = g * xh + b;
                }
            }
        }
        Ok((out, BatchNormCache { mode, xhat, inv_std }))
    }

    pub(crate) fn backward(
        &mut self,
        cache: &BatchNormCache<T>,
        dy: &Tensor4<T>,
    ) -> Result<Tensor4<T>> {
        let [n, c, h, w] = dy.dims();
        if c != self.channels() || cache.xhat.len() != dy.data().len() {
            return Err(Error::Shape("batch norm gradient does not match forward pass".into()));
        }
        let hw = h * w;
        let count = T::from_f64((n * hw) as f64);
        let mut dx = Tensor4::zeros(dy.dims());
        for ch in 0..c {
            let idx = |s: usize| (s * c + ch) * hw..(s * c + ch + 1) * hw;
            let mut sum_dy = T::ZERO;
            let mut sum_dy_xhat = T::ZERO;
            for s in 0..n {
                for i in idx(s) {
                    sum_dy += dy.data()[i];
                    sum_dy_xhat += dy.data()[i] * cache.xhat[i];
                }
            }
            self.grad_beta[ch] = sum_dy;
            self.grad_gamma[ch] = sum_dy_xhat;
            let g = self.gamma[ch];
            let istd = cache.inv_std[ch];
            match cache.mode {
                Mode::Train => {
                    // dx = gamma * istd / M * (M * dy - sum(dy) - xhat * sum(dy * xhat))
                    let scale = g * istd / count;
                    for s in 0..n {
                        for i in idx(s) {
                            dx.data_mut()[i] = scale
                                * (count * dy.data()[i] - sum_dy - cache.xhat[i] * sum_dy_xhat);
                        }
                    }
                }
                Mode::Eval => {
                    for s in 0..n {
                        for i in idx(s) {
                            dx.data_mut()[i] = g * istd * dy.data()[i];
                        }
                    }
                }
            }
        }
        Ok(dx)
    }

    pub(crate) fn cast<U: Real>(&self) -> BatchNormLayer<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::from_f64(x.to_f64())).collect::<Vec<U>>();
        BatchNormLayer {
            gamma: c(&self.gamma),
            beta: c(&self.beta),
            running_mean: c(&self.running_mean),
            running_var: c(&self.running_var),
            momentum: self.momentum,
            eps: self.eps,
            grad_gamma: c(&self.grad_gamma),
            grad_beta: c(&self.grad_beta),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn train_mode_standardizes_each_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor4::from_vec(
            [4, 3, 5, 5],
            (0..300).map(|i| rng.random_range(-3.0..7.0) * (1 + i % 3) as f64).collect(),
        )
        .unwrap();
        let mut bn = BatchNormLayer::<f64>::new(3, DEFAULT_MOMENTUM, DEFAULT_EPS).unwrap();
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..4)
                .flat_map(|s| y.sample(s)[ch * 25..(ch + 1) * 25].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn eval_mode_uses_running_statistics() {
        let mut bn = BatchNormLayer::<f64>::new(1, 0.9, 1e-5).unwrap();
        bn.running_mean[0] = 2.0;
        bn.running_var[0] = 4.0 - 1e-5;
        bn.gamma[0] = 3.0;
        bn.beta[0] = 1.0;
        let x = Tensor4::from_vec([1, 1, 1, 2], vec![2.0, 4.0]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Eval).unwrap();
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert!((y.data()[1] - 4.0).abs() < 1e-9);
        // eval mode leaves the statistics alone
        assert_eq!(bn.running_mean[0], 2.0);
    }

    #[test]
    fn running_statistics_update() {
        let mut bn = BatchNormLayer::<f64>::new(1, 0.9, 1e-5).unwrap();
        let x = Tensor4::from_vec([1, 1, 1, 4], vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        bn.forward(&x, Mode::Train).unwrap();
        // batch mean 3, unbiased variance 14 / 3
        assert!((bn.running_mean[0] - 0.3).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 + 0.1 * 14.0 / 3.0)).abs() < 1e-12);
        assert!(bn.running_var.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(BatchNormLayer::<f32>::new(2, 0.9, 0.0).is_err());
        assert!(BatchNormLayer::<f32>::new(2, 1.0, 1e-5).is_err());
    }
}
