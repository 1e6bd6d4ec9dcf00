use serde::{Deserialize, Serialize};

use super::{Network, Real};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for a list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        AdamState {
            config,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_network<T: Real>(config: AdamConfig, net: &mut Network<T>) -> Self {
        Self::new(config, &net.param_sizes())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    /// Overrides the accumulated moments and step count.
    pub fn set_moments(&mut self, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>, step: u64) -> Result<()> {
        let same = |a: &[Vec<f64>], b: &[Vec<f64>]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.len() == y.len())
        };
        if !same(&m, &self.m) || !same(&v, &self.v) {
            return Err(Error::Shape("moment shapes differ from parameters".into()));
        }
        self.m = m;
        self.v = v;
        self.step = step;
        Ok(())
    }

    /// One bias-corrected ADAM update of `params` from `grads`.
    pub fn update<T: Real>(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::Shape(format!("tensor {i}: parameter/gradient size mismatch")));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                let gj = g[j].to_f64();
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] = T::from_f64(p[j].to_f64() - lr * m_hat / (v_hat.sqrt() + eps));
            }
        }
        Ok(())
    }

    /// Applies one update to every trainable parameter of `net` from its
    /// current gradients.
    pub fn step_network<T: Real>(&mut self, net: &mut Network<T>) -> Result<()> {
        let mut params: Vec<Vec<T>> = Vec::new();
        let mut grads: Vec<Vec<T>> = Vec::new();
        net.visit_params(|_, p, g| {
            params.push(p.to_vec());
            grads.push(g.to_vec());
        });
        {
            let mut refs: Vec<&mut [T]> = params.iter_mut().map(|p| p.as_mut_slice()).collect();
            let grefs: Vec<&[T]> = grads.iter().map(|g| g.as_slice()).collect();
            self.update(&mut refs, &grefs)?;
        }
        let mut it = params.into_iter();
        net.visit_params(|_, p, _| p.copy_from_slice(&it.next().expect("same parameter count")));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_first_step_is_noop() {
        let mut st = AdamState::new(AdamConfig::default(), &[3]);
        let mut p = vec![1.0f64, -2.0, 0.5];
        st.update(&mut [&mut p[..]], &[&[0.0, 0.0, 0.0][..]]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn constant_gradient_update_tends_to_lr() {
        let cfg = AdamConfig::default();
        let mut st = AdamState::new(cfg, &[2]);
        let mut p = vec![0.0f64, 0.0];
        let mut last = [0.0; 2];
        for _ in 0..1000 {
            let before = p.clone();
            st.update(&mut [&mut p[..]], &[&[0.3, -4.0][..]]).unwrap();
            last = [p[0] - before[0], p[1] - before[1]];
        }
        assert!((last[0] + cfg.lr).abs() < 0.01 * cfg.lr);
        assert!((last[1] - cfg.lr).abs() < 0.01 * cfg.lr);
    }

    #[test]
    fn single_step_from_known_moments() {
        // m = 0.2, v = 0.05 after 4 steps; gradient 0.5 at step 5.
        let cfg = AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        let mut st = AdamState::new(cfg, &[1]);
        st.set_moments(vec![vec![0.2]], vec![vec![0.05]], 4).unwrap();
        let mut p = vec![1.0f64];
        st.update(&mut [&mut p[..]], &[&[0.5][..]]).unwrap();
        // m5 = 0.9*0.2 + 0.1*0.5 = 0.23 ; v5 = 0.999*0.05 + 0.001*0.25 = 0.0502
        // m_hat = 0.23 / (1 - 0.9^5) = 0.23 / 0.40951
        // v_hat = 0.0502 / (1 - 0.999^5) = 0.0502 / 0.004990009995
        let m_hat = 0.23 / 0.40951;
        let v_hat: f64 = 0.0502 / 0.004_990_009_995;
        let expected = 1.0 - 0.01 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((p[0] - expected).abs() < 1e-12, "{} vs {}", p[0], expected);
        assert!((expected - 0.998_229_5).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch() {
        let mut st = AdamState::new(AdamConfig::default(), &[2]);
        let mut p = vec![0.0f32; 3];
        assert!(matches!(
            st.update(&mut [&mut p[..]], &[&[0.0; 3][..]]),
            Err(Error::Shape(_))
        ));
    }
}
