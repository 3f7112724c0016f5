use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Grads;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// Adam with decoupled weight decay:
///
/// ```text
/// m ← β1·m + (1−β1)·g        v ← β2·v + (1−β2)·g²
/// θ ← θ − lr·m̂/(√v̂ + ε) − lr·λ·θ
/// ```
///
/// Moments are kept in f64 regardless of the parameter precision.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    t: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) {
            return Err(Error::Hyper("betas must lie in [0, 1)".into()));
        }
        if cfg.eps <= 0.0 || cfg.weight_decay < 0.0 {
            return Err(Error::Hyper("eps must be positive and weight_decay non-negative".into()));
        }
        Ok(AdamW { cfg, t: 0, moments: BTreeMap::new() })
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.cfg
    }

    /// Optimizer steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn moments(&self, name: &str) -> Option<(&[f64], &[f64])> {
        self.moments.get(name).map(|(m, v)| (m.as_slice(), v.as_slice()))
    }

    /// One update of every parameter in `params`. Fails before touching
    /// anything if a parameter has no gradient or a gradient has the wrong
    /// shape.
    pub fn step<T: Element>(&mut self, params: Vec<(String, &mut Tensor<T>)>, grads: &Grads<T>, lr: f64) -> Result<()> {
        for (name, p) in &params {
            let g = grads.get(name).ok_or_else(|| Error::MissingGrad(name.clone()))?;
            if g.shape() != p.shape() {
                return Err(Error::Hyper(format!(
                    "gradient for `{name}` has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
        }
        self.t += 1;
        let AdamWConfig { beta1, beta2, eps, weight_decay } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (name, p) in params {
            let g = &grads[&name];
            let (m, v) = self.moments.entry(name).or_insert_with(|| (vec![0.0; p.numel()], vec![0.0; p.numel()]));
            for (i, (theta, gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gi = gi.as_f64();
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let old = theta.as_f64();
                let new = old - lr * (m_hat / (v_hat.sqrt() + eps)) - lr * weight_decay * old;
                *theta = T::from_f64_lossy(new);
            }
        }
        Ok(())
    }
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Element>(grads: &mut Grads<T>, max_norm: f64) -> f64 {
    let norm = grads.values().flat_map(|g| g.data()).map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = T::from_f64_lossy(max_norm / norm);
        for g in grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v = *v * s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(name: &str, v: f64) -> Grads<f64> {
        [(name.to_string(), Tensor::scalar(v))].into_iter().collect()
    }

    #[test]
    fn first_step_is_bias_corrected_sign_step() {
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.0, ..Default::default() }).unwrap();
        let mut theta = Tensor::scalar(0.0f64);
        opt.step(vec![("w".into(), &mut theta)], &one("w", 1.0), 0.1).unwrap();
        // m̂ = 1, v̂ = 1: θ = −0.1 / (1 + 1e-8)
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((theta.item() - expected).abs() < 1e-15);
        assert!((theta.item() - -0.099_999_999_0).abs() < 1e-10);
    }

    #[test]
    fn zero_gradient_leaves_pure_decay() {
        let mut opt = AdamW::new(AdamWConfig { weight_decay: 0.1, ..Default::default() }).unwrap();
        let mut theta = Tensor::scalar(2.0f64);
        opt.step(vec![("w".into(), &mut theta)], &one("w", 0.0), 0.5).unwrap();
        assert_eq!(theta.item(), 2.0 - 0.5 * 0.1 * 2.0);
    }

    #[test]
    fn identical_parameters_evolve_identically() {
        let mut opt = AdamW::new(AdamWConfig::default()).unwrap();
        let mut a = Tensor::scalar(0.3f64);
        let mut b = Tensor::scalar(0.3f64);
        for s in 0..5 {
            let g = 0.1 * s as f64 - 0.2;
            let grads: Grads<f64> =
                [("a".to_string(), Tensor::scalar(g)), ("b".to_string(), Tensor::scalar(g))].into_iter().collect();
            opt.step(vec![("a".into(), &mut a), ("b".into(), &mut b)], &grads, 0.01).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn missing_gradient_rejected_without_mutation() {
        let mut opt = AdamW::new(AdamWConfig::default()).unwrap();
        let mut a = Tensor::scalar(1.0f64);
        let mut b = Tensor::scalar(1.0f64);
        let err = opt.step(vec![("a".into(), &mut a), ("b".into(), &mut b)], &one("a", 1.0), 0.1).unwrap_err();
        assert!(matches!(err, Error::MissingGrad(n) if n == "b"));
        assert_eq!(a.item(), 1.0);
        assert_eq!(opt.steps(), 0);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut grads: Grads<f64> =
            [("a".to_string(), Tensor::from_f64([2], &[3.0, 0.0]).unwrap()), ("b".to_string(), Tensor::scalar(4.0))]
                .into_iter()
                .collect();
        let norm = clip_grad_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        assert!((grads["a"].data()[0] - 0.6).abs() < 1e-12);
        assert!((grads["b"].item() - 0.8).abs() < 1e-12);
    }
}
