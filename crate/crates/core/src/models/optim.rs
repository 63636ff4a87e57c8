use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datagen::LabeledDataset;
use crate::error::{check_len, Error, Result};
use crate::pseudo::PseudoLabel;
use crate::rng;
use crate::scalar::Scalar;

use super::linear::{grad_total_loss, GradientRecord, LinearSoftmaxModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 0.2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && [self.lr, self.weight_decay, self.eps]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "invalid optimizer settings {self:?}"
            )))
        }
    }
}

/// Adaptive-moment descent with decoupled weight decay.
///
/// Each step first shrinks parameters by `lr * weight_decay`, then applies the
/// bias-corrected moment update.
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    cfg: AdamWConfig,
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(cfg: AdamWConfig, model: &LinearSoftmaxModel<T>) -> Result<Self> {
        cfg.validate()?;
        let n = model.num_params();
        Ok(Self {
            cfg,
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
        })
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(
        &mut self,
        model: &mut LinearSoftmaxModel<T>,
        grad: &GradientRecord<T>,
    ) -> Result<()> {
        check_len("optimizer state", self.m.len(), model.num_params())?;
        self.t += 1;
        let lr = T::lit(self.cfg.lr);
        let decay = T::one() - lr * T::lit(self.cfg.weight_decay);
        let (b1, b2) = (T::lit(self.cfg.beta1), T::lit(self.cfg.beta2));
        let eps = T::lit(self.cfg.eps);
        let bc1 = T::one() - b1.powi(self.t);
        let bc2 = T::one() - b2.powi(self.t);
        let params = model.params_mut();
        for (((p, g), m), v) in params
            .zip(grad.values())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = b1 * *m + (T::one() - b1) * *g;
            *v = b2 * *v + (T::one() - b2) * *g * *g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p = *p * decay - lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Supervised cross-entropy training on labelled data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

impl Default for SourceTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            optimizer: AdamWConfig {
                lr: 0.02,
                weight_decay: 0.0,
                ..AdamWConfig::default()
            },
            seed: 0,
        }
    }
}

/// Minimises mean cross-entropy over mini-batches. Deterministic given the
/// config seed.
pub fn train_source<T: Scalar>(
    mut model: LinearSoftmaxModel<T>,
    data: &LabeledDataset<T>,
    cfg: &SourceTrainConfig,
) -> Result<LinearSoftmaxModel<T>> {
    if data.is_empty() {
        return Err(Error::input("cannot train on an empty dataset"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch_size must be positive"));
    }
    check_len("dataset features", model.feature_dim(), data.feature_dim())?;
    if data.num_classes() > model.num_classes() {
        return Err(Error::shape(
            "dataset classes",
            model.num_classes(),
            data.num_classes(),
        ));
    }
    let mut opt = AdamW::new(cfg.optimizer, &model)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut shuffle = rng::stream(cfg.seed, "source.shuffle", &[epoch as u64]);
        order.shuffle(&mut shuffle);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = GradientRecord::zeros_like(&model);
            let scale = T::one() / T::lit(batch.len() as f64);
            for &i in batch {
                let x = &data.features()[i];
                let label = PseudoLabel::Class(data.labels()[i]);
                // w = 1 removes the KL term, leaving plain cross-entropy
                let (_, g) = grad_total_loss(&model, &model, x, label, T::one(), T::one(), false)?;
                grad.add_scaled(&g, scale);
            }
            opt.step(&mut model, &grad)?;
        }
    }
    Ok(model)
}
