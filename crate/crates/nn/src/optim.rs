//! Shared-statistics RMSProp and plain SGD over the global parameter store.

use crate::error::NnError;
use crate::params::{Gradients, ParamSet};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    RmsProp,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub decay: f64,
    /// Added to the mean square inside the square root.
    pub epsilon: f64,
    /// Global L2 norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            kind: OptimizerKind::RmsProp,
            learning_rate: 7e-4,
            decay: 0.99,
            epsilon: 0.1,
            clip_norm: Some(40.0),
        }
    }
}

impl OptimConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimConfig {
            kind: OptimizerKind::Sgd,
            learning_rate,
            clip_norm: None,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub grad_norm: f64,
    pub clipped: bool,
    pub version: u64,
}

/// Parameters plus optimizer accumulators and a version counter.
///
/// Every tensor carries a version stamp; after an update all stamps equal
/// `version`, so a reader can verify it holds a single consistent version.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub params: ParamSet<f32>,
    pub accum: Vec<Tensor<f32>>,
    version: u64,
    stamps: Vec<u64>,
}

impl ModelParams {
    pub fn new(params: ParamSet<f32>) -> Self {
        let accum = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        let stamps = vec![0; params.len()];
        ModelParams {
            params,
            accum,
            version: 0,
            stamps,
        }
    }

    pub(crate) fn from_parts(params: ParamSet<f32>, accum: Vec<Tensor<f32>>, version: u64) -> Self {
        let stamps = vec![version; params.len()];
        ModelParams {
            params,
            accum,
            version,
            stamps,
        }
    }

    /// Deep copy.
    pub fn snapshot(&self) -> Self {
        self.clone()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn stamps(&self) -> &[u64] {
        &self.stamps
    }

    /// True when every tensor belongs to `version()`.
    pub fn is_consistent(&self) -> bool {
        self.stamps.iter().all(|&s| s == self.version)
    }

    /// Applies one update in place. On rejection nothing changes.
    pub fn apply(&mut self, grads: &Gradients<f32>, cfg: &OptimConfig) -> Result<UpdateStats, NnError> {
        if grads.tensors().len() != self.params.len()
            || grads
                .tensors()
                .iter()
                .zip(self.params.tensors())
                .any(|(g, p)| g.shape() != p.shape())
        {
            return Err(NnError::LayoutMismatch);
        }
        if !grads.is_finite() {
            return Err(NnError::NonFiniteGradient);
        }
        let norm = grads.global_norm();
        if !norm.is_finite() {
            return Err(NnError::NonFiniteGradient);
        }
        let (factor, clipped) = match cfg.clip_norm {
            Some(c) if norm > c => (c / norm, true),
            _ => (1.0, false),
        };
        let lr = cfg.learning_rate;
        let decay = cfg.decay;
        let eps = cfg.epsilon;
        let new_version = self.version + 1;
        for (i, (p, g)) in self.params.tensors_mut().iter_mut().zip(grads.tensors()).enumerate() {
            match cfg.kind {
                OptimizerKind::Sgd => {
                    for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w = (*w as f64 - lr * factor * d as f64) as f32;
                    }
                }
                OptimizerKind::RmsProp => {
                    let acc = self.accum[i].data_mut();
                    for ((w, &d), a) in p.data_mut().iter_mut().zip(g.data()).zip(acc.iter_mut()) {
                        let d = factor * d as f64;
                        let ms = decay * *a as f64 + (1.0 - decay) * d * d;
                        *a = ms as f32;
                        *w = (*w as f64 - lr * d / (ms + eps).sqrt()) as f32;
                    }
                }
            }
            self.stamps[i] = new_version;
        }
        self.version = new_version;
        Ok(UpdateStats {
            grad_norm: norm,
            clipped,
            version: new_version,
        })
    }
}

/// Functional form of `ModelParams::apply`.
pub fn optimize_step(params: &ModelParams, grads: &Gradients<f32>, cfg: &OptimConfig) -> Result<ModelParams, NnError> {
    let mut next = params.snapshot();
    next.apply(grads, cfg)?;
    Ok(next)
}
