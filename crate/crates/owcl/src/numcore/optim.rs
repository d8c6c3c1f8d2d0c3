//! SGD and RMSProp over flat parameter buffers.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    RmsProp { decay: f64, epsilon: f64 },
}

/// Per-buffer optimizer state. The accumulator mirrors the parameter buffer
/// length; `ensure_len` extends it with zeros after a class expansion.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    pub learning_rate: f64,
    acc: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0) {
            return Err(Error::Domain(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if let OptimizerKind::RmsProp { decay, epsilon } = kind {
            if !(0.0 < decay && decay < 1.0) {
                return Err(Error::Domain(format!("rmsprop decay {decay} not in (0,1)")));
            }
            if !(epsilon > 0.0) {
                return Err(Error::Domain(format!("rmsprop epsilon {epsilon} must be > 0")));
            }
        }
        Ok(OptimizerState {
            kind,
            learning_rate,
            acc: Vec::new(),
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn ensure_len(&mut self, len: usize) {
        if matches!(self.kind, OptimizerKind::RmsProp { .. }) && self.acc.len() < len {
            self.acc.resize(len, 0.0);
        }
    }

    /// One update step. SGD: `p -= lr * g`. RMSProp: `a = d*a + (1-d)*g^2`,
    /// `p -= lr * g / sqrt(a + eps)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(
                "optimizer step",
                format!("params len {}", params.len()),
                format!("grads len {}", grads.len()),
            ));
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, &g) in params.iter_mut().zip(grads) {
                    *p -= self.learning_rate * g;
                }
            }
            OptimizerKind::RmsProp { decay, epsilon } => {
                self.ensure_len(params.len());
                if self.acc.len() != params.len() {
                    return Err(Error::shape(
                        "optimizer step",
                        format!("accumulator len {}", self.acc.len()),
                        format!("params len {}", params.len()),
                    ));
                }
                for ((p, &g), a) in params.iter_mut().zip(grads).zip(self.acc.iter_mut()) {
                    *a = decay * *a + (1.0 - decay) * g * g;
                    *p -= self.learning_rate * g / (*a + epsilon).sqrt();
                }
            }
        }
        Ok(())
    }
}
