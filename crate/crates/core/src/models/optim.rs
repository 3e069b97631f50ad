use serde::{Deserialize, Serialize};

use super::Gradient;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const ADAGRAD_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    Adagrad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default)]
    pub l2: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { kind: OptimizerKind::Adagrad, learning_rate: 0.2, l2: 0.001 }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("l2 must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// SGD or Adagrad with L2 weight decay, applied to the parameters a
/// gradient touches.
///
/// SGD: `p -= lr * (g + l2 p)`.
/// Adagrad: `acc += g^2; p -= lr * (g + l2 p) / sqrt(acc + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer<S> {
    kind: OptimizerKind,
    lr: S,
    l2: S,
    eps: S,
    accum: Vec<S>,
}

impl<S: Scalar> Optimizer<S> {
    pub fn new(cfg: &OptimizerConfig, param_count: usize) -> Self {
        let accum = match cfg.kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Adagrad => vec![S::zero(); param_count],
        };
        Optimizer { kind: cfg.kind, lr: S::of(cfg.learning_rate), l2: S::of(cfg.l2), eps: S::of(ADAGRAD_EPS), accum }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Squared-gradient accumulator (empty for SGD).
    pub fn accumulator(&self) -> &[S] {
        &self.accum
    }

    /// Applies one update. A non-finite gradient rejects the whole step and
    /// leaves parameters untouched.
    pub fn step(&mut self, params: &mut [S], grad: &Gradient<S>) -> Result<()> {
        if !grad.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        for (off, vals) in grad.blocks() {
            if off + vals.len() > params.len() {
                return Err(Error::IndexOutOfRange { what: "gradient block", index: off + vals.len(), len: params.len() });
            }
        }
        if self.kind == OptimizerKind::Adagrad && self.accum.len() != params.len() {
            return Err(Error::Precondition("optimizer state does not match parameter count".into()));
        }
        for (off, vals) in grad.blocks() {
            let ps = &mut params[off..off + vals.len()];
            match self.kind {
                OptimizerKind::Sgd => {
                    for (p, &g) in ps.iter_mut().zip(vals) {
                        *p -= self.lr * (g + self.l2 * *p);
                    }
                }
                OptimizerKind::Adagrad => {
                    let acc = &mut self.accum[off..off + vals.len()];
                    for ((p, a), &g) in ps.iter_mut().zip(acc.iter_mut()).zip(vals) {
                        *a += g * g;
                        *p -= self.lr * (g + self.l2 * *p) / (*a + self.eps).sqrt();
                    }
                }
            }
        }
        Ok(())
    }
}
