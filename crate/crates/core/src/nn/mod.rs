//! Layers of the speaker-embedding trunk.
//!
//! Every layer owns its [`Param`]s and exposes them through [`Module`], in
//! declaration order. That order is what the model file format and the
//! optimizer state rely on.

mod asp;
mod layers;
mod res2;
mod se;

pub use asp::AttentiveStatsPool;
pub use layers::{BatchNorm1d, Conv1d, TdnnBlock, BN_MOMENTUM};
pub use res2::{Res2Block, SeRes2Block};
pub use se::SqueezeExcite;

use crate::tensor::Tensor;

/// How a forward pass treats normalization and nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running averages are updated.
    Train,
    /// Running statistics; nothing is mutated.
    Eval,
    /// Structural connectivity probing: activations and batchnorm are the
    /// identity and squeeze-excitation gates are detached constants, so a
    /// nonzero input gradient means "connected by some convolution path".
    Probe,
}

/// A named trainable tensor.
#[derive(Clone, Debug)]
pub struct Param {
    name: String,
    value: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Param {
            name: name.into(),
            value: value.requiring_grad(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tensor(&self) -> &Tensor {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.value.grad()
    }

    /// Replaces the values with a fresh leaf, dropping any gradient.
    pub fn set(&mut self, data: Vec<f64>) {
        let shape = self.value.shape().to_vec();
        self.value = Tensor::param(&shape, data).expect("same shape as before");
    }

    pub fn zero_grad(&self) {
        self.value.zero_grad();
    }
}

/// Parameter and normalization-state enumeration, in declaration order.
pub trait Module {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
    fn norms(&self) -> Vec<&BatchNorm1d>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    fn zero_grad(&self) {
        self.params().iter().for_each(|p| p.zero_grad());
    }
}

/// Joins a parent prefix and a child name with a dot.
pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
