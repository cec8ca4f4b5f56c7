use rand::Rng;

use super::{join, BatchNorm1d, Conv1d, Mode, Module, Param};
use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, Tensor};

/// Attentive statistics pooling with global context.
///
/// The attention network sees each frame alongside the utterance-level mean
/// and standard deviation (`3C` channels), produces per-channel scores,
/// softmaxes them over time, and returns the weighted mean and weighted
/// standard deviation concatenated into `[B, 2C]`.
#[derive(Clone, Debug)]
pub struct AttentiveStatsPool {
    channels: usize,
    attention: Conv1d,
    score: Conv1d,
}

impl AttentiveStatsPool {
    pub fn new<R: Rng + ?Sized>(prefix: &str, channels: usize, bottleneck: usize, rng: &mut R) -> Result<Self> {
        Ok(AttentiveStatsPool {
            channels,
            attention: Conv1d::new(&join(prefix, "attention"), ConvSpec::new(3 * channels, bottleneck, 1, 1, 1)?, true, rng)?,
            score: Conv1d::new(&join(prefix, "score"), ConvSpec::new(bottleneck, channels, 1, 1, 1)?, true, rng)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.channels
    }

    /// Softmax attention weights `[B, C, T]`.
    pub fn attention_weights(&self, h: &Tensor, mode: Mode) -> Result<Tensor> {
        let [_, c, t] = *h.shape() else {
            return Err(Error::shape("asp", &[0, self.channels, 0], h.shape()));
        };
        if c != self.channels {
            return Err(Error::shape("asp", &[0, self.channels, t], h.shape()));
        }
        let mean = h.mean_time()?.expand_time(t)?;
        let std = h.std_time()?.expand_time(t)?;
        let context = Tensor::concat_channels(&[h.clone(), mean, std])?;
        let a = self.attention.forward(&context)?;
        let a = if mode == Mode::Probe { a } else { a.tanh() };
        self.score.forward(&a)?.softmax_time()
    }

    pub fn forward(&self, h: &Tensor, mode: Mode) -> Result<Tensor> {
        let w = self.attention_weights(h, mode)?;
        let b = h.shape()[0];
        let mu = h.weighted_mean(&w)?.reshape(&[b, self.channels, 1])?;
        let sg = h.weighted_std(&w)?.reshape(&[b, self.channels, 1])?;
        Tensor::concat_channels(&[mu, sg])?.reshape(&[b, 2 * self.channels])
    }
}

impl Module for AttentiveStatsPool {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.attention.params();
        p.extend(self.score.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.attention.params_mut();
        p.extend(self.score.params_mut());
        p
    }

    fn norms(&self) -> Vec<&BatchNorm1d> {
        Vec::new()
    }
}
