use rand::Rng;

use super::{join, BatchNorm1d, Conv1d, Mode, Module, Param};
use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, Tensor};

/// Squeeze-excitation: per-channel gates from the time-averaged input.
///
/// With `groups > 1` every sub-band gets its own bottleneck of
/// `bottleneck` units (grouped convolutions), so a band's gates only look at
/// that band's descriptor.
#[derive(Clone, Debug)]
pub struct SqueezeExcite {
    squeeze: Conv1d,
    excite: Conv1d,
}

impl SqueezeExcite {
    pub fn new<R: Rng + ?Sized>(
        prefix: &str,
        channels: usize,
        bottleneck: usize,
        groups: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if bottleneck == 0 {
            return Err(Error::Config("SE bottleneck must be positive".into()));
        }
        let hidden = bottleneck * groups;
        Ok(SqueezeExcite {
            squeeze: Conv1d::new(&join(prefix, "conv1"), ConvSpec::new(channels, hidden, 1, 1, groups)?, true, rng)?,
            excite: Conv1d::new(&join(prefix, "conv2"), ConvSpec::new(hidden, channels, 1, 1, groups)?, true, rng)?,
        })
    }

    pub fn squeeze(&self) -> &Conv1d {
        &self.squeeze
    }

    pub fn excite(&self) -> &Conv1d {
        &self.excite
    }

    /// Gates in `(0, 1)`, shape `[B, C, 1]`.
    pub fn gates(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let [b, c, _] = *x.shape() else {
            return Err(Error::shape("se", &[0, self.squeeze.spec().in_channels, 0], x.shape()));
        };
        let s = x.mean_time()?.reshape(&[b, c, 1])?;
        let h = self.squeeze.forward(&s)?;
        let h = if mode == Mode::Probe { h } else { h.relu() };
        let g = self.excite.forward(&h)?;
        Ok(if mode == Mode::Probe { g.detach() } else { g.sigmoid() })
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        x.mul(&self.gates(x, mode)?)
    }
}

impl Module for SqueezeExcite {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.squeeze.params();
        p.extend(self.excite.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.squeeze.params_mut();
        p.extend(self.excite.params_mut());
        p
    }

    fn norms(&self) -> Vec<&BatchNorm1d> {
        Vec::new()
    }
}
