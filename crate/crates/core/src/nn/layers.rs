use std::sync::Mutex;

use rand::Rng;

use super::{join, Mode, Module, Param};
use crate::error::Result;
use crate::tensor::{ConvSpec, NormMode, Tensor};

pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct Conv1d {
    spec: ConvSpec,
    weight: Param,
    bias: Option<Param>,
}

impl Conv1d {
    /// Uniform init in `±1/sqrt(fan_in)` for weight and bias.
    pub fn new<R: Rng + ?Sized>(prefix: &str, spec: ConvSpec, bias: bool, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let fan_in = (spec.in_channels / spec.groups * spec.kernel) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let weight = Param::new(join(prefix, "weight"), Tensor::uniform(&spec.weight_shape(), -bound, bound, rng));
        let bias = bias.then(|| {
            Param::new(
                join(prefix, "bias"),
                Tensor::uniform(&[spec.out_channels], -bound, bound, rng),
            )
        });
        Ok(Conv1d { spec, weight, bias })
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub fn weight(&self) -> &Param {
        &self.weight
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.conv1d(self.weight.tensor(), self.bias.as_ref().map(Param::tensor), &self.spec)
    }
}

impl Module for Conv1d {
    fn params(&self) -> Vec<&Param> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }

    fn norms(&self) -> Vec<&BatchNorm1d> {
        Vec::new()
    }
}

#[derive(Debug)]
struct RunningStats {
    mean: Vec<f64>,
    var: Vec<f64>,
}

/// Batch normalization with running statistics. The statistics sit behind a
/// mutex so that training forwards can update them through `&self`.
#[derive(Debug)]
pub struct BatchNorm1d {
    name: String,
    gamma: Param,
    beta: Param,
    running: Mutex<RunningStats>,
}

impl Clone for BatchNorm1d {
    fn clone(&self) -> Self {
        let (mean, var) = self.running_stats();
        BatchNorm1d {
            name: self.name.clone(),
            gamma: self.gamma.clone(),
            beta: self.beta.clone(),
            running: Mutex::new(RunningStats { mean, var }),
        }
    }
}

impl BatchNorm1d {
    pub fn new(prefix: &str, channels: usize) -> Self {
        BatchNorm1d {
            name: prefix.to_string(),
            gamma: Param::new(join(prefix, "gamma"), Tensor::full(&[channels], 1.0)),
            beta: Param::new(join(prefix, "beta"), Tensor::zeros(&[channels])),
            running: Mutex::new(RunningStats {
                mean: vec![0.0; channels],
                var: vec![1.0; channels],
            }),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn channels(&self) -> usize {
        self.gamma.numel()
    }

    pub fn running_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let r = self.running.lock().expect("running stats lock");
        (r.mean.clone(), r.var.clone())
    }

    pub fn set_running_stats(&self, mean: Vec<f64>, var: Vec<f64>) {
        assert_eq!(mean.len(), self.channels());
        assert_eq!(var.len(), self.channels());
        *self.running.lock().expect("running stats lock") = RunningStats { mean, var };
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let norm_mode = match mode {
            Mode::Probe => return Ok(x.clone()),
            Mode::Train => NormMode::Batch,
            Mode::Eval => NormMode::Running,
        };
        let (mean, var) = self.running_stats();
        let (y, stats) = x.batch_norm(self.gamma.tensor(), self.beta.tensor(), &mean, &var, norm_mode)?;
        if let Some(stats) = stats {
            let mut r = self.running.lock().expect("running stats lock");
            for (rm, m) in r.mean.iter_mut().zip(&stats.mean) {
                *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * m;
            }
            for (rv, v) in r.var.iter_mut().zip(&stats.var_unbiased) {
                *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * v;
            }
        }
        Ok(y)
    }
}

impl Module for BatchNorm1d {
    fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn norms(&self) -> Vec<&BatchNorm1d> {
        vec![self]
    }
}

/// Convolution, then ReLU, then batchnorm.
#[derive(Clone, Debug)]
pub struct TdnnBlock {
    conv: Conv1d,
    bn: BatchNorm1d,
}

impl TdnnBlock {
    pub fn new<R: Rng + ?Sized>(prefix: &str, spec: ConvSpec, rng: &mut R) -> Result<Self> {
        Ok(TdnnBlock {
            conv: Conv1d::new(&join(prefix, "conv"), spec, true, rng)?,
            bn: BatchNorm1d::new(&join(prefix, "bn"), spec.out_channels),
        })
    }

    pub fn spec(&self) -> &ConvSpec {
        self.conv.spec()
    }

    pub fn conv(&self) -> &Conv1d {
        &self.conv
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let h = self.conv.forward(x)?;
        let h = if mode == Mode::Probe { h } else { h.relu() };
        self.bn.forward(&h, mode)
    }
}

impl Module for TdnnBlock {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.conv.params();
        p.extend(self.bn.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.conv.params_mut();
        p.extend(self.bn.params_mut());
        p
    }

    fn norms(&self) -> Vec<&BatchNorm1d> {
        vec![&self.bn]
    }
}
