use crate::error::{Error, Result};
use crate::nn::Param;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments for a fixed list of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        AdamState {
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_params(params: &[&mut Param]) -> Self {
        Self::new(&params.iter().map(|p| p.numel()).collect::<Vec<_>>())
    }
}

/// One Adam update with bias correction and decoupled weight decay
/// `p ← p − lr·m̂/(√v̂ + ε) − lr·wd·p`.
///
/// Parameters without a gradient are treated as having a zero gradient.
/// Every gradient is checked before anything is modified, so a NaN leaves
/// parameters and state untouched.
pub fn adam_step(params: &mut [&mut Param], state: &mut AdamState, lr: f64, weight_decay: f64) -> Result<()> {
    if state.m.len() != params.len() || params.iter().zip(&state.m).any(|(p, m)| p.numel() != m.len()) {
        return Err(Error::Contract("optimizer state does not match the parameter list".into()));
    }
    let grads: Vec<Option<Vec<f64>>> = params.iter().map(|p| p.grad()).collect();
    for (p, g) in params.iter().zip(&grads) {
        if let Some(g) = g {
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {} at index {i} is {}", p.name(), g[i])));
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        let mut data = p.tensor().to_vec();
        for i in 0..data.len() {
            let gi = g.as_ref().map_or(0.0, |g| g[i]);
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
            let update = (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            data[i] -= lr * update + lr * weight_decay * data[i];
        }
        p.set(data);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleConfig {
    pub cycle_steps: usize,
    pub lr_min: f64,
    pub lr_max: f64,
    pub cycles: usize,
    pub weight_decay: f64,
}

impl ScheduleConfig {
    /// Full-scale recipe: three cycles of 100k steps.
    pub fn full() -> Self {
        ScheduleConfig {
            cycle_steps: 100_000,
            ..Self::toy()
        }
    }

    /// Desk-scale recipe: three cycles of 50 steps.
    pub fn toy() -> Self {
        ScheduleConfig {
            cycle_steps: 50,
            lr_min: 1e-8,
            lr_max: 1e-3,
            cycles: 3,
            weight_decay: 5e-5,
        }
    }

    pub fn total_steps(&self) -> usize {
        self.cycle_steps * self.cycles
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycle_steps < 2 {
            return Err(Error::Config(format!("cycle_steps {} must be at least 2", self.cycle_steps)));
        }
        if !(0.0 <= self.lr_min && self.lr_min < self.lr_max && self.lr_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 <= lr_min < lr_max, got {} and {}",
                self.lr_min, self.lr_max
            )));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight_decay {} must be nonnegative", self.weight_decay)));
        }
        Ok(())
    }
}

/// Triangular cyclical learning rate: `lr_min` at the start of every cycle,
/// `lr_max` half way, linear in between. Cycles repeat without restarts.
pub fn cyclical_lr(step: usize, cfg: &ScheduleConfig) -> f64 {
    let phase = (step % cfg.cycle_steps) as f64 / cfg.cycle_steps as f64;
    let f = if phase < 0.5 { 2.0 * phase } else { 2.0 - 2.0 * phase };
    cfg.lr_min * (1.0 - f) + cfg.lr_max * f
}
