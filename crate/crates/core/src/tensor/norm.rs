//! Batch normalization over `(batch, time)` per channel.

use super::Tensor;
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Normalize with the statistics of the current batch.
    Batch,
    /// Normalize with externally supplied running statistics.
    Running,
}

/// Per-channel statistics observed by a batch-mode forward pass.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance, the form folded into running averages.
    pub var_unbiased: Vec<f64>,
}

impl Tensor {
    /// Normalizes a `[B, C, T]` tensor per channel and applies `gamma`/`beta`.
    ///
    /// In [`NormMode::Running`] the supplied `running_mean`/`running_var`
    /// are used as constants. In [`NormMode::Batch`] the batch statistics
    /// are returned so the caller can update its running averages.
    pub fn batch_norm(
        &self,
        gamma: &Tensor,
        beta: &Tensor,
        running_mean: &[f64],
        running_var: &[f64],
        mode: NormMode,
    ) -> Result<(Tensor, Option<BatchStats>)> {
        let [b, c, t] = *self.shape() else {
            return Err(Error::shape("batch_norm", &[0, gamma.numel(), 0], self.shape()));
        };
        for p in [gamma, beta] {
            if p.shape() != [c] {
                return Err(Error::shape("batch_norm parameter", &[c], p.shape()));
            }
        }
        if running_mean.len() != c || running_var.len() != c {
            return Err(Error::shape("batch_norm running stats", &[c], &[running_mean.len()]));
        }
        let n = (b * t) as f64;
        let x = self.data();
        let row = |bi: usize, ci: usize| &x[(bi * c + ci) * t..(bi * c + ci + 1) * t];

        let (mean, var, stats) = match mode {
            NormMode::Running => (running_mean.to_vec(), running_var.to_vec(), None),
            NormMode::Batch => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ci in 0..c {
                    let s: f64 = (0..b).map(|bi| row(bi, ci).iter().sum::<f64>()).sum();
                    let m = s / n;
                    let ss: f64 = (0..b)
                        .map(|bi| row(bi, ci).iter().map(|v| (v - m) * (v - m)).sum::<f64>())
                        .sum();
                    mean[ci] = m;
                    var[ci] = ss / n;
                }
                let unbiased = if n > 1.0 {
                    var.iter().map(|v| v * n / (n - 1.0)).collect()
                } else {
                    var.clone()
                };
                let stats = BatchStats {
                    mean: mean.clone(),
                    var_unbiased: unbiased,
                };
                (mean, var, Some(stats))
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        let (gd, bd) = (gamma.data(), beta.data());
        for bi in 0..b {
            for ci in 0..c {
                let off = (bi * c + ci) * t;
                for tt in 0..t {
                    let h = (x[off + tt] - mean[ci]) * inv_std[ci];
                    xhat[off + tt] = h;
                    out[off + tt] = gd[ci] * h + bd[ci];
                }
            }
        }

        let (xc, gc, bc) = (self.clone(), gamma.clone(), beta.clone());
        let y = Tensor::from_op(
            vec![b, c, t],
            out,
            vec![self.clone(), gamma.clone(), beta.clone()],
            move |g| {
                let mut sum_g = vec![0.0; c];
                let mut sum_gh = vec![0.0; c];
                for bi in 0..b {
                    for ci in 0..c {
                        let off = (bi * c + ci) * t;
                        for tt in 0..t {
                            sum_g[ci] += g[off + tt];
                            sum_gh[ci] += g[off + tt] * xhat[off + tt];
                        }
                    }
                }
                let gx = xc.requires_grad().then(|| {
                    let gd = gc.data();
                    let mut gx = vec![0.0; g.len()];
                    for bi in 0..b {
                        for ci in 0..c {
                            let off = (bi * c + ci) * t;
                            let k = gd[ci] * inv_std[ci];
                            for tt in 0..t {
                                gx[off + tt] = match mode {
                                    NormMode::Running => k * g[off + tt],
                                    NormMode::Batch => {
                                        k * (g[off + tt] - sum_g[ci] / n - xhat[off + tt] * sum_gh[ci] / n)
                                    }
                                };
                            }
                        }
                    }
                    gx
                });
                vec![gx, gc.requires_grad().then_some(sum_gh), bc.requires_grad().then_some(sum_g)]
            },
        );
        Ok((y, stats))
    }
}
