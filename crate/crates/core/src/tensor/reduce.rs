//! Reductions over the time axis of `[B, C, T]` tensors.

use super::Tensor;
use crate::error::{Error, Result};

/// Added to the variance before the square root in every std reduction.
pub const STD_EPS: f64 = 1e-9;

const WEIGHT_SUM_TOL: f64 = 1e-6;

fn dims(op: &'static str, x: &Tensor) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [b, c, t] => Ok((b, c, t)),
        _ => Err(Error::shape(op, &[0, 0, 0], x.shape())),
    }
}

/// Resolves the weight layout: `shared` is true for `[B, 1, T]` weights.
fn weight_layout(op: &'static str, x: &Tensor, w: &Tensor) -> Result<bool> {
    let (b, c, t) = dims(op, x)?;
    let shared = match *w.shape() {
        [wb, 1, wt] if wb == b && wt == t => true,
        [wb, wc, wt] if wb == b && wc == c && wt == t => false,
        _ => return Err(Error::shape(op, &[b, c, t], w.shape())),
    };
    for (i, row) in w.data().chunks(t).enumerate() {
        if row.iter().any(|&v| v < 0.0) {
            return Err(Error::Contract(format!("{op}: negative weight in slice {i}")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Contract(format!("{op}: weights of slice {i} sum to {s}, not 1")));
        }
    }
    Ok(shared)
}

impl Tensor {
    /// `[B, C, T]` → `[B, C]`, plain average over frames.
    pub fn mean_time(&self) -> Result<Tensor> {
        let (b, c, t) = dims("mean_time", self)?;
        let out = self
            .data()
            .chunks(t)
            .map(|r| r.iter().sum::<f64>() / t as f64)
            .collect();
        Ok(Tensor::from_op(vec![b, c], out, vec![self.clone()], move |g| {
            vec![Some(g.iter().flat_map(|&gi| std::iter::repeat_n(gi / t as f64, t)).collect())]
        }))
    }

    /// `[B, C, T]` → `[B, C]`, population standard deviation over frames.
    pub fn std_time(&self) -> Result<Tensor> {
        let (b, c, t) = dims("std_time", self)?;
        let n = t as f64;
        let mut means = Vec::with_capacity(b * c);
        let mut clamped = Vec::with_capacity(b * c);
        let out = self
            .data()
            .chunks(t)
            .map(|r| {
                let m = r.iter().sum::<f64>() / n;
                let var = r.iter().map(|v| v * v).sum::<f64>() / n - m * m;
                means.push(m);
                clamped.push(var < 0.0);
                (var.max(0.0) + STD_EPS).sqrt()
            })
            .collect::<Vec<_>>();
        let (xc, s) = (self.clone(), out.clone());
        Ok(Tensor::from_op(vec![b, c], out, vec![self.clone()], move |g| {
            let mut gx = vec![0.0; xc.numel()];
            for (r, (xr, gr)) in xc.data().chunks(t).zip(gx.chunks_mut(t)).enumerate() {
                if clamped[r] {
                    continue;
                }
                let k = g[r] / (n * s[r]);
                for (o, &v) in gr.iter_mut().zip(xr) {
                    *o = k * (v - means[r]);
                }
            }
            vec![Some(gx)]
        }))
    }

    /// Attention-weighted mean over frames. `w` is `[B, 1, T]` (shared across
    /// channels) or `[B, C, T]`; each slice must be nonnegative and sum to 1.
    pub fn weighted_mean(&self, w: &Tensor) -> Result<Tensor> {
        let shared = weight_layout("weighted_mean", self, w)?;
        let (b, c, t) = dims("weighted_mean", self)?;
        let wrow = move |r: usize| if shared { r / c } else { r };
        let out = self
            .data()
            .chunks(t)
            .enumerate()
            .map(|(r, xr)| {
                let wr = &w.data()[wrow(r) * t..(wrow(r) + 1) * t];
                xr.iter().zip(wr).map(|(x, w)| x * w).sum()
            })
            .collect();
        let (xc, wc) = (self.clone(), w.clone());
        Ok(Tensor::from_op(vec![b, c], out, vec![self.clone(), w.clone()], move |g| {
            let (xd, wd) = (xc.data(), wc.data());
            let mut gx = vec![0.0; xd.len()];
            let mut gw = vec![0.0; wd.len()];
            for r in 0..b * c {
                let wr = wrow(r);
                for tt in 0..t {
                    gx[r * t + tt] = g[r] * wd[wr * t + tt];
                    gw[wr * t + tt] += g[r] * xd[r * t + tt];
                }
            }
            vec![Some(gx), Some(gw)]
        }))
    }

    /// Attention-weighted standard deviation, `sqrt(max(E_w[x²] − E_w[x]², 0) + 1e-9)`.
    pub fn weighted_std(&self, w: &Tensor) -> Result<Tensor> {
        let shared = weight_layout("weighted_std", self, w)?;
        let (b, c, t) = dims("weighted_std", self)?;
        let wrow = move |r: usize| if shared { r / c } else { r };
        let mut means = Vec::with_capacity(b * c);
        let mut clamped = Vec::with_capacity(b * c);
        let out: Vec<f64> = self
            .data()
            .chunks(t)
            .enumerate()
            .map(|(r, xr)| {
                let wr = &w.data()[wrow(r) * t..(wrow(r) + 1) * t];
                let m: f64 = xr.iter().zip(wr).map(|(x, w)| x * w).sum();
                let m2: f64 = xr.iter().zip(wr).map(|(x, w)| x * x * w).sum();
                let var = m2 - m * m;
                means.push(m);
                clamped.push(var < 0.0);
                (var.max(0.0) + STD_EPS).sqrt()
            })
            .collect();
        let (xc, wc, s) = (self.clone(), w.clone(), out.clone());
        Ok(Tensor::from_op(vec![b, c], out, vec![self.clone(), w.clone()], move |g| {
            let (xd, wd) = (xc.data(), wc.data());
            let mut gx = vec![0.0; xd.len()];
            let mut gw = vec![0.0; wd.len()];
            for r in 0..b * c {
                if clamped[r] {
                    continue;
                }
                let wr = wrow(r);
                let (m, k) = (means[r], g[r] / s[r]);
                for tt in 0..t {
                    let x = xd[r * t + tt];
                    gx[r * t + tt] = k * wd[wr * t + tt] * (x - m);
                    gw[wr * t + tt] += 0.5 * k * (x * x - 2.0 * m * x);
                }
            }
            vec![Some(gx), Some(gw)]
        }))
    }
}
