//! Elementwise arithmetic, activations, and shape plumbing.

use super::Tensor;
use crate::error::{Error, Result};

/// How a smaller operand lines up against a `[B, C, T]` operand.
#[derive(Clone, Copy, Debug)]
enum Broadcast {
    Same,
    /// `[C]` against `[B, C, T]`.
    PerChannel { channels: usize, time: usize },
    /// `[B, C, 1]` against `[B, C, T]`.
    PerRow { time: usize },
}

impl Broadcast {
    fn resolve(op: &'static str, big: &[usize], small: &[usize]) -> Result<Self> {
        if big == small {
            return Ok(Broadcast::Same);
        }
        if let [b, c, t] = *big {
            if small == [c] {
                return Ok(Broadcast::PerChannel { channels: c, time: t });
            }
            if small == [b, c, 1] {
                return Ok(Broadcast::PerRow { time: t });
            }
        }
        Err(Error::shape(op, big, small))
    }

    #[inline]
    fn index(self, i: usize) -> usize {
        match self {
            Broadcast::Same => i,
            Broadcast::PerChannel { channels, time } => (i / time) % channels,
            Broadcast::PerRow { time } => i / time,
        }
    }
}

fn order_operands<'a>(a: &'a Tensor, b: &'a Tensor) -> (&'a Tensor, &'a Tensor) {
    if a.numel() >= b.numel() {
        (a, b)
    } else {
        (b, a)
    }
}

fn unary<F, D>(x: &Tensor, f: F, df: D) -> Tensor
where
    F: Fn(f64) -> f64,
    D: Fn(f64, f64) -> f64 + Send + Sync + 'static,
{
    let out: Vec<f64> = x.data().iter().map(|&v| f(v)).collect();
    let xc = x.clone();
    let yc = out.clone();
    Tensor::from_op(x.shape().to_vec(), out, vec![x.clone()], move |g| {
        let gx = g
            .iter()
            .zip(xc.data())
            .zip(&yc)
            .map(|((&g, &x), &y)| g * df(x, y))
            .collect();
        vec![Some(gx)]
    })
}

impl Tensor {
    /// Elementwise sum. One operand may be `[C]` or `[B, C, 1]` against a
    /// `[B, C, T]` partner.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let (big, small) = order_operands(self, other);
        let bc = Broadcast::resolve("add", big.shape(), small.shape())?;
        let out: Vec<f64> = big
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + small.data()[bc.index(i)])
            .collect();
        let small_len = small.numel();
        let big_first = big.same_node(self);
        Ok(Tensor::from_op(
            big.shape().to_vec(),
            out,
            vec![self.clone(), other.clone()],
            move |g| {
                let g_big = g.to_vec();
                let mut g_small = vec![0.0; small_len];
                for (i, &gi) in g.iter().enumerate() {
                    g_small[bc.index(i)] += gi;
                }
                if big_first {
                    vec![Some(g_big), Some(g_small)]
                } else {
                    vec![Some(g_small), Some(g_big)]
                }
            },
        ))
    }

    /// Elementwise product with the same broadcasting rules as [`Tensor::add`].
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        let (big, small) = order_operands(self, other);
        let bc = Broadcast::resolve("mul", big.shape(), small.shape())?;
        let out: Vec<f64> = big
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * small.data()[bc.index(i)])
            .collect();
        let (bt, st) = (big.clone(), small.clone());
        let big_first = big.same_node(self);
        Ok(Tensor::from_op(
            big.shape().to_vec(),
            out,
            vec![self.clone(), other.clone()],
            move |g| {
                let (bd, sd) = (bt.data(), st.data());
                let mut g_big = vec![0.0; bd.len()];
                let mut g_small = vec![0.0; sd.len()];
                for (i, &gi) in g.iter().enumerate() {
                    let j = bc.index(i);
                    g_big[i] = gi * sd[j];
                    g_small[j] += gi * bd[i];
                }
                if big_first {
                    vec![Some(g_big), Some(g_small)]
                } else {
                    vec![Some(g_small), Some(g_big)]
                }
            },
        ))
    }

    pub fn scale(&self, s: f64) -> Tensor {
        unary(self, |v| v * s, move |_, _| s)
    }

    pub fn relu(&self) -> Tensor {
        // relu'(0) = 0
        unary(self, |v| v.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn sigmoid(&self) -> Tensor {
        unary(self, sigmoid, |_, y| y * (1.0 - y))
    }

    pub fn tanh(&self) -> Tensor {
        unary(self, f64::tanh, |_, y| 1.0 - y * y)
    }

    pub fn sum(&self) -> Tensor {
        let n = self.numel();
        let s = self.data().iter().sum();
        Tensor::from_op(vec![1], vec![s], vec![self.clone()], move |g| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel();
        self.sum().scale(1.0 / n as f64)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.numel() {
            return Err(Error::shape("reshape", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.data().to_vec(),
            vec![self.clone()],
            |g| vec![Some(g.to_vec())],
        ))
    }

    /// Concatenates `[B, Ci, T]` tensors along channels.
    pub fn concat_channels(xs: &[Tensor]) -> Result<Tensor> {
        let first = xs
            .first()
            .ok_or_else(|| Error::Contract("concat of an empty list".into()))?;
        let (b, t) = match *first.shape() {
            [b, _, t] => (b, t),
            _ => return Err(Error::shape("concat_channels", &[0, 0, 0], first.shape())),
        };
        let mut widths = Vec::with_capacity(xs.len());
        for x in xs {
            match *x.shape() {
                [xb, c, xt] if xb == b && xt == t => widths.push(c),
                _ => return Err(Error::shape("concat_channels", &[b, 0, t], x.shape())),
            }
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(b * total * t);
        for bi in 0..b {
            for (x, &c) in xs.iter().zip(&widths) {
                out.extend_from_slice(&x.data()[bi * c * t..(bi + 1) * c * t]);
            }
        }
        let widths_bw = widths.clone();
        Ok(Tensor::from_op(
            vec![b, total, t],
            out,
            xs.to_vec(),
            move |g| {
                let mut grads: Vec<Vec<f64>> =
                    widths_bw.iter().map(|&c| Vec::with_capacity(b * c * t)).collect();
                for bi in 0..b {
                    let mut off = bi * total * t;
                    for (gx, &c) in grads.iter_mut().zip(&widths_bw) {
                        gx.extend_from_slice(&g[off..off + c * t]);
                        off += c * t;
                    }
                }
                grads.into_iter().map(Some).collect()
            },
        ))
    }

    /// Channels `start..start + len` of a `[B, C, T]` tensor.
    pub fn narrow_channels(&self, start: usize, len: usize) -> Result<Tensor> {
        let [b, c, t] = *self.shape() else {
            return Err(Error::shape("narrow_channels", &[0, 0, 0], self.shape()));
        };
        if len == 0 || start + len > c {
            return Err(Error::Range(format!(
                "channels {start}..{} of {c}",
                start + len
            )));
        }
        let mut out = Vec::with_capacity(b * len * t);
        for bi in 0..b {
            let base = (bi * c + start) * t;
            out.extend_from_slice(&self.data()[base..base + len * t]);
        }
        Ok(Tensor::from_op(
            vec![b, len, t],
            out,
            vec![self.clone()],
            move |g| {
                let mut gx = vec![0.0; b * c * t];
                for bi in 0..b {
                    let base = (bi * c + start) * t;
                    gx[base..base + len * t].copy_from_slice(&g[bi * len * t..(bi + 1) * len * t]);
                }
                vec![Some(gx)]
            },
        ))
    }

    /// Splits along channels into consecutive pieces of the given widths.
    pub fn split_channels(&self, widths: &[usize]) -> Result<Vec<Tensor>> {
        let c = self.shape().get(1).copied().unwrap_or(0);
        if self.rank() != 3 || widths.iter().sum::<usize>() != c {
            return Err(Error::shape("split_channels", &[0, widths.iter().sum(), 0], self.shape()));
        }
        let mut start = 0;
        widths
            .iter()
            .map(|&w| {
                let piece = self.narrow_channels(start, w);
                start += w;
                piece
            })
            .collect()
    }

    /// Repeats a `[B, C]` tensor along a new trailing time axis.
    pub fn expand_time(&self, t: usize) -> Result<Tensor> {
        let [b, c] = *self.shape() else {
            return Err(Error::shape("expand_time", &[0, 0], self.shape()));
        };
        let out: Vec<f64> = self
            .data()
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, t))
            .collect();
        Ok(Tensor::from_op(
            vec![b, c, t],
            out,
            vec![self.clone()],
            move |g| vec![Some(g.chunks(t).map(|row| row.iter().sum()).collect())],
        ))
    }

    /// Softmax over the last (time) axis of a `[B, C, T]` tensor.
    pub fn softmax_time(&self) -> Result<Tensor> {
        let [_, _, t] = *self.shape() else {
            return Err(Error::shape("softmax_time", &[0, 0, 0], self.shape()));
        };
        let mut out = vec![0.0; self.numel()];
        for (row, o) in self.data().chunks(t).zip(out.chunks_mut(t)) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (oi, &v) in o.iter_mut().zip(row) {
                *oi = (v - m).exp();
                z += *oi;
            }
            o.iter_mut().for_each(|v| *v /= z);
        }
        let y = out.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            move |g| {
                let mut gx = vec![0.0; g.len()];
                for ((gr, yr), gxr) in g.chunks(t).zip(y.chunks(t)).zip(gx.chunks_mut(t)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((o, &gi), &yi) in gxr.iter_mut().zip(gr).zip(yr) {
                        *o = yi * (gi - dot);
                    }
                }
                vec![Some(gx)]
            },
        ))
    }

    /// Scales each row of a `[N, D]` tensor to unit L2 norm.
    pub fn l2_normalize_rows(&self) -> Result<Tensor> {
        let [_, d] = *self.shape() else {
            return Err(Error::shape("l2_normalize_rows", &[0, 0], self.shape()));
        };
        let norms: Vec<f64> = self
            .data()
            .chunks(d)
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        if norms.iter().any(|&n| n == 0.0 || !n.is_finite()) {
            return Err(Error::Contract("zero-norm row cannot be normalized".into()));
        }
        let out: Vec<f64> = self
            .data()
            .chunks(d)
            .zip(&norms)
            .flat_map(|(r, &n)| r.iter().map(move |v| v / n))
            .collect();
        let y = out.clone();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            move |g| {
                let mut gx = vec![0.0; g.len()];
                for (((gr, yr), gxr), &n) in g.chunks(d).zip(y.chunks(d)).zip(gx.chunks_mut(d)).zip(&norms) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((o, &gi), &yi) in gxr.iter_mut().zip(gr).zip(yr) {
                        *o = (gi - yi * dot) / n;
                    }
                }
                vec![Some(gx)]
            },
        ))
    }

    /// `self · otherᵀ` for `[N, D]` and `[M, D]` operands.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        let ([n, d], [m, d2]) = (self.shape(), other.shape()) else {
            return Err(Error::shape("matmul_nt", &[0, 0], self.shape()));
        };
        let (n, m, d) = (*n, *m, *d);
        if d != *d2 {
            return Err(Error::shape("matmul_nt", self.shape(), other.shape()));
        }
        let (a, b) = (self.data(), other.data());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[i * m + j] = dot(&a[i * d..(i + 1) * d], &b[j * d..(j + 1) * d]);
            }
        }
        let (ac, bc) = (self.clone(), other.clone());
        Ok(Tensor::from_op(
            vec![n, m],
            out,
            vec![self.clone(), other.clone()],
            move |g| {
                let (a, b) = (ac.data(), bc.data());
                let ga = ac.requires_grad().then(|| {
                    let mut ga = vec![0.0; n * d];
                    for i in 0..n {
                        for j in 0..m {
                            axpy(g[i * m + j], &b[j * d..(j + 1) * d], &mut ga[i * d..(i + 1) * d]);
                        }
                    }
                    ga
                });
                let gb = bc.requires_grad().then(|| {
                    let mut gb = vec![0.0; m * d];
                    for i in 0..n {
                        for j in 0..m {
                            axpy(g[i * m + j], &a[i * d..(i + 1) * d], &mut gb[j * d..(j + 1) * d]);
                        }
                    }
                    gb
                });
                vec![ga, gb]
            },
        ))
    }
}

#[inline]
pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
