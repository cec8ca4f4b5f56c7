//! Grouped, dilated 1-D convolution with "same" zero padding.

use super::ops::{axpy, dot};
use super::Tensor;
use crate::error::{Error, Result};

/// Geometry of a 1-D convolution. Padding is always "same": the output has
/// as many frames as the input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, dilation: usize, groups: usize) -> Result<Self> {
        let spec = ConvSpec {
            in_channels,
            out_channels,
            kernel,
            dilation,
            groups,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ConvSpec {
            in_channels,
            out_channels,
            kernel,
            dilation,
            groups,
        } = *self;
        if in_channels == 0 || out_channels == 0 || kernel == 0 || dilation == 0 || groups == 0 {
            return Err(Error::Config(format!("conv extents must be positive: {self:?}")));
        }
        if in_channels % groups != 0 || out_channels % groups != 0 {
            return Err(Error::Config(format!(
                "groups={groups} must divide in_channels={in_channels} and out_channels={out_channels}"
            )));
        }
        Ok(())
    }

    /// Number of input frames one output frame sees: `d * (k - 1) + 1`.
    pub fn span(&self) -> usize {
        self.dilation * (self.kernel - 1) + 1
    }

    pub fn weight_shape(&self) -> [usize; 3] {
        [self.out_channels, self.in_channels / self.groups, self.kernel]
    }

    /// Zero frames prepended on the left; the remainder of `span - 1` goes right.
    pub fn left_pad(&self) -> usize {
        (self.span() - 1) / 2
    }

    /// Time offset of tap `j` relative to the output frame.
    pub fn tap_offset(&self, j: usize) -> isize {
        (j * self.dilation) as isize - self.left_pad() as isize
    }
}

/// Frame range `t` for which `t + shift` lands inside `0..len`.
#[inline]
fn valid_range(shift: isize, len: usize) -> (usize, usize) {
    let lo = (-shift).max(0) as usize;
    let hi = (len as isize - shift).clamp(0, len as isize) as usize;
    (lo.min(hi), hi)
}

impl Tensor {
    /// `x: [B, Cin, T]`, `w: [Cout, Cin/g, k]`, `b: [Cout]` → `[B, Cout, T]`.
    pub fn conv1d(&self, w: &Tensor, b: Option<&Tensor>, spec: &ConvSpec) -> Result<Tensor> {
        spec.validate()?;
        let [batch, cin, t] = *self.shape() else {
            return Err(Error::shape("conv1d input", &[0, spec.in_channels, 0], self.shape()));
        };
        if cin != spec.in_channels {
            return Err(Error::shape("conv1d input", &[batch, spec.in_channels, t], self.shape()));
        }
        if w.shape() != spec.weight_shape() {
            return Err(Error::shape("conv1d weight", &spec.weight_shape(), w.shape()));
        }
        if let Some(b) = b {
            if b.shape() != [spec.out_channels] {
                return Err(Error::shape("conv1d bias", &[spec.out_channels], b.shape()));
            }
        }
        let cout = spec.out_channels;
        let cin_g = cin / spec.groups;
        let cout_g = cout / spec.groups;
        let k = spec.kernel;
        let spec = *spec;

        let (xd, wd) = (self.data(), w.data());
        let mut out = vec![0.0; batch * cout * t];
        for bi in 0..batch {
            for o in 0..cout {
                let grp = o / cout_g;
                let row = &mut out[(bi * cout + o) * t..(bi * cout + o + 1) * t];
                if let Some(b) = b {
                    row.fill(b.data()[o]);
                }
                for i in 0..cin_g {
                    let ci = grp * cin_g + i;
                    let xrow = &xd[(bi * cin + ci) * t..(bi * cin + ci + 1) * t];
                    for j in 0..k {
                        let wv = wd[(o * cin_g + i) * k + j];
                        let shift = spec.tap_offset(j);
                        let (lo, hi) = valid_range(shift, t);
                        if lo < hi {
                            let src = (lo as isize + shift) as usize;
                            axpy(wv, &xrow[src..src + (hi - lo)], &mut row[lo..hi]);
                        }
                    }
                }
            }
        }

        let mut parents = vec![self.clone(), w.clone()];
        if let Some(b) = b {
            parents.push(b.clone());
        }
        let (xc, wc) = (self.clone(), w.clone());
        let want_b = b.map(|b| b.requires_grad());
        Ok(Tensor::from_op(vec![batch, cout, t], out, parents, move |g| {
            let (xd, wd) = (xc.data(), wc.data());
            let mut gx = xc.requires_grad().then(|| vec![0.0; xd.len()]);
            let mut gw = wc.requires_grad().then(|| vec![0.0; wd.len()]);
            for bi in 0..batch {
                for o in 0..cout {
                    let grp = o / cout_g;
                    let grow = &g[(bi * cout + o) * t..(bi * cout + o + 1) * t];
                    for i in 0..cin_g {
                        let ci = grp * cin_g + i;
                        let xoff = (bi * cin + ci) * t;
                        for j in 0..k {
                            let widx = (o * cin_g + i) * k + j;
                            let shift = spec.tap_offset(j);
                            let (lo, hi) = valid_range(shift, t);
                            if lo >= hi {
                                continue;
                            }
                            let src = xoff + (lo as isize + shift) as usize;
                            let len = hi - lo;
                            if let Some(gx) = gx.as_mut() {
                                axpy(wd[widx], &grow[lo..hi], &mut gx[src..src + len]);
                            }
                            if let Some(gw) = gw.as_mut() {
                                gw[widx] += dot(&grow[lo..hi], &xd[src..src + len]);
                            }
                        }
                    }
                }
            }
            let mut grads = vec![gx, gw];
            if let Some(want) = want_b {
                grads.push(want.then(|| {
                    let mut gb = vec![0.0; cout];
                    for (r, row) in g.chunks(t).enumerate() {
                        gb[r % cout] += row.iter().sum::<f64>();
                    }
                    gb
                }));
            }
            grads
        }))
    }
}
