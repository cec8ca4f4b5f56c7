//! Hierarchical multi-scale convolution and its squeeze-excitation wrapper.
//!
//! A `[B, C, T]` input is cut into `scale` contiguous pieces of width
//! `C / scale`. Piece 0 passes through; piece `i ≥ 1` runs through a
//! `k = 3` TDNN block, and when the previous piece was also convolved and
//! lies in the same sub-band its output is added to the input first.
//! Channels are laid out band-major, so with `sub_bands` groups every band
//! owns `scale / sub_bands` consecutive pieces and the carry never crosses a
//! band boundary. With `sub_bands = 1` this is the usual Res2Net wiring.
//!
//! The optional branch adds a parallel `k = 1` TDNN block on every piece,
//! fed the same input as the `k = 3` path, with the two outputs summed.

use rand::Rng;

use super::{join, BatchNorm1d, Mode, Module, Param, SqueezeExcite, TdnnBlock};
use crate::error::{Error, Result};
use crate::tensor::{ConvSpec, Tensor};

#[derive(Clone, Debug)]
pub struct Res2Block {
    channels: usize,
    scale: usize,
    sub_bands: usize,
    main: Vec<TdnnBlock>,
    branch: Vec<TdnnBlock>,
}

impl Res2Block {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        prefix: &str,
        channels: usize,
        scale: usize,
        kernel: usize,
        dilation: usize,
        sub_bands: usize,
        with_branch: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if scale < 2 || channels % scale != 0 {
            return Err(Error::Config(format!(
                "res2 scale {scale} must be at least 2 and divide {channels} channels"
            )));
        }
        if sub_bands == 0 || scale % sub_bands != 0 {
            return Err(Error::Config(format!(
                "{sub_bands} sub-bands must divide the res2 scale {scale}"
            )));
        }
        let width = channels / scale;
        let mut main = Vec::with_capacity(scale - 1);
        let mut branch = Vec::new();
        for i in 1..scale {
            main.push(TdnnBlock::new(
                &join(prefix, &format!("main{i}")),
                ConvSpec::new(width, width, kernel, dilation, 1)?,
                rng,
            )?);
            if with_branch {
                branch.push(TdnnBlock::new(
                    &join(prefix, &format!("branch{i}")),
                    ConvSpec::new(width, width, 1, 1, 1)?,
                    rng,
                )?);
            }
        }
        Ok(Res2Block {
            channels,
            scale,
            sub_bands,
            main,
            branch,
        })
    }

    pub fn has_branch(&self) -> bool {
        !self.branch.is_empty()
    }

    pub fn width(&self) -> usize {
        self.channels / self.scale
    }

    /// Whether piece `i` adds the output of piece `i - 1` to its input.
    pub fn carries_into(&self, i: usize) -> bool {
        let per_band = self.scale / self.sub_bands;
        i >= 2 && (i - 1) / per_band == i / per_band
    }

    pub fn main_blocks(&self) -> &[TdnnBlock] {
        &self.main
    }

    pub fn branch_blocks(&self) -> &[TdnnBlock] {
        &self.branch
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let c = x.shape().get(1).copied().unwrap_or(0);
        if x.rank() != 3 || c != self.channels {
            return Err(Error::shape("res2", &[0, self.channels, 0], x.shape()));
        }
        let pieces = x.split_channels(&vec![self.width(); self.scale])?;
        let mut outs: Vec<Tensor> = Vec::with_capacity(self.scale);
        outs.push(pieces[0].clone());
        for i in 1..self.scale {
            let input = if self.carries_into(i) {
                pieces[i].add(&outs[i - 1])?
            } else {
                pieces[i].clone()
            };
            let mut y = self.main[i - 1].forward(&input, mode)?;
            if let Some(b) = self.branch.get(i - 1) {
                y = y.add(&b.forward(&input, mode)?)?;
            }
            outs.push(y);
        }
        Tensor::concat_channels(&outs)
    }
}

impl Module for Res2Block {
    fn params(&self) -> Vec<&Param> {
        self.main.iter().chain(&self.branch).flat_map(|b| b.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.main
            .iter_mut()
            .chain(self.branch.iter_mut())
            .flat_map(|b| b.params_mut())
            .collect()
    }

    fn norms(&self) -> Vec<&BatchNorm1d> {
        self.main.iter().chain(&self.branch).flat_map(|b| b.norms()).collect()
    }
}

/// `k=1` TDNN → [`Res2Block`] → `k=1` TDNN → [`SqueezeExcite`], plus the input.
#[derive(Clone, Debug)]
pub struct SeRes2Block {
    pre: TdnnBlock,
    res2: Res2Block,
    post: TdnnBlock,
    se: SqueezeExcite,
}

impl SeRes2Block {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        prefix: &str,
        channels: usize,
        scale: usize,
        dilation: usize,
        sub_bands: usize,
        with_branch: bool,
        se_bottleneck: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let pointwise = ConvSpec::new(channels, channels, 1, 1, sub_bands)?;
        Ok(SeRes2Block {
            pre: TdnnBlock::new(&join(prefix, "tdnn1"), pointwise, rng)?,
            res2: Res2Block::new(&join(prefix, "res2"), channels, scale, 3, dilation, sub_bands, with_branch, rng)?,
            post: TdnnBlock::new(&join(prefix, "tdnn2"), pointwise, rng)?,
            se: SqueezeExcite::new(&join(prefix, "se"), channels, se_bottleneck, sub_bands, rng)?,
        })
    }

    pub fn pre(&self) -> &TdnnBlock {
        &self.pre
    }

    pub fn res2(&self) -> &Res2Block {
        &self.res2
    }

    pub fn post(&self) -> &TdnnBlock {
        &self.post
    }

    pub fn se(&self) -> &SqueezeExcite {
        &self.se
    }

    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let h = self.pre.forward(x, mode)?;
        let h = self.res2.forward(&h, mode)?;
        let h = self.post.forward(&h, mode)?;
        let h = self.se.forward(&h, mode)?;
        h.add(x)
    }
}

impl Module for SeRes2Block {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.pre.params();
        p.extend(self.res2.params());
        p.extend(self.post.params());
        p.extend(self.se.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.pre.params_mut();
        p.extend(self.res2.params_mut());
        p.extend(self.post.params_mut());
        p.extend(self.se.params_mut());
        p
    }

    fn norms(&self) -> Vec<&BatchNorm1d> {
        let mut n = self.pre.norms();
        n.extend(self.res2.norms());
        n.extend(self.post.norms());
        n
    }
}
