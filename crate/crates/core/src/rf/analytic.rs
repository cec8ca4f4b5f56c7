//! Structural receptive fields of the TDNN trunk, derived from the config
//! alone.
//!
//! Every channel carries the set of input positions it depends on, relative
//! to its own frame. A convolution output's set is the union, over the
//! inputs of its group and over the kernel taps, of the input sets shifted by
//! the tap offset. All outputs of one group share a set, so it is computed
//! once. Squeeze-excitation gates are a global rescaling and contribute no
//! positions; residual sums and Res2 carries are unions.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tensor::ConvSpec;

use super::map::RFMap;

/// What a set of positions looks like: an exact bitset or just its hull.
trait Reach: Sized {
    fn empty(&self) -> Self::Set;
    fn leaf(&self, bin: usize) -> Self::Set;
    fn or_shifted(&self, acc: &mut Self::Set, src: &Self::Set, offset: isize);
    type Set;
}

/// Hull of reachable time offsets, `None` when nothing is reachable.
struct Hull;

impl Reach for Hull {
    type Set = Option<(isize, isize)>;

    fn empty(&self) -> Self::Set {
        None
    }

    fn leaf(&self, _bin: usize) -> Self::Set {
        Some((0, 0))
    }

    fn or_shifted(&self, acc: &mut Self::Set, src: &Self::Set, offset: isize) {
        if let Some((lo, hi)) = *src {
            let (lo, hi) = (lo + offset, hi + offset);
            *acc = Some(match *acc {
                None => (lo, hi),
                Some((a, b)) => (a.min(lo), b.max(hi)),
            });
        }
    }
}

/// Exact positions, frame-major: bit `(t + half) * bins + f`.
struct Grid {
    bins: usize,
    half: usize,
    words: usize,
}

impl Grid {
    fn new(bins: usize, half: usize) -> Self {
        let bits = (2 * half + 1) * bins;
        Grid {
            bins,
            half,
            words: bits.div_ceil(64),
        }
    }
}

impl Reach for Grid {
    type Set = Vec<u64>;

    fn empty(&self) -> Self::Set {
        vec![0; self.words]
    }

    fn leaf(&self, bin: usize) -> Self::Set {
        let mut s = self.empty();
        let bit = self.half * self.bins + bin;
        s[bit / 64] |= 1 << (bit % 64);
        s
    }

    fn or_shifted(&self, acc: &mut Self::Set, src: &Self::Set, offset: isize) {
        // a time shift moves every bit by `offset * bins`
        let shift = offset * self.bins as isize;
        let (ws, bs) = (shift.div_euclid(64), shift.rem_euclid(64) as u32);
        let n = self.words as isize;
        for (i, &w) in src.iter().enumerate() {
            if w == 0 {
                continue;
            }
            let j = i as isize + ws;
            if (0..n).contains(&j) {
                acc[j as usize] |= w << bs;
            }
            if bs > 0 && (0..n).contains(&(j + 1)) {
                acc[(j + 1) as usize] |= w >> (64 - bs);
            }
        }
    }
}

type Channels<S> = Vec<Rc<S>>;

fn conv<R: Reach>(r: &R, input: &[Rc<R::Set>], spec: &ConvSpec) -> Channels<R::Set> {
    let (gin, gout) = (spec.in_channels / spec.groups, spec.out_channels / spec.groups);
    let mut out = Vec::with_capacity(spec.out_channels);
    for g in 0..spec.groups {
        let mut acc = r.empty();
        let mut last: Option<&Rc<R::Set>> = None;
        for src in &input[g * gin..(g + 1) * gin] {
            // neighbouring channels usually share one set
            if last.is_some_and(|l| Rc::ptr_eq(l, src)) {
                continue;
            }
            last = Some(src);
            for j in 0..spec.kernel {
                r.or_shifted(&mut acc, src, spec.tap_offset(j));
            }
        }
        let acc = Rc::new(acc);
        out.extend(std::iter::repeat_n(acc, gout));
    }
    out
}

fn union<R: Reach>(r: &R, a: &[Rc<R::Set>], b: &[Rc<R::Set>]) -> Channels<R::Set> {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if Rc::ptr_eq(x, y) {
                return x.clone();
            }
            let mut acc = r.empty();
            r.or_shifted(&mut acc, x, 0);
            r.or_shifted(&mut acc, y, 0);
            Rc::new(acc)
        })
        .collect()
}

fn spec(cin: usize, cout: usize, k: usize, d: usize, g: usize) -> ConvSpec {
    ConvSpec {
        in_channels: cin,
        out_channels: cout,
        kernel: k,
        dilation: d,
        groups: g,
    }
}

fn se_res2_block<R: Reach>(r: &R, cfg: &ModelConfig, x: &[Rc<R::Set>], dilation: usize, bands: usize) -> Channels<R::Set> {
    let c = cfg.channels;
    let s = cfg.res2_scale;
    let w = c / s;
    let per_band = s / bands;
    let h = conv(r, x, &spec(c, c, 1, 1, bands));
    let mut pieces: Vec<Channels<R::Set>> = vec![h[..w].to_vec()];
    for i in 1..s {
        let xi = &h[i * w..(i + 1) * w];
        let input = if i >= 2 && (i - 1) / per_band == i / per_band {
            union(r, xi, &pieces[i - 1])
        } else {
            xi.to_vec()
        };
        // the optional k=1 branch reads the same input and only adds the
        // zero-offset tap, which the k=3 path already has
        pieces.push(conv(r, &input, &spec(w, w, 3, dilation, 1)));
    }
    let h: Channels<R::Set> = pieces.concat();
    let h = conv(r, &h, &spec(c, c, 1, 1, bands));
    union(r, &h, x)
}

/// Channel sets after the stem (index 0, single-stem models only) and after
/// every stage.
fn trunk<R: Reach>(r: &R, cfg: &ModelConfig) -> Vec<Option<Channels<R::Set>>> {
    let feats: Channels<R::Set> = (0..cfg.feat_dim).map(|f| Rc::new(r.leaf(f))).collect();
    let mut out = Vec::new();
    let plans = cfg.stages();
    let mut prev: Option<Channels<R::Set>> = None;
    if !cfg.arch.pcf {
        let stem = conv(r, &feats, &spec(cfg.feat_dim, cfg.channels, 5, 1, 1));
        out.push(Some(stem.clone()));
        prev = Some(stem);
    } else {
        out.push(None);
    }
    for plan in plans {
        let mut x = if cfg.arch.pcf {
            let link = conv(r, &feats, &spec(cfg.feat_dim, cfg.channels, 5, 1, plan.sub_bands));
            match &prev {
                Some(p) => union(r, &link, p),
                None => link,
            }
        } else {
            prev.clone().expect("stem output")
        };
        for _ in 0..plan.layers {
            x = se_res2_block(r, cfg, &x, plan.dilation, plan.sub_bands);
        }
        out.push(Some(x.clone()));
        prev = Some(x);
    }
    out
}

/// Blocks that can be anchored: the stem (0) for single-stem models, then
/// stages `1..=n`.
pub fn valid_blocks(cfg: &ModelConfig) -> std::ops::RangeInclusive<usize> {
    let first = if cfg.arch.pcf { 1 } else { 0 };
    first..=cfg.stages().len()
}

pub(crate) fn check_anchor(cfg: &ModelConfig, block: usize, channel: usize) -> Result<()> {
    let blocks = valid_blocks(cfg);
    if !blocks.contains(&block) {
        return Err(Error::Range(format!(
            "block {block} not in {}..={} for {}",
            blocks.start(),
            blocks.end(),
            cfg.variant_name()
        )));
    }
    if channel >= cfg.channels {
        return Err(Error::Range(format!("channel {channel} not below {}", cfg.channels)));
    }
    Ok(())
}

/// Largest time offset any trunk unit reaches on either side. Kernels are odd
/// and centred, so a window of `2 * half + 1` frames holds every map.
pub fn rf_half_window(cfg: &ModelConfig) -> Result<usize> {
    cfg.validate()?;
    let reach = trunk(&Hull, cfg);
    let half = reach
        .iter()
        .flatten()
        .flat_map(|chans| chans.iter())
        .filter_map(|s| **s)
        .map(|(lo, hi)| lo.unsigned_abs().max(hi.unsigned_abs()))
        .max()
        .unwrap_or(0);
    Ok(half)
}

/// Analytic receptive field of `channel` at the output of `block`, anchored
/// at the centre frame of a `2 * rf_half_window + 1` window.
pub fn analytic_rf_tdnn(cfg: &ModelConfig, block: usize, channel: usize) -> Result<RFMap> {
    check_anchor(cfg, block, channel)?;
    let half = rf_half_window(cfg)?;
    Ok(analytic_maps(cfg, half, &[(block, channel)]).remove(0))
}

/// Several anchors from one propagation pass.
pub fn analytic_maps(cfg: &ModelConfig, half: usize, anchors: &[(usize, usize)]) -> Vec<RFMap> {
    let grid = Grid::new(cfg.feat_dim, half);
    let sets = trunk(&grid, cfg);
    anchors
        .iter()
        .map(|&(block, channel)| {
            let set = &sets[block].as_ref().expect("checked anchor")[channel];
            let window = 2 * half + 1;
            let mut map = RFMap::new(cfg.variant_name(), block, channel, half, cfg.feat_dim, window);
            for t in 0..window {
                for f in 0..cfg.feat_dim {
                    let bit = t * cfg.feat_dim + f;
                    if set[bit / 64] >> (bit % 64) & 1 == 1 {
                        map.set(f, t, true);
                    }
                }
            }
            map
        })
        .collect()
}
