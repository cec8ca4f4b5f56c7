use super::map::RFMap;
use crate::error::{Error, Result};

/// One 2-D convolution as `(kernel, stride, dilation)` per axis, frequency first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layer2d {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub dilation: (usize, usize),
}

impl Layer2d {
    pub fn square(kernel: usize, stride: usize) -> Self {
        Layer2d {
            kernel: (kernel, kernel),
            stride: (stride, stride),
            dilation: (1, 1),
        }
    }
}

/// Receptive-field extent along both axes:
/// `r ← r + (k − 1)·d·Π(previous strides)`.
pub fn rf_extent_2d(layers: &[Layer2d]) -> Result<(usize, usize)> {
    if layers.is_empty() {
        return Err(Error::Contract("receptive field of an empty layer stack".into()));
    }
    let (mut rf, mut rt, mut jf, mut jt) = (1, 1, 1, 1);
    for l in layers {
        rf += (l.kernel.0 - 1) * l.dilation.0 * jf;
        rt += (l.kernel.1 - 1) * l.dilation.1 * jt;
        jf *= l.stride.0;
        jt *= l.stride.1;
    }
    Ok((rf, rt))
}

/// A dense 2-D receptive field as a map: every cell of the extent is reachable.
pub fn analytic_rf_2d(model: &str, block: usize, layers: &[Layer2d]) -> Result<RFMap> {
    let (rf, rt) = rf_extent_2d(layers)?;
    let mut map = RFMap::new(model, block, 0, rt / 2, rf, rt);
    for f in 0..rf {
        for t in 0..rt {
            map.set(f, t, true);
        }
    }
    Ok(map)
}

/// Conv layers up to the end of residual stage `block` (1..=4) of a ResNet
/// with the given blocks per stage: a 3×3 stem, then two 3×3 convs per basic
/// block, stride 2 on entry to stages 2..4.
pub fn resnet_layers(blocks_per_stage: &[usize; 4], block: usize) -> Result<Vec<Layer2d>> {
    if !(1..=4).contains(&block) {
        return Err(Error::Range(format!("resnet stage {block} not in 1..=4")));
    }
    let mut layers = vec![Layer2d::square(3, 1)];
    for (stage, &n) in blocks_per_stage.iter().enumerate().take(block) {
        for b in 0..n {
            let stride = if stage > 0 && b == 0 { 2 } else { 1 };
            layers.push(Layer2d::square(3, stride));
            layers.push(Layer2d::square(3, 1));
        }
    }
    Ok(layers)
}

pub const RESNET34_BLOCKS: [usize; 4] = [3, 4, 6, 3];
