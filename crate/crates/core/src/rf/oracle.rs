use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::analytic::{check_anchor, rf_half_window};
use super::map::RFMap;
use crate::error::Result;
use crate::model::{ModelConfig, Network};
use crate::nn::Mode;
use crate::tensor::Tensor;

/// Number of independent weight draws OR-ed together by [`gradient_rf_oracle`].
pub const ORACLE_DRAWS: u64 = 3;

/// Marks `grid[f, t]` where the input gradient of one output unit is nonzero.
///
/// `forward` maps a `[1, F, W]` input to a `[1, C, W]` output; the unit is
/// `(channel, frame)` of that output.
pub fn input_gradient_mask<F>(freq_bins: usize, window: usize, channel: usize, frame: usize, forward: F) -> Result<Vec<bool>>
where
    F: FnOnce(&Tensor) -> Result<Tensor>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(0x0ac1e);
    let x = Tensor::randn(&[1, freq_bins, window], &mut rng).requiring_grad();
    let y = forward(&x)?;
    let mut seed = vec![0.0; y.numel()];
    seed[channel * window + frame] = 1.0;
    y.backward_with(seed)?;
    Ok(x.grad()
        .map(|g| g.iter().map(|v| *v != 0.0).collect())
        .unwrap_or_else(|| vec![false; freq_bins * window]))
}

fn block_output(net: &Network, x: &Tensor, block: usize) -> Result<Tensor> {
    let trunk = net.trunk(x, Mode::Probe)?;
    Ok(match (block, trunk.stem) {
        (0, Some(stem)) => stem,
        (b, _) => trunk.stages[b - 1].clone(),
    })
}

/// Gradient-probe receptive field of one built network, anchored at the centre
/// frame of a `2 * half + 1` window.
pub fn gradient_rf(net: &Network, block: usize, channel: usize, half: usize) -> Result<RFMap> {
    let cfg = net.config();
    check_anchor(cfg, block, channel)?;
    let window = 2 * half + 1;
    let mask = input_gradient_mask(cfg.feat_dim, window, channel, half, |x| block_output(net, x, block))?;
    let mut map = RFMap::new(cfg.variant_name(), block, channel, half, cfg.feat_dim, window);
    for (i, hit) in mask.into_iter().enumerate() {
        if hit {
            map.set(i / window, i % window, true);
        }
    }
    Ok(map)
}

/// Probe-mode gradient connectivity OR-ed over [`ORACLE_DRAWS`] weight draws
/// (seeds `cfg.seed`, `cfg.seed + 1`, ...).
pub fn gradient_rf_oracle(cfg: &ModelConfig, block: usize, channel: usize) -> Result<RFMap> {
    Ok(gradient_rf_maps(cfg, &[(block, channel)])?.remove(0))
}

/// [`gradient_rf_oracle`] for several anchors, sharing the networks.
pub fn gradient_rf_maps(cfg: &ModelConfig, anchors: &[(usize, usize)]) -> Result<Vec<RFMap>> {
    for &(b, c) in anchors {
        check_anchor(cfg, b, c)?;
    }
    let half = rf_half_window(cfg)?;
    let mut maps: Vec<Option<RFMap>> = vec![None; anchors.len()];
    for draw in 0..ORACLE_DRAWS {
        let net = Network::new(&cfg.clone().with_seed(cfg.seed.wrapping_add(draw)))?;
        for (slot, &(block, channel)) in maps.iter_mut().zip(anchors) {
            let m = gradient_rf(&net, block, channel, half)?;
            match slot {
                Some(acc) => acc.merge(&m)?,
                None => *slot = Some(m),
            }
        }
    }
    Ok(maps.into_iter().map(|m| m.expect("at least one draw")).collect())
}
