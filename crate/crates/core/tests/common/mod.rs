#![allow(dead_code)]

use pcf_ecapa::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod grad;
pub mod oracles;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const FD_STEP: f64 = 1e-6;
pub const MAX_COORDS: usize = 48;

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference when both are tiny.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-10 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

/// Coordinates to probe: all of them for small tensors, a random subset otherwise.
pub fn coords<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    if n <= MAX_COORDS {
        (0..n).collect()
    } else {
        (0..MAX_COORDS).map(|_| rng.random_range(0..n)).collect()
    }
}

/// Largest relative error between backprop and central differences over all
/// inputs of a scalar-valued `f`.
pub fn gradcheck<F>(inputs: &[Tensor], f: F, seed: u64) -> f64
where
    F: Fn(&[Tensor]) -> Tensor,
{
    let leaves: Vec<Tensor> = inputs.iter().map(|t| t.detach().requiring_grad()).collect();
    let out = f(&leaves);
    assert_eq!(out.numel(), 1, "gradcheck needs a scalar function");
    out.backward().unwrap();
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for (i, leaf) in leaves.iter().enumerate() {
        let analytic = leaf.grad().unwrap_or_else(|| vec![0.0; leaf.numel()]);
        let idx = coords(leaf.numel(), &mut r);
        let mut a = Vec::with_capacity(idx.len());
        let mut n = Vec::with_capacity(idx.len());
        for &j in &idx {
            let eval = |delta: f64| {
                let mut args: Vec<Tensor> = inputs.iter().map(|t| t.detach()).collect();
                let mut d = args[i].to_vec();
                d[j] += delta;
                args[i] = Tensor::new(args[i].shape(), d).unwrap();
                f(&args).item()
            };
            n.push((eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP));
            a.push(analytic[j]);
        }
        worst = worst.max(rel_err(&a, &n));
    }
    worst
}

/// Random fixed projection used to turn a tensor into a scalar.
pub fn project(t: &Tensor, seed: u64) -> Tensor {
    let r = Tensor::randn(t.shape(), &mut rng(seed ^ 0xfeed));
    t.mul(&r).unwrap().sum()
}

/// Parameter count from the layer recipe alone, without building a network.
pub mod counts {
    use pcf_ecapa::model::ModelConfig;

    fn conv(cin: usize, cout: usize, k: usize, g: usize) -> usize {
        cin / g * cout * k + cout
    }

    fn tdnn(cin: usize, cout: usize, k: usize, g: usize) -> usize {
        conv(cin, cout, k, g) + 2 * cout
    }

    fn block(cfg: &ModelConfig, bands: usize) -> usize {
        let c = cfg.channels;
        let w = c / cfg.res2_scale;
        let per_piece = tdnn(w, w, 3, 1) + if cfg.arch.branch { tdnn(w, w, 1, 1) } else { 0 };
        let hidden = cfg.se_bottleneck * bands;
        2 * tdnn(c, c, 1, bands) + (cfg.res2_scale - 1) * per_piece + conv(c, hidden, 1, bands) + conv(hidden, c, 1, bands)
    }

    pub fn backbone(cfg: &ModelConfig) -> usize {
        let n = cfg.stages;
        let layers = if cfg.arch.deepen { 2 } else { 1 };
        let bands = |i: usize| if cfg.arch.pcf { 1 << (n - 1 - i) } else { 1 };
        let c = cfg.channels;
        let stem = if cfg.arch.pcf {
            (0..n).map(|i| tdnn(cfg.feat_dim, c, 5, bands(i))).sum()
        } else {
            tdnn(cfg.feat_dim, c, 5, 1)
        };
        let trunk: usize = (0..n).map(|i| layers * block(cfg, bands(i))).sum();
        let m = cfg.mfa_out;
        let head = tdnn(n * c, m, 1, 1)
            + conv(3 * m, cfg.attention_bottleneck, 1, 1)
            + conv(cfg.attention_bottleneck, m, 1, 1)
            + 2 * (2 * m)
            + conv(2 * m, cfg.embed_dim, 1, 1);
        stem + trunk + head
    }
}

/// Published sizes in millions, with the tolerance the audit must meet.
pub const PARAM_TARGETS: [(&str, usize, f64); 6] = [
    ("ecapa", 512, 6.2),
    ("ecapa-large", 1024, 14.7),
    ("ecapa-a", 512, 10.7),
    ("ecapa-ab", 512, 10.9),
    ("pcf-ecapa", 512, 8.9),
    ("pcf-ecapa", 1024, 22.2),
];
pub const PARAM_TOLERANCE: f64 = 0.02;

/// Cross-group gradient probes over every grouped layer of a linked model.
pub mod isolation {
    use pcf_ecapa::model::{Network, Stem};
    use pcf_ecapa::nn::Mode;
    use pcf_ecapa::Tensor;

    pub struct Probe {
        pub layer: String,
        pub groups: usize,
        /// Largest |∂ y_out-group / ∂ x_other-group| seen.
        pub leak: f64,
        /// Largest in-group gradient, to show the probe is not trivially zero.
        pub signal: f64,
    }

    /// For every output group, backpropagates ones from that group's outputs
    /// and records the input gradient that lands outside the matching input
    /// group.
    pub fn probe<F>(layer: &str, groups: usize, shape: [usize; 3], f: F) -> Probe
    where
        F: Fn(&Tensor) -> Tensor,
    {
        let [b, cin, t] = shape;
        let gin = cin / groups;
        let (mut leak, mut signal) = (0f64, 0f64);
        for g in 0..groups {
            let x = Tensor::randn(&shape, &mut super::rng(g as u64 + 100)).requiring_grad();
            let y = f(&x);
            let [_, cout, tout] = *y.shape() else { panic!("rank") };
            let gout = cout / groups;
            let mut seed = vec![0.0; y.numel()];
            for bi in 0..b {
                for c in g * gout..(g + 1) * gout {
                    for ti in 0..tout {
                        seed[(bi * cout + c) * tout + ti] = 1.0;
                    }
                }
            }
            y.backward_with(seed).unwrap();
            let grad = x.grad().unwrap_or_else(|| vec![0.0; x.numel()]);
            for bi in 0..b {
                for c in 0..cin {
                    for ti in 0..t {
                        let v = grad[(bi * cin + c) * t + ti].abs();
                        if c / gin == g {
                            signal = signal.max(v);
                        } else {
                            leak = leak.max(v);
                        }
                    }
                }
            }
        }
        Probe { layer: layer.to_string(), groups, leak, signal }
    }

    /// Probes links, pointwise TDNN layers, SE convs, SE as a whole and every
    /// full SE-Res2 block, in training mode.
    pub fn probe_network(net: &Network, batch: usize, frames: usize) -> Vec<Probe> {
        let cfg = net.config();
        let (f, c) = (cfg.feat_dim, cfg.channels);
        let mode = Mode::Train;
        let mut out = Vec::new();
        let Stem::Links(links) = net.stem() else { return out };
        for (i, link) in links.iter().enumerate() {
            let g = link.spec().groups;
            out.push(probe(&format!("link{}", i + 1), g, [batch, f, frames], |x| link.forward(x, mode).unwrap()));
        }
        for (i, stage) in net.stages().iter().enumerate() {
            let g = stage.plan.sub_bands;
            for (j, blk) in stage.layers.iter().enumerate() {
                let name = format!("stage{}.block{}", i + 1, j + 1);
                let shape = [batch, c, frames];
                out.push(probe(&format!("{name}.tdnn1"), g, shape, |x| blk.pre().forward(x, mode).unwrap()));
                out.push(probe(&format!("{name}.res2"), g, shape, |x| blk.res2().forward(x, mode).unwrap()));
                out.push(probe(&format!("{name}.tdnn2"), g, shape, |x| blk.post().forward(x, mode).unwrap()));
                let se = blk.se();
                let hidden = se.squeeze().spec().out_channels;
                out.push(probe(&format!("{name}.se.conv1"), g, [batch, c, 1], |x| se.squeeze().forward(x).unwrap()));
                out.push(probe(&format!("{name}.se.conv2"), g, [batch, hidden, 1], |x| se.excite().forward(x).unwrap()));
                out.push(probe(&format!("{name}.se"), g, shape, |x| se.forward(x, mode).unwrap()));
                out.push(probe(&name, g, shape, |x| blk.forward(x, mode).unwrap()));
            }
        }
        out
    }
}
