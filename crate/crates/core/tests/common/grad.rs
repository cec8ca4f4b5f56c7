//! The finite-difference cases, shared by the gradcheck suite and the
//! acceptance run.

use pcf_ecapa::model::{Classifier, ModelConfig, Network};
use pcf_ecapa::nn::{Mode, Module};
use pcf_ecapa::tensor::{ConvSpec, NormMode};
use pcf_ecapa::train::{aam_softmax_loss, circle_loss, LossConfig};
use pcf_ecapa::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{gradcheck, project, rel_err, rng, FD_STEP};

pub const INSTANCES: u64 = 10;
pub const TOL: f64 = 1e-4;

pub struct Case {
    pub name: &'static str,
    /// Relative error of instance `k`.
    pub run: Box<dyn Fn(u64) -> f64>,
}

fn case<G, F>(name: &'static str, make: G, f: F) -> Case
where
    G: Fn(&mut ChaCha8Rng) -> Vec<Tensor> + 'static,
    F: Fn(&[Tensor]) -> Tensor + Copy + 'static,
{
    Case {
        name,
        run: Box::new(move |k| {
            let mut r = rng(k * 7919 + name.len() as u64);
            gradcheck(&make(&mut r), f, k)
        }),
    }
}

fn dims(r: &mut impl Rng) -> [usize; 3] {
    [r.random_range(1..4), r.random_range(1..5), r.random_range(1..7)]
}

fn pair(r: &mut ChaCha8Rng) -> Vec<Tensor> {
    let d = dims(r);
    vec![Tensor::randn(&d, r), Tensor::randn(&d, r)]
}

fn one(r: &mut ChaCha8Rng) -> Vec<Tensor> {
    vec![Tensor::randn(&dims(r), r)]
}

fn bn_case(name: &'static str, mode: NormMode) -> Case {
    case(
        name,
        |r| {
            let [b, c, t] = dims(r);
            vec![Tensor::randn(&[b + 1, c, t + 1], r), Tensor::randn(&[c], r), Tensor::randn(&[c], r)]
        },
        move |x| {
            let c = x[1].numel();
            let (y, _) = x[0].batch_norm(&x[1], &x[2], &vec![0.3; c], &vec![2.0; c], mode).unwrap();
            project(&y, 19)
        },
    )
}

fn weighted_case(name: &'static str, per_channel: bool) -> Case {
    case(
        name,
        move |r| {
            let [b, c, t] = dims(r);
            let wc = if per_channel { c } else { 1 };
            vec![Tensor::randn(&[b, c, t + 1], r), Tensor::randn(&[b, wc, t + 1], r)]
        },
        |x| {
            let w = x[1].softmax_time().unwrap();
            let m = project(&x[0].weighted_mean(&w).unwrap(), 23);
            let s = project(&x[0].weighted_std(&w).unwrap(), 24);
            m.add(&s).unwrap()
        },
    )
}

fn conv_case() -> Case {
    Case {
        name: "conv1d",
        run: Box::new(|k| {
            let mut r = rng(1000 + k);
            let groups = [1, 2, 3][r.random_range(0..3)];
            let kernel = [1, 2, 3, 5][r.random_range(0..4)];
            let dilation = r.random_range(1..4);
            let cin = groups * r.random_range(1..3);
            let cout = groups * r.random_range(1..3);
            let spec = ConvSpec::new(cin, cout, kernel, dilation, groups).unwrap();
            let (b, t) = (r.random_range(1..3), r.random_range(1..9));
            let inputs = vec![
                Tensor::randn(&[b, cin, t], &mut r),
                Tensor::randn(&spec.weight_shape(), &mut r),
                Tensor::randn(&[cout], &mut r),
            ];
            gradcheck(&inputs, move |x| project(&x[0].conv1d(&x[1], Some(&x[2]), &spec).unwrap(), 25), k)
        }),
    }
}

fn loss_case(name: &'static str, circle: bool) -> Case {
    Case {
        name,
        run: Box::new(move |k| {
            let mut r = rng(2000 + k);
            let (b, classes) = (r.random_range(1..5), r.random_range(2..6));
            let labels: Vec<usize> = (0..b).map(|_| r.random_range(0..classes)).collect();
            let cos = Tensor::uniform(&[b, classes], -0.9, 0.9, &mut r);
            if circle {
                gradcheck(&[cos], |x| circle_loss(&x[0], &labels, &LossConfig::circle()).unwrap(), k)
            } else {
                gradcheck(&[cos], |x| aam_softmax_loss(&x[0], &labels, 0.2, 30.0).unwrap(), k)
            }
        }),
    }
}

/// Every differentiable primitive and fused op.
pub fn op_cases() -> Vec<Case> {
    vec![
        case("add", pair, |x| project(&x[0].add(&x[1]).unwrap(), 1)),
        case("mul", pair, |x| project(&x[0].mul(&x[1]).unwrap(), 2)),
        case("mul-self", one, |x| project(&x[0].mul(&x[0]).unwrap(), 3)),
        case(
            "add-broadcast-channel",
            |r| {
                let d = dims(r);
                vec![Tensor::randn(&d, r), Tensor::randn(&[d[1]], r)]
            },
            |x| project(&x[0].add(&x[1]).unwrap().mul(&x[1]).unwrap(), 8),
        ),
        case(
            "mul-broadcast-time",
            |r| {
                let d = dims(r);
                vec![Tensor::randn(&d, r), Tensor::randn(&[d[0], d[1], 1], r)]
            },
            |x| project(&x[1].mul(&x[0]).unwrap().add(&x[1]).unwrap(), 9),
        ),
        case("scale", one, |x| project(&x[0].scale(-2.5), 4)),
        case("relu", one, |x| project(&x[0].relu(), 5)),
        case("sigmoid", one, |x| project(&x[0].sigmoid(), 6)),
        case("tanh", one, |x| project(&x[0].tanh(), 7)),
        case("sum", one, |x| x[0].sum().scale(1.5)),
        case("mean", one, |x| x[0].mean().mul(&x[0].mean()).unwrap()),
        case("reshape", one, |x| {
            let n = x[0].numel();
            project(&x[0].reshape(&[n, 1]).unwrap().sigmoid(), 10)
        }),
        case(
            "concat",
            |r| {
                let [b, _, t] = dims(r);
                vec![Tensor::randn(&[b, 2, t], r), Tensor::randn(&[b, 3, t], r)]
            },
            |x| project(&Tensor::concat_channels(&[x[0].clone(), x[1].clone(), x[0].clone()]).unwrap(), 11),
        ),
        case(
            "narrow",
            |r| {
                let [b, _, t] = dims(r);
                vec![Tensor::randn(&[b, 5, t], r)]
            },
            |x| project(&x[0].narrow_channels(1, 3).unwrap(), 12),
        ),
        case(
            "split",
            |r| {
                let [b, _, t] = dims(r);
                vec![Tensor::randn(&[b, 6, t], r)]
            },
            |x| {
                let p = x[0].split_channels(&[1, 2, 3]).unwrap();
                project(&p[2], 13).add(&project(&p[0], 14)).unwrap()
            },
        ),
        case(
            "expand_time",
            |r| {
                let [b, c, _] = dims(r);
                vec![Tensor::randn(&[b, c], r)]
            },
            |x| project(&x[0].expand_time(4).unwrap(), 15),
        ),
        case("softmax_time", one, |x| project(&x[0].softmax_time().unwrap(), 16)),
        case(
            "l2_normalize_rows",
            |r| {
                let [b, c, _] = dims(r);
                vec![Tensor::randn(&[b, c + 1], r)]
            },
            |x| project(&x[0].l2_normalize_rows().unwrap(), 17),
        ),
        case(
            "matmul_nt",
            |r| {
                let [n, d, m] = dims(r);
                vec![Tensor::randn(&[n, d], r), Tensor::randn(&[m, d], r)]
            },
            |x| project(&x[0].matmul_nt(&x[1]).unwrap(), 18),
        ),
        bn_case("batch_norm-batch", NormMode::Batch),
        bn_case("batch_norm-running", NormMode::Running),
        case("mean_time", one, |x| project(&x[0].mean_time().unwrap(), 21)),
        case(
            "std_time",
            |r| {
                let [b, c, t] = dims(r);
                vec![Tensor::randn(&[b, c, t + 1], r)]
            },
            |x| project(&x[0].std_time().unwrap(), 22),
        ),
        weighted_case("weighted-stats-shared", false),
        weighted_case("weighted-stats-per-channel", true),
        conv_case(),
        loss_case("circle_loss", true),
        loss_case("aam_softmax_loss", false),
    ]
}

/// Worst error over [`INSTANCES`] draws.
pub fn worst(c: &Case) -> f64 {
    (0..INSTANCES).map(|k| (c.run)(k)).fold(0.0, f64::max)
}

/// Two-stage linked model (sub-bands 2 then 1), training-mode forward,
/// cosine classifier and circle loss. Returns the error on the input and on
/// one sampled coordinate of every parameter tensor.
pub fn model_errors(k: u64) -> (f64, f64) {
    let cfg = ModelConfig {
        feat_dim: 16,
        embed_dim: 8,
        mfa_out: 12,
        se_bottleneck: 2,
        attention_bottleneck: 4,
        res2_scale: 4,
        stages: 2,
        ..ModelConfig::pcf_ecapa(16)
    };
    let mut r = rng(3000 + k);
    let mut net = Network::new(&cfg.clone().with_seed(k)).unwrap();
    let clf = Classifier::cosine(cfg.embed_dim, 5, k).unwrap();
    let labels: Vec<usize> = (0..3).map(|_| r.random_range(0..5)).collect();
    let x = Tensor::randn(&[3, 16, 7], &mut r);
    let loss_cfg = LossConfig::circle();
    let loss = |net: &Network, x: &Tensor| {
        let emb = net.embed(x, Mode::Train).unwrap();
        circle_loss(&clf.logits(&emb).unwrap(), &labels, &loss_cfg).unwrap()
    };

    let input_err = gradcheck(&[x.clone()], |xs| loss(&net, &xs[0]), k);

    net.zero_grad();
    loss(&net, &x).backward().unwrap();
    let analytic: Vec<Vec<f64>> = net
        .params()
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();
    let (mut a, mut n) = (Vec::new(), Vec::new());
    for (pi, g) in analytic.iter().enumerate() {
        let j = r.random_range(0..g.len());
        let orig = net.params()[pi].tensor().to_vec();
        let mut eval = |delta: f64| {
            let mut d = orig.clone();
            d[j] += delta;
            net.params_mut()[pi].set(d);
            let v = loss(&net, &x).item();
            net.params_mut()[pi].set(orig.clone());
            v
        };
        n.push((eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP));
        a.push(g[j]);
    }
    (input_err, rel_err(&a, &n))
}
