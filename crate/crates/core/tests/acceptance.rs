//! The seven acceptance criteria, one PASS/FAIL line each. Exits nonzero if
//! any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{counts, grad, isolation, oracles};
use pcf_ecapa::eval::{compute_eer, compute_min_dcf, run_eval, ChunkConfig, DcfParams};
use pcf_ecapa::model::{count_params, Classifier, ModelConfig, Network, Variant};
use pcf_ecapa::nn::Module;
use pcf_ecapa::rf::{analytic_maps, analytic_rf_tdnn, gradient_rf_maps, rf_half_window};
use pcf_ecapa::train::{
    aam_softmax_loss, circle_loss, softplus, train_toy, AdamState, LossConfig, ScheduleConfig, SynthConfig,
    SyntheticCorpus, TrainConfig,
};
use pcf_ecapa::Tensor;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn param_counts() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, c, target) in common::PARAM_TARGETS {
        let v: Variant = name.parse().unwrap();
        let cfg = ModelConfig::new(v.arch, c);
        let n = count_params(&Network::new(&cfg).unwrap(), None).backbone;
        let rel = (n as f64 / 1e6 - target) / target;
        let ok = rel.abs() <= common::PARAM_TOLERANCE && n == counts::backbone(&cfg);
        pass &= ok;
        parts.push(format!("{name}/{c}={n} ({:+.2}% vs {target}M)", 100.0 * rel));
    }
    outcome(pass, parts.join(", "))
}

fn receptive_fields() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig::pcf_ecapa(512);
    let anchors: Vec<(usize, usize)> = (1..=4).map(|b| (b, 0)).collect();
    let half = rf_half_window(&cfg).unwrap();
    let analytic = analytic_maps(&cfg, half, &anchors);
    let oracle = gradient_rf_maps(&cfg, &anchors).unwrap();
    let agree = analytic.iter().zip(&oracle).all(|(a, o)| a.same_grid(o));
    let coverage: Vec<usize> = analytic.iter().map(|m| m.freq_coverage()).collect();
    let ecapa = analytic_rf_tdnn(&ModelConfig::ecapa(512), 1, 0).unwrap().freq_coverage();
    let secs = start.elapsed().as_secs_f64();
    let pass = agree && coverage == [10, 20, 40, 80] && ecapa == 80 && secs < 60.0;
    outcome(
        pass,
        format!("maps agree: {agree}, pcf coverage {coverage:?}, ecapa block1 {ecapa}/80, {secs:.1}s"),
    )
}

fn gradients() -> Outcome {
    let mut worst_op = ("", 0.0f64);
    let mut failing = Vec::new();
    let cases = grad::op_cases();
    for c in &cases {
        let e = grad::worst(c);
        if !(e < grad::TOL) {
            failing.push(c.name);
        }
        if e > worst_op.1 {
            worst_op = (c.name, e);
        }
    }
    let model = (0..grad::INSTANCES)
        .map(grad::model_errors)
        .fold(0.0f64, |m, (a, b)| m.max(a).max(b));
    let pass = failing.is_empty() && model < grad::TOL;
    outcome(
        pass,
        format!(
            "{} ops x {} instances, worst {} {:.1e}, 2-stage model {model:.1e}{}",
            cases.len(),
            grad::INSTANCES,
            worst_op.0,
            worst_op.1,
            if failing.is_empty() { String::new() } else { format!(", failing {failing:?}") }
        ),
    )
}

fn metric_oracles() -> Outcome {
    let mut r = common::rng(2024);
    let mut mismatches = 0;
    for k in 0..100 {
        let (s, y) = oracles::score_set(&mut r);
        let cost = oracles::METRIC_COSTS[k % 3];
        let (eer, dcf) = oracles::metrics(&s, &y, &cost);
        if compute_eer(&s, &y).unwrap() != eer || compute_min_dcf(&s, &y, &cost).unwrap() != dcf {
            mismatches += 1;
        }
    }
    let third = compute_eer(&[0.9, 0.8, 0.4, 0.5, 0.2, 0.1], &[true, true, true, false, false, false]).unwrap().0;
    let c = DcfParams::default();
    let lab = [true, true, false, false];
    let zero = compute_min_dcf(&[0.9, 0.8, 0.2, 0.1], &lab, &c).unwrap().0;
    let one = compute_min_dcf(&[0.5; 4], &lab, &c).unwrap().0;
    let pass = mismatches == 0 && third == 1.0 / 3.0 && zero == 0.0 && one == 1.0;
    outcome(
        pass,
        format!("{mismatches}/100 sets differ from the sweep oracle; hand cases eer={third} mindcf={zero},{one}"),
    )
}

fn loss_oracles() -> Outcome {
    let mut r = common::rng(99);
    let (mut circle_err, mut aam_err) = (0f64, 0f64);
    for _ in 0..200 {
        let (cos, labels, k) = oracles::cos_batch(&mut r);
        let c = circle_loss(&cos, &labels, &LossConfig::circle()).unwrap().item();
        let want = oracles::circle(&cos.to_vec(), &labels, k, 0.35, 60.0);
        circle_err = circle_err.max((c - want).abs() / want.max(1.0));
        let a = aam_softmax_loss(&cos, &labels, 0.0, 30.0).unwrap().item();
        let want = oracles::cross_entropy(&cos.to_vec(), &labels, k, 30.0);
        aam_err = aam_err.max((a - want).abs() / want.max(1.0));
    }
    let hand = circle_loss(&Tensor::new(&[1, 2], vec![0.5, 0.5]).unwrap(), &[0], &LossConfig::circle())
        .unwrap()
        .item();
    let hand_err = (hand - softplus(15.3)).abs();
    let pass = circle_err <= 1e-10 && aam_err <= 1e-10 && hand_err <= 1e-9;
    outcome(
        pass,
        format!("circle vs oracle {circle_err:.1e}, aam(m=0) vs CE {aam_err:.1e}, hand case off by {hand_err:.1e}"),
    )
}

fn fresh(seed: u64, classes: usize) -> (Network, Classifier, AdamState) {
    let net = Network::new(&ModelConfig::tiny_pcf(64).with_seed(seed)).unwrap();
    let clf = Classifier::cosine(net.config().embed_dim, classes, seed).unwrap();
    let mut params = net.params();
    params.extend(clf.params());
    let adam = AdamState::new(&params.iter().map(|p| p.numel()).collect::<Vec<_>>());
    (net, clf, adam)
}

fn toy_pipeline() -> Outcome {
    let start = Instant::now();
    let corpus = SyntheticCorpus::generate(&SynthConfig::default()).unwrap();
    let speakers = corpus.config.speakers;
    let store = corpus.store(&corpus.heldout);
    let trials = corpus.heldout_trials();
    let chunks = ChunkConfig::default();
    let cost = DcfParams::default();
    let eer = |net: &Network| run_eval(net, &store, &trials, &chunks, &cost).unwrap().metrics.eer;

    let (mut net, mut clf, mut adam) = fresh(0, speakers);
    let untrained = eer(&net);
    let cfg = TrainConfig::default();
    let report = train_toy(&mut net, &mut clf, &mut adam, &corpus.train, &cfg).unwrap();
    let trained = eer(&net);

    // the first cycle of an identical run must replay bit for bit
    let (mut net2, mut clf2, mut adam2) = fresh(0, speakers);
    let one_cycle = TrainConfig { schedule: ScheduleConfig { cycles: 1, ..cfg.schedule }, ..cfg.clone() };
    let replay = train_toy(&mut net2, &mut clf2, &mut adam2, &corpus.train, &one_cycle).unwrap();
    let deterministic = replay.steps[..] == report.steps[..replay.steps.len()];

    let secs = start.elapsed().as_secs_f64();
    let pass = report.train_accuracy > 0.95
        && trained < 0.20
        && (0.35..=0.65).contains(&untrained)
        && deterministic
        && secs < 600.0;
    outcome(
        pass,
        format!(
            "{} steps, train acc {:.3}, held-out EER {:.3} (untrained {:.3}), deterministic: {deterministic}, {secs:.0}s",
            report.steps.len(),
            report.train_accuracy,
            trained,
            untrained
        ),
    )
}

fn group_isolation() -> Outcome {
    let net = Network::new(&ModelConfig::pcf_ecapa(512)).unwrap();
    let probes = isolation::probe_network(&net, 2, 9);
    let leaky: Vec<&str> = probes.iter().filter(|p| p.leak != 0.0 || p.signal == 0.0).map(|p| p.layer.as_str()).collect();
    let bands: Vec<usize> = net.stages().iter().map(|s| s.plan.sub_bands).collect();
    let pass = leaky.is_empty() && bands == [8, 4, 2, 1];
    outcome(
        pass,
        format!(
            "{} grouped layers probed, {} with cross-group gradient; sub-bands {bands:?}",
            probes.len(),
            leaky.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("parameter counts", param_counts),
        ("receptive fields", receptive_fields),
        ("gradient checks", gradients),
        ("metric oracles", metric_oracles),
        ("loss oracles", loss_oracles),
        ("toy end-to-end", toy_pipeline),
        ("group isolation", group_isolation),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        failed += usize::from(!o.pass);
        println!("[{}] {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {}/7 passed", 7 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
