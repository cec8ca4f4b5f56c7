mod common;

use common::counts;
use pcf_ecapa::model::{
    build_ablation, count_params, read_model, write_model, AblationStage, Classifier, ModelConfig, Network, Variant,
};
use pcf_ecapa::nn::{Mode, Module};
use pcf_ecapa::{Error, Tensor};

fn config(name: &str, channels: usize) -> ModelConfig {
    let v: Variant = name.parse().unwrap();
    ModelConfig::new(v.arch, channels)
}

#[test]
fn audit_matches_closed_form_for_every_variant() {
    for name in ["ecapa", "ecapa-a", "ecapa-ab", "ecapa-ac", "pcf-ecapa"] {
        for c in [64, 512] {
            let cfg = config(name, c);
            let net = Network::new(&cfg).unwrap();
            assert_eq!(count_params(&net, None).backbone, counts::backbone(&cfg), "{name} C={c}");
        }
    }
    let tiny = ModelConfig::tiny_pcf(32);
    assert_eq!(Network::new(&tiny).unwrap().param_count(), counts::backbone(&tiny));
}

#[test]
fn published_sizes_within_tolerance() {
    for (name, c, millions) in common::PARAM_TARGETS {
        let got = counts::backbone(&config(name, c)) as f64 / 1e6;
        let rel = (got - millions).abs() / millions;
        assert!(rel <= common::PARAM_TOLERANCE, "{name} C={c}: {got:.3}M vs {millions}M");
    }
}

#[test]
fn ablation_ladder_is_ordered() {
    let n: Vec<usize> = AblationStage::ALL
        .iter()
        .map(|s| counts::backbone(&ModelConfig::ablation(*s, 512)))
        .collect();
    // deepening adds the most, the branch a little, fusion grouping removes some
    assert!(n[1] > n[0] && n[2] > n[1] && n[3] < n[2] && n[3] > n[0]);
    let net = build_ablation(AblationStage::AB, 64, 3).unwrap();
    assert_eq!(net.config().arch, AblationStage::AB.architecture());
}

#[test]
fn classifier_counts() {
    let net = Network::new(&ModelConfig::tiny_pcf(16)).unwrap();
    let lin = Classifier::linear(192, 10, 0).unwrap();
    let audit = count_params(&net, Some(&lin));
    assert_eq!(audit.classifier, 192 * 10 + 10);
    assert_eq!(audit.total(true), audit.backbone + 1930);
    assert_eq!(audit.total(false), audit.backbone);
    assert_eq!(Classifier::cosine(192, 10, 0).unwrap().param_count(), 1920);
}

fn tiny() -> Network {
    let net = Network::new(&ModelConfig::tiny_pcf(16).with_seed(9)).unwrap();
    // move running stats off their defaults so the round trip has to carry them
    let x = Tensor::randn(&[4, 80, 12], &mut common::rng(1));
    net.embed(&x, Mode::Train).unwrap();
    net.zero_grad();
    net
}

#[test]
fn save_load_round_trip_is_exact() {
    let net = tiny();
    let mut buf = Vec::new();
    write_model(&mut buf, &net).unwrap();
    let back = read_model(&mut buf.as_slice()).unwrap();
    assert_eq!(back.config(), net.config());
    let x = Tensor::randn(&[2, 80, 20], &mut common::rng(2));
    let a = net.embed(&x, Mode::Eval).unwrap().to_vec();
    let b = back.embed(&x, Mode::Eval).unwrap().to_vec();
    assert_eq!(a, b);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pcfm");
    pcf_ecapa::model::save_model(&path, &net).unwrap();
    let c = pcf_ecapa::model::load_model(&path).unwrap();
    assert_eq!(c.embed(&x, Mode::Eval).unwrap().to_vec(), a);
}

#[test]
fn every_truncation_is_an_error() {
    let mut buf = Vec::new();
    write_model(&mut buf, &tiny()).unwrap();
    let step = (buf.len() / 97).max(1);
    for cut in (0..buf.len()).step_by(step) {
        assert!(read_model(&mut &buf[..cut]).is_err(), "cut at {cut} of {}", buf.len());
    }
}

#[test]
fn tampered_config_fails_the_hash() {
    let mut buf = Vec::new();
    write_model(&mut buf, &tiny()).unwrap();
    let text_start = 12;
    let pos = buf[text_start..].iter().position(|&b| b == b'9').unwrap() + text_start;
    buf[pos] = b'8';
    match read_model(&mut buf.as_slice()) {
        Err(Error::Format { detail, .. }) => assert!(detail.contains("hash"), "{detail}"),
        other => panic!("expected a hash error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn bad_magic_and_missing_file() {
    let mut buf = Vec::new();
    write_model(&mut buf, &tiny()).unwrap();
    buf[0] = b'X';
    assert!(matches!(read_model(&mut buf.as_slice()), Err(Error::Format { .. })));
    assert!(matches!(pcf_ecapa::model::load_model("/nonexistent/model"), Err(Error::Io { .. })));
}

#[test]
fn seeds_are_reproducible() {
    let cfg = ModelConfig::tiny_pcf(16).with_seed(4);
    let a = Network::new(&cfg).unwrap();
    let b = Network::new(&cfg).unwrap();
    let c = Network::new(&cfg.clone().with_seed(5)).unwrap();
    let flat = |n: &Network| n.params().iter().flat_map(|p| p.tensor().to_vec()).collect::<Vec<_>>();
    assert_eq!(flat(&a), flat(&b));
    assert_ne!(flat(&a), flat(&c));
}

#[test]
fn config_text_round_trip_and_errors() {
    let cfg = ModelConfig::pcf_ecapa(256).with_seed(11);
    assert_eq!(ModelConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    assert_eq!(cfg.hash(), ModelConfig::from_text(&cfg.to_text()).unwrap().hash());
    assert_ne!(cfg.hash(), cfg.clone().with_seed(12).hash());
    assert!(matches!("nope".parse::<Variant>(), Err(Error::Config(_))));
    let bad = ModelConfig { channels: 100, ..ModelConfig::pcf_ecapa(512) };
    assert!(bad.validate().is_err());
}
