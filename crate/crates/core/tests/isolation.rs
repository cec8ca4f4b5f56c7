mod common;

use pcf_ecapa::model::{ModelConfig, Network, Stem};
use pcf_ecapa::Error;

#[test]
fn every_grouped_layer_is_block_diagonal() {
    let net = Network::new(&ModelConfig::pcf_ecapa(64)).unwrap();
    let probes = common::isolation::probe_network(&net, 2, 9);
    // 4 links + 4 stages × 2 blocks × 7 probes
    assert_eq!(probes.len(), 4 + 4 * 2 * 7);
    for p in &probes {
        assert_eq!(p.leak, 0.0, "{} leaks {}", p.layer, p.leak);
        assert!(p.signal > 0.0, "{} has no in-group gradient", p.layer);
    }
}

#[test]
fn halving_sequence_is_built_in() {
    for c in [64, 512, 1024] {
        let net = Network::new(&ModelConfig::pcf_ecapa(c)).unwrap();
        let bands: Vec<usize> = net.stages().iter().map(|s| s.plan.sub_bands).collect();
        assert_eq!(bands, vec![8, 4, 2, 1]);
        let Stem::Links(links) = net.stem() else { panic!("linked stem") };
        let link_groups: Vec<usize> = links.iter().map(|l| l.spec().groups).collect();
        assert_eq!(link_groups, bands);
        for s in net.stages() {
            for b in &s.layers {
                assert_eq!(b.pre().spec().groups, s.plan.sub_bands);
                assert_eq!(b.post().spec().groups, s.plan.sub_bands);
                assert_eq!(b.se().squeeze().spec().groups, s.plan.sub_bands);
            }
        }
    }
}

#[test]
fn widths_that_cannot_split_into_bands_are_rejected() {
    for bad in [ModelConfig::pcf_ecapa(100), ModelConfig { feat_dim: 84, ..ModelConfig::pcf_ecapa(64) }] {
        assert!(matches!(Network::new(&bad), Err(Error::Config(_))), "{:?}", bad);
    }
}
