mod common;

use common::oracles;
use pcf_ecapa::eval::{compute_eer, compute_min_dcf, DcfParams, EvalMetrics};
use pcf_ecapa::Error;
use proptest::prelude::*;

#[test]
fn matches_brute_force_oracle_exactly() {
    let mut r = common::rng(77);
    let costs = oracles::METRIC_COSTS;
    for k in 0..100 {
        let (s, y) = oracles::score_set(&mut r);
        let cost = costs[k % costs.len()];
        let (eer, dcf) = oracles::metrics(&s, &y, &cost);
        assert_eq!(compute_eer(&s, &y).unwrap(), eer, "set {k}");
        assert_eq!(compute_min_dcf(&s, &y, &cost).unwrap(), dcf, "set {k}");
    }
}

#[test]
fn degenerate_inputs_are_rejected() {
    assert!(matches!(compute_eer(&[0.1, 0.2], &[true, true]), Err(Error::Contract(_))));
    assert!(matches!(compute_eer(&[0.1], &[true, false]), Err(Error::Contract(_))));
    assert!(matches!(compute_eer(&[f64::NAN, 0.2], &[true, false]), Err(Error::NonFinite(_))));
    let bad = DcfParams { p_target: 1.0, ..DcfParams::default() };
    assert!(matches!(compute_min_dcf(&[0.1, 0.2], &[true, false], &bad), Err(Error::Config(_))));
}

#[test]
fn text_report_has_every_key() {
    let m = EvalMetrics::compute(&[0.9, 0.1, 0.4, 0.6], &[true, false, true, false], &DcfParams::default()).unwrap();
    let text = m.to_text();
    for key in ["eer=", "eer_threshold=", "min_dcf=", "dcf_threshold="] {
        assert!(text.contains(key), "{text}");
    }
    assert_eq!(m.eer, 0.5);
}

fn labelled() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((-64i32..64, any::<bool>()), 2..120)
        .prop_filter("both classes", |v| v.iter().any(|x| x.1) && v.iter().any(|x| !x.1))
        .prop_map(|v| v.into_iter().map(|(s, t)| (f64::from(s) / 16.0, t)).unzip())
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(200) })]

    #[test]
    fn invariant_under_increasing_maps((s, y) in labelled()) {
        // exact in binary floating point for these grid scores
        let moved: Vec<f64> = s.iter().map(|v| 4.0 * v + 3.0).collect();
        let (e0, t0) = compute_eer(&s, &y).unwrap();
        let (e1, t1) = compute_eer(&moved, &y).unwrap();
        prop_assert_eq!(e0, e1);
        prop_assert!((4.0 * t0 + 3.0 - t1).abs() < 1e-12);
        let c = DcfParams::default();
        prop_assert_eq!(compute_min_dcf(&s, &y, &c).unwrap().0, compute_min_dcf(&moved, &y, &c).unwrap().0);
    }

    #[test]
    fn invariant_under_duplication((s, y) in labelled()) {
        let s2: Vec<f64> = s.iter().chain(&s).copied().collect();
        let y2: Vec<bool> = y.iter().chain(&y).copied().collect();
        prop_assert_eq!(compute_eer(&s, &y).unwrap(), compute_eer(&s2, &y2).unwrap());
        let c = DcfParams::default();
        prop_assert_eq!(compute_min_dcf(&s, &y, &c).unwrap(), compute_min_dcf(&s2, &y2, &c).unwrap());
    }

    #[test]
    fn bounded((s, y) in labelled(), p in 0.001f64..0.999) {
        let (eer, _) = compute_eer(&s, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&eer));
        let c = DcfParams { p_target: p, c_miss: 1.0, c_fa: 1.0 };
        let (dcf, _) = compute_min_dcf(&s, &y, &c).unwrap();
        prop_assert!((0.0..=1.0).contains(&dcf));
    }

    #[test]
    fn order_of_trials_does_not_matter((s, y) in labelled(), rot in 0usize..1000) {
        let k = rot % s.len();
        let mut s2 = s.clone();
        let mut y2 = y.clone();
        s2.rotate_left(k);
        y2.rotate_left(k);
        prop_assert_eq!(compute_eer(&s, &y).unwrap(), compute_eer(&s2, &y2).unwrap());
    }

    #[test]
    fn separated_classes_give_zero((s, y) in labelled()) {
        let shifted: Vec<f64> = s.iter().zip(&y).map(|(v, t)| if *t { v + 100.0 } else { *v }).collect();
        prop_assert_eq!(compute_eer(&shifted, &y).unwrap().0, 0.0);
        prop_assert_eq!(compute_min_dcf(&shifted, &y, &DcfParams::default()).unwrap().0, 0.0);
    }
}
