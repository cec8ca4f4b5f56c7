//! Independent reference implementations.

use pcf_ecapa::eval::DcfParams;
use pcf_ecapa::train::softplus;
use pcf_ecapa::Tensor;
use rand::Rng;

/// Threshold sweep straight from the definition: every distinct score plus
/// `+∞`, misses and false alarms recounted from scratch at each.
pub fn metrics(scores: &[f64], targets: &[bool], cost: &DcfParams) -> ((f64, f64), (f64, f64)) {
    let mut ts: Vec<f64> = scores.to_vec();
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    ts.push(f64::INFINITY);
    let nt = targets.iter().filter(|t| **t).count() as f64;
    let nn = targets.len() as f64 - nt;
    let pts: Vec<(f64, f64, f64)> = ts
        .iter()
        .map(|&t| {
            let miss = scores.iter().zip(targets).filter(|(s, y)| **y && **s < t).count() as f64;
            let fa = scores.iter().zip(targets).filter(|(s, y)| !**y && **s >= t).count() as f64;
            (t, miss / nt, fa / nn)
        })
        .collect();

    let i = (0..pts.len()).find(|&i| pts[i].1 >= pts[i].2).unwrap();
    let (t1, m1, f1) = pts[i];
    let eer = if m1 == f1 {
        (m1, if t1.is_finite() { t1 } else { pts[i - 1].0 })
    } else {
        let (t0, m0, f0) = pts[i - 1];
        let a = (f0 - m0) / ((f0 - m0) - (f1 - m1));
        (m0 + a * (m1 - m0), if t1.is_finite() { t0 + a * (t1 - t0) } else { t0 })
    };

    let p = cost.p_target;
    let norm = (cost.c_miss * p).min(cost.c_fa * (1.0 - p));
    let mut dcf = (f64::INFINITY, 0.0);
    for &(t, m, f) in &pts {
        let v = (cost.c_miss * p * m + cost.c_fa * (1.0 - p) * f) / norm;
        if v < dcf.0 {
            dcf = (v, t);
        }
    }
    (eer, dcf)
}

/// Up to 200 labelled scores with both classes present; half the sets sit on
/// a coarse grid so ties are common.
pub fn score_set(r: &mut impl Rng) -> (Vec<f64>, Vec<bool>) {
    let n = r.random_range(2..=200);
    let coarse = r.random_bool(0.5);
    loop {
        let targets: Vec<bool> = (0..n).map(|_| r.random_bool(0.3)).collect();
        if targets.iter().any(|t| *t) && targets.iter().any(|t| !*t) {
            let scores = targets
                .iter()
                .map(|&t| {
                    let s: f64 = r.random_range(-1.0..1.0) + if t { 0.5 } else { 0.0 };
                    if coarse { (s * 8.0).round() / 8.0 } else { s }
                })
                .collect();
            return (scores, targets);
        }
    }
}

pub const METRIC_COSTS: [DcfParams; 3] = [
    DcfParams { p_target: 0.01, c_miss: 1.0, c_fa: 1.0 },
    DcfParams { p_target: 0.05, c_miss: 1.0, c_fa: 1.0 },
    DcfParams { p_target: 0.5, c_miss: 10.0, c_fa: 1.0 },
];

pub fn lse(v: &[f64]) -> f64 {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// Circle loss per sample, looped over scalars, averaged over the batch.
pub fn circle(cos: &[f64], labels: &[usize], k: usize, m: f64, g: f64) -> f64 {
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = &cos[i * k..(i + 1) * k];
        let mut neg = Vec::new();
        for (j, &s) in row.iter().enumerate() {
            if j != y {
                neg.push(g * (s + m).max(0.0) * (s - m));
            }
        }
        let sp = row[y];
        let pos = g * (1.0 + m - sp).max(0.0) * ((1.0 - m) - sp);
        total += softplus(lse(&neg) + pos);
    }
    total / labels.len() as f64
}

/// Softmax cross entropy on `s·cos`.
pub fn cross_entropy(cos: &[f64], labels: &[usize], k: usize, s: f64) -> f64 {
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let z: Vec<f64> = cos[i * k..(i + 1) * k].iter().map(|c| s * c).collect();
        total += lse(&z) - z[y];
    }
    total / labels.len() as f64
}

/// Random cosine matrix `[B, K]` over the full `[-1, 1]` range with labels.
pub fn cos_batch(r: &mut impl Rng) -> (Tensor, Vec<usize>, usize) {
    let (b, k) = (r.random_range(1..9), r.random_range(2..12));
    let cos: Vec<f64> = (0..b * k).map(|_| r.random_range(-1.0..=1.0)).collect();
    let labels = (0..b).map(|_| r.random_range(0..k)).collect();
    (Tensor::new(&[b, k], cos).unwrap(), labels, k)
}
