//! Detection metrics from a single pass over sorted scores.
//!
//! A trial is accepted when its score is at least the threshold. The
//! thresholds swept are the distinct scores in increasing order followed by
//! `+∞` (reject everything).

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalMetrics {
    pub eer: f64,
    pub eer_threshold: f64,
    pub min_dcf: f64,
    pub dcf_threshold: f64,
}

impl EvalMetrics {
    pub fn compute(scores: &[f64], targets: &[bool], cost: &DcfParams) -> Result<Self> {
        let (eer, eer_threshold) = compute_eer(scores, targets)?;
        let (min_dcf, dcf_threshold) = compute_min_dcf(scores, targets, cost)?;
        Ok(EvalMetrics {
            eer,
            eer_threshold,
            min_dcf,
            dcf_threshold,
        })
    }

    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        format!(
            "eer={:.6}\neer_threshold={:.6}\nmin_dcf={:.6}\ndcf_threshold={:.6}\n",
            self.eer, self.eer_threshold, self.min_dcf, self.dcf_threshold
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_miss: f64,
    pub c_fa: f64,
}

impl Default for DcfParams {
    fn default() -> Self {
        DcfParams {
            p_target: 0.01,
            c_miss: 1.0,
            c_fa: 1.0,
        }
    }
}

/// `(threshold, p_miss, p_fa)` at every swept threshold.
pub fn operating_points(scores: &[f64], targets: &[bool]) -> Result<Vec<(f64, f64, f64)>> {
    if scores.len() != targets.len() {
        return Err(Error::Contract(format!(
            "{} scores but {} labels",
            scores.len(),
            targets.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    let n_tar = targets.iter().filter(|t| **t).count();
    let n_non = targets.len() - n_tar;
    if n_tar == 0 || n_non == 0 {
        return Err(Error::Contract(format!(
            "need both classes, got {n_tar} targets and {n_non} nontargets"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (nt, nn) = (n_tar as f64, n_non as f64);
    let mut points = Vec::new();
    let (mut miss, mut fa_rejected) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        points.push((t, miss as f64 / nt, (n_non - fa_rejected) as f64 / nn));
        while i < order.len() && scores[order[i]] == t {
            if targets[order[i]] {
                miss += 1;
            } else {
                fa_rejected += 1;
            }
            i += 1;
        }
    }
    points.push((f64::INFINITY, 1.0, 0.0));
    Ok(points)
}

/// Crossing of the miss and false-alarm curves.
///
/// Returns the first operating point with `p_miss ≥ p_fa` if the two are
/// equal there; otherwise interpolates linearly between it and the previous
/// point. The threshold is interpolated the same way, except that a crossing
/// towards `+∞` reports the last finite threshold.
pub fn compute_eer(scores: &[f64], targets: &[bool]) -> Result<(f64, f64)> {
    let pts = operating_points(scores, targets)?;
    let i = pts
        .iter()
        .position(|&(_, m, f)| m >= f)
        .expect("the +inf point has p_miss = 1 >= p_fa = 0");
    let (t1, m1, f1) = pts[i];
    if m1 == f1 {
        return Ok((m1, if t1.is_finite() { t1 } else { pts[i - 1].0 }));
    }
    let (t0, m0, f0) = pts[i - 1];
    let alpha = (f0 - m0) / ((f0 - m0) - (f1 - m1));
    let eer = m0 + alpha * (m1 - m0);
    let thr = if t1.is_finite() { t0 + alpha * (t1 - t0) } else { t0 };
    Ok((eer, thr))
}

/// Normalized detection cost
/// `(c_miss·p·P_miss + c_fa·(1−p)·P_fa) / min(c_miss·p, c_fa·(1−p))`,
/// minimized over the sweep. Ties go to the lower threshold.
pub fn compute_min_dcf(scores: &[f64], targets: &[bool], cost: &DcfParams) -> Result<(f64, f64)> {
    let DcfParams { p_target: p, c_miss, c_fa } = *cost;
    if !(p > 0.0 && p < 1.0) || !(c_miss > 0.0) || !(c_fa > 0.0) {
        return Err(Error::Config(format!("invalid detection cost parameters {cost:?}")));
    }
    let pts = operating_points(scores, targets)?;
    let norm = (c_miss * p).min(c_fa * (1.0 - p));
    let mut best = (f64::INFINITY, f64::INFINITY);
    for &(t, m, f) in &pts {
        let dcf = (c_miss * p * m + c_fa * (1.0 - p) * f) / norm;
        if dcf < best.0 {
            best = (dcf, t);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_cases() {
        let lab = [true, true, false, false];
        assert_eq!(compute_eer(&[0.9, 0.8, 0.2, 0.1], &lab).unwrap().0, 0.0);
        assert_eq!(compute_eer(&[0.2, 0.1, 0.9, 0.8], &lab).unwrap().0, 1.0);
        let lab = [true, true, true, false, false, false];
        let (eer, thr) = compute_eer(&[0.9, 0.8, 0.4, 0.5, 0.2, 0.1], &lab).unwrap();
        assert_eq!(eer, 1.0 / 3.0);
        assert_eq!(thr, 0.5);
    }

    #[test]
    fn dcf_bounds() {
        let lab = [true, true, false, false];
        let c = DcfParams::default();
        assert_eq!(compute_min_dcf(&[0.9, 0.8, 0.2, 0.1], &lab, &c).unwrap().0, 0.0);
        let (dcf, thr) = compute_min_dcf(&[0.3; 4], &lab, &c).unwrap();
        assert_eq!(dcf, 1.0);
        assert_eq!(thr, f64::INFINITY);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(compute_eer(&[0.1, 0.2], &[true, true]).is_err());
        assert!(compute_min_dcf(&[0.1], &[false], &DcfParams::default()).is_err());
    }

    #[test]
    fn interpolates_between_points() {
        // one target at 0.5, two nontargets at 0.4 and 0.6
        let (eer, thr) = compute_eer(&[0.5, 0.4, 0.6], &[true, false, false]).unwrap();
        // at 0.5: miss 0, fa 1/2; at 0.6: miss 1, fa 1/2 → crossing at 1/2
        assert_eq!(eer, 0.5);
        assert!((thr - 0.55).abs() < 1e-12);
    }
}
