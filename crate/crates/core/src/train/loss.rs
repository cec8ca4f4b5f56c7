//! Margin losses over cosine logits `[B, K]`.
//!
//! Both are fused ops: value and gradient come from closed forms rather
//! than a chain of primitive tensor ops.

use crate::error::{Error, Result};
use crate::tensor::{sigmoid, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    Circle,
    Aam,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Relaxation `m` for circle loss, additive angle for AAM.
    pub margin: f64,
    /// `γ` for circle loss, `s` for AAM.
    pub scale: f64,
}

impl LossConfig {
    pub fn circle() -> Self {
        LossConfig {
            kind: LossKind::Circle,
            margin: 0.35,
            scale: 60.0,
        }
    }

    pub fn aam() -> Self {
        LossConfig {
            kind: LossKind::Aam,
            margin: 0.2,
            scale: 30.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(Error::Config(format!("loss margin {} outside (0, 1)", self.margin)));
        }
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::Config(format!("loss scale {} must be positive", self.scale)));
        }
        Ok(())
    }

    pub fn apply(&self, cos: &Tensor, labels: &[usize]) -> Result<Tensor> {
        match self.kind {
            LossKind::Circle => circle_loss(cos, labels, self),
            LossKind::Aam => aam_softmax_loss(cos, labels, self.margin, self.scale),
        }
    }
}

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn check_inputs(cos: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    let [b, k] = *cos.shape() else {
        return Err(Error::shape("loss", &[labels.len(), 0], cos.shape()));
    };
    if b != labels.len() {
        return Err(Error::shape("loss", &[labels.len(), k], cos.shape()));
    }
    if k < 2 {
        return Err(Error::Contract(format!("margin losses need at least 2 classes, got {k}")));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Range(format!("label {y} not below {k} classes")));
    }
    if let Some(c) = cos.data().iter().find(|c| !(c.abs() <= 1.0 + 1e-6)) {
        return Err(Error::Contract(format!("cosine {c} outside [-1, 1]")));
    }
    Ok((b, k))
}

/// Log-sum-exp of a slice with the max factored out; also returns the
/// softmax weights.
fn lse_softmax(a: &[f64]) -> (f64, Vec<f64>) {
    let mx = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = a.iter().map(|v| (v - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    (mx + s.ln(), e.into_iter().map(|v| v / s).collect())
}

/// Circle loss with a single positive per sample, averaged over the batch:
///
/// `softplus(LSE_{j≠y} γ·α_n^j·(s_j − m) + γ·α_p·(1 − m − s_y))`
///
/// with `α_n^j = max(0, s_j + m)` and `α_p = max(0, 1 + m − s_y)`. The
/// weights `α` are differentiated like everything else.
pub fn circle_loss(cos: &Tensor, labels: &[usize], cfg: &LossConfig) -> Result<Tensor> {
    let (b, k) = check_inputs(cos, labels)?;
    let (g, m) = (cfg.scale, cfg.margin);
    let s = cos.data();
    let mut total = 0.0;
    let mut grad = vec![0.0; b * k];
    for (i, &y) in labels.iter().enumerate() {
        let row = &s[i * k..(i + 1) * k];
        let negs: Vec<usize> = (0..k).filter(|&j| j != y).collect();
        let a: Vec<f64> = negs.iter().map(|&j| g * (row[j] + m).max(0.0) * (row[j] - m)).collect();
        let (lse, w) = lse_softmax(&a);
        let sp = row[y];
        let ap = (1.0 + m - sp).max(0.0);
        let z = lse + g * ap * (1.0 - m - sp);
        total += softplus(z);
        let dz = sigmoid(z) / b as f64;
        let gr = &mut grad[i * k..(i + 1) * k];
        for (&j, wj) in negs.iter().zip(&w) {
            // d/ds [max(0, s+m)(s−m)] = 2s on the active side
            if row[j] + m > 0.0 {
                gr[j] = dz * wj * g * 2.0 * row[j];
            }
        }
        if ap > 0.0 {
            gr[y] = -dz * g * 2.0 * (1.0 - sp);
        }
    }
    let value = total / b as f64;
    Ok(Tensor::from_op(vec![1], vec![value], vec![cos.clone()], move |up| {
        vec![Some(grad.iter().map(|v| v * up[0]).collect())]
    }))
}

/// Additive angular margin softmax, averaged over the batch: the target
/// logit is `s·cos(θ_y + margin)`, the others `s·cos θ_j`.
pub fn aam_softmax_loss(cos: &Tensor, labels: &[usize], margin: f64, scale: f64) -> Result<Tensor> {
    let (b, k) = check_inputs(cos, labels)?;
    let s = cos.data();
    let mut total = 0.0;
    let mut grad = vec![0.0; b * k];
    for (i, &y) in labels.iter().enumerate() {
        let row = &s[i * k..(i + 1) * k];
        let cy = row[y].clamp(-1.0, 1.0);
        let theta = cy.acos();
        let mut logits: Vec<f64> = row.iter().map(|c| scale * c).collect();
        logits[y] = scale * (theta + margin).cos();
        let (lse, p) = lse_softmax(&logits);
        total += lse - logits[y];
        let gr = &mut grad[i * k..(i + 1) * k];
        for j in 0..k {
            gr[j] = (p[j] - f64::from(u8::from(j == y))) * scale / b as f64;
        }
        // d cos(θ + m) / d cos θ = sin(θ + m) / sin θ
        let sin = (1.0 - cy * cy).max(1e-24).sqrt();
        gr[y] *= (theta + margin).sin() / sin;
    }
    let value = total / b as f64;
    Ok(Tensor::from_op(vec![1], vec![value], vec![cos.clone()], move |up| {
        vec![Some(grad.iter().map(|v| v * up[0]).collect())]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_hand_case() {
        let cos = Tensor::new(&[1, 2], vec![0.5, 0.5]).unwrap();
        let l = circle_loss(&cos, &[0], &LossConfig::circle()).unwrap();
        assert!((l.item() - softplus(15.3)).abs() < 1e-9);
    }

    #[test]
    fn circle_separated_sample_is_near_zero() {
        let cos = Tensor::new(&[1, 3], vec![1.0, -1.0, -1.0]).unwrap();
        let l = circle_loss(&cos, &[0], &LossConfig::circle()).unwrap();
        // clamped negatives still contribute e^0 each inside the log-sum-exp
        let expect = softplus(2f64.ln() - 60.0 * 0.35 * 0.35);
        assert!((l.item() - expect).abs() < 1e-12);
        assert!(l.item() > 0.0 && l.item() < 2e-3);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cos = Tensor::new(&[1, 2], vec![1.5, 0.0]).unwrap();
        assert!(matches!(circle_loss(&cos, &[0], &LossConfig::circle()), Err(Error::Contract(_))));
        let cos = Tensor::new(&[1, 2], vec![0.5, 0.0]).unwrap();
        assert!(matches!(aam_softmax_loss(&cos, &[2], 0.2, 30.0), Err(Error::Range(_))));
        assert!(circle_loss(&cos, &[0, 1], &LossConfig::circle()).is_err());
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
