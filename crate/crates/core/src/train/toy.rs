use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::Utterance;
use super::loss::LossConfig;
use super::optim::{adam_step, cyclical_lr, AdamState, ScheduleConfig};
use crate::error::{Error, Result};
use crate::model::{Classifier, Network};
use crate::nn::{Mode, Module};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    pub schedule: ScheduleConfig,
    pub loss: LossConfig,
    /// Seeds batch order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch: 32,
            schedule: ScheduleConfig::toy(),
            loss: LossConfig::circle(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub steps: Vec<StepRecord>,
    /// Eval-mode accuracy of the classifier on the training utterances.
    pub train_accuracy: f64,
}

impl TrainReport {
    /// `step,lr,loss` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::format("training report", e.to_string());
        out.write_record(["step", "lr", "loss"]).map_err(err)?;
        for r in &self.steps {
            out.write_record([r.step.to_string(), format!("{:e}", r.lr), format!("{:.10}", r.loss)])
                .map_err(err)?;
        }
        out.flush().map_err(|e| Error::format("training report", e.to_string()))
    }
}

/// Stacks utterances of equal length into `[B, F, T]`.
pub fn batch_tensor(utts: &[&Utterance], feat_dim: usize) -> Result<Tensor> {
    let t = utts[0].feats.len() / feat_dim;
    if utts.iter().any(|u| u.feats.len() != feat_dim * t) {
        return Err(Error::Contract("utterances in a batch must share feat_dim and length".into()));
    }
    Tensor::new(&[utts.len(), feat_dim, t], utts.iter().flat_map(|u| u.feats.iter().copied()).collect())
}

struct Snapshot {
    params: Vec<Tensor>,
    norms: Vec<(Vec<f64>, Vec<f64>)>,
    adam: AdamState,
}

fn snapshot(net: &Network, clf: &Classifier, adam: &AdamState) -> Snapshot {
    Snapshot {
        params: net.params().iter().chain(clf.params().iter()).map(|p| p.tensor().clone()).collect(),
        norms: net.norms().iter().map(|b| b.running_stats()).collect(),
        adam: adam.clone(),
    }
}

fn restore(net: &mut Network, clf: &mut Classifier, adam: &mut AdamState, s: &Snapshot) {
    let mut params = net.params_mut();
    params.extend(clf.params_mut());
    for (p, t) in params.into_iter().zip(&s.params) {
        p.set(t.to_vec());
    }
    for (b, (m, v)) in net.norms().into_iter().zip(&s.norms) {
        b.set_running_stats(m.clone(), v.clone());
    }
    *adam = s.adam.clone();
}

/// Trains `net` and the cosine classifier with the configured loss, Adam and
/// the cyclical schedule for `cycles × cycle_steps` steps.
///
/// If the loss or a gradient turns non-finite, parameters, running stats and
/// optimizer state are restored to the last good step and
/// [`Error::Diverged`] is returned.
pub fn train_toy(
    net: &mut Network,
    clf: &mut Classifier,
    adam: &mut AdamState,
    data: &[Utterance],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.schedule.validate()?;
    cfg.loss.validate()?;
    if !clf.is_cosine() {
        return Err(Error::Config("margin losses need a cosine classifier".into()));
    }
    if cfg.batch == 0 || data.len() < cfg.batch {
        return Err(Error::Config(format!(
            "batch {} needs at least that many utterances, have {}",
            cfg.batch,
            data.len()
        )));
    }
    if let Some(u) = data.iter().find(|u| u.speaker >= clf.classes()) {
        return Err(Error::Range(format!("{}: speaker {} has no classifier row", u.id, u.speaker)));
    }
    let feat_dim = net.config().feat_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut steps = Vec::with_capacity(cfg.schedule.total_steps());
    for step in 0..cfg.schedule.total_steps() {
        if cursor + cfg.batch > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + cfg.batch];
        cursor += cfg.batch;
        let utts: Vec<&Utterance> = idx.iter().map(|&i| &data[i]).collect();
        let labels: Vec<usize> = utts.iter().map(|u| u.speaker).collect();
        let lr = cyclical_lr(step, &cfg.schedule);

        let good = snapshot(net, clf, adam);
        let x = batch_tensor(&utts, feat_dim)?;
        let emb = net.embed(&x, Mode::Train)?;
        let loss = cfg.loss.apply(&clf.logits(&emb)?, &labels)?;
        let value = loss.item();
        if !value.is_finite() {
            restore(net, clf, adam, &good);
            log::error!("step {step}: loss is {value}");
            return Err(Error::Diverged { step });
        }
        loss.backward()?;
        let mut params = net.params_mut();
        params.extend(clf.params_mut());
        if let Err(e) = adam_step(&mut params, adam, lr, cfg.schedule.weight_decay) {
            drop(params);
            restore(net, clf, adam, &good);
            log::error!("step {step}: {e}");
            return Err(Error::Diverged { step });
        }
        log::debug!("step {step} lr {lr:.3e} loss {value:.6}");
        steps.push(StepRecord { step, lr, loss: value });
    }
    let train_accuracy = accuracy(net, clf, data, cfg.batch)?;
    Ok(TrainReport { steps, train_accuracy })
}

/// Fraction of utterances whose highest classifier logit is their speaker.
pub fn accuracy(net: &Network, clf: &Classifier, data: &[Utterance], batch: usize) -> Result<f64> {
    let feat_dim = net.config().feat_dim;
    let k = clf.classes();
    let mut correct = 0;
    for chunk in data.chunks(batch.max(1)) {
        let utts: Vec<&Utterance> = chunk.iter().collect();
        let logits = clf.logits(&net.embed(&batch_tensor(&utts, feat_dim)?, Mode::Eval)?)?;
        for (row, u) in logits.data().chunks(k).zip(chunk) {
            let best = (0..k).max_by(|&a, &b| row[a].total_cmp(&row[b])).expect("k >= 1");
            correct += usize::from(best == u.speaker);
        }
    }
    Ok(correct as f64 / data.len() as f64)
}
