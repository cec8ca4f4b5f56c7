//! Embedding extraction, trial scoring and detection metrics.

mod embed;
mod features;
mod metrics;
mod trials;

use std::collections::BTreeMap;

pub use embed::{extract_embeddings, score_trial, ChunkConfig, Embeddings};
pub use features::{FeatureMatrix, FeatureStore};
pub use metrics::{compute_eer, compute_min_dcf, operating_points, DcfParams, EvalMetrics};
pub use trials::{format_scores, Trial, TrialList};

use crate::error::{Error, Result};
use crate::model::Network;

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub metrics: EvalMetrics,
    /// One score per trial, in trial order.
    pub scores: Vec<f64>,
    /// Ids whose features were padded to the minimum length.
    pub padded: Vec<String>,
}

/// Scores of a trial list plus the ids that were padded.
#[derive(Clone, Debug)]
pub struct TrialScores {
    /// One score per trial, in trial order.
    pub scores: Vec<f64>,
    pub padded: Vec<String>,
}

/// Extracts every referenced utterance once and scores the trials in order.
/// All ids are resolved before any work is done.
pub fn score_trials(net: &Network, store: &FeatureStore, trials: &TrialList, chunks: &ChunkConfig) -> Result<TrialScores> {
    if trials.is_empty() {
        return Err(Error::Contract("empty trial list".into()));
    }
    let mut ids: Vec<&str> = trials
        .trials
        .iter()
        .flat_map(|t| [t.enroll.as_str(), t.test.as_str()])
        .collect();
    ids.sort_unstable();
    ids.dedup();
    let missing: Vec<String> = ids
        .iter()
        .filter(|id| store.get(id).is_none())
        .map(|id| id.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Unresolved(missing));
    }
    let mut emb = BTreeMap::new();
    let mut padded = Vec::new();
    for id in ids {
        let e = extract_embeddings(net, store.get(id).expect("resolved"), chunks)?;
        if e.padded {
            padded.push(id.to_string());
        }
        emb.insert(id, e.rows);
    }
    let scores = trials
        .trials
        .iter()
        .map(|t| score_trial(&emb[t.enroll.as_str()], &emb[t.test.as_str()]))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialScores { scores, padded })
}

/// [`score_trials`] followed by the detection metrics.
pub fn run_eval(
    net: &Network,
    store: &FeatureStore,
    trials: &TrialList,
    chunks: &ChunkConfig,
    cost: &DcfParams,
) -> Result<EvalReport> {
    let TrialScores { scores, padded } = score_trials(net, store, trials, chunks)?;
    let metrics = EvalMetrics::compute(&scores, &trials.labels(), cost)?;
    Ok(EvalReport {
        metrics,
        scores,
        padded,
    })
}
