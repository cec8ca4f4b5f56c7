use crate::error::{Error, Result};
use crate::model::Network;
use crate::nn::Mode;
use crate::tensor::Tensor;

use super::features::FeatureMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkConfig {
    pub chunk: usize,
    pub stride: usize,
    /// Utterances shorter than this are padded by repeating frames.
    pub min_frames: usize,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig {
            chunk: 300,
            stride: 150,
            min_frames: 5,
        }
    }
}

impl ChunkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chunk == 0 || self.stride == 0 || self.min_frames == 0 {
            return Err(Error::Config(format!("chunk, stride and min_frames must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Start frames of the windows over `frames` columns. Utterances no longer
    /// than one chunk give a single full-length window.
    pub fn starts(&self, frames: usize) -> Vec<usize> {
        if frames <= self.chunk {
            return vec![0];
        }
        (0..=frames - self.chunk).step_by(self.stride).collect()
    }
}

/// Unit-norm chunk embeddings of one utterance.
#[derive(Clone, Debug)]
pub struct Embeddings {
    /// `[n_chunks, embed_dim]`
    pub rows: Tensor,
    /// Set when the utterance was shorter than `min_frames` and got padded.
    pub padded: bool,
}

pub fn extract_embeddings(net: &Network, feat: &FeatureMatrix, cfg: &ChunkConfig) -> Result<Embeddings> {
    cfg.validate()?;
    let f = net.config().feat_dim;
    if feat.freq_bins != f {
        return Err(Error::shape("extract_embeddings", &[f, feat.frames], &[feat.freq_bins, feat.frames]));
    }
    let (batch, len, padded) = if feat.frames < cfg.min_frames {
        log::warn!("{}: {} frames, padded to {}", feat.id, feat.frames, cfg.min_frames);
        let t = feat.frames;
        let data: Vec<f64> = (0..f)
            .flat_map(|b| (0..cfg.min_frames).map(move |j| feat.data[b * t + j % t]))
            .collect();
        (data, cfg.min_frames, true)
    } else {
        let len = cfg.chunk.min(feat.frames);
        let data = cfg.starts(feat.frames).into_iter().flat_map(|s| feat.window(s, len)).collect();
        (data, len, false)
    };
    let n = batch.len() / (f * len);
    let x = Tensor::new(&[n, f, len], batch)?;
    let rows = net.embed(&x, Mode::Eval)?.l2_normalize_rows()?;
    Ok(Embeddings { rows, padded })
}

/// Mean cosine similarity over all enrolment × test chunk pairs.
pub fn score_trial(enroll: &Tensor, test: &Tensor) -> Result<f64> {
    if enroll.rank() != 2 || test.rank() != 2 || enroll.shape()[1] != test.shape()[1] {
        return Err(Error::shape("score_trial", enroll.shape(), test.shape()));
    }
    let sims = enroll.l2_normalize_rows()?.matmul_nt(&test.l2_normalize_rows()?)?;
    Ok(sims.data().iter().sum::<f64>() / sims.numel() as f64)
}
