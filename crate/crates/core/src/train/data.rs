//! Synthetic speakers.
//!
//! Each speaker has a fixed random spectral template `τ ∈ R^F`. An utterance
//! scales it bin-wise by `1 + template_noise·n`, adds an optional session
//! offset drawn from a small fixed subspace shared by all speakers, and
//! repeats the result over `frames` columns with independent frame noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::eval::{FeatureMatrix, FeatureStore, TrialList};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub speakers: usize,
    pub train_utts: usize,
    pub heldout_utts: usize,
    pub frames: usize,
    pub feat_dim: usize,
    pub template_noise: f64,
    pub frame_noise: f64,
    /// Rank of the session subspace; 0 disables session offsets.
    pub session_dims: usize,
    /// Standard deviation of each session coordinate.
    pub session_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            speakers: 20,
            train_utts: 50,
            heldout_utts: 10,
            frames: 32,
            feat_dim: 80,
            template_noise: 0.1,
            frame_noise: 0.5,
            session_dims: 8,
            session_scale: 10.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.speakers < 2 || self.train_utts == 0 || self.frames == 0 || self.feat_dim == 0 {
            return Err(Error::Config(format!(
                "synthetic corpus needs >= 2 speakers and positive utterances, frames and bins: {self:?}"
            )));
        }
        if self.session_dims > self.feat_dim {
            return Err(Error::Config("session_dims exceeds feat_dim".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub speaker: usize,
    /// `feat_dim × frames`, row-major by bin.
    pub feats: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub config: SynthConfig,
    pub templates: Vec<Vec<f64>>,
    pub train: Vec<Utterance>,
    pub heldout: Vec<Utterance>,
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

impl SyntheticCorpus {
    pub fn generate(cfg: &SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let templates = (0..cfg.speakers)
            .map(|_| (0..cfg.feat_dim).map(|_| normal(&mut rng)).collect())
            .collect();
        Self::from_templates(cfg, templates, &mut rng)
    }

    /// Uses the given templates instead of drawing them.
    pub fn with_templates(cfg: &SynthConfig, templates: Vec<Vec<f64>>) -> Result<Self> {
        cfg.validate()?;
        if templates.len() != cfg.speakers || templates.iter().any(|t| t.len() != cfg.feat_dim) {
            return Err(Error::Config("templates do not match speakers × feat_dim".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self::from_templates(cfg, templates, &mut rng)
    }

    fn from_templates(cfg: &SynthConfig, templates: Vec<Vec<f64>>, rng: &mut ChaCha8Rng) -> Result<Self> {
        let basis: Vec<Vec<f64>> = (0..cfg.session_dims)
            .map(|_| {
                let v: Vec<f64> = (0..cfg.feat_dim).map(|_| normal(rng)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        let utt = |speaker: usize, tag: &str, k: usize, rng: &mut ChaCha8Rng| {
            let mut base: Vec<f64> = templates[speaker]
                .iter()
                .map(|t| t * (1.0 + cfg.template_noise * normal(rng)))
                .collect();
            for b in &basis {
                let a = cfg.session_scale * normal(rng);
                base.iter_mut().zip(b).for_each(|(x, bi)| *x += a * bi);
            }
            let feats = base
                .iter()
                .flat_map(|&u| (0..cfg.frames).map(|_| u + cfg.frame_noise * normal(rng)).collect::<Vec<_>>())
                .collect();
            Utterance {
                id: format!("spk{speaker:03}-{tag}{k:03}"),
                speaker,
                feats,
            }
        };
        let mut train = Vec::new();
        let mut heldout = Vec::new();
        for s in 0..cfg.speakers {
            for k in 0..cfg.train_utts {
                train.push(utt(s, "tr", k, rng));
            }
            for k in 0..cfg.heldout_utts {
                heldout.push(utt(s, "ho", k, rng));
            }
        }
        Ok(SyntheticCorpus {
            config: cfg.clone(),
            templates,
            train,
            heldout,
        })
    }
}

impl SyntheticCorpus {
    /// Features of the given utterances keyed by id.
    pub fn store(&self, utts: &[Utterance]) -> FeatureStore {
        let mut store = FeatureStore::default();
        for u in utts {
            let m = FeatureMatrix::new(u.id.clone(), self.config.feat_dim, self.config.frames, u.feats.clone())
                .expect("generated with consistent shape");
            store.insert(m);
        }
        store
    }

    /// All pairs of held-out utterances.
    pub fn heldout_trials(&self) -> TrialList {
        TrialList::all_pairs(self.heldout.iter().map(|u| (u.id.as_str(), u.speaker)))
    }
}
