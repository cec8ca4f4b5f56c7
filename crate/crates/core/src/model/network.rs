use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, StagePlan};
use crate::error::{Error, Result};
use crate::nn::{join, AttentiveStatsPool, BatchNorm1d, Conv1d, Mode, Module, Param, SeRes2Block, TdnnBlock};
use crate::tensor::{ConvSpec, Tensor};

/// How features enter the backbone.
#[derive(Clone, Debug)]
pub enum Stem {
    /// One `k = 5` TDNN block feeding the first stage.
    Single(TdnnBlock),
    /// One grouped `k = 5` TDNN block per stage, all reading the raw features.
    Links(Vec<TdnnBlock>),
}

#[derive(Clone, Debug)]
pub struct Stage {
    pub plan: StagePlan,
    pub layers: Vec<SeRes2Block>,
}

impl Stage {
    fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h, mode)?;
        }
        Ok(h)
    }
}

/// Intermediate activations of one forward pass.
#[derive(Clone, Debug)]
pub struct Trunk {
    /// Output of the single stem block; `None` for linked models.
    pub stem: Option<Tensor>,
    /// Output of every backbone stage, `[B, C, T]` each.
    pub stages: Vec<Tensor>,
}

/// The speaker-embedding network: stem, SE-Res2 stages, multi-layer feature
/// aggregation, attentive statistics pooling and the embedding projection.
#[derive(Clone, Debug)]
pub struct Network {
    config: ModelConfig,
    stem: Stem,
    stages: Vec<Stage>,
    mfa: TdnnBlock,
    pool: AttentiveStatsPool,
    pool_bn: BatchNorm1d,
    fc: Conv1d,
}

impl Network {
    /// Builds and initializes a network; all draws come from `config.seed`.
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let c = config.channels;
        let plans = config.stages();
        let stem = if config.arch.pcf {
            let links = plans
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    TdnnBlock::new(
                        &format!("link{}", i + 1),
                        ConvSpec::new(config.feat_dim, c, 5, 1, p.sub_bands)?,
                        &mut rng,
                    )
                })
                .collect::<Result<_>>()?;
            Stem::Links(links)
        } else {
            Stem::Single(TdnnBlock::new("layer1", ConvSpec::new(config.feat_dim, c, 5, 1, 1)?, &mut rng)?)
        };
        let mut stages = Vec::with_capacity(plans.len());
        for (i, plan) in plans.iter().enumerate() {
            let prefix = format!("stage{}", i + 1);
            let layers = (0..plan.layers)
                .map(|j| {
                    SeRes2Block::new(
                        &join(&prefix, &format!("block{}", j + 1)),
                        c,
                        config.res2_scale,
                        plan.dilation,
                        plan.sub_bands,
                        config.arch.branch,
                        config.se_bottleneck,
                        &mut rng,
                    )
                })
                .collect::<Result<_>>()?;
            stages.push(Stage { plan: *plan, layers });
        }
        let mfa = TdnnBlock::new("mfa", ConvSpec::new(plans.len() * c, config.mfa_out, 1, 1, 1)?, &mut rng)?;
        let pool = AttentiveStatsPool::new("asp", config.mfa_out, config.attention_bottleneck, &mut rng)?;
        let pool_bn = BatchNorm1d::new("asp_bn", 2 * config.mfa_out);
        let fc = Conv1d::new("fc", ConvSpec::new(2 * config.mfa_out, config.embed_dim, 1, 1, 1)?, true, &mut rng)?;
        Ok(Network {
            config: config.clone(),
            stem,
            stages,
            mfa,
            pool,
            pool_bn,
            fc,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn stem(&self) -> &Stem {
        &self.stem
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn mfa(&self) -> &TdnnBlock {
        &self.mfa
    }

    pub fn pool(&self) -> &AttentiveStatsPool {
        &self.pool
    }

    pub fn pool_bn(&self) -> &BatchNorm1d {
        &self.pool_bn
    }

    pub fn fc(&self) -> &Conv1d {
        &self.fc
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        match *x.shape() {
            [_, f, _] if f == self.config.feat_dim => Ok(()),
            _ => Err(Error::shape("network", &[0, self.config.feat_dim, 0], x.shape())),
        }
    }

    /// Runs the backbone on `[B, F, T]` features.
    pub fn trunk(&self, x: &Tensor, mode: Mode) -> Result<Trunk> {
        self.check_input(x)?;
        let mut outs: Vec<Tensor> = Vec::with_capacity(self.stages.len());
        let stem_out = match &self.stem {
            Stem::Single(block) => Some(block.forward(x, mode)?),
            Stem::Links(_) => None,
        };
        for (i, stage) in self.stages.iter().enumerate() {
            let input = match (&self.stem, outs.last()) {
                (Stem::Links(links), None) => links[i].forward(x, mode)?,
                (Stem::Links(links), Some(prev)) => links[i].forward(x, mode)?.add(prev)?,
                (Stem::Single(_), None) => stem_out.clone().expect("single stem output"),
                (Stem::Single(_), Some(prev)) => prev.clone(),
            };
            outs.push(stage.forward(&input, mode)?);
        }
        Ok(Trunk {
            stem: stem_out,
            stages: outs,
        })
    }

    /// `[B, F, T]` features to `[B, embed_dim]` embeddings.
    pub fn embed(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let trunk = self.trunk(x, mode)?;
        let b = x.shape()[0];
        let h = self.mfa.forward(&Tensor::concat_channels(&trunk.stages)?, mode)?;
        let pooled = self.pool.forward(&h, mode)?;
        let pooled = pooled.reshape(&[b, 2 * self.config.mfa_out, 1])?;
        let pooled = self.pool_bn.forward(&pooled, mode)?;
        self.fc.forward(&pooled)?.reshape(&[b, self.config.embed_dim])
    }

    /// Parameter counts per top-level layer, in declaration order.
    pub fn layer_counts(&self) -> Vec<(String, usize)> {
        let mut rows = Vec::new();
        match &self.stem {
            Stem::Single(b) => rows.push(("layer1".to_string(), b.param_count())),
            Stem::Links(links) => {
                for (i, l) in links.iter().enumerate() {
                    rows.push((format!("link{}", i + 1), l.param_count()));
                }
            }
        }
        for (i, s) in self.stages.iter().enumerate() {
            rows.push((format!("stage{}", i + 1), s.layers.iter().map(|l| l.param_count()).sum()));
        }
        rows.push(("mfa".to_string(), self.mfa.param_count()));
        rows.push(("asp".to_string(), self.pool.param_count()));
        rows.push(("asp_bn".to_string(), self.pool_bn.param_count()));
        rows.push(("fc".to_string(), self.fc.param_count()));
        rows
    }
}

impl Module for Network {
    fn params(&self) -> Vec<&Param> {
        let mut p: Vec<&Param> = match &self.stem {
            Stem::Single(b) => b.params(),
            Stem::Links(links) => links.iter().flat_map(|l| l.params()).collect(),
        };
        for s in &self.stages {
            p.extend(s.layers.iter().flat_map(|l| l.params()));
        }
        p.extend(self.mfa.params());
        p.extend(self.pool.params());
        p.extend(self.pool_bn.params());
        p.extend(self.fc.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p: Vec<&mut Param> = match &mut self.stem {
            Stem::Single(b) => b.params_mut(),
            Stem::Links(links) => links.iter_mut().flat_map(|l| l.params_mut()).collect(),
        };
        for s in &mut self.stages {
            p.extend(s.layers.iter_mut().flat_map(|l| l.params_mut()));
        }
        p.extend(self.mfa.params_mut());
        p.extend(self.pool.params_mut());
        p.extend(self.pool_bn.params_mut());
        p.extend(self.fc.params_mut());
        p
    }

    fn norms(&self) -> Vec<&BatchNorm1d> {
        let mut n: Vec<&BatchNorm1d> = match &self.stem {
            Stem::Single(b) => b.norms(),
            Stem::Links(links) => links.iter().flat_map(|l| l.norms()).collect(),
        };
        for s in &self.stages {
            n.extend(s.layers.iter().flat_map(|l| l.norms()));
        }
        n.extend(self.mfa.norms());
        n.push(&self.pool_bn);
        n
    }
}

/// Speaker classifier over embeddings.
#[derive(Clone, Debug)]
pub struct Classifier {
    weight: Param,
    bias: Option<Param>,
}

impl Classifier {
    /// Cosine classifier: logits are cosines between the normalized embedding
    /// and normalized class centres. No bias.
    pub fn cosine(embed_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        Self::build(embed_dim, classes, seed, false)
    }

    /// Plain affine layer `emb · Wᵀ + b`.
    pub fn linear(embed_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        Self::build(embed_dim, classes, seed, true)
    }

    fn build(embed_dim: usize, classes: usize, seed: u64, bias: bool) -> Result<Self> {
        if embed_dim == 0 || classes == 0 {
            return Err(Error::Config("classifier needs positive embedding and class counts".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c1a5);
        let bound = 1.0 / (embed_dim as f64).sqrt();
        Ok(Classifier {
            weight: Param::new("classifier.weight", Tensor::uniform(&[classes, embed_dim], -bound, bound, &mut rng)),
            bias: bias.then(|| Param::new("classifier.bias", Tensor::uniform(&[classes], -bound, bound, &mut rng))),
        })
    }

    pub fn is_cosine(&self) -> bool {
        self.bias.is_none()
    }

    pub fn classes(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn weight(&self) -> &Param {
        &self.weight
    }

    /// `[B, D]` embeddings to `[B, classes]` logits.
    pub fn logits(&self, emb: &Tensor) -> Result<Tensor> {
        match &self.bias {
            None => emb
                .l2_normalize_rows()?
                .matmul_nt(&self.weight.tensor().l2_normalize_rows()?),
            Some(b) => {
                let z = emb.matmul_nt(self.weight.tensor())?;
                let (n, k) = (z.shape()[0], z.shape()[1]);
                z.reshape(&[n, k, 1])?.add(b.tensor())?.reshape(&[n, k])
            }
        }
    }
}

impl Module for Classifier {
    fn params(&self) -> Vec<&Param> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }

    fn norms(&self) -> Vec<&BatchNorm1d> {
        Vec::new()
    }
}
