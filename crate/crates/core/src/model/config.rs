use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Which of the three modifications to the baseline trunk are switched on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Architecture {
    /// Pairs of SE-Res2 blocks per stage and four stages instead of three single blocks.
    pub deepen: bool,
    /// Parallel `k = 1` path inside every Res2 block.
    pub branch: bool,
    /// Sub-band grouping 8→4→2→1 with a grouped link from the input to every stage.
    pub pcf: bool,
}

impl Architecture {
    pub const ECAPA: Self = Architecture {
        deepen: false,
        branch: false,
        pcf: false,
    };
    pub const PCF_ECAPA: Self = Architecture {
        deepen: true,
        branch: true,
        pcf: true,
    };

    pub fn name(&self) -> &'static str {
        match (self.deepen, self.branch, self.pcf) {
            (false, false, false) => "ecapa",
            (true, false, false) => "ecapa-a",
            (true, true, false) => "ecapa-ab",
            (true, false, true) => "ecapa-ac",
            (true, true, true) => "pcf-ecapa",
            (false, true, false) => "ecapa-b",
            (false, _, true) => "invalid-pcf-without-deepen",
        }
    }
}

/// Cumulative ablation stages, each adding one modification to the last.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AblationStage {
    Base,
    A,
    AB,
    ABC,
}

impl AblationStage {
    pub const ALL: [AblationStage; 4] = [Self::Base, Self::A, Self::AB, Self::ABC];

    pub fn architecture(self) -> Architecture {
        match self {
            Self::Base => Architecture::ECAPA,
            Self::A => Architecture {
                deepen: true,
                branch: false,
                pcf: false,
            },
            Self::AB => Architecture {
                deepen: true,
                branch: true,
                pcf: false,
            },
            Self::ABC => Architecture::PCF_ECAPA,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Base => "base",
            Self::A => "A",
            Self::AB => "AB",
            Self::ABC => "ABC",
        }
    }
}

/// One row of the layer table: a convolution stage and its sub-band split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub sub_bands: usize,
}

impl BlockSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sub_bands == 0 || self.in_ch % self.sub_bands != 0 || self.out_ch % self.sub_bands != 0 {
            return Err(Error::Config(format!(
                "{} sub-bands must divide {} input and {} output channels",
                self.sub_bands, self.in_ch, self.out_ch
            )));
        }
        Ok(())
    }
}

impl fmt::Display for BlockSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{},{},{})",
            self.in_ch, self.out_ch, self.kernel, self.dilation, self.sub_bands
        )
    }
}

/// Dilation, sub-band count and depth of one backbone stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StagePlan {
    pub dilation: usize,
    pub sub_bands: usize,
    pub layers: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub channels: usize,
    pub feat_dim: usize,
    pub embed_dim: usize,
    pub mfa_out: usize,
    pub se_bottleneck: usize,
    pub attention_bottleneck: usize,
    pub res2_scale: usize,
    /// Backbone stages: single SE-Res2 blocks at dilations 2, 3, .. for the
    /// baseline, pairs at dilations 1, 2, .. when deepened.
    pub stages: usize,
    pub seed: u64,
}

/// Config keys in canonical order.
pub const KEYS: [&str; 10] = [
    "variant",
    "channels",
    "feat_dim",
    "embed_dim",
    "mfa_out",
    "se_bottleneck",
    "attention_bottleneck",
    "res2_scale",
    "stages",
    "seed",
];

impl ModelConfig {
    pub fn new(arch: Architecture, channels: usize) -> Self {
        ModelConfig {
            arch,
            channels,
            feat_dim: 80,
            embed_dim: 192,
            mfa_out: 1536,
            se_bottleneck: 128,
            attention_bottleneck: 128,
            res2_scale: 8,
            stages: if arch.deepen { 4 } else { 3 },
            seed: 0,
        }
    }

    pub fn ecapa(channels: usize) -> Self {
        Self::new(Architecture::ECAPA, channels)
    }

    pub fn pcf_ecapa(channels: usize) -> Self {
        Self::new(Architecture::PCF_ECAPA, channels)
    }

    pub fn ablation(stage: AblationStage, channels: usize) -> Self {
        Self::new(stage.architecture(), channels)
    }

    /// A small PCF model for desk-scale training runs.
    pub fn tiny_pcf(channels: usize) -> Self {
        ModelConfig {
            mfa_out: 128,
            se_bottleneck: 8,
            attention_bottleneck: 32,
            ..Self::pcf_ecapa(channels)
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn variant_name(&self) -> &'static str {
        self.arch.name()
    }

    pub fn stages(&self) -> Vec<StagePlan> {
        let n = self.stages;
        (0..n)
            .map(|i| StagePlan {
                dilation: if self.arch.deepen { i + 1 } else { i + 2 },
                // halves after every stage and ends at 1: 8, 4, 2, 1 for four stages
                sub_bands: if self.arch.pcf { 1 << (n - 1 - i) } else { 1 },
                layers: if self.arch.deepen { 2 } else { 1 },
            })
            .collect()
    }

    /// The layer table: stem rows, backbone stages, and the aggregation layer.
    pub fn layout(&self) -> Vec<(String, BlockSpec, usize)> {
        let c = self.channels;
        let stages = self.stages();
        let mut rows = Vec::new();
        if self.arch.pcf {
            for (i, s) in stages.iter().enumerate() {
                rows.push((
                    format!("link{}", i + 1),
                    BlockSpec {
                        in_ch: self.feat_dim,
                        out_ch: c,
                        kernel: 5,
                        dilation: 1,
                        sub_bands: s.sub_bands,
                    },
                    1,
                ));
            }
        } else {
            rows.push((
                "layer1".to_string(),
                BlockSpec {
                    in_ch: self.feat_dim,
                    out_ch: c,
                    kernel: 5,
                    dilation: 1,
                    sub_bands: 1,
                },
                1,
            ));
        }
        for (i, s) in stages.iter().enumerate() {
            rows.push((
                format!("stage{}", i + 1),
                BlockSpec {
                    in_ch: c,
                    out_ch: c,
                    kernel: 3,
                    dilation: s.dilation,
                    sub_bands: s.sub_bands,
                },
                s.layers,
            ));
        }
        rows.push((
            "mfa".to_string(),
            BlockSpec {
                in_ch: stages.len() * c,
                out_ch: self.mfa_out,
                kernel: 1,
                dilation: 1,
                sub_bands: 1,
            },
            1,
        ));
        rows
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("channels", self.channels),
            ("feat_dim", self.feat_dim),
            ("embed_dim", self.embed_dim),
            ("mfa_out", self.mfa_out),
            ("se_bottleneck", self.se_bottleneck),
            ("attention_bottleneck", self.attention_bottleneck),
            ("stages", self.stages),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("key `{k}` must be positive")));
        }
        if self.stages > 16 {
            return Err(Error::Config(format!("key `stages`: {} is too deep", self.stages)));
        }
        if self.arch.pcf && !self.arch.deepen {
            return Err(Error::Config("sub-band fusion needs the deepened four-stage backbone".into()));
        }
        if self.res2_scale < 2 || self.channels % self.res2_scale != 0 {
            return Err(Error::Config(format!(
                "key `res2_scale`: {} must be at least 2 and divide channels={}",
                self.res2_scale, self.channels
            )));
        }
        for s in self.stages() {
            if self.res2_scale % s.sub_bands != 0 {
                return Err(Error::Config(format!(
                    "key `res2_scale`: {} is not divisible by {} sub-bands",
                    self.res2_scale, s.sub_bands
                )));
            }
        }
        for (name, spec, _) in self.layout() {
            spec.validate()
                .map_err(|e| Error::Config(format!("{name}: {e}")))?;
        }
        Ok(())
    }

    /// Canonical `key=value` text, one key per line in a fixed order.
    pub fn to_text(&self) -> String {
        let values = [
            self.variant_name().to_string(),
            self.channels.to_string(),
            self.feat_dim.to_string(),
            self.embed_dim.to_string(),
            self.mfa_out.to_string(),
            self.se_bottleneck.to_string(),
            self.attention_bottleneck.to_string(),
            self.res2_scale.to_string(),
            self.stages.to_string(),
            self.seed.to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// Parses `key=value` lines. Blank lines and `#` comments are skipped;
    /// missing keys keep their defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Self::from_pairs(&pairs)
    }

    /// Builds a config from `(key, value)` pairs over the defaults of
    /// `ecapa` at C=512; later pairs win.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        Self::ecapa(512).overlay(pairs)
    }

    /// Applies `(key, value)` pairs on top of `self`. A new `variant` without
    /// `channels` or `stages` takes that variant's defaults for them.
    pub fn overlay(&self, pairs: &[(String, String)]) -> Result<Self> {
        let mut variant = None;
        let mut channels = None;
        let mut stages = None;
        let mut cfg = self.clone();
        for (k, v) in pairs {
            let num = || -> Result<usize> {
                v.parse()
                    .map_err(|_| Error::Config(format!("key `{k}`: `{v}` is not a positive integer")))
            };
            match k.as_str() {
                "variant" => variant = Some(Variant::from_str(v)?),
                "channels" => channels = Some(num()?),
                "feat_dim" => cfg.feat_dim = num()?,
                "embed_dim" => cfg.embed_dim = num()?,
                "mfa_out" => cfg.mfa_out = num()?,
                "se_bottleneck" => cfg.se_bottleneck = num()?,
                "attention_bottleneck" => cfg.attention_bottleneck = num()?,
                "res2_scale" => cfg.res2_scale = num()?,
                "stages" => stages = Some(num()?),
                "seed" => {
                    cfg.seed = v
                        .parse()
                        .map_err(|_| Error::Config(format!("key `seed`: `{v}` is not an unsigned integer")))?
                }
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        if let Some(v) = variant {
            cfg.arch = v.arch;
            cfg.channels = v.default_channels;
            cfg.stages = if cfg.arch.deepen { 4 } else { 3 };
        }
        cfg.channels = channels.unwrap_or(cfg.channels);
        cfg.stages = stages.unwrap_or(cfg.stages);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hex SHA-256 of [`ModelConfig::to_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A named architecture with its conventional channel count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variant {
    pub arch: Architecture,
    pub default_channels: usize,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (arch, default_channels) = match s {
            "ecapa" | "ecapa-base" | "base" => (Architecture::ECAPA, 512),
            "ecapa-large" => (Architecture::ECAPA, 1024),
            "ecapa-a" | "a" => (AblationStage::A.architecture(), 512),
            "ecapa-ab" | "ab" => (AblationStage::AB.architecture(), 512),
            "ecapa-ac" | "ac" => (
                Architecture {
                    deepen: true,
                    branch: false,
                    pcf: true,
                },
                512,
            ),
            "pcf-ecapa" | "abc" => (Architecture::PCF_ECAPA, 512),
            other => {
                return Err(Error::Config(format!(
                    "key `variant`: unknown variant `{other}` (expected ecapa, ecapa-large, ecapa-a, ecapa-ab, ecapa-ac, pcf-ecapa)"
                )))
            }
        };
        Ok(Variant { arch, default_channels })
    }
}
