use std::fmt;

use super::network::{Classifier, Network};
use crate::nn::Module;

/// Per-layer parameter counts of a network and, optionally, its classifier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamAudit {
    pub variant: String,
    pub channels: usize,
    pub layers: Vec<(String, usize)>,
    /// Everything that is kept at inference time.
    pub backbone: usize,
    /// Zero when no classifier was audited.
    pub classifier: usize,
}

impl ParamAudit {
    pub fn total(&self, include_classifier: bool) -> usize {
        self.backbone + if include_classifier { self.classifier } else { 0 }
    }

    pub fn millions(&self) -> f64 {
        self.backbone as f64 / 1e6
    }
}

/// Counts every weight, bias and batchnorm affine parameter. Running
/// statistics are buffers and are not counted.
pub fn count_params(net: &Network, classifier: Option<&Classifier>) -> ParamAudit {
    let layers = net.layer_counts();
    let backbone = net.param_count();
    debug_assert_eq!(backbone, layers.iter().map(|(_, n)| n).sum::<usize>());
    ParamAudit {
        variant: net.config().variant_name().to_string(),
        channels: net.config().channels,
        layers,
        backbone,
        classifier: classifier.map_or(0, |c| c.param_count()),
    }
}

impl fmt::Display for ParamAudit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} (C={})", self.variant, self.channels)?;
        for (name, n) in &self.layers {
            writeln!(f, "  {name:<10} {n:>12}")?;
        }
        writeln!(f, "  {:<10} {:>12}  ({:.3}M)", "total", self.backbone, self.millions())?;
        if self.classifier > 0 {
            writeln!(f, "  {:<10} {:>12}", "classifier", self.classifier)?;
        }
        Ok(())
    }
}
