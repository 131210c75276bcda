use serde::{Deserialize, Serialize};

use crate::data::Normalization;

/// Which checkpoint a run keeps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Best accuracy on the evaluation split (ties keep the earlier epoch).
    #[default]
    EvalMetric,
    /// Lowest epoch-mean training loss; never looks at the evaluation split.
    TrainLoss,
}

/// What an epoch that exactly ties the best metric so far counts as.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    /// Not an improvement: the earlier parameters stay selected and the
    /// patience counter keeps running.
    #[default]
    Earliest,
    /// An improvement: the later parameters are selected and patience
    /// restarts. This is the rule of the common PyTorch early-stopping
    /// helper (`score < best` counts against patience, anything else resets).
    Latest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub selection: Selection,
    pub tie_break: TieBreak,
    pub normalization: Normalization,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            lr: 0.001,
            epochs: 100,
            patience: 10,
            seed: 2021,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            selection: Selection::EvalMetric,
            tie_break: TieBreak::Earliest,
            normalization: Normalization::Zscore,
        }
    }
}
