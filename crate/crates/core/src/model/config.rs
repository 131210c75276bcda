use serde::{Deserialize, Serialize};

use crate::block::BlockConfig;
use crate::data::{DatasetMeta, TimeSeriesDataset};
use crate::ssm::{default_dt_rank, SsmConfig};
use crate::{Error, Result};

/// Default sequence ratio for the input kernel.
pub const DEFAULT_LAMBDA: f64 = 0.02;
pub const DEFAULT_K_MIN: usize = 3;
pub const DEFAULT_HEADS: usize = 4;
pub const DEFAULT_DROPOUT: f64 = 0.1;

/// How per-step outputs become one logit vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Multi-head gated softmax over time.
    #[default]
    Adaptive,
    /// Affine readout of the flattened feature sequence (equal length only).
    Full,
    Avg,
    Max,
    Last,
}

impl Aggregation {
    pub const ALL: [Aggregation; 5] = [
        Aggregation::Adaptive,
        Aggregation::Full,
        Aggregation::Avg,
        Aggregation::Max,
        Aggregation::Last,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Adaptive => "adaptive",
            Aggregation::Full => "full",
            Aggregation::Avg => "avg",
            Aggregation::Max => "max",
            Aggregation::Last => "last",
        }
    }
}

/// `max(k_min, ⌊λ·L⌋)`, capped at `L`.
pub fn kernel_size(len: usize, lambda: f64, k_min: usize) -> usize {
    let scaled = (lambda * len as f64).floor() as usize;
    k_min.max(scaled).min(len).max(1)
}

/// User-facing model hyperparameters; data-dependent sizes are filled in by
/// [`ModelConfig::from_hyper`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelHyper {
    pub d_m: usize,
    pub d_s: usize,
    pub expand: usize,
    pub d_conv: usize,
    /// Rank of the Δ projection; `ceil(d_inner/16)` when absent.
    pub d_r: Option<usize>,
    pub tv_dt: bool,
    pub tv_b: bool,
    pub tv_c: bool,
    pub use_d: bool,
    pub share_a: bool,
    pub euler_b: bool,
    pub use_norm: bool,
    /// Additive shortcut around each block; off for depth 1 and on for
    /// deeper stacks when absent.
    pub use_block_residual: Option<bool>,
    pub depth: usize,
    pub lambda: f64,
    pub k_min: usize,
    /// Overrides the scaled kernel; `3` reproduces the unscaled projection.
    pub fixed_k: Option<usize>,
    pub aggregation: Aggregation,
    pub n_heads: usize,
    pub dropout: f64,
}

impl Default for ModelHyper {
    fn default() -> Self {
        Self {
            d_m: 64,
            d_s: 8,
            expand: 1,
            d_conv: 4,
            d_r: None,
            tv_dt: true,
            tv_b: true,
            tv_c: true,
            use_d: false,
            share_a: false,
            euler_b: false,
            use_norm: true,
            use_block_residual: None,
            depth: 1,
            lambda: DEFAULT_LAMBDA,
            k_min: DEFAULT_K_MIN,
            fixed_k: None,
            aggregation: Aggregation::Adaptive,
            n_heads: DEFAULT_HEADS,
            dropout: DEFAULT_DROPOUT,
        }
    }
}

/// Every architectural choice of one model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_x: usize,
    pub d_y: usize,
    /// Longest series the model is built for; drives the kernel policy and
    /// the `full` readout width.
    pub max_len: usize,
    pub equal_length: bool,
    pub d_m: usize,
    pub depth: usize,
    pub lambda: f64,
    pub k_min: usize,
    pub fixed_k: Option<usize>,
    pub aggregation: Aggregation,
    pub n_heads: usize,
    pub dropout: f64,
    pub ssm: SsmConfig,
    pub block: BlockConfig,
}

impl ModelConfig {
    pub fn from_hyper(h: &ModelHyper, meta: &DatasetMeta, max_len: usize) -> Result<Self> {
        let d_inner = h.expand * h.d_m;
        let cfg = Self {
            d_x: meta.d_x,
            d_y: meta.d_y,
            max_len,
            equal_length: meta.equal_length,
            d_m: h.d_m,
            depth: h.depth,
            lambda: h.lambda,
            k_min: h.k_min,
            fixed_k: h.fixed_k,
            aggregation: h.aggregation,
            n_heads: h.n_heads,
            dropout: h.dropout,
            ssm: SsmConfig {
                d_inner,
                d_s: h.d_s,
                d_r: h.d_r.unwrap_or_else(|| default_dt_rank(d_inner)),
                tv_dt: h.tv_dt,
                tv_b: h.tv_b,
                tv_c: h.tv_c,
                use_d: h.use_d,
                share_a: h.share_a,
                euler_b: h.euler_b,
            },
            block: BlockConfig {
                d_m: h.d_m,
                expand: h.expand,
                d_conv: h.d_conv,
                use_norm: h.use_norm,
                use_block_residual: h.use_block_residual.unwrap_or(h.depth >= 2),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds the config for a train/test pair. The kernel policy and the
    /// `full` readout use the longest series across both splits.
    pub fn for_datasets(
        h: &ModelHyper,
        train: &TimeSeriesDataset,
        eval: &TimeSeriesDataset,
    ) -> Result<Self> {
        train.check_compatible(eval)?;
        let max_len = train.max_len().max(eval.max_len());
        let mut meta = train.meta.clone();
        meta.equal_length = train.min_len() == max_len && eval.min_len() == max_len;
        Self::from_hyper(h, &meta, max_len)
    }

    pub fn validate(&self) -> Result<()> {
        self.ssm.validate()?;
        self.block.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.d_x == 0 || self.d_y == 0 || self.max_len == 0 {
            return bad("d_x, d_y and max_len must be positive");
        }
        if self.block.d_m != self.d_m || self.ssm.d_inner != self.block.d_inner() {
            return bad("block and scan widths disagree with d_m");
        }
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if self.n_heads == 0 {
            return bad("n_heads must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.k_min == 0 || self.fixed_k == Some(0) {
            return bad("kernel sizes must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a non-negative number");
        }
        if self.aggregation == Aggregation::Full && !self.equal_length {
            return bad("full aggregation needs an equal-length dataset");
        }
        Ok(())
    }

    /// Input convolution width actually used.
    pub fn kernel(&self) -> usize {
        self.fixed_k
            .unwrap_or_else(|| kernel_size(self.max_len, self.lambda, self.k_min))
            .min(self.max_len)
    }

    /// Trainable scalars across all active tensors.
    pub fn num_params(&self) -> usize {
        let (m, x, y, h) = (self.d_m, self.d_x, self.d_y, self.n_heads);
        let mut n = m * x * self.kernel() + m;
        n += self.depth * self.block.num_params(&self.ssm);
        n += m * y + y;
        n += h * (m + 1);
        if self.aggregation == Aggregation::Full {
            n += self.max_len * m * y + y;
        }
        n
    }
}
