use crate::block::{active_block_names, BlockParams};
use crate::rng::{self, Stream};
use crate::tensor::TensorSpec;
use crate::{Real, Tensor};

use super::{Aggregation, ModelConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    /// `[d_m × d_x × k]`
    pub input_conv: Tensor<T>,
    pub input_bias: Tensor<T>,
    pub blocks: Vec<BlockParams<T>>,
    /// `[d_m × d_y]`, applied at every step.
    pub classifier: Tensor<T>,
    pub classifier_bias: Tensor<T>,
    /// `[n_heads × d_m]`
    pub gate_weight: Tensor<T>,
    pub gate_bias: Tensor<T>,
    /// `[max_len·d_m × d_y]`; allocated only for the `full` readout.
    pub readout: Tensor<T>,
    pub readout_bias: Tensor<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (m, y) = (cfg.d_m, cfg.d_y);
        let full = cfg.aggregation == Aggregation::Full;
        Self {
            input_conv: Tensor::zeros(&[m, cfg.d_x, cfg.kernel()]),
            input_bias: Tensor::zeros(&[m]),
            blocks: (0..cfg.depth)
                .map(|_| BlockParams::zeros(&cfg.block, &cfg.ssm))
                .collect(),
            classifier: Tensor::zeros(&[m, y]),
            classifier_bias: Tensor::zeros(&[y]),
            gate_weight: Tensor::zeros(&[cfg.n_heads, m]),
            gate_bias: Tensor::zeros(&[cfg.n_heads]),
            readout: Tensor::zeros(&if full { vec![cfg.max_len * m, y] } else { vec![0, y] }),
            readout_bias: Tensor::zeros(&[if full { y } else { 0 }]),
        }
    }

    /// Seeded initialization. Gates start at zero so the adaptive pool
    /// begins as exact average pooling.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = rng::stream(seed, Stream::Init);
        let mut p = Self::zeros(cfg);
        let (m, y) = (cfg.d_m, cfg.d_y);
        let fan = 1.0 / ((cfg.d_x * cfg.kernel()) as f64).sqrt();
        p.input_conv = Tensor::uniform(&p.input_conv.shape.clone(), fan, &mut rng);
        p.input_bias = Tensor::uniform(&[m], fan, &mut rng);
        for b in &mut p.blocks {
            *b = BlockParams::init(&cfg.block, &cfg.ssm, &mut rng);
        }
        let fan = 1.0 / (m as f64).sqrt();
        p.classifier = Tensor::uniform(&[m, y], fan, &mut rng);
        p.classifier_bias = Tensor::uniform(&[y], fan, &mut rng);
        if cfg.aggregation == Aggregation::Full {
            let fan = 1.0 / ((cfg.max_len * m) as f64).sqrt();
            p.readout = Tensor::uniform(&[cfg.max_len * m, y], fan, &mut rng);
            p.readout_bias = Tensor::uniform(&[y], fan, &mut rng);
        }
        p
    }

    /// Every tensor with its qualified name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = vec![
            ("input_conv.weight".to_string(), &self.input_conv),
            ("input_conv.bias".to_string(), &self.input_bias),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            v.extend(
                b.tensors()
                    .into_iter()
                    .map(|(n, t)| (format!("blocks.{i}.{n}"), t)),
            );
        }
        v.extend([
            ("classifier.weight".to_string(), &self.classifier),
            ("classifier.bias".to_string(), &self.classifier_bias),
            ("pool.gate_weight".to_string(), &self.gate_weight),
            ("pool.gate_bias".to_string(), &self.gate_bias),
            ("readout.weight".to_string(), &self.readout),
            ("readout.bias".to_string(), &self.readout_bias),
        ]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut v = vec![
            ("input_conv.weight".to_string(), &mut self.input_conv),
            ("input_conv.bias".to_string(), &mut self.input_bias),
        ];
        for (i, b) in self.blocks.iter_mut().enumerate() {
            v.extend(
                b.tensors_mut()
                    .into_iter()
                    .map(|(n, t)| (format!("blocks.{i}.{n}"), t)),
            );
        }
        v.extend([
            ("classifier.weight".to_string(), &mut self.classifier),
            ("classifier.bias".to_string(), &mut self.classifier_bias),
            ("pool.gate_weight".to_string(), &mut self.gate_weight),
            ("pool.gate_bias".to_string(), &mut self.gate_bias),
            ("readout.weight".to_string(), &mut self.readout),
            ("readout.bias".to_string(), &mut self.readout_bias),
        ]);
        v
    }

    /// Names of the trainable tensors for `cfg`, in [`Self::tensors`] order.
    /// Tensors on switched-off scan branches are excluded.
    pub fn active_names(cfg: &ModelConfig) -> Vec<String> {
        let mut v = vec!["input_conv.weight".to_string(), "input_conv.bias".to_string()];
        let block = active_block_names(&cfg.block, &cfg.ssm);
        let order: Vec<String> = BlockParams::<T>::zeros(&cfg.block, &cfg.ssm)
            .tensors()
            .into_iter()
            .map(|(n, _)| n)
            .filter(|n| block.contains(n))
            .collect();
        for i in 0..cfg.depth {
            v.extend(order.iter().map(|n| format!("blocks.{i}.{n}")));
        }
        v.extend(
            [
                "classifier.weight",
                "classifier.bias",
                "pool.gate_weight",
                "pool.gate_bias",
            ]
            .map(String::from),
        );
        if cfg.aggregation == Aggregation::Full {
            v.extend(["readout.weight", "readout.bias"].map(String::from));
        }
        v
    }

    pub fn active(&self, cfg: &ModelConfig) -> Vec<(String, &Tensor<T>)> {
        let names = Self::active_names(cfg);
        self.tensors()
            .into_iter()
            .filter(|(n, _)| names.contains(n))
            .collect()
    }

    pub fn active_mut(&mut self, cfg: &ModelConfig) -> Vec<(String, &mut Tensor<T>)> {
        let names = Self::active_names(cfg);
        self.tensors_mut()
            .into_iter()
            .filter(|(n, _)| names.contains(n))
            .collect()
    }

    pub fn manifest(&self, cfg: &ModelConfig) -> Vec<TensorSpec> {
        self.active(cfg)
            .into_iter()
            .map(|(name, t)| TensorSpec {
                name,
                shape: t.shape.clone(),
            })
            .collect()
    }

    pub fn num_active(&self, cfg: &ModelConfig) -> usize {
        self.active(cfg).iter().map(|(_, t)| t.len()).sum()
    }

    /// Zeroes every tensor that is inactive under `cfg`, so that two
    /// parameter sets compare equal exactly when their stored tensors do.
    pub fn zero_inactive(&mut self, cfg: &ModelConfig) {
        let names = Self::active_names(cfg);
        for (n, t) in self.tensors_mut() {
            if !names.contains(&n) {
                t.fill_zero();
            }
        }
    }

    pub fn cast<U: Real>(&self, cfg: &ModelConfig) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(cfg);
        for ((_, dst), (_, src)) in out.tensors_mut().into_iter().zip(self.tensors()) {
            *dst = src.cast();
        }
        out
    }
}
