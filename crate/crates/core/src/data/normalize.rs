use serde::{Deserialize, Serialize};

use super::TimeSeriesDataset;
use crate::{Error, Result};

/// Lower clamp on per-channel standard deviations.
pub const EPS_STD: f64 = 1e-8;

/// Preprocessing applied before training and evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Per-channel z-normalization with statistics from the train split.
    #[default]
    Zscore,
    /// Every sample z-normalized per channel over its own timesteps.
    Instance,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    pub fn identity(d_x: usize) -> Self {
        Self {
            mean: vec![0.0; d_x],
            std: vec![1.0; d_x],
        }
    }
}

/// Per-channel population mean and standard deviation over every timestep
/// of every sample.
pub fn fit_normalizer(train: &TimeSeriesDataset) -> NormalizationStats {
    let d_x = train.meta.d_x;
    let mut n = 0usize;
    let mut mean = vec![0.0; d_x];
    for s in &train.samples {
        for t in 0..s.length {
            for (m, v) in mean.iter_mut().zip(s.row(t, d_x)) {
                *m += v;
            }
        }
        n += s.length;
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d_x];
    for s in &train.samples {
        for t in 0..s.length {
            for ((acc, v), m) in var.iter_mut().zip(s.row(t, d_x)).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
    }
    let std = var
        .into_iter()
        .map(|v| (v / n as f64).sqrt().max(EPS_STD))
        .collect();
    NormalizationStats { mean, std }
}

pub fn apply_normalizer(
    ds: &TimeSeriesDataset,
    stats: &NormalizationStats,
) -> Result<TimeSeriesDataset> {
    let d_x = ds.meta.d_x;
    if stats.mean.len() != d_x || stats.std.len() != d_x {
        return Err(Error::Shape(format!(
            "normalizer has {} channels, dataset has {d_x}",
            stats.mean.len()
        )));
    }
    let mut out = ds.clone();
    for s in &mut out.samples {
        for (i, v) in s.values.iter_mut().enumerate() {
            let c = i % d_x;
            *v = (*v - stats.mean[c]) / stats.std[c];
        }
    }
    Ok(out)
}

pub fn apply_instance_norm(ds: &TimeSeriesDataset) -> TimeSeriesDataset {
    let mut out = ds.clone();
    let meta = ds.meta.clone();
    for s in &mut out.samples {
        let single = TimeSeriesDataset {
            meta: meta.clone(),
            samples: vec![s.clone()],
        };
        let stats = fit_normalizer(&single);
        *s = apply_normalizer(&single, &stats)
            .expect("stats fitted on the same sample")
            .samples
            .remove(0);
    }
    out
}
