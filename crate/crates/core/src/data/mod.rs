//! Dataset types, the `.ts` archive format, normalization and batching.

mod batch;
mod cache;
mod normalize;
mod ts;

use serde::{Deserialize, Serialize};

pub use batch::{batches, epoch_order, Batch, BatchIter};
pub use cache::{read_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};
pub use normalize::{
    apply_instance_norm, apply_normalizer, fit_normalizer, Normalization, NormalizationStats,
    EPS_STD,
};
pub use ts::{load_ts, parse_ts, parse_ts_str, write_ts};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One labelled multivariate series, stored row-major `[length × d_x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSample {
    pub values: Vec<f64>,
    pub length: usize,
    pub label: usize,
}

impl SeriesSample {
    pub fn row(&self, t: usize, d_x: usize) -> &[f64] {
        &self.values[t * d_x..(t + 1) * d_x]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub d_x: usize,
    pub d_y: usize,
    pub equal_length: bool,
    pub series_length: Option<usize>,
    pub label_names: Vec<String>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    pub meta: DatasetMeta,
    pub samples: Vec<SeriesSample>,
}

impl TimeSeriesDataset {
    /// Builds a dataset and checks every invariant on the way in.
    pub fn new(meta: DatasetMeta, samples: Vec<SeriesSample>) -> Result<Self> {
        let ds = Self { meta, samples };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.meta;
        if self.samples.is_empty() {
            return Err(Error::Data("dataset has no samples".into()));
        }
        if m.label_names.len() != m.d_y {
            return Err(Error::Data(format!(
                "{} label names for {} classes",
                m.label_names.len(),
                m.d_y
            )));
        }
        for (i, a) in m.label_names.iter().enumerate() {
            if m.label_names[..i].contains(a) {
                return Err(Error::Data(format!("duplicate class label {a:?}")));
            }
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.length == 0 {
                return Err(Error::Data(format!("sample {i} is empty")));
            }
            if s.values.len() != s.length * m.d_x {
                return Err(Error::Data(format!(
                    "sample {i}: {} values for length {} × {} dims",
                    s.values.len(),
                    s.length,
                    m.d_x
                )));
            }
            if s.label >= m.d_y {
                return Err(Error::Data(format!("sample {i}: label {} ≥ {}", s.label, m.d_y)));
            }
            if let Some(v) = s.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!("sample {i}: non-finite value {v}")));
            }
            if m.equal_length && Some(s.length) != m.series_length {
                return Err(Error::Data(format!(
                    "sample {i}: length {} but series length is {:?}",
                    s.length, m.series_length
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.samples.iter().map(|s| s.length).max().unwrap_or(0)
    }

    pub fn min_len(&self) -> usize {
        self.samples.iter().map(|s| s.length).min().unwrap_or(0)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Checks that two splits describe the same problem.
    pub fn check_compatible(&self, other: &TimeSeriesDataset) -> Result<()> {
        let (a, b) = (&self.meta, &other.meta);
        if a.d_x != b.d_x || a.d_y != b.d_y || a.label_names != b.label_names {
            return Err(Error::Data(format!(
                "splits disagree: {} ({} dims, {:?}) vs {} ({} dims, {:?})",
                a.name, a.d_x, a.label_names, b.name, b.d_x, b.label_names
            )));
        }
        Ok(())
    }
}
