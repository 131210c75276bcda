//! Binary dataset cache: `TSBC`, u32 LE version, u32 LE JSON length, JSON
//! header, then every sample's values as row-major f32 LE in order.
//!
//! Values pass through `f32`, so the cache is exact only for data already
//! representable in single precision.

use serde::{Deserialize, Serialize};

use super::{DatasetMeta, SeriesSample, TimeSeriesDataset};
use crate::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"TSBC";
pub const CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    meta: DatasetMeta,
    lengths: Vec<usize>,
    labels: Vec<usize>,
}

pub fn write_cache(ds: &TimeSeriesDataset) -> Result<Vec<u8>> {
    let header = CacheHeader {
        meta: ds.meta.clone(),
        lengths: ds.samples.iter().map(|s| s.length).collect(),
        labels: ds.labels(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len());
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for s in &ds.samples {
        for v in &s.values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if buf.len() < n {
        return Err(Error::Data("dataset cache is truncated".into()));
    }
    let (head, tail) = buf.split_at(n);
    *buf = tail;
    Ok(head)
}

fn u32_le(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

pub fn read_cache(bytes: &[u8]) -> Result<TimeSeriesDataset> {
    let mut buf = bytes;
    if take(&mut buf, 4)? != CACHE_MAGIC {
        return Err(Error::Data("not a dataset cache (bad magic)".into()));
    }
    let version = u32_le(take(&mut buf, 4)?);
    if version != CACHE_VERSION {
        return Err(Error::Data(format!("unsupported cache version {version}")));
    }
    let len = u32_le(take(&mut buf, 4)?) as usize;
    let header: CacheHeader = serde_json::from_slice(take(&mut buf, len)?)?;
    if header.lengths.len() != header.labels.len() {
        return Err(Error::Data("cache header length/label count mismatch".into()));
    }
    let d_x = header.meta.d_x;
    let mut samples = Vec::with_capacity(header.lengths.len());
    for (&length, &label) in header.lengths.iter().zip(&header.labels) {
        let raw = take(&mut buf, length * d_x * 4)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        samples.push(SeriesSample {
            values,
            length,
            label,
        });
    }
    if !buf.is_empty() {
        return Err(Error::Data("trailing bytes after dataset cache".into()));
    }
    TimeSeriesDataset::new(header.meta, samples)
}
