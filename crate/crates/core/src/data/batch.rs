use rand::seq::SliceRandom;

use super::TimeSeriesDataset;
use crate::rng::{self, Stream};
use crate::Real;

/// A right-padded mini-batch. `padded` is `[B × l_max × d_x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub padded: Vec<T>,
    pub lengths: Vec<usize>,
    pub labels: Vec<usize>,
    pub mask: Vec<bool>,
    pub l_max: usize,
    pub d_x: usize,
    /// Dataset index of every row.
    pub indices: Vec<usize>,
}

impl<T: Real> Batch<T> {
    pub fn from_indices(ds: &TimeSeriesDataset, indices: &[usize]) -> Self {
        let d_x = ds.meta.d_x;
        let l_max = indices
            .iter()
            .map(|&i| ds.samples[i].length)
            .max()
            .unwrap_or(0);
        let b = indices.len();
        let mut padded = vec![T::zero(); b * l_max * d_x];
        let mut mask = vec![false; b * l_max];
        let mut lengths = Vec::with_capacity(b);
        let mut labels = Vec::with_capacity(b);
        for (row, &i) in indices.iter().enumerate() {
            let s = &ds.samples[i];
            let dst = &mut padded[row * l_max * d_x..row * l_max * d_x + s.length * d_x];
            for (d, v) in dst.iter_mut().zip(&s.values) {
                *d = T::c(*v);
            }
            mask[row * l_max..row * l_max + s.length]
                .iter_mut()
                .for_each(|m| *m = true);
            lengths.push(s.length);
            labels.push(s.label);
        }
        Self {
            padded,
            lengths,
            labels,
            mask,
            l_max,
            d_x,
            indices: indices.to_vec(),
        }
    }

    pub fn size(&self) -> usize {
        self.lengths.len()
    }

    /// The `[l_max × d_x]` slab of row `i`.
    pub fn sample(&self, i: usize) -> &[T] {
        let n = self.l_max * self.d_x;
        &self.padded[i * n..(i + 1) * n]
    }
}

/// Sample order for one epoch: identity without shuffling, otherwise a
/// permutation determined by `(seed, epoch)` alone.
pub fn epoch_order(n: usize, shuffle: bool, seed: u64, epoch: u32) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if shuffle {
        order.shuffle(&mut rng::stream(seed, Stream::Shuffle { epoch }));
    }
    order
}

pub struct BatchIter<'a, T> {
    ds: &'a TimeSeriesDataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
    _t: std::marker::PhantomData<T>,
}

impl<T: Real> Iterator for BatchIter<'_, T> {
    type Item = Batch<T>;

    fn next(&mut self) -> Option<Batch<T>> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let b = Batch::from_indices(self.ds, &self.order[self.pos..end]);
        self.pos = end;
        Some(b)
    }
}

/// Iterates one epoch of mini-batches. The final batch may be short.
pub fn batches<T: Real>(
    ds: &TimeSeriesDataset,
    batch_size: usize,
    shuffle: bool,
    seed: u64,
    epoch: u32,
) -> BatchIter<'_, T> {
    assert!(batch_size >= 1, "batch size must be positive");
    BatchIter {
        ds,
        order: epoch_order(ds.len(), shuffle, seed, epoch),
        batch_size,
        pos: 0,
        _t: std::marker::PhantomData,
    }
}
