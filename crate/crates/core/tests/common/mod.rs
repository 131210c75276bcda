#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Central difference of `f` with respect to `values[i]` for every `i`.
pub fn central_diff(values: &mut [f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        let orig = values[i];
        values[i] = orig + h;
        let up = f(values);
        values[i] = orig - h;
        let down = f(values);
        values[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// Largest elementwise relative error, with an absolute floor so that
/// entries that are zero up to round-off compare as equal.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Random dataset with the given series lengths; labels cycle through the
/// classes.
pub fn toy_dataset(
    seed: u64,
    lengths: &[usize],
    d_x: usize,
    d_y: usize,
) -> mambasl::data::TimeSeriesDataset {
    use mambasl::data::{DatasetMeta, SeriesSample, Split, TimeSeriesDataset};
    let mut r = rng(seed);
    let equal = lengths.iter().all(|&l| l == lengths[0]);
    let meta = DatasetMeta {
        name: "toy".into(),
        d_x,
        d_y,
        equal_length: equal,
        series_length: equal.then_some(lengths[0]),
        label_names: (0..d_y).map(|i| format!("c{i}")).collect(),
        split: Split::Train,
    };
    let samples = lengths
        .iter()
        .enumerate()
        .map(|(i, &length)| SeriesSample {
            values: randn(&mut r, length * d_x, 1.0),
            length,
            label: i % d_y,
        })
        .collect();
    TimeSeriesDataset::new(meta, samples).unwrap()
}
