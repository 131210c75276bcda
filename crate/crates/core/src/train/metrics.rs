use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{batches, TimeSeriesDataset};
use crate::model::{model_forward, predict, ModelConfig, ModelParams};
use crate::{Real, Result};

/// Largest number of non-zero differences for which the exact null
/// distribution is enumerated.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

const EVAL_BATCH: usize = 16;

/// Percentage of positions where `preds` equals `labels`.
pub fn accuracy(preds: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(preds.len(), labels.len());
    if labels.is_empty() {
        return 0.0;
    }
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    (correct as f64 * 100.0) / labels.len() as f64
}

/// Eval-mode accuracy of `params` on an already normalized dataset.
pub fn evaluate<T: Real>(
    ds: &TimeSeriesDataset,
    params: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<f64> {
    let y = cfg.d_y;
    let mut preds = Vec::with_capacity(ds.len());
    for batch in batches::<T>(ds, EVAL_BATCH, false, 0, 0) {
        let (logits, _) = model_forward(&batch, params, cfg, None)?;
        preds.extend(logits.chunks(y).map(predict));
    }
    Ok(accuracy(&preds, &ds.labels()))
}

/// Ascending mid-ranks of `values` (1-based), doubled so that they stay
/// integral.
fn doubled_midranks(values: &[f64]) -> Vec<u64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        // positions i..=j share the rank (i+1 + j+1)/2
        let r2 = (i + 1 + j + 1) as u64;
        for &k in &idx[i..=j] {
            ranks[k] = r2;
        }
        i = j + 1;
    }
    ranks
}

/// One-sided Wilcoxon signed-rank test of "`a` tends to exceed `b`".
///
/// Zero differences are dropped and tied magnitudes get mid-ranks. Up to
/// [`WILCOXON_EXACT_MAX_N`] remaining pairs the p-value is `P(W⁺ ≥ w)` under
/// the exact sign-flip distribution of the observed ranks; above that a
/// tie-corrected normal approximation with continuity correction is used.
/// If every difference is zero the p-value is 1.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired samples must have equal length");
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|v| *v != 0.0)
        .collect();
    let n = d.len();
    if n == 0 {
        return 1.0;
    }
    let mags: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let r2 = doubled_midranks(&mags);
    let w2: u64 = d.iter().zip(&r2).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();

    if n <= WILCOXON_EXACT_MAX_N {
        let total: u64 = r2.iter().sum();
        let mut counts = vec![0u64; total as usize + 1];
        counts[0] = 1;
        let mut reach = 0usize;
        for &r in &r2 {
            let r = r as usize;
            for s in (0..=reach).rev() {
                if counts[s] > 0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let tail: u64 = counts[w2 as usize..].iter().sum();
        return tail as f64 / (1u64 << n) as f64;
    }

    let nf = n as f64;
    let w = w2 as f64 / 2.0;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
    let mut sorted = mags.clone();
    sorted.sort_by(f64::total_cmp);
    for g in sorted.chunk_by(|x, y| x == y) {
        let t = g.len() as f64;
        var -= (t * t * t - t) / 48.0;
    }
    if var <= 0.0 {
        return if w > mean { 0.0 } else { 1.0 };
    }
    let z = (w - mean - 0.5) / var.sqrt();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    std_normal.sf(z)
}

/// Mean rank of every model across datasets. `table[m][d]` is the accuracy
/// of model `m` on dataset `d`; higher accuracy gets the better (smaller)
/// rank and ties share the mid-rank.
pub fn average_rank(table: &[Vec<f64>]) -> Vec<f64> {
    let models = table.len();
    if models == 0 {
        return Vec::new();
    }
    let datasets = table[0].len();
    assert!(table.iter().all(|r| r.len() == datasets), "ragged accuracy table");
    let mut sum = vec![0.0; models];
    for d in 0..datasets {
        let neg: Vec<f64> = table.iter().map(|r| -r[d]).collect();
        for (s, r) in sum.iter_mut().zip(doubled_midranks(&neg)) {
            *s += r as f64 / 2.0;
        }
    }
    sum.into_iter().map(|s| s / datasets as f64).collect()
}
