use crate::linalg::{axpy, dot};
use crate::{Error, Real, Result};

use super::{Aggregation, ModelConfig, ModelParams};

/// What the aggregator needs to route gradients back.
#[derive(Debug, Clone)]
pub struct AggregateCache<T> {
    pub mode: Aggregation,
    pub valid_len: usize,
    /// Softmax weights over the valid steps (adaptive mode).
    pub alpha: Vec<T>,
    /// Winning gate head per valid step (adaptive mode).
    pub heads: Vec<usize>,
    /// Winning step per class (max mode).
    pub argmax: Vec<usize>,
}

/// Multi-head adaptive pooling over the first `valid_len` rows.
///
/// Each head scores every step, `g_t` is the best head's score (ties go to
/// the lowest head index), and `α = softmax(g)` weights the per-step logits.
/// Returns the pooled logits, `α` padded with zeros to `len`, and the
/// winning head per valid step.
#[allow(clippy::too_many_arguments)]
pub fn adaptive_pool<T: Real>(
    f: &[T],
    logits_t: &[T],
    len: usize,
    valid_len: usize,
    d_m: usize,
    d_y: usize,
    gate_weight: &[T],
    gate_bias: &[T],
) -> Result<(Vec<T>, Vec<T>, Vec<usize>)> {
    if valid_len == 0 {
        return Err(Error::Data("adaptive pooling over an empty mask".into()));
    }
    let n_heads = gate_bias.len();
    let mut g = Vec::with_capacity(valid_len);
    let mut heads = Vec::with_capacity(valid_len);
    for t in 0..valid_len {
        let ft = &f[t * d_m..(t + 1) * d_m];
        let mut best = T::neg_infinity();
        let mut arg = 0;
        for h in 0..n_heads {
            let score = dot(&gate_weight[h * d_m..(h + 1) * d_m], ft) + gate_bias[h];
            if score > best {
                best = score;
                arg = h;
            }
        }
        g.push(best);
        heads.push(arg);
    }
    let gmax = g.iter().copied().fold(T::neg_infinity(), T::max);
    let mut alpha = vec![T::zero(); len];
    let mut z = T::zero();
    for t in 0..valid_len {
        alpha[t] = (g[t] - gmax).exp();
        z += alpha[t];
    }
    // Weight with the unnormalized exponentials and divide once, so equal
    // scores give exactly the average.
    let mut out = vec![T::zero(); d_y];
    for t in 0..valid_len {
        axpy(alpha[t], &logits_t[t * d_y..(t + 1) * d_y], &mut out);
    }
    out.iter_mut().for_each(|x| *x /= z);
    alpha[..valid_len].iter_mut().for_each(|a| *a /= z);
    Ok((out, alpha, heads))
}

/// Reduces per-step features `f` / logits `logits_t` (both over the first
/// `valid_len` rows) to one logit vector.
pub fn aggregate<T: Real>(
    f: &[T],
    logits_t: &[T],
    valid_len: usize,
    params: &ModelParams<T>,
    cfg: &ModelConfig,
) -> Result<(Vec<T>, AggregateCache<T>)> {
    let (m, y) = (cfg.d_m, cfg.d_y);
    let v = valid_len;
    if v == 0 {
        return Err(Error::Data("cannot aggregate an empty sequence".into()));
    }
    let mut cache = AggregateCache {
        mode: cfg.aggregation,
        valid_len: v,
        alpha: Vec::new(),
        heads: Vec::new(),
        argmax: Vec::new(),
    };
    let out = match cfg.aggregation {
        Aggregation::Adaptive => {
            let (l, alpha, heads) = adaptive_pool(
                f,
                logits_t,
                v,
                v,
                m,
                y,
                &params.gate_weight.data,
                &params.gate_bias.data,
            )?;
            cache.alpha = alpha;
            cache.heads = heads;
            l
        }
        Aggregation::Avg => {
            let mut l = vec![T::zero(); y];
            for t in 0..v {
                axpy(T::one(), &logits_t[t * y..(t + 1) * y], &mut l);
            }
            let n = T::c(v as f64);
            l.iter_mut().for_each(|x| *x /= n);
            l
        }
        Aggregation::Max => {
            let mut l = logits_t[..y].to_vec();
            cache.argmax = vec![0; y];
            for t in 1..v {
                for c in 0..y {
                    let x = logits_t[t * y + c];
                    if x > l[c] {
                        l[c] = x;
                        cache.argmax[c] = t;
                    }
                }
            }
            l
        }
        Aggregation::Last => logits_t[(v - 1) * y..v * y].to_vec(),
        Aggregation::Full => {
            if v != cfg.max_len {
                return Err(Error::Config(format!(
                    "full aggregation needs length {}, got {v}",
                    cfg.max_len
                )));
            }
            let mut l = params.readout_bias.data.clone();
            for (i, &x) in f[..v * m].iter().enumerate() {
                axpy(x, &params.readout.data[i * y..(i + 1) * y], &mut l);
            }
            l
        }
    };
    Ok((out, cache))
}

/// Reverse of [`aggregate`]: adds into `df`, `dlogits_t` and `grads`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn aggregate_backward<T: Real>(
    cache: &AggregateCache<T>,
    f: &[T],
    logits_t: &[T],
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    dl: &[T],
    df: &mut [T],
    dlogits_t: &mut [T],
    grads: &mut ModelParams<T>,
) {
    let (m, y) = (cfg.d_m, cfg.d_y);
    let v = cache.valid_len;
    match cache.mode {
        Aggregation::Adaptive => {
            let alpha = &cache.alpha;
            let mut dalpha = vec![T::zero(); v];
            for t in 0..v {
                axpy(alpha[t], dl, &mut dlogits_t[t * y..(t + 1) * y]);
                dalpha[t] = dot(dl, &logits_t[t * y..(t + 1) * y]);
            }
            let mean: T = (0..v).map(|t| alpha[t] * dalpha[t]).sum();
            for t in 0..v {
                let dg = alpha[t] * (dalpha[t] - mean);
                let h = cache.heads[t];
                let ft = &f[t * m..(t + 1) * m];
                axpy(dg, ft, &mut grads.gate_weight.data[h * m..(h + 1) * m]);
                grads.gate_bias.data[h] += dg;
                axpy(dg, &params.gate_weight.data[h * m..(h + 1) * m], &mut df[t * m..(t + 1) * m]);
            }
        }
        Aggregation::Avg => {
            let w = T::one() / T::c(v as f64);
            for t in 0..v {
                axpy(w, dl, &mut dlogits_t[t * y..(t + 1) * y]);
            }
        }
        Aggregation::Max => {
            for (c, &t) in cache.argmax.iter().enumerate() {
                dlogits_t[t * y + c] += dl[c];
            }
        }
        Aggregation::Last => {
            axpy(T::one(), dl, &mut dlogits_t[(v - 1) * y..v * y]);
        }
        Aggregation::Full => {
            axpy(T::one(), dl, &mut grads.readout_bias.data);
            for i in 0..v * m {
                let row = i * y..(i + 1) * y;
                axpy(f[i], dl, &mut grads.readout.data[row.clone()]);
                df[i] += dot(&params.readout.data[row], dl);
            }
        }
    }
}
