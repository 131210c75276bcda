use rand::Rng as _;

use crate::block::{block_backward_into, block_forward, BlockCache};
use crate::data::Batch;
use crate::linalg::{dot, linear_backward, linear_forward};
use crate::rng::Rng;
use crate::{Error, Real, Result, Tensor};

use super::pool::aggregate_backward;
use super::{aggregate, AggregateCache, ModelConfig, ModelParams};

/// Causal input convolution: `x̃_t` sees exactly `x_{t−k+1..=t}`, with zeros
/// before the series start. `weight` is `[d_m × d_x × k]`; rows at or past
/// `valid_len` are zero.
pub fn input_projection<T: Real>(
    x: &[T],
    len: usize,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    valid_len: usize,
) -> Vec<T> {
    let (m, dx, k) = (weight.shape[0], weight.shape[1], weight.shape[2]);
    let mut out = vec![T::zero(); len * m];
    let mut window = vec![T::zero(); dx * k];
    for t in 0..valid_len.min(len) {
        fill_window(x, t, dx, k, &mut window);
        let row = &mut out[t * m..(t + 1) * m];
        for (o, r) in row.iter_mut().enumerate() {
            *r = bias.data[o] + dot(&weight.data[o * dx * k..(o + 1) * dx * k], &window);
        }
    }
    out
}

/// Gathers the receptive field of step `t` in `[d_x × k]` order.
fn fill_window<T: Real>(x: &[T], t: usize, dx: usize, k: usize, window: &mut [T]) {
    for i in 0..k {
        let src = (t + 1 + i).checked_sub(k);
        for c in 0..dx {
            window[c * k + i] = match src {
                Some(s) => x[s * dx + c],
                None => T::zero(),
            };
        }
    }
}

#[derive(Debug, Clone)]
pub struct SampleCache<T> {
    pub valid_len: usize,
    x: Vec<T>,
    blocks: Vec<BlockCache<T>>,
    /// Features after dropout, `[valid_len × d_m]`.
    pub f: Vec<T>,
    /// Per-element dropout scale (`0` or `1/(1−p)`); empty in eval mode.
    pub dropout: Vec<T>,
    /// Per-step logits, `[valid_len × d_y]`.
    pub logits_t: Vec<T>,
    pub agg: AggregateCache<T>,
}

#[derive(Debug, Clone)]
pub struct ModelCache<T> {
    pub samples: Vec<SampleCache<T>>,
}

/// Forward pass over a batch. Dropout is active only when `dropout_rng` is
/// given and the configured rate is positive.
pub fn model_forward<T: Real>(
    batch: &Batch<T>,
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    mut dropout_rng: Option<&mut Rng>,
) -> Result<(Vec<T>, ModelCache<T>)> {
    if batch.d_x != cfg.d_x {
        return Err(Error::Shape(format!(
            "batch has {} channels, model expects {}",
            batch.d_x, cfg.d_x
        )));
    }
    let (m, y) = (cfg.d_m, cfg.d_y);
    let p = cfg.dropout;
    let scale = T::c(1.0 / (1.0 - p));
    let mut logits = Vec::with_capacity(batch.size() * y);
    let mut samples = Vec::with_capacity(batch.size());
    for i in 0..batch.size() {
        let v = batch.lengths[i];
        let x = batch.sample(i)[..v * cfg.d_x].to_vec();
        let mut h = input_projection(&x, v, &params.input_conv, &params.input_bias, v);
        let mut blocks = Vec::with_capacity(cfg.depth);
        for bp in &params.blocks {
            let (out, c) = block_forward(&h, v, bp, &cfg.block, &cfg.ssm, v)?;
            h = out;
            blocks.push(c);
        }
        let mut dropout = Vec::new();
        if let Some(rng) = dropout_rng.as_deref_mut() {
            if p > 0.0 {
                dropout = (0..v * m)
                    .map(|_| if rng.gen::<f64>() < p { T::zero() } else { scale })
                    .collect();
                for (a, &s) in h.iter_mut().zip(&dropout) {
                    *a *= s;
                }
            }
        }
        let mut logits_t = vec![T::zero(); v * y];
        linear_forward(
            &h,
            &params.classifier.data,
            Some(&params.classifier_bias.data),
            v,
            m,
            y,
            &mut logits_t,
        );
        let (l, agg) = aggregate(&h, &logits_t, v, params, cfg)?;
        if let Some(c) = l.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                stage: "logits",
                t: v - 1,
                channel: c,
            });
        }
        logits.extend_from_slice(&l);
        samples.push(SampleCache {
            valid_len: v,
            x,
            blocks,
            f: h,
            dropout,
            logits_t,
            agg,
        });
    }
    Ok((logits, ModelCache { samples }))
}

/// Gradients of `Σ ⟨dlogits, logits⟩` with respect to every parameter.
/// Per-sample contributions are summed in batch order.
pub fn model_backward<T: Real>(
    cache: &ModelCache<T>,
    params: &ModelParams<T>,
    cfg: &ModelConfig,
    dlogits: &[T],
) -> Result<ModelParams<T>> {
    let (m, y) = (cfg.d_m, cfg.d_y);
    if dlogits.len() != cache.samples.len() * y {
        return Err(Error::Shape(format!(
            "{} logit gradients for {} samples × {y} classes",
            dlogits.len(),
            cache.samples.len()
        )));
    }
    if params.blocks.len() != cfg.depth {
        return Err(Error::Shape("parameter depth does not match config".into()));
    }
    let mut grads = ModelParams::zeros(cfg);
    for (i, s) in cache.samples.iter().enumerate() {
        if s.blocks.len() != cfg.depth {
            return Err(Error::Shape("cache depth does not match config".into()));
        }
        let v = s.valid_len;
        let dl = &dlogits[i * y..(i + 1) * y];
        let mut df = vec![T::zero(); v * m];
        let mut dlt = vec![T::zero(); v * y];
        aggregate_backward(&s.agg, &s.f, &s.logits_t, params, cfg, dl, &mut df, &mut dlt, &mut grads);
        linear_backward(
            &s.f,
            &params.classifier.data,
            &dlt,
            v,
            m,
            y,
            Some(&mut df),
            &mut grads.classifier.data,
            Some(&mut grads.classifier_bias.data),
        );
        if !s.dropout.is_empty() {
            for (g, &d) in df.iter_mut().zip(&s.dropout) {
                *g *= d;
            }
        }
        for (b, bc) in s.blocks.iter().enumerate().rev() {
            let mut dx = vec![T::zero(); v * m];
            block_backward_into(
                bc,
                &params.blocks[b],
                &cfg.block,
                &cfg.ssm,
                &df,
                &mut dx,
                &mut grads.blocks[b],
            )?;
            df = dx;
        }
        // input convolution
        let (dxc, k) = (cfg.d_x, params.input_conv.shape[2]);
        let mut window = vec![T::zero(); dxc * k];
        for t in 0..v {
            fill_window(&s.x, t, dxc, k, &mut window);
            for o in 0..m {
                let g = df[t * m + o];
                grads.input_bias.data[o] += g;
                for (w, &x) in grads.input_conv.data[o * dxc * k..(o + 1) * dxc * k]
                    .iter_mut()
                    .zip(&window)
                {
                    *w += g * x;
                }
            }
        }
    }
    Ok(grads)
}

/// Index of the largest logit; ties go to the lowest index.
pub fn predict<T: Real>(logits: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}
