//! Gated Mamba block: RMSNorm → in-projection → causal depthwise conv →
//! SiLU → selective scan, gated by `silu(z)` and projected back to `d_m`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{linear_backward, linear_forward, silu, silu_grad};
use crate::ssm::{
    selective_scan_backward_into, selective_scan_forward, ScanCache, SsmConfig, SsmParams,
};
use crate::{Error, Real, Result, Tensor};

pub const EPS_RMS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub d_m: usize,
    pub expand: usize,
    pub d_conv: usize,
    pub use_norm: bool,
    pub use_block_residual: bool,
}

impl BlockConfig {
    pub fn d_inner(&self) -> usize {
        self.expand * self.d_m
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_m == 0 || self.expand == 0 || self.d_conv == 0 {
            return Err(Error::Config(
                "d_m, expand and d_conv must all be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn active_names(&self) -> Vec<&'static str> {
        let mut v = vec!["in_proj", "conv_weight", "conv_bias", "out_proj"];
        if self.use_norm {
            v.push("norm_weight");
        }
        v
    }

    /// Trainable scalars in the block, including its scan.
    pub fn num_params(&self, ssm: &SsmConfig) -> usize {
        let (m, d) = (self.d_m, self.d_inner());
        let mut n = m * 2 * d + d * self.d_conv + d + d * m;
        if self.use_norm {
            n += m;
        }
        n + ssm.num_params()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<T> {
    /// `[d_m × 2·d_inner]`; the first half of the outputs feeds the scan,
    /// the second half is the gate branch.
    pub in_proj: Tensor<T>,
    /// `[d_inner × d_conv]`; the last tap multiplies the current step.
    pub conv_weight: Tensor<T>,
    pub conv_bias: Tensor<T>,
    /// `[d_inner × d_m]`
    pub out_proj: Tensor<T>,
    pub norm_weight: Tensor<T>,
    pub ssm: SsmParams<T>,
}

impl<T: Real> BlockParams<T> {
    pub fn zeros(cfg: &BlockConfig, ssm: &SsmConfig) -> Self {
        let (m, d) = (cfg.d_m, cfg.d_inner());
        Self {
            in_proj: Tensor::zeros(&[m, 2 * d]),
            conv_weight: Tensor::zeros(&[d, cfg.d_conv]),
            conv_bias: Tensor::zeros(&[d]),
            out_proj: Tensor::zeros(&[d, m]),
            norm_weight: Tensor::zeros(&[m]),
            ssm: SsmParams::zeros(ssm),
        }
    }

    pub fn init(cfg: &BlockConfig, ssm: &SsmConfig, rng: &mut impl Rng) -> Self {
        let (m, d) = (cfg.d_m, cfg.d_inner());
        let k = 1.0 / (cfg.d_conv as f64).sqrt();
        Self {
            in_proj: Tensor::uniform(&[m, 2 * d], 1.0 / (m as f64).sqrt(), rng),
            conv_weight: Tensor::uniform(&[d, cfg.d_conv], k, rng),
            conv_bias: Tensor::uniform(&[d], k, rng),
            out_proj: Tensor::uniform(&[d, m], 1.0 / (d as f64).sqrt(), rng),
            norm_weight: Tensor::filled(&[m], T::one()),
            ssm: SsmParams::init(ssm, rng),
        }
    }

    /// Every tensor with its name; scan tensors carry an `ssm.` prefix.
    pub fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut v = vec![
            ("in_proj".to_string(), &self.in_proj),
            ("conv_weight".to_string(), &self.conv_weight),
            ("conv_bias".to_string(), &self.conv_bias),
            ("out_proj".to_string(), &self.out_proj),
            ("norm_weight".to_string(), &self.norm_weight),
        ];
        v.extend(self.ssm.tensors().map(|(n, t)| (format!("ssm.{n}"), t)));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut v = vec![
            ("in_proj".to_string(), &mut self.in_proj),
            ("conv_weight".to_string(), &mut self.conv_weight),
            ("conv_bias".to_string(), &mut self.conv_bias),
            ("out_proj".to_string(), &mut self.out_proj),
            ("norm_weight".to_string(), &mut self.norm_weight),
        ];
        v.extend(
            self.ssm
                .tensors_mut()
                .into_iter()
                .map(|(n, t)| (format!("ssm.{n}"), t)),
        );
        v
    }
}

/// Names of the block tensors that take part in the computation.
pub fn active_block_names(cfg: &BlockConfig, ssm: &SsmConfig) -> Vec<String> {
    let mut v: Vec<String> = cfg.active_names().into_iter().map(String::from).collect();
    v.extend(ssm.active_names().into_iter().map(|n| format!("ssm.{n}")));
    v
}

/// Root-mean-square normalization of one row: `x·γ / sqrt(mean(x²) + ε)`.
/// Returns the inverse RMS factor for reuse in the backward pass.
pub fn rmsnorm<T: Real>(x: &[T], gamma: &[T], out: &mut [T]) -> T {
    let ms = x.iter().map(|&v| v * v).sum::<T>() / T::c(x.len() as f64);
    let inv = T::one() / (ms + T::c(EPS_RMS)).sqrt();
    for ((o, &v), &g) in out.iter_mut().zip(x).zip(gamma) {
        *o = v * inv * g;
    }
    inv
}

fn rmsnorm_backward<T: Real>(x: &[T], gamma: &[T], inv: T, dh: &[T], dx: &mut [T], dgamma: &mut [T]) {
    let n = T::c(x.len() as f64);
    let mut dot = T::zero();
    for i in 0..x.len() {
        dgamma[i] += dh[i] * x[i] * inv;
        dot += gamma[i] * dh[i] * x[i];
    }
    let k = inv * inv * inv / n * dot;
    for i in 0..x.len() {
        dx[i] += inv * gamma[i] * dh[i] - x[i] * k;
    }
}

/// Causal depthwise convolution over `x` (`[len × channels]`):
/// `y_t = bias + Σ_i w[i]·x_{t−d_conv+1+i}` with zeros before the start.
/// Rows at or past `valid_len` are zero.
pub fn depthwise_causal_conv<T: Real>(
    x: &[T],
    len: usize,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    valid_len: usize,
) -> Vec<T> {
    let (ch, k) = (weight.shape[0], weight.shape[1]);
    debug_assert_eq!(x.len(), len * ch);
    let mut y = vec![T::zero(); len * ch];
    for t in 0..valid_len.min(len) {
        let row = &mut y[t * ch..(t + 1) * ch];
        row.copy_from_slice(&bias.data);
        for i in 0..k {
            let Some(src) = (t + 1 + i).checked_sub(k) else {
                continue;
            };
            let xs = &x[src * ch..(src + 1) * ch];
            for j in 0..ch {
                row[j] += weight.data[j * k + i] * xs[j];
            }
        }
    }
    y
}

#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    len: usize,
    valid_len: usize,
    x: Vec<T>,
    inv_rms: Vec<T>,
    h: Vec<T>,
    u: Vec<T>,
    z: Vec<T>,
    conv: Vec<T>,
    scan: ScanCache<T>,
    ys: Vec<T>,
    gated: Vec<T>,
}

/// Runs one block over `x` (`[len × d_m]`); rows at or past `valid_len` of
/// the output are zero.
pub fn block_forward<T: Real>(
    x: &[T],
    len: usize,
    params: &BlockParams<T>,
    cfg: &BlockConfig,
    ssm_cfg: &SsmConfig,
    valid_len: usize,
) -> Result<(Vec<T>, BlockCache<T>)> {
    let (m, d) = (cfg.d_m, cfg.d_inner());
    if ssm_cfg.d_inner != d {
        return Err(Error::Config(format!(
            "scan width {} does not match block inner width {d}",
            ssm_cfg.d_inner
        )));
    }
    if x.len() != len * m || valid_len > len {
        return Err(Error::Shape(format!(
            "block input has {} values for len {len} × {m} (valid {valid_len})",
            x.len()
        )));
    }
    let v = valid_len;
    let xv = &x[..v * m];

    let mut h = vec![T::zero(); v * m];
    let mut inv_rms = Vec::new();
    if cfg.use_norm {
        inv_rms = (0..v)
            .map(|t| {
                rmsnorm(
                    &xv[t * m..(t + 1) * m],
                    &params.norm_weight.data,
                    &mut h[t * m..(t + 1) * m],
                )
            })
            .collect();
    } else {
        h.copy_from_slice(xv);
    }

    let mut uz = vec![T::zero(); v * 2 * d];
    linear_forward(&h, &params.in_proj.data, None, v, m, 2 * d, &mut uz);
    let mut u = Vec::with_capacity(v * d);
    let mut z = Vec::with_capacity(v * d);
    for row in uz.chunks(2 * d) {
        u.extend_from_slice(&row[..d]);
        z.extend_from_slice(&row[d..]);
    }

    let conv = depthwise_causal_conv(&u, v, &params.conv_weight, &params.conv_bias, v);
    let act: Vec<T> = conv.iter().map(|&c| silu(c)).collect();
    let (ys, scan) = selective_scan_forward(&act, v, &params.ssm, ssm_cfg, v)?;
    let gated: Vec<T> = ys.iter().zip(&z).map(|(&y, &g)| y * silu(g)).collect();

    let mut f = vec![T::zero(); len * m];
    linear_forward(&gated, &params.out_proj.data, None, v, d, m, &mut f[..v * m]);
    if cfg.use_block_residual {
        for (o, &xi) in f[..v * m].iter_mut().zip(xv) {
            *o += xi;
        }
    }
    let cache = BlockCache {
        len,
        valid_len: v,
        x: xv.to_vec(),
        inv_rms,
        h,
        u,
        z,
        conv,
        scan,
        ys,
        gated,
    };
    Ok((f, cache))
}

/// Exact reverse of [`block_forward`]; adds into `dx` (`[len × d_m]`) and
/// `grads`.
pub fn block_backward_into<T: Real>(
    cache: &BlockCache<T>,
    params: &BlockParams<T>,
    cfg: &BlockConfig,
    ssm_cfg: &SsmConfig,
    df: &[T],
    dx: &mut [T],
    grads: &mut BlockParams<T>,
) -> Result<()> {
    let (m, d, k) = (cfg.d_m, cfg.d_inner(), cfg.d_conv);
    let v = cache.valid_len;
    if df.len() != cache.len * m || dx.len() != cache.len * m || cache.x.len() != v * m {
        return Err(Error::Shape(format!(
            "block gradient has {} values, cache holds {} × {m}",
            df.len(),
            cache.len
        )));
    }
    let dfv = &df[..v * m];
    if cfg.use_block_residual {
        for (a, &b) in dx[..v * m].iter_mut().zip(dfv) {
            *a += b;
        }
    }

    let mut dgated = vec![T::zero(); v * d];
    linear_backward(
        &cache.gated,
        &params.out_proj.data,
        dfv,
        v,
        d,
        m,
        Some(&mut dgated),
        &mut grads.out_proj.data,
        None,
    );

    let mut dys = vec![T::zero(); v * d];
    let mut duz = vec![T::zero(); v * 2 * d];
    for t in 0..v {
        for j in 0..d {
            let i = t * d + j;
            let zg = cache.z[i];
            dys[i] = dgated[i] * silu(zg);
            duz[t * 2 * d + d + j] = dgated[i] * cache.ys[i] * silu_grad(zg);
        }
    }

    let mut dact = vec![T::zero(); v * d];
    selective_scan_backward_into(
        &cache.scan,
        &params.ssm,
        ssm_cfg,
        &dys,
        &mut dact,
        &mut grads.ssm,
    )?;

    let dconv: Vec<T> = dact
        .iter()
        .zip(&cache.conv)
        .map(|(&g, &c)| g * silu_grad(c))
        .collect();
    for t in 0..v {
        let gy = &dconv[t * d..(t + 1) * d];
        for (b, &g) in grads.conv_bias.data.iter_mut().zip(gy) {
            *b += g;
        }
        for i in 0..k {
            let Some(src) = (t + 1 + i).checked_sub(k) else {
                continue;
            };
            for j in 0..d {
                grads.conv_weight.data[j * k + i] += gy[j] * cache.u[src * d + j];
                duz[src * 2 * d + j] += gy[j] * params.conv_weight.data[j * k + i];
            }
        }
    }

    let mut dh = vec![T::zero(); v * m];
    linear_backward(
        &cache.h,
        &params.in_proj.data,
        &duz,
        v,
        m,
        2 * d,
        Some(&mut dh),
        &mut grads.in_proj.data,
        None,
    );

    if cfg.use_norm {
        for t in 0..v {
            rmsnorm_backward(
                &cache.x[t * m..(t + 1) * m],
                &params.norm_weight.data,
                cache.inv_rms[t],
                &dh[t * m..(t + 1) * m],
                &mut dx[t * m..(t + 1) * m],
                &mut grads.norm_weight.data,
            );
        }
    } else {
        for (a, &b) in dx[..v * m].iter_mut().zip(&dh) {
            *a += b;
        }
    }
    Ok(())
}

pub fn block_backward<T: Real>(
    cache: &BlockCache<T>,
    params: &BlockParams<T>,
    cfg: &BlockConfig,
    ssm_cfg: &SsmConfig,
    df: &[T],
) -> Result<(Vec<T>, BlockParams<T>)> {
    let mut dx = vec![T::zero(); cache.len * cfg.d_m];
    let mut grads = BlockParams::zeros(cfg, ssm_cfg);
    block_backward_into(cache, params, cfg, ssm_cfg, df, &mut dx, &mut grads)?;
    Ok((dx, grads))
}
