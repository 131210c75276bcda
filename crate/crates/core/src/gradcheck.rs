//! Finite-difference verification of the full backward pass in `f64`.
//!
//! Every case builds a small random model, perturbs its parameters away
//! from the initialization (the zero-initialized gates would otherwise sit
//! exactly on the non-differentiable max-over-heads tie), and compares the
//! analytic gradient of the mean cross-entropy on a random batch against
//! central differences, element by element.

use rand::Rng as _;
use serde::Serialize;

use crate::data::{Batch, DatasetMeta, SeriesSample, Split, TimeSeriesDataset};
use crate::model::{model_backward, model_forward, Aggregation, ModelConfig, ModelHyper, ModelParams};
use crate::rng::{self, Stream};
use crate::train::batch_cross_entropy;
use crate::Result;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Pass threshold on the per-tensor maximum relative error.
pub const FD_TOLERANCE: f64 = 1e-4;
/// Denominator floor: entries whose gradients are both below this in
/// magnitude are compared in absolute terms.
pub const FD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// `L=8, d_x=3, d_m=4, d_s=2, d_y=3`, all switches time-variant,
    /// adaptive pooling, with and without the skip term.
    Tiny,
    /// The tiny case at depth 1, 2 and 3.
    Depth,
    /// Larger widths, every switch setting and every aggregation mode.
    Small,
}

impl std::str::FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "tiny" => Ok(Preset::Tiny),
            "depth" => Ok(Preset::Depth),
            "small" => Ok(Preset::Small),
            _ => Err(format!("unknown preset '{s}' (expected tiny, depth or small)")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    /// Scales the analytic gradient of the first block's `A_log` by 1.1.
    /// Negative control for the checker itself.
    pub corrupt: bool,
}

#[derive(Debug, Clone)]
pub struct Case {
    pub label: String,
    pub hyper: ModelHyper,
    pub d_x: usize,
    pub d_y: usize,
    pub lengths: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub numel: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub label: String,
    pub tensors: Vec<TensorCheck>,
}

impl CaseReport {
    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.max_rel_err < FD_TOLERANCE)
    }
}

fn tiny_hyper() -> ModelHyper {
    ModelHyper {
        d_m: 4,
        d_s: 2,
        tv_dt: true,
        tv_b: true,
        tv_c: true,
        aggregation: Aggregation::Adaptive,
        dropout: 0.0,
        ..ModelHyper::default()
    }
}

pub fn cases(preset: Preset) -> Vec<Case> {
    let tiny = |label: String, hyper: ModelHyper| Case {
        label,
        hyper,
        d_x: 3,
        d_y: 3,
        lengths: vec![8, 5, 8],
    };
    match preset {
        Preset::Tiny => [false, true]
            .into_iter()
            .map(|use_d| tiny(format!("tiny use_D={}", use_d as u8), ModelHyper { use_d, ..tiny_hyper() }))
            .collect(),
        Preset::Depth => (1..=3)
            .map(|depth| {
                tiny(
                    format!("tiny depth={depth}"),
                    ModelHyper { depth, use_d: true, ..tiny_hyper() },
                )
            })
            .collect(),
        Preset::Small => {
            let small = |label: String, hyper: ModelHyper, equal: bool| Case {
                label,
                hyper: ModelHyper { d_m: 8, d_s: 4, depth: 2, dropout: 0.0, ..hyper },
                d_x: 4,
                d_y: 3,
                lengths: if equal { vec![16; 3] } else { vec![16, 9, 12] },
            };
            let mut v = Vec::new();
            for bits in 0..8u8 {
                let (dt, b, c) = (bits & 4 != 0, bits & 2 != 0, bits & 1 != 0);
                let h = ModelHyper { tv_dt: dt, tv_b: b, tv_c: c, use_d: true, ..tiny_hyper() };
                v.push(small(format!("small theta={}{}{}", dt as u8, b as u8, c as u8), h, false));
            }
            for agg in Aggregation::ALL {
                let h = ModelHyper { aggregation: agg, ..tiny_hyper() };
                let equal = agg == Aggregation::Full;
                v.push(small(format!("small aggregation={}", agg.name()), h, equal));
            }
            v.push(small(
                "small share_A euler_B".into(),
                ModelHyper { share_a: true, euler_b: true, ..tiny_hyper() },
                false,
            ));
            v
        }
    }
}

fn synthetic(case: &Case, seed: u64) -> Result<TimeSeriesDataset> {
    let mut r = rng::stream(seed, Stream::Synthetic { tag: 0 });
    let equal = case.lengths.iter().all(|&l| l == case.lengths[0]);
    let meta = DatasetMeta {
        name: "gradcheck".into(),
        d_x: case.d_x,
        d_y: case.d_y,
        equal_length: equal,
        series_length: equal.then_some(case.lengths[0]),
        label_names: (0..case.d_y).map(|i| i.to_string()).collect(),
        split: Split::Train,
    };
    let samples = case
        .lengths
        .iter()
        .enumerate()
        .map(|(i, &length)| SeriesSample {
            values: (0..length * case.d_x).map(|_| r.gen_range(-1.0..1.0)).collect(),
            length,
            label: i % case.d_y,
        })
        .collect();
    TimeSeriesDataset::new(meta, samples)
}

/// Runs one case. Deterministic in `seed`.
pub fn check_case(case: &Case, seed: u64, opts: &Options) -> Result<CaseReport> {
    let ds = synthetic(case, seed)?;
    let cfg = ModelConfig::from_hyper(&case.hyper, &ds.meta, ds.max_len())?;
    let batch = Batch::<f64>::from_indices(&ds, &(0..ds.len()).collect::<Vec<_>>());

    let mut params = ModelParams::<f64>::init(&cfg, seed);
    let mut r = rng::stream(seed, Stream::Synthetic { tag: 1 });
    for (_, t) in params.active_mut(&cfg) {
        for v in &mut t.data {
            *v += r.gen_range(-0.3..0.3);
        }
    }

    let loss = |p: &ModelParams<f64>| -> Result<f64> {
        let (logits, _) = model_forward(&batch, p, &cfg, None)?;
        Ok(batch_cross_entropy(&logits, &batch.labels).0)
    };
    let (logits, cache) = model_forward(&batch, &params, &cfg, None)?;
    let (_, dlogits) = batch_cross_entropy(&logits, &batch.labels);
    let mut grads = model_backward(&cache, &params, &cfg, &dlogits)?;
    if opts.corrupt {
        if let Some(b) = grads.blocks.first_mut() {
            b.ssm.a_log.data.iter_mut().for_each(|g| *g *= 1.1);
        }
    }

    let names = ModelParams::<f64>::active_names(&cfg);
    let mut tensors = Vec::with_capacity(names.len());
    for name in names {
        let analytic = grads
            .active(&cfg)
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.data.clone())
            .expect("active gradient");
        let mut worst = 0.0f64;
        for (i, &a) in analytic.iter().enumerate() {
            let mut probe = |delta: f64| -> Result<f64> {
                let (_, t) = params
                    .tensors_mut()
                    .into_iter()
                    .find(|(n, _)| *n == name)
                    .expect("named tensor");
                let orig = t.data[i];
                t.data[i] = orig + delta;
                let l = loss(&params);
                params
                    .tensors_mut()
                    .into_iter()
                    .find(|(n, _)| *n == name)
                    .expect("named tensor")
                    .1
                    .data[i] = orig;
                l
            };
            let numeric = (probe(FD_STEP)? - probe(-FD_STEP)?) / (2.0 * FD_STEP);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
            worst = worst.max(err);
        }
        tensors.push(TensorCheck {
            name,
            numel: analytic.len(),
            max_rel_err: worst,
        });
    }
    Ok(CaseReport {
        label: case.label.clone(),
        tensors,
    })
}

pub fn run_preset(preset: Preset, seed: u64, opts: &Options) -> Result<Vec<CaseReport>> {
    cases(preset).iter().map(|c| check_case(c, seed, opts)).collect()
}
