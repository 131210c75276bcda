use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    batch_cross_entropy, evaluate, radam_step, Checkpoint, OptimizerState, Provenance, RAdam,
    Selection, TieBreak, TrainConfig,
};
use crate::data::{
    apply_instance_norm, apply_normalizer, batches, fit_normalizer, Normalization,
    NormalizationStats, TimeSeriesDataset,
};
use crate::model::{model_backward, model_forward, ModelConfig, ModelParams};
use crate::rng::{self, Stream};
use crate::{Error, Real, Result};

/// Everything a run reports. Wall-clock time is kept out of the serialized
/// form so that reports of identical runs are byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub dataset: String,
    pub num_params: usize,
    pub epochs_run: usize,
    /// Epoch-mean training loss.
    pub train_loss: Vec<f64>,
    /// Accuracy on the evaluation split after every epoch.
    pub eval_accuracy: Vec<f64>,
    pub selected_epoch: Option<usize>,
    pub final_test_accuracy: f64,
    pub stopped_early: bool,
    pub model_cfg: ModelConfig,
    pub train_cfg: TrainConfig,
    #[serde(skip)]
    pub wall_clock_s: f64,
}

/// Applies the configured preprocessing to both splits. Statistics are
/// fitted on the train split only.
pub fn prepare_datasets(
    train: &TimeSeriesDataset,
    eval: &TimeSeriesDataset,
    mode: Normalization,
) -> Result<(TimeSeriesDataset, TimeSeriesDataset, Option<NormalizationStats>)> {
    train.check_compatible(eval)?;
    Ok(match mode {
        Normalization::Zscore => {
            let stats = fit_normalizer(train);
            (
                apply_normalizer(train, &stats)?,
                apply_normalizer(eval, &stats)?,
                Some(stats),
            )
        }
        Normalization::Instance => (apply_instance_norm(train), apply_instance_norm(eval), None),
        Normalization::None => (train.clone(), eval.clone(), None),
    })
}

fn check_fit(ds: &TimeSeriesDataset, cfg: &ModelConfig) -> Result<()> {
    if ds.meta.d_x != cfg.d_x || ds.meta.d_y != cfg.d_y {
        return Err(Error::Config(format!(
            "dataset {} has d_x={}, d_y={}; model expects d_x={}, d_y={}",
            ds.meta.name, ds.meta.d_x, ds.meta.d_y, cfg.d_x, cfg.d_y
        )));
    }
    if ds.max_len() > cfg.max_len {
        return Err(Error::Config(format!(
            "dataset {} has series of length {}, model built for at most {}",
            ds.meta.name,
            ds.max_len(),
            cfg.max_len
        )));
    }
    Ok(())
}

/// Seeded training run on raw train/eval splits.
///
/// Every epoch shuffles, runs mini-batch RAdam and evaluates; the kept
/// parameters follow `train_cfg.selection` (ties resolved by `tie_break`) and
/// training stops after `patience` epochs without improvement of that
/// metric (`patience = 0` disables early stopping). The returned checkpoint
/// holds the selected parameters in `f32`.
pub fn train<T: Real>(
    train_raw: &TimeSeriesDataset,
    eval_raw: &TimeSeriesDataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<(TrainReport, Checkpoint)> {
    let start = Instant::now();
    model_cfg.validate()?;
    if train_cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if train_raw.is_empty() {
        return Err(Error::Data("empty training split".into()));
    }
    check_fit(train_raw, model_cfg)?;
    check_fit(eval_raw, model_cfg)?;
    let (train_ds, eval_ds, stats) =
        prepare_datasets(train_raw, eval_raw, train_cfg.normalization)?;

    let opt = RAdam {
        lr: train_cfg.lr,
        beta1: train_cfg.beta1,
        beta2: train_cfg.beta2,
        eps: train_cfg.eps,
    };
    let mut params = ModelParams::<T>::init(model_cfg, train_cfg.seed);
    let mut state = OptimizerState::new(params.active(model_cfg).iter().map(|(_, t)| t.len()));
    let mut best = params.clone();
    let mut best_metric = f64::NEG_INFINITY;
    let mut selected_epoch = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;
    let mut losses = Vec::new();
    let mut accs = Vec::new();

    for epoch in 0..train_cfg.epochs {
        let mut drop_rng = rng::stream(train_cfg.seed, Stream::Dropout { epoch: epoch as u32 });
        let mut loss_sum = 0.0;
        for batch in batches::<T>(&train_ds, train_cfg.batch_size, true, train_cfg.seed, epoch as u32) {
            let (logits, cache) = model_forward(&batch, &params, model_cfg, Some(&mut drop_rng))?;
            let (loss, dlogits) = batch_cross_entropy(&logits, &batch.labels);
            let loss = loss.to_f64c();
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    stage: "loss",
                    t: epoch,
                    channel: 0,
                });
            }
            loss_sum += loss * batch.size() as f64;
            let grads = model_backward(&cache, &params, model_cfg, &dlogits)?;
            let g: Vec<_> = grads.active(model_cfg).into_iter().map(|(_, t)| t).collect();
            let mut p: Vec<_> = params.active_mut(model_cfg).into_iter().map(|(_, t)| t).collect();
            radam_step(&mut p, &g, &mut state, &opt);
        }
        let epoch_loss = loss_sum / train_ds.len() as f64;
        let acc = evaluate(&eval_ds, &params, model_cfg)?;
        losses.push(epoch_loss);
        accs.push(acc);

        let metric = match train_cfg.selection {
            Selection::EvalMetric => acc,
            Selection::TrainLoss => -epoch_loss,
        };
        let improved = metric > best_metric
            || (train_cfg.tie_break == TieBreak::Latest && metric == best_metric);
        if improved {
            best_metric = metric;
            best = params.clone();
            selected_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if train_cfg.patience > 0 && since_best >= train_cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let mut kept = best.cast::<f32>(model_cfg);
    kept.zero_inactive(model_cfg);
    let ckpt = Checkpoint {
        model_cfg: model_cfg.clone(),
        train_cfg: train_cfg.clone(),
        provenance: Provenance {
            dataset: train_raw.meta.name.clone(),
            normalization: train_cfg.normalization,
            stats,
            selection: train_cfg.selection,
            selected_epoch,
            kernel: model_cfg.kernel(),
        },
        params: kept,
    };
    let final_test_accuracy = evaluate(&eval_ds, &ckpt.params, model_cfg)?;
    let report = TrainReport {
        dataset: train_raw.meta.name.clone(),
        num_params: model_cfg.num_params(),
        epochs_run: losses.len(),
        train_loss: losses,
        eval_accuracy: accs,
        selected_epoch,
        final_test_accuracy,
        stopped_early,
        model_cfg: model_cfg.clone(),
        train_cfg: train_cfg.clone(),
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    Ok((report, ckpt))
}
