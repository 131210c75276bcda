use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{train, Checkpoint, TrainConfig, TrainReport};
use crate::data::TimeSeriesDataset;
use crate::model::{Aggregation, ModelConfig, ModelHyper};
use crate::{Error, Real, Result};

/// Lists of values per hyperparameter; the grid is their cartesian product.
/// Missing lists keep the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpace {
    pub d_m: Option<Vec<usize>>,
    pub d_s: Option<Vec<usize>>,
    pub tv_dt: Option<Vec<bool>>,
    pub tv_b: Option<Vec<bool>>,
    pub tv_c: Option<Vec<bool>>,
    pub use_d: Option<Vec<bool>>,
    pub depth: Option<Vec<usize>>,
    pub aggregation: Option<Vec<Aggregation>>,
    pub n_heads: Option<Vec<usize>>,
}

/// The published search space: 6 widths × 5 state sizes × 8 switch settings.
pub fn mambasl_grid() -> GridSpace {
    GridSpace {
        d_m: Some(vec![32, 64, 128, 256, 512, 1024]),
        d_s: Some(vec![1, 2, 4, 8, 16]),
        tv_dt: Some(vec![false, true]),
        tv_b: Some(vec![false, true]),
        tv_c: Some(vec![false, true]),
        use_d: Some(vec![false]),
        ..GridSpace::default()
    }
}

/// Cartesian product in declaration order, the last listed field varying
/// fastest.
pub fn expand_space(base: &ModelHyper, space: &GridSpace) -> Vec<ModelHyper> {
    fn axis<V: Clone>(
        acc: Vec<ModelHyper>,
        values: &Option<Vec<V>>,
        set: impl Fn(&mut ModelHyper, V),
    ) -> Vec<ModelHyper> {
        let Some(values) = values else { return acc };
        acc.iter()
            .flat_map(|h| {
                values.iter().map(|v| {
                    let mut h = h.clone();
                    set(&mut h, v.clone());
                    h
                })
            })
            .collect()
    }
    let mut out = vec![base.clone()];
    out = axis(out, &space.d_m, |h, v| h.d_m = v);
    out = axis(out, &space.d_s, |h, v| h.d_s = v);
    out = axis(out, &space.tv_dt, |h, v| h.tv_dt = v);
    out = axis(out, &space.tv_b, |h, v| h.tv_b = v);
    out = axis(out, &space.tv_c, |h, v| h.tv_c = v);
    out = axis(out, &space.use_d, |h, v| h.use_d = v);
    out = axis(out, &space.depth, |h, v| h.depth = v);
    out = axis(out, &space.aggregation, |h, v| h.aggregation = v);
    out = axis(out, &space.n_heads, |h, v| h.n_heads = v);
    out
}

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub index: usize,
    pub config: ModelHyper,
    pub seed: u64,
    pub num_params: usize,
    pub epochs_run: usize,
    pub selected_epoch: Option<usize>,
    pub train_losses: Vec<f64>,
    pub test_accuracy: f64,
    pub wall_clock_s: f64,
}

impl GridRecord {
    /// Equality of everything except timing.
    pub fn same_result(&self, other: &Self) -> bool {
        let mut o = other.clone();
        o.wall_clock_s = self.wall_clock_s;
        *self == o
    }
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    /// In space order, regardless of completion order.
    pub records: Vec<GridRecord>,
    pub best: usize,
    pub best_report: TrainReport,
    pub best_checkpoint: Checkpoint,
}

/// Ranking key: higher accuracy, then fewer parameters, then earlier index.
fn better(a: &GridRecord, b: &GridRecord) -> bool {
    (a.test_accuracy > b.test_accuracy)
        || (a.test_accuracy == b.test_accuracy
            && (a.num_params, a.index) < (b.num_params, b.index))
}

/// Trains every config in `space` with the same training settings and
/// returns all records plus the best run. Up to `jobs` runs execute
/// concurrently; each run is independent, so results do not depend on
/// `jobs`.
pub fn grid_search<T: Real>(
    space: &[ModelHyper],
    train_ds: &TimeSeriesDataset,
    test_ds: &TimeSeriesDataset,
    train_cfg: &TrainConfig,
    jobs: usize,
) -> Result<GridOutcome> {
    if space.is_empty() {
        return Err(Error::Config("empty search space".into()));
    }
    let cfgs = space
        .iter()
        .map(|h| ModelConfig::for_datasets(h, train_ds, test_ds))
        .collect::<Result<Vec<_>>>()?;

    let next = AtomicUsize::new(0);
    let records: Mutex<Vec<Option<GridRecord>>> = Mutex::new(vec![None; space.len()]);
    let best: Mutex<Option<(GridRecord, TrainReport, Checkpoint)>> = Mutex::new(None);
    let failure: Mutex<Option<Error>> = Mutex::new(None);

    let worker = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        if i >= space.len() || failure.lock().unwrap().is_some() {
            return;
        }
        match train::<T>(train_ds, test_ds, &cfgs[i], train_cfg) {
            Ok((report, ckpt)) => {
                let rec = GridRecord {
                    index: i,
                    config: space[i].clone(),
                    seed: train_cfg.seed,
                    num_params: report.num_params,
                    epochs_run: report.epochs_run,
                    selected_epoch: report.selected_epoch,
                    train_losses: report.train_loss.clone(),
                    test_accuracy: report.final_test_accuracy,
                    wall_clock_s: report.wall_clock_s,
                };
                let mut b = best.lock().unwrap();
                if b.as_ref().is_none_or(|(r, _, _)| better(&rec, r)) {
                    *b = Some((rec.clone(), report, ckpt));
                }
                records.lock().unwrap()[i] = Some(rec);
            }
            Err(e) => {
                failure.lock().unwrap().get_or_insert(e);
            }
        }
    };

    let jobs = jobs.clamp(1, space.len());
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let records: Vec<GridRecord> = records
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every index ran"))
        .collect();
    let (rec, best_report, best_checkpoint) = best.into_inner().unwrap().expect("non-empty grid");
    Ok(GridOutcome {
        records,
        best: rec.index,
        best_report,
        best_checkpoint,
    })
}
