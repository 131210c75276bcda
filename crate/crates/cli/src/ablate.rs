//! Named ablation presets: each hypothesis maps to a fixed list of variants
//! of one base configuration.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::ValueEnum;

use mambasl::data::{load_ts, TimeSeriesDataset};
use mambasl::model::{Aggregation, ModelHyper};
use mambasl::train::{grid_search, TrainConfig};

use crate::commands::write_grid;
use crate::config::{out_dir, read_json, RunConfig};
use crate::failure::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Hypothesis {
    /// Scaled input kernel against the fixed k = 3.
    #[value(name = "H1", alias = "h1")]
    H1,
    /// All eight time-(in)variance settings of Δ, B, C.
    #[value(name = "H2", alias = "h2")]
    H2,
    /// Skip term D off and on.
    #[value(name = "H3", alias = "h3")]
    H3,
    /// The five aggregation heads.
    #[value(name = "H4", alias = "h4")]
    H4,
    /// One, two and three stacked blocks.
    #[value(name = "depth")]
    Depth,
}

/// Variant labels and configurations for `which`, derived from `base`.
/// The `full` readout is left out on variable-length data.
pub fn variants(which: Hypothesis, base: &ModelHyper, equal_length: bool) -> Vec<(String, ModelHyper)> {
    let with = |f: &dyn Fn(&mut ModelHyper)| {
        let mut h = base.clone();
        f(&mut h);
        h
    };
    match which {
        Hypothesis::H1 => vec![
            ("scaled k".into(), with(&|h| h.fixed_k = None)),
            ("k=3".into(), with(&|h| h.fixed_k = Some(3))),
        ],
        Hypothesis::H2 => (0..8u8)
            .map(|bits| {
                let (dt, b, c) = (bits & 4 != 0, bits & 2 != 0, bits & 1 != 0);
                (
                    format!("TV-Δ={} TV-B={} TV-C={}", dt as u8, b as u8, c as u8),
                    with(&|h| {
                        h.tv_dt = dt;
                        h.tv_b = b;
                        h.tv_c = c;
                    }),
                )
            })
            .collect(),
        Hypothesis::H3 => vec![
            ("no D".into(), with(&|h| h.use_d = false)),
            ("with D".into(), with(&|h| h.use_d = true)),
        ],
        Hypothesis::H4 => Aggregation::ALL
            .into_iter()
            .filter(|&a| equal_length || a != Aggregation::Full)
            .map(|a| (a.name().to_string(), with(&|h| h.aggregation = a)))
            .collect(),
        Hypothesis::Depth => (1..=3)
            .map(|d| (format!("depth {d}"), with(&|h| h.depth = d)))
            .collect(),
    }
}

/// Finds `<Name>_TRAIN.ts` and `<Name>_TEST.ts` in `dir`.
pub fn load_dir(dir: &Path) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| Failure::Data(format!("cannot read {}: {e}", dir.display())))?;
    let mut train = None;
    for e in entries.flatten() {
        let name = e.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix("_TRAIN.ts") {
            train = Some(stem.to_string());
        }
    }
    let stem = train
        .ok_or_else(|| Failure::Data(format!("no *_TRAIN.ts file in {}", dir.display())))?;
    let tr = load_ts(dir.join(format!("{stem}_TRAIN.ts"))).context("loading train split")?;
    let te = load_ts(dir.join(format!("{stem}_TEST.ts"))).context("loading test split")?;
    Ok((tr, te))
}

pub fn run(
    data: &Path,
    which: Hypothesis,
    config: Option<&Path>,
    epochs: Option<usize>,
    jobs: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let (base, mut train_cfg, cfg_out) = match config {
        Some(p) => {
            let rc = read_json::<RunConfig>(p)?.resolve(p);
            (rc.model, rc.train, rc.out_dir)
        }
        None => (ModelHyper::default(), TrainConfig::default(), None),
    };
    if let Some(e) = epochs {
        train_cfg.epochs = e;
    }
    let (tr, te) = load_dir(data)?;
    let equal = tr.min_len() == tr.max_len() && te.min_len() == te.max_len() && tr.max_len() == te.max_len();
    let vs = variants(which, &base, equal);
    let (labels, hypers): (Vec<String>, Vec<ModelHyper>) = vs.into_iter().unzip();
    let dir = out_dir(out, cfg_out.as_ref())?;
    let start = Instant::now();
    let outcome = grid_search::<f32>(&hypers, &tr, &te, &train_cfg, jobs)?;
    write_grid(&dir, &outcome, "ablation.jsonl")?;

    println!("{which:?} ablation on {} ({} epochs max)", tr.meta.name, train_cfg.epochs);
    println!("{:<26} {:>9} {:>7} {:>8}", "variant", "params", "epochs", "acc");
    for (label, r) in labels.iter().zip(&outcome.records) {
        println!("{label:<26} {:>9} {:>7} {:>8.3}", r.num_params, r.epochs_run, r.test_accuracy);
    }
    if which == Hypothesis::H4 && !equal {
        println!("(full readout skipped: variable-length data)");
    }
    println!("{:.1}s, wrote {}", start.elapsed().as_secs_f64(), dir.display());
    Ok(())
}
