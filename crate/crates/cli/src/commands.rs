use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use mambasl::data::load_ts;
use mambasl::gradcheck::{self, Options, Preset};
use mambasl::model::ModelConfig;
use mambasl::train::{expand_space, grid_search, save_checkpoint, train as train_run, GridOutcome};

use crate::config::{out_dir, read_json, GridConfig, RunConfig};
use crate::failure::Failure;

pub fn inspect(path: &Path) -> Result<()> {
    let ds = load_ts(path).with_context(|| format!("reading {}", path.display()))?;
    let n = ds.len();
    let (lo, hi) = (ds.min_len(), ds.max_len());
    let len = if lo == hi { format!("{hi}") } else { format!("{lo}-{hi}") };
    let count = |k: usize, one: &str, many: &str| format!("{k} {}", if k == 1 { one } else { many });
    println!(
        "{}, L={len}, {}, {}",
        count(n, "sample", "samples"),
        count(ds.meta.d_x, "var", "vars"),
        count(ds.meta.d_y, "class", "classes")
    );
    println!("name: {}", ds.meta.name);
    println!("split: {:?}", ds.meta.split);
    println!("labels: {}", ds.meta.label_names.join(", "));
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn train(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let rc = read_json::<RunConfig>(config)?.resolve(config);
    let (tr, te) = rc.load_data()?;
    let cfg = ModelConfig::for_datasets(&rc.model, &tr, &te)?;
    let dir = out_dir(out, rc.out_dir.as_ref())?;
    let (report, ckpt) = train_run::<f32>(&tr, &te, &cfg, &rc.train)?;
    save_checkpoint(&ckpt, dir.join("model.mbsl"))?;
    write_json(&dir.join("report.json"), &report)?;
    println!(
        "{}: {} params, {} epochs, selected epoch {}, {:.1}s",
        report.dataset,
        report.num_params,
        report.epochs_run,
        report
            .selected_epoch
            .map_or("none (initialization)".to_string(), |e| e.to_string()),
        report.wall_clock_s
    );
    println!("test accuracy: {:.3}", report.final_test_accuracy);
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn print_grid(outcome: &GridOutcome) {
    println!(
        "{:>4} {:>5} {:>4} {:>5} {:>5} {:>5} {:>9} {:>5} {:>9} {:>7} {:>8}",
        "#", "d_m", "d_s", "θΔBC", "use_D", "depth", "agg", "heads", "params", "epochs", "acc"
    );
    for r in &outcome.records {
        let h = &r.config;
        let mark = if r.index == outcome.best { " *" } else { "" };
        println!(
            "{:>4} {:>5} {:>4} {:>5} {:>5} {:>5} {:>9} {:>5} {:>9} {:>7} {:>8.3}{mark}",
            r.index,
            h.d_m,
            h.d_s,
            format!("{}{}{}", h.tv_dt as u8, h.tv_b as u8, h.tv_c as u8),
            h.use_d as u8,
            h.depth,
            h.aggregation.name(),
            h.n_heads,
            r.num_params,
            r.epochs_run,
            r.test_accuracy
        );
    }
}

pub fn write_grid(dir: &Path, outcome: &GridOutcome, file: &str) -> Result<()> {
    let path = dir.join(file);
    let mut f = std::fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    for r in &outcome.records {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    save_checkpoint(&outcome.best_checkpoint, dir.join("best.mbsl"))?;
    write_json(&dir.join("best_report.json"), &outcome.best_report)?;
    Ok(())
}

pub fn grid(config: &Path, jobs: usize, out: Option<PathBuf>) -> Result<()> {
    let (rc, space) = read_json::<GridConfig>(config)?.split();
    let rc = rc.resolve(config);
    let hypers = expand_space(&rc.model, &space);
    if hypers.is_empty() {
        return Err(Failure::Usage("search space is empty".into()).into());
    }
    let (tr, te) = rc.load_data()?;
    let dir = out_dir(out, rc.out_dir.as_ref())?;
    println!("{} configurations on {}, {} job(s)", hypers.len(), tr.meta.name, jobs.max(1));
    let start = Instant::now();
    let outcome = grid_search::<f32>(&hypers, &tr, &te, &rc.train, jobs)?;
    write_grid(&dir, &outcome, "results.jsonl")?;
    print_grid(&outcome);
    let best = &outcome.records[outcome.best];
    println!(
        "best: #{} accuracy {:.3} ({} params), {:.1}s total",
        best.index,
        best.test_accuracy,
        best.num_params,
        start.elapsed().as_secs_f64()
    );
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn gradcheck(preset: &str, seed: u64, corrupt: bool) -> Result<()> {
    let preset: Preset = preset.parse().map_err(Failure::Usage)?;
    let start = Instant::now();
    let reports = gradcheck::run_preset(preset, seed, &Options { corrupt })?;
    let mut failed = 0;
    for r in &reports {
        for t in &r.tensors {
            let ok = t.max_rel_err < gradcheck::FD_TOLERANCE;
            failed += usize::from(!ok);
            println!(
                "{:<28} {:<28} {:>6} {:.3e} {}",
                r.label,
                t.name,
                t.numel,
                t.max_rel_err,
                if ok { "ok" } else { "FAIL" }
            );
        }
    }
    let worst = reports.iter().map(|r| r.max_rel_err()).fold(0.0, f64::max);
    println!(
        "{} cases, max relative error {worst:.3e} (tolerance {:.0e}), {:.2}s",
        reports.len(),
        gradcheck::FD_TOLERANCE,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        return Err(Failure::Numeric(format!("{failed} tensor(s) exceed the tolerance")).into());
    }
    Ok(())
}
