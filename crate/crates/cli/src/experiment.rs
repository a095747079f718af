//! One-shot experiment runner: synthesize, transform, then train and grade
//! every configured (axis, seed) pair. Artifacts are materialized stage by
//! stage, so rerunning any single subcommand over the same directories
//! reproduces the corresponding piece byte for byte.

use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};

use crate::config::{split_counts, Arch, ExperimentConfig};
use crate::csvout::{fmt_f64, write_csv};
use crate::stages::{run_eval, run_synth, run_tfa, run_train, SplitSel};

pub const RESULTS_CSV_HEADER: [&str; 21] = [
    "config_hash",
    "axis",
    "arch",
    "kernel",
    "activation",
    "transform",
    "seed",
    "n_train",
    "n_val",
    "n_test",
    "params",
    "epochs",
    "d_loss",
    "g_loss",
    "acc_val",
    "acc_test",
    "recalls",
    "confusion",
    "median_infer_us",
    "train_s",
    "delta",
];

struct RunRecord {
    axis: String,
    arch: Arch,
    kernel: String,
    activation: String,
    seed: u64,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    params: usize,
    epochs: usize,
    d_loss: f64,
    g_loss: f64,
    acc_val: Option<f64>,
    acc_test: f64,
    recalls: String,
    confusion: String,
    median_infer_us: f64,
    train_s: f64,
}

pub struct AxisSummary {
    pub axis: String,
    pub acc_test: f64,
    /// Median test accuracy minus the first CNN axis's median, when one exists.
    pub delta: Option<f64>,
}

pub struct ExperimentOutput {
    pub summaries: Vec<AxisSummary>,
}

/// Median of a sample: middle element, or mean of the two middles.
fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn opt_fmt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub const TIMED_EVAL_PASSES: usize = 100;

pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentOutput> {
    fs::create_dir_all(out)?;
    let mut echo = serde_json::to_string_pretty(cfg)?;
    echo.push('\n');
    fs::write(out.join("config.json"), echo)?;
    let hash = cfg.hash();

    let frames_dir = out.join("frames");
    let n = run_synth(cfg, &frames_dir).context("stage synth")?;
    println!("synth: {n} frames -> {}", frames_dir.display());

    let images_dir = out.join("images");
    let n = run_tfa(&frames_dir, cfg, &images_dir).context("stage tfa")?;
    println!("tfa: {n} {} images -> {}", cfg.tfa.transform, images_dir.display());

    let (per_class_train, per_class_val, _) = split_counts(cfg.dataset.per_class, cfg.train.split);
    let n_train = per_class_train * cfg.dataset.classes;
    let mut records: Vec<Vec<RunRecord>> = Vec::new();
    for axis in &cfg.axes {
        let label = axis.label();
        let mut axis_records = Vec::new();
        for &seed in &cfg.train.seeds {
            let run_dir = out.join("runs").join(&label).join(seed.to_string());
            let t0 = Instant::now();
            let trained = run_train(&images_dir, cfg, axis, seed, &run_dir)
                .with_context(|| format!("stage train ({label}, seed {seed})"))?;
            let train_s = t0.elapsed().as_secs_f64();
            let last = trained.stats.last().expect("at least one epoch");
            let acc_val = if per_class_val > 0 {
                let ev = run_eval(&run_dir, &images_dir, cfg.train.split, SplitSel::Val, TIMED_EVAL_PASSES)
                    .with_context(|| format!("stage eval/val ({label}, seed {seed})"))?;
                Some(ev)
            } else {
                None
            };
            let ev_test = run_eval(&run_dir, &images_dir, cfg.train.split, SplitSel::Test, TIMED_EVAL_PASSES)
                .with_context(|| format!("stage eval/test ({label}, seed {seed})"))?;
            println!(
                "run {label} seed {seed}: acc_test {:.4} ({:.1} s)",
                ev_test.report.accuracy, train_s
            );
            axis_records.push(RunRecord {
                axis: label.clone(),
                arch: axis.arch,
                kernel: axis.kernel.to_string(),
                activation: axis.activation.to_string(),
                seed,
                n_train,
                n_val: acc_val.as_ref().map_or(0, |e| e.report.n),
                n_test: ev_test.report.n,
                params: ev_test.params,
                epochs: cfg.train.epochs,
                d_loss: last.d_loss,
                g_loss: last.g_loss,
                acc_val: acc_val.map(|e| e.report.accuracy),
                acc_test: ev_test.report.accuracy,
                recalls: crate::stages::fmt_recalls(&ev_test.report),
                confusion: crate::stages::fmt_confusion(&ev_test.report),
                median_infer_us: ev_test.report.median_latency_us,
                train_s,
            });
        }
        records.push(axis_records);
    }

    let cnn_median = cfg
        .axes
        .iter()
        .position(|a| a.arch == Arch::Cnn)
        .map(|i| median(&records[i].iter().map(|r| r.acc_test).collect::<Vec<_>>()));

    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut summaries = Vec::new();
    for axis_records in &records {
        for r in axis_records {
            rows.push(vec![
                hash.clone(),
                r.axis.clone(),
                r.arch.to_string(),
                r.kernel.clone(),
                r.activation.clone(),
                cfg.tfa.transform.to_string(),
                r.seed.to_string(),
                r.n_train.to_string(),
                r.n_val.to_string(),
                r.n_test.to_string(),
                r.params.to_string(),
                r.epochs.to_string(),
                fmt_f64(r.d_loss),
                fmt_f64(r.g_loss),
                opt_fmt(r.acc_val),
                fmt_f64(r.acc_test),
                r.recalls.clone(),
                r.confusion.clone(),
                fmt_f64(r.median_infer_us),
                fmt_f64(r.train_s),
                String::new(),
            ]);
        }
        let med = |f: fn(&RunRecord) -> f64| median(&axis_records.iter().map(f).collect::<Vec<_>>());
        let acc_test = med(|r| r.acc_test);
        let acc_val = if axis_records.iter().all(|r| r.acc_val.is_some()) {
            Some(median(
                &axis_records.iter().map(|r| r.acc_val.expect("checked")).collect::<Vec<_>>(),
            ))
        } else {
            None
        };
        let delta = cnn_median.map(|c| acc_test - c);
        let first = &axis_records[0];
        rows.push(vec![
            hash.clone(),
            first.axis.clone(),
            first.arch.to_string(),
            first.kernel.clone(),
            first.activation.clone(),
            cfg.tfa.transform.to_string(),
            "median".to_string(),
            first.n_train.to_string(),
            first.n_val.to_string(),
            first.n_test.to_string(),
            first.params.to_string(),
            first.epochs.to_string(),
            fmt_f64(med(|r| r.d_loss)),
            fmt_f64(med(|r| r.g_loss)),
            opt_fmt(acc_val),
            fmt_f64(acc_test),
            String::new(),
            String::new(),
            fmt_f64(med(|r| r.median_infer_us)),
            fmt_f64(med(|r| r.train_s)),
            opt_fmt(delta),
        ]);
        summaries.push(AxisSummary {
            axis: first.axis.clone(),
            acc_test,
            delta,
        });
    }

    write_csv(&out.join("results.csv"), &RESULTS_CSV_HEADER, &rows)?;
    Ok(ExperimentOutput { summaries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_matches_convention() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[5.0]), 5.0);
    }
}
