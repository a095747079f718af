//! Head-to-head single-image inference timing for two checkpoints.

use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use serde::Serialize;

use handwave_core::gan::{noise_images, Classifier, IMG_CHANNELS, IMG_SIDE};
use handwave_core::{Graph, Tensor};

use crate::config::config_hash;
use crate::csvout::fmt_f64;
use crate::stages::LoadedModel;

pub struct BenchRow {
    pub model: String,
    pub median_ms: f64,
    pub p10_ms: f64,
    pub p90_ms: f64,
    pub params: usize,
}

pub const BENCH_CSV_HEADER: [&str; 6] = ["config_hash", "model", "median_ms", "p10_ms", "p90_ms", "params"];

/// Nearest-rank percentile over an unsorted sample.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

fn time_model(model: &LoadedModel, x: &Tensor<f32>, repeats: usize, warmup: usize) -> Result<BenchRow> {
    for _ in 0..warmup {
        let g = Graph::no_grad();
        model.logits(&g, x)?;
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let g = Graph::no_grad();
        let t0 = Instant::now();
        model.logits(&g, x)?;
        samples.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    samples.sort_by(f64::total_cmp);
    Ok(BenchRow {
        model: model.label(),
        median_ms: percentile(&samples, 0.5),
        p10_ms: percentile(&samples, 0.1),
        p90_ms: percentile(&samples, 0.9),
        params: model.param_count(),
    })
}

#[derive(Serialize)]
struct BenchProvenance {
    a: serde_json::Value,
    b: serde_json::Value,
    repeats: usize,
    warmup: usize,
    seed: u64,
}

pub struct BenchOutput {
    pub hash: String,
    pub rows: [BenchRow; 2],
}

impl BenchOutput {
    pub fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    self.hash.clone(),
                    r.model.clone(),
                    fmt_f64(r.median_ms),
                    fmt_f64(r.p10_ms),
                    fmt_f64(r.p90_ms),
                    r.params.to_string(),
                ]
            })
            .collect()
    }
}

/// Time both checkpoints on one identical input; rows keep argument order.
pub fn run_bench(ckpt_a: &Path, ckpt_b: &Path, repeats: usize, warmup: usize, seed: u64) -> Result<BenchOutput> {
    let a = LoadedModel::load(ckpt_a)?;
    let b = LoadedModel::load(ckpt_b)?;
    let noise = noise_images(1, seed);
    let signed: Vec<f32> = noise[0].data().iter().map(|v| 2.0 * v - 1.0).collect();
    let x = Tensor::from_vec(&[1, IMG_CHANNELS, IMG_SIDE, IMG_SIDE], signed)?;
    let hash = config_hash(&BenchProvenance {
        a: a.manifest_json(),
        b: b.manifest_json(),
        repeats,
        warmup,
        seed,
    });
    let rows = [time_model(&a, &x, repeats, warmup)?, time_model(&b, &x, repeats, warmup)?];
    Ok(BenchOutput { hash, rows })
}
