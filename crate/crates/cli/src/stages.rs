//! The pipeline stages behind the subcommands. `experiment` chains exactly
//! these functions over directories, so a staged manual run and the one-shot
//! command produce identical artifacts.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use handwave_core::container;
use handwave_core::dataset::{read_frame_dataset, read_spec_dataset, write_frame_dataset, write_spec_dataset};
use handwave_core::gan::{
    evaluate, generate, load_cnn, load_gan, realness, save_cnn, save_gan, train_cnn, train_gan, Classifier,
    CnnClassifier, CnnMeta, Discriminator, EpochStats, EvalReport, GanMeta, Generator,
};
use handwave_core::radar::{class_catalog, make_dataset, GestureSpec, IQFrame};
use handwave_core::nn::BnMode;
use handwave_core::tfa::frames_to_images;
use handwave_core::{Error, Graph, Tensor};

use crate::config::{config_hash, split_counts, Arch, AxisSpec, ExperimentConfig};
use crate::csvout::{fmt_f64, write_csv};
use crate::pgm::write_pgm;

/// Synthesize the configured raw capture dataset into `out`.
pub fn run_synth(cfg: &ExperimentConfig, out: &Path) -> Result<usize> {
    let classes = class_catalog(cfg.dataset.classes)?;
    let frames = make_dataset(&classes, cfg.dataset.per_class, &cfg.synth_params())?;
    let names: Vec<String> = classes.iter().map(|k| k.to_string()).collect();
    write_frame_dataset(out, &frames, &names)?;
    Ok(frames.len())
}

/// Rebuild in-memory captures from a stored frame dataset.
pub fn frames_from_disk(dir: &Path) -> Result<Vec<IQFrame>> {
    let (manifest, items) = read_frame_dataset(dir)?;
    items
        .into_iter()
        .zip(&manifest.samples)
        .map(|((t, label), meta)| {
            let mut spec = GestureSpec::new(
                meta.kind.parse()?,
                meta.distance_m,
                meta.scale_m,
                meta.speed_mps,
                meta.duration_s,
            );
            spec.start_frac = meta.start_frac;
            spec.seed = meta.seed;
            Ok(IQFrame {
                spec,
                fs_hz: manifest.fs_hz,
                snr_db: manifest.snr_db,
                label,
                channels: IQFrame::channels_from_tensor(&t)?,
            })
        })
        .collect()
}

/// Transform a frame dataset into a spectrogram image dataset.
pub fn run_tfa(frames_dir: &Path, cfg: &ExperimentConfig, out: &Path) -> Result<usize> {
    let frames = frames_from_disk(frames_dir)?;
    let (manifest, _) = read_frame_dataset(frames_dir)?;
    let images = frames_to_images(&frames, &cfg.image_params())?;
    write_spec_dataset(out, &images, &manifest.classes, &cfg.tfa.transform.to_string())?;
    Ok(images.len())
}

/// Deterministic per-class split of a labeled dataset: within each class,
/// samples keep dataset order; the first train-fraction go to train, the
/// next to val, the rest to test.
pub fn split_indices(labels: &[u16], n_classes: usize, split: [f64; 3]) -> Result<[Vec<usize>; 3], Error> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        let l = usize::from(l);
        if l >= n_classes {
            return Err(Error::BadDataset(format!("label {l} out of range for {n_classes} classes")));
        }
        by_class[l].push(i);
    }
    let mut out = [Vec::new(), Vec::new(), Vec::new()];
    for idxs in &by_class {
        let (a, b, _) = split_counts(idxs.len(), split);
        out[0].extend_from_slice(&idxs[..a]);
        out[1].extend_from_slice(&idxs[a..a + b]);
        out[2].extend_from_slice(&idxs[a + b..]);
    }
    Ok(out)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum SplitSel {
    Train,
    Val,
    Test,
    All,
}

impl fmt::Display for SplitSel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitSel::Train => "train",
            SplitSel::Val => "val",
            SplitSel::Test => "test",
            SplitSel::All => "all",
        })
    }
}

impl FromStr for SplitSel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "train" => Ok(SplitSel::Train),
            "val" => Ok(SplitSel::Val),
            "test" => Ok(SplitSel::Test),
            "all" => Ok(SplitSel::All),
            other => Err(Error::BadConfig(format!("split {other:?} (train, val, test or all)"))),
        }
    }
}

/// Load an image dataset and select one split of it.
pub fn load_split(
    images_dir: &Path,
    split: [f64; 3],
    sel: SplitSel,
) -> Result<(Vec<String>, Vec<(Tensor<f32>, u16)>)> {
    let (manifest, items) = read_spec_dataset(images_dir)?;
    if sel == SplitSel::All {
        return Ok((manifest.classes, items));
    }
    let parts = split_indices(&manifest.labels, manifest.classes.len(), split)?;
    let part = &parts[match sel {
        SplitSel::Train => 0,
        SplitSel::Val => 1,
        SplitSel::Test => 2,
        SplitSel::All => unreachable!(),
    }];
    let subset = part.iter().map(|&i| items[i].clone()).collect();
    Ok((manifest.classes, subset))
}

pub struct TrainOutput {
    pub params: usize,
    pub stats: Vec<EpochStats>,
}

fn param_count(named: &[(String, Tensor<f32>)]) -> usize {
    named.iter().map(|(_, t)| t.numel()).sum()
}

/// Train one axis on the train split of `images_dir` and write a checkpoint
/// (plus its per-epoch `losses.csv`) to `out`.
pub fn run_train(
    images_dir: &Path,
    cfg: &ExperimentConfig,
    axis: &AxisSpec,
    seed: u64,
    out: &Path,
) -> Result<TrainOutput> {
    let (classes, train_set) = load_split(images_dir, cfg.train.split, SplitSel::Train)?;
    let n_classes = classes.len();
    let tc = cfg.train_config(axis, seed);
    let (params, stats) = match axis.arch {
        Arch::Dedcgan => {
            let o = train_gan(&train_set, n_classes, &tc)?;
            save_gan(out, &o.gen, &o.disc, &GanMeta::new(&o.disc, tc.epochs, &tc))?;
            (param_count(&o.disc.params()), o.stats)
        }
        Arch::Cnn => {
            let o = train_cnn(&train_set, n_classes, &tc)?;
            save_cnn(out, &o.model, &CnnMeta::new(&o.model, tc.epochs, &tc))?;
            (param_count(&o.model.params()), o.stats)
        }
    };
    let hash = cfg.hash();
    let rows: Vec<Vec<String>> = stats
        .iter()
        .map(|s| vec![hash.clone(), s.epoch.to_string(), fmt_f64(s.d_loss), fmt_f64(s.g_loss)])
        .collect();
    write_csv(&out.join("losses.csv"), &["config_hash", "epoch", "d_loss", "g_loss"], &rows)?;
    Ok(TrainOutput { params, stats })
}

/// A checkpoint of either architecture, dispatched by its manifest.
pub enum LoadedModel {
    Gan {
        gen: Generator,
        disc: Discriminator,
        meta: GanMeta,
    },
    Cnn {
        model: CnnClassifier,
        meta: CnnMeta,
    },
}

impl LoadedModel {
    pub fn load(dir: &Path) -> Result<Self> {
        let json = fs::read_to_string(dir.join("manifest.json"))
            .with_context(|| format!("reading checkpoint {}", dir.display()))?;
        let head: serde_json::Value = serde_json::from_str(&json)?;
        match head.get("model").and_then(|m| m.as_str()) {
            Some("de-dcgan") => {
                let (gen, disc, meta) = load_gan(dir)?;
                Ok(LoadedModel::Gan { gen, disc, meta })
            }
            Some("cnn") => {
                let (model, meta) = load_cnn(dir)?;
                Ok(LoadedModel::Cnn { model, meta })
            }
            other => bail!(Error::CheckpointMismatch(format!(
                "manifest names no loadable model (model = {other:?})"
            ))),
        }
    }

    /// CSV label: architecture plus what distinguishes it.
    pub fn label(&self) -> String {
        match self {
            LoadedModel::Gan { meta, .. } => format!("de-dcgan/{}/{}", meta.config.kernel, meta.config.activation),
            LoadedModel::Cnn { .. } => "cnn".to_string(),
        }
    }

    /// Trainable parameters of the classifier (for the GAN: discriminator).
    pub fn param_count(&self) -> usize {
        match self {
            LoadedModel::Gan { disc, .. } => param_count(&disc.params()),
            LoadedModel::Cnn { model, .. } => param_count(&model.params()),
        }
    }

    pub fn manifest_json(&self) -> serde_json::Value {
        match self {
            LoadedModel::Gan { meta, .. } => serde_json::to_value(meta).expect("meta serializes"),
            LoadedModel::Cnn { meta, .. } => serde_json::to_value(meta).expect("meta serializes"),
        }
    }
}

impl Classifier for LoadedModel {
    fn n_classes(&self) -> usize {
        match self {
            LoadedModel::Gan { disc, .. } => disc.n_classes,
            LoadedModel::Cnn { model, .. } => model.n_classes,
        }
    }

    fn logits(&self, g: &Graph<f32>, x: &Tensor<f32>) -> Result<Tensor<f32>, Error> {
        match self {
            LoadedModel::Gan { disc, .. } => disc.forward(g, x, BnMode::Eval),
            LoadedModel::Cnn { model, .. } => model.forward(g, x, BnMode::Eval),
        }
    }
}

pub fn fmt_recalls(report: &EvalReport) -> String {
    report.recalls().iter().map(|r| fmt_f64(*r)).collect::<Vec<_>>().join("|")
}

pub fn fmt_confusion(report: &EvalReport) -> String {
    report
        .confusion
        .iter()
        .map(|row| row.iter().map(usize::to_string).collect::<Vec<_>>().join("|"))
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Serialize)]
struct EvalProvenance<'a> {
    checkpoint: serde_json::Value,
    images: &'a Path,
    split: String,
    fractions: [f64; 3],
}

pub struct EvalOutput {
    pub hash: String,
    pub model: String,
    pub split: SplitSel,
    pub params: usize,
    pub report: EvalReport,
}

pub const EVAL_CSV_HEADER: [&str; 9] = [
    "config_hash",
    "model",
    "split",
    "n",
    "accuracy",
    "recalls",
    "confusion",
    "median_infer_us",
    "params",
];

impl EvalOutput {
    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.hash.clone(),
            self.model.clone(),
            self.split.to_string(),
            self.report.n.to_string(),
            fmt_f64(self.report.accuracy),
            fmt_recalls(&self.report),
            fmt_confusion(&self.report),
            fmt_f64(self.report.median_latency_us),
            self.params.to_string(),
        ]
    }
}

/// Evaluate a checkpoint on one split of an image dataset.
pub fn run_eval(
    ckpt: &Path,
    images_dir: &Path,
    fractions: [f64; 3],
    sel: SplitSel,
    timing_passes: usize,
) -> Result<EvalOutput> {
    let model = LoadedModel::load(ckpt)?;
    let (classes, subset) = load_split(images_dir, fractions, sel)?;
    if classes.len() != model.n_classes() {
        bail!(Error::CheckpointMismatch(format!(
            "checkpoint has {} classes, dataset has {}",
            model.n_classes(),
            classes.len()
        )));
    }
    let report = evaluate(&model, &subset, timing_passes)?;
    let hash = config_hash(&EvalProvenance {
        checkpoint: model.manifest_json(),
        images: images_dir,
        split: sel.to_string(),
        fractions,
    });
    Ok(EvalOutput {
        hash,
        model: model.label(),
        split: sel,
        params: model.param_count(),
        report,
    })
}

pub struct GenOutput {
    pub n: usize,
    pub mean_realness: f64,
}

/// Sample `n` images from a GAN checkpoint; each sample is written as a
/// DGT1 tensor plus a PGM preview.
pub fn run_gen(ckpt: &Path, n: usize, seed: u64, out: &Path) -> Result<GenOutput> {
    let (gen, disc, _meta) = load_gan(ckpt)?;
    let images = generate(&gen, n, seed)?;
    fs::create_dir_all(out)?;
    for (i, img) in images.iter().enumerate() {
        container::write_tensor(&out.join(format!("sample_{i:03}.dgt")), img)?;
        write_pgm(&out.join(format!("sample_{i:03}.pgm")), img)?;
    }
    let scores = realness(&disc, &images)?;
    let mean_realness = scores.iter().sum::<f64>() / scores.len().max(1) as f64;
    Ok(GenOutput { n: images.len(), mean_realness })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_per_class_and_disjoint() {
        // 3 classes x 8 samples, interleaved labels
        let labels: Vec<u16> = (0..24).map(|i| (i % 3) as u16).collect();
        let parts = split_indices(&labels, 3, [0.25, 0.25, 0.5]).unwrap();
        assert_eq!(parts[0].len(), 6);
        assert_eq!(parts[1].len(), 6);
        assert_eq!(parts[2].len(), 12);
        let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..24).collect::<Vec<_>>());
        // per-class balance in every part
        for part in &parts {
            for c in 0..3u16 {
                let k = part.iter().filter(|&&i| labels[i] == c).count();
                assert_eq!(k, part.len() / 3);
            }
        }
        // out-of-range label rejected
        assert!(split_indices(&[0, 3], 3, [0.5, 0.0, 0.5]).is_err());
    }

    #[test]
    fn split_is_deterministic_and_ordered() {
        let labels: Vec<u16> = (0..12).map(|i| (i / 6) as u16).collect();
        let a = split_indices(&labels, 2, [0.5, 0.0, 0.5]).unwrap();
        let b = split_indices(&labels, 2, [0.5, 0.0, 0.5]).unwrap();
        assert_eq!(a, b);
        // class 0 occupies indices 0..6: first half trains
        assert_eq!(a[0], vec![0, 1, 2, 6, 7, 8]);
        assert_eq!(a[2], vec![3, 4, 5, 9, 10, 11]);
    }
}
