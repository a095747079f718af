//! Experiment configuration: one JSON file, every field overridable from the
//! command line. A config fully determines every non-timing byte the harness
//! emits, and its hash is stamped into every CSV.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::Context;
use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use handwave_core::gan::{Activation, KernelKind, TrainConfig};
use handwave_core::radar::{class_catalog, SynthParams};
use handwave_core::tfa::{ImageParams, Transform};
use handwave_core::Error;

/// What gets synthesized. One dataset (one seed) is shared by every run of
/// an experiment; per-sample variation comes from the seed's named streams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetParams {
    /// Gesture catalog size: 4 basics or the full 24-class taxonomy.
    pub classes: usize,
    pub per_class: usize,
    pub fs_hz: f64,
    /// `null` synthesizes noiseless frames.
    pub snr_db: Option<f64>,
    pub speed_mps: f64,
    pub duration_s: f64,
    pub speed_jitter: f64,
    pub start_jitter: f64,
    pub seed: u64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        let sp = SynthParams::default();
        DatasetParams {
            classes: 4,
            per_class: 100,
            fs_hz: sp.fs_hz,
            snr_db: sp.snr_db,
            speed_mps: sp.speed_mps,
            duration_s: sp.duration_s,
            speed_jitter: sp.speed_jitter,
            start_jitter: sp.start_jitter,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfaParams {
    pub transform: Transform,
    pub window: usize,
    pub hop: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for TfaParams {
    fn default() -> Self {
        let p = ImageParams::default();
        TfaParams {
            transform: p.transform,
            window: p.window,
            hop: p.hop,
            height: p.height,
            width: p.width,
        }
    }
}

/// Classifier architecture under comparison.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Cnn,
    Dedcgan,
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Cnn => "cnn",
            Arch::Dedcgan => "dedcgan",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "cnn" => Ok(Arch::Cnn),
            "dedcgan" => Ok(Arch::Dedcgan),
            other => Err(Error::BadConfig(format!("arch {other:?} (cnn or dedcgan)"))),
        }
    }
}

/// One model variant in the comparison grid. Axes are listed explicitly in
/// the config (no auto-gridding) so run provenance stays obvious.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    #[serde(default)]
    pub name: String,
    pub arch: Arch,
    #[serde(default = "default_kernel")]
    pub kernel: KernelKind,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_kernel() -> KernelKind {
    KernelKind::Deformable
}

fn default_activation() -> Activation {
    Activation::Selu
}

impl AxisSpec {
    pub fn cnn() -> Self {
        // the baseline's kernel/activation fields describe its fixed
        // architecture (plain convs, ReLU+BN); recorded for the CSV
        AxisSpec {
            name: String::new(),
            arch: Arch::Cnn,
            kernel: KernelKind::Standard,
            activation: Activation::ReluBn,
        }
    }

    pub fn dedcgan() -> Self {
        AxisSpec {
            name: String::new(),
            arch: Arch::Dedcgan,
            kernel: KernelKind::Deformable,
            activation: Activation::Selu,
        }
    }

    /// CSV / path label: the explicit name, or one derived from the fields.
    pub fn label(&self) -> String {
        let base = if self.name.is_empty() {
            match self.arch {
                Arch::Cnn => "cnn".to_string(),
                Arch::Dedcgan => format!("dedcgan-{}-{}", self.kernel, self.activation),
            }
        } else {
            self.name.clone()
        };
        base.replace(['/', '\\', ' ', ','], "-")
    }
}

impl FromStr for AxisSpec {
    type Err = Error;

    /// `arch[/kernel[/activation[/name]]]`, e.g. `dedcgan/standard/selu-bn`.
    fn from_str(s: &str) -> Result<Self, Error> {
        let parts: Vec<&str> = s.split('/').collect();
        if parts.len() > 4 || parts[0].is_empty() {
            return Err(Error::BadConfig(format!(
                "axis {s:?}; expected arch[/kernel[/activation[/name]]]"
            )));
        }
        let arch: Arch = parts[0].parse()?;
        let mut axis = match arch {
            Arch::Cnn => AxisSpec::cnn(),
            Arch::Dedcgan => AxisSpec::dedcgan(),
        };
        if let Some(k) = parts.get(1) {
            axis.kernel = k.parse()?;
        }
        if let Some(a) = parts.get(2) {
            axis.activation = a.parse()?;
        }
        if let Some(n) = parts.get(3) {
            axis.name = n.to_string();
        }
        Ok(axis)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub latent_dim: usize,
    pub smoothing: f64,
    pub augment_with_generated: bool,
    /// Train/val/test fractions; must sum to 1.
    pub split: [f64; 3],
    /// One full training run per seed; reports take medians across them.
    pub seeds: Vec<u64>,
}

impl Default for TrainParams {
    fn default() -> Self {
        let tc = TrainConfig::default();
        TrainParams {
            epochs: tc.epochs,
            batch: tc.batch_size,
            lr: tc.lr,
            beta1: tc.beta1,
            latent_dim: tc.latent_dim,
            smoothing: tc.smoothing,
            augment_with_generated: tc.augment_with_generated,
            split: [0.25, 0.25, 0.5],
            seeds: vec![1, 2, 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetParams,
    pub tfa: TfaParams,
    pub axes: Vec<AxisSpec>,
    pub train: TrainParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetParams::default(),
            tfa: TfaParams::default(),
            axes: vec![AxisSpec::cnn(), AxisSpec::dedcgan()],
            train: TrainParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let json = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg = serde_json::from_str(&json).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Error> {
        class_catalog(self.dataset.classes)?;
        if self.dataset.per_class == 0 {
            return Err(Error::BadConfig("per_class must be >= 1".into()));
        }
        if self.axes.is_empty() {
            return Err(Error::BadConfig("axes list is empty".into()));
        }
        if self.train.seeds.is_empty() {
            return Err(Error::BadConfig("seeds list is empty".into()));
        }
        let s: f64 = self.train.split.iter().sum();
        if self.train.split.iter().any(|f| *f < 0.0) || (s - 1.0).abs() > 1e-9 {
            return Err(Error::BadConfig(format!(
                "split fractions {:?} must be non-negative and sum to 1",
                self.train.split
            )));
        }
        let (n_train, _, n_test) = split_counts(self.dataset.per_class, self.train.split);
        if n_train == 0 || n_test == 0 {
            return Err(Error::BadConfig(format!(
                "split {:?} of {} samples/class leaves train={n_train}, test={n_test}",
                self.train.split, self.dataset.per_class
            )));
        }
        Ok(())
    }

    pub fn synth_params(&self) -> SynthParams {
        SynthParams {
            fs_hz: self.dataset.fs_hz,
            snr_db: self.dataset.snr_db,
            speed_mps: self.dataset.speed_mps,
            duration_s: self.dataset.duration_s,
            seed: self.dataset.seed,
            speed_jitter: self.dataset.speed_jitter,
            start_jitter: self.dataset.start_jitter,
        }
    }

    pub fn image_params(&self) -> ImageParams {
        ImageParams {
            transform: self.tfa.transform,
            window: self.tfa.window,
            hop: self.tfa.hop,
            height: self.tfa.height,
            width: self.tfa.width,
        }
    }

    /// The core training config for one (axis, seed) run.
    pub fn train_config(&self, axis: &AxisSpec, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch,
            lr: self.train.lr,
            beta1: self.train.beta1,
            latent_dim: self.train.latent_dim,
            smoothing: self.train.smoothing,
            seed,
            activation: axis.activation,
            kernel: axis.kernel,
            augment_with_generated: self.train.augment_with_generated,
        }
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

/// Per-class split sizes under `[train, val, test]` fractions: floors for
/// train and val, remainder to test.
pub fn split_counts(per_class: usize, split: [f64; 3]) -> (usize, usize, usize) {
    let n_train = (split[0] * per_class as f64).floor() as usize;
    let n_val = (split[1] * per_class as f64).floor() as usize;
    (n_train, n_val, per_class - n_train - n_val)
}

/// 12-hex-digit digest of a config's canonical JSON; stamped into CSVs so
/// every row is traceable to the exact config that produced it.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

/// Command-line overrides: every config field has a flag; set ones replace
/// the corresponding JSON value.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// Gesture catalog size (4 or 24)
    #[arg(long)]
    pub classes: Option<usize>,
    /// Samples per class
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Sampling rate in Hz
    #[arg(long)]
    pub fs_hz: Option<f64>,
    /// Signal-to-noise ratio in dB
    #[arg(long, conflicts_with = "noiseless")]
    pub snr_db: Option<f64>,
    /// Synthesize without noise
    #[arg(long)]
    pub noiseless: bool,
    /// Nominal hand speed in m/s
    #[arg(long)]
    pub speed_mps: Option<f64>,
    /// Capture length in seconds
    #[arg(long)]
    pub duration_s: Option<f64>,
    /// Fractional per-sample speed jitter
    #[arg(long)]
    pub speed_jitter: Option<f64>,
    /// Start-phase jitter (fraction of a cycle)
    #[arg(long)]
    pub start_jitter: Option<f64>,
    /// Dataset seed
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Time-frequency transform (stft or cwt)
    #[arg(long)]
    pub transform: Option<Transform>,
    /// STFT window length
    #[arg(long)]
    pub window: Option<usize>,
    /// Transform hop size
    #[arg(long)]
    pub hop: Option<usize>,
    /// Image height
    #[arg(long)]
    pub height: Option<usize>,
    /// Image width
    #[arg(long)]
    pub width: Option<usize>,
    /// Model axis `arch[/kernel[/activation[/name]]]`; repeat to replace the
    /// config's axis list
    #[arg(long = "axis")]
    pub axes: Vec<AxisSpec>,
    /// Training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Batch size
    #[arg(long)]
    pub batch: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// Adam first-moment decay
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Generator latent dimension
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Real-label smoothing target
    #[arg(long)]
    pub smoothing: Option<f64>,
    /// Also train the discriminator on self-labeled generated batches
    #[arg(long)]
    pub augment_with_generated: Option<bool>,
    /// Train/val/test fractions, e.g. 0.25,0.25,0.5
    #[arg(long, value_delimiter = ',')]
    pub split_fractions: Option<Vec<f64>>,
    /// Training seeds, comma separated
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), Error> {
        macro_rules! set {
            ($field:expr, $target:expr) => {
                if let Some(v) = $field {
                    $target = v;
                }
            };
        }
        set!(self.classes, cfg.dataset.classes);
        set!(self.per_class, cfg.dataset.per_class);
        set!(self.fs_hz, cfg.dataset.fs_hz);
        if let Some(v) = self.snr_db {
            cfg.dataset.snr_db = Some(v);
        }
        if self.noiseless {
            cfg.dataset.snr_db = None;
        }
        set!(self.speed_mps, cfg.dataset.speed_mps);
        set!(self.duration_s, cfg.dataset.duration_s);
        set!(self.speed_jitter, cfg.dataset.speed_jitter);
        set!(self.start_jitter, cfg.dataset.start_jitter);
        set!(self.data_seed, cfg.dataset.seed);
        set!(self.transform, cfg.tfa.transform);
        set!(self.window, cfg.tfa.window);
        set!(self.hop, cfg.tfa.hop);
        set!(self.height, cfg.tfa.height);
        set!(self.width, cfg.tfa.width);
        if !self.axes.is_empty() {
            cfg.axes = self.axes.clone();
        }
        set!(self.epochs, cfg.train.epochs);
        set!(self.batch, cfg.train.batch);
        set!(self.lr, cfg.train.lr);
        set!(self.beta1, cfg.train.beta1);
        set!(self.latent_dim, cfg.train.latent_dim);
        set!(self.smoothing, cfg.train.smoothing);
        set!(self.augment_with_generated, cfg.train.augment_with_generated);
        if let Some(split) = &self.split_fractions {
            let [a, b, c]: [f64; 3] = split.as_slice().try_into().map_err(|_| {
                Error::BadConfig(format!("--split-fractions needs 3 fractions, got {}", split.len()))
            })?;
            cfg.train.split = [a, b, c];
        }
        if let Some(seeds) = &self.seeds {
            cfg.train.seeds = seeds.clone();
        }
        Ok(())
    }
}

/// Load (or default) a config, apply flag overrides, validate.
pub fn resolve(config: Option<&Path>, ov: &Overrides) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    ov.apply(&mut cfg)?;
    cfg.validate()?;
    Ok(cfg)
}
