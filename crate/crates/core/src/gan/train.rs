//! Training loops for the semi-supervised GAN and the CNN baseline.
//!
//! The discriminator is trained K+1-way: real images carry their gesture
//! class (with one-sided label smoothing), generated images carry the extra
//! "fake" class. The generator is trained to make the discriminator spread
//! its belief over the K real classes. The CNN is plain supervised
//! cross-entropy on the same images.
//!
//! Determinism: every random decision comes from a named stream of the config
//! seed — `init.*` for weights, `shuffle.e{epoch}` for batch order,
//! `latent.e{epoch}` for noise — so a run is a pure function of its config
//! and dataset, and resuming from epoch `e` replays exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::BnMode;
use crate::rng::RngStream;
use crate::tensor::graph::Graph;
use crate::tensor::optim::{zero_grads, Adam};
use crate::Tensor;

use super::eval::argmax_rows;
use super::model::{CnnClassifier, Discriminator, Generator, IMG_CHANNELS, IMG_SIDE};
use super::{Activation, KernelKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub latent_dim: usize,
    /// Real-label smoothing target (one-sided; fake labels stay hard).
    pub smoothing: f64,
    pub seed: u64,
    pub activation: Activation,
    pub kernel: KernelKind,
    /// Enlarge the effective training set with generated samples: each
    /// discriminator step also trains on a generated batch carrying the
    /// discriminator's own (detached) class prediction. Off by default —
    /// without it the adversarial term acts purely as a regularizer.
    #[serde(default)]
    pub augment_with_generated: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 16,
            lr: 2e-4,
            beta1: 0.5,
            latent_dim: 100,
            smoothing: 0.9,
            seed: 0,
            activation: Activation::Selu,
            kernel: KernelKind::Deformable,
            augment_with_generated: false,
        }
    }
}

/// Per-epoch mean losses. For supervised training `g_loss` is 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
}

pub struct GanOutcome {
    pub gen: Generator,
    pub disc: Discriminator,
    pub stats: Vec<EpochStats>,
}

pub struct CnnOutcome {
    pub model: CnnClassifier,
    pub stats: Vec<EpochStats>,
}

fn validate_config(cfg: &TrainConfig, n_samples: usize, n_classes: usize) -> Result<()> {
    if cfg.batch_size < 2 {
        return Err(Error::BadConfig(format!(
            "batch size {} too small for batch statistics; need >= 2",
            cfg.batch_size
        )));
    }
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::BadConfig(format!("learning rate {} must be positive", cfg.lr)));
    }
    if !(0.0..1.0).contains(&cfg.beta1) {
        return Err(Error::BadConfig(format!("beta1 {} outside [0, 1)", cfg.beta1)));
    }
    if !(cfg.smoothing > 0.0 && cfg.smoothing <= 1.0) {
        return Err(Error::BadConfig(format!("smoothing {} outside (0, 1]", cfg.smoothing)));
    }
    if cfg.latent_dim == 0 {
        return Err(Error::BadConfig("latent dimension must be >= 1".into()));
    }
    if n_classes < 2 {
        return Err(Error::BadConfig(format!("need >= 2 classes, got {n_classes}")));
    }
    if n_samples < cfg.batch_size {
        return Err(Error::EmptyDataset(format!(
            "{n_samples} samples cannot fill one batch of {}",
            cfg.batch_size
        )));
    }
    Ok(())
}

/// Validates and re-ranges [0,1] images to the tanh range [-1,1], flattened
/// for cheap batch assembly.
pub(crate) fn to_signed(images: &[(Tensor<f32>, u16)], n_classes: usize) -> Result<Vec<(Vec<f32>, u16)>> {
    if images.is_empty() {
        return Err(Error::EmptyDataset("no images".into()));
    }
    let want = [IMG_CHANNELS, IMG_SIDE, IMG_SIDE];
    images
        .iter()
        .map(|(t, label)| {
            if t.dims() != want {
                return Err(Error::BadDataset(format!(
                    "image shape {:?}, expected {want:?}",
                    t.dims()
                )));
            }
            if usize::from(*label) >= n_classes {
                return Err(Error::BadDataset(format!(
                    "label {label} out of range for {n_classes} classes"
                )));
            }
            Ok((t.data().iter().map(|&v| 2.0 * v - 1.0).collect(), *label))
        })
        .collect()
}

fn batch_of(data: &[(Vec<f32>, u16)], idx: &[usize]) -> (Tensor<f32>, Vec<u16>) {
    let mut flat = Vec::with_capacity(idx.len() * IMG_CHANNELS * IMG_SIDE * IMG_SIDE);
    for &i in idx {
        flat.extend_from_slice(&data[i].0);
    }
    let x = Tensor::from_vec(&[idx.len(), IMG_CHANNELS, IMG_SIDE, IMG_SIDE], flat).expect("batch dims agree");
    (x, idx.iter().map(|&i| data[i].1).collect())
}

/// Mean soft-target cross entropy: `-1/B * sum(targets * log_softmax(logits))`.
pub(crate) fn cross_entropy_soft(
    g: &Graph<f32>,
    logits: &Tensor<f32>,
    targets: &Tensor<f32>,
) -> Result<Tensor<f32>> {
    let b = logits.dims()[0];
    let ls = g.log_softmax(logits)?;
    let weighted = g.mul(&ls, targets)?;
    g.mul_scalar(&g.reduce_sum(&weighted)?, -1.0 / b as f32)
}

/// One-sided smoothing: the true class gets `smoothing`, every other column
/// (fake included) shares the remainder.
fn smoothed_targets(labels: &[u16], columns: usize, smoothing: f64) -> Tensor<f32> {
    let off = ((1.0 - smoothing) / (columns - 1) as f64) as f32;
    let mut data = vec![off; labels.len() * columns];
    for (r, &l) in labels.iter().enumerate() {
        data[r * columns + usize::from(l)] = smoothing as f32;
    }
    Tensor::from_vec(&[labels.len(), columns], data).expect("target dims agree")
}

/// Hard targets on the fake column (the last of `columns`).
fn fake_targets(b: usize, columns: usize) -> Tensor<f32> {
    let mut data = vec![0.0f32; b * columns];
    for r in 0..b {
        data[r * columns + columns - 1] = 1.0;
    }
    Tensor::from_vec(&[b, columns], data).expect("target dims agree")
}

/// Generator objective: spread belief uniformly over the real classes.
fn uniform_real_targets(b: usize, n_classes: usize) -> Tensor<f32> {
    let columns = n_classes + 1;
    let p = 1.0 / n_classes as f32;
    let mut data = vec![p; b * columns];
    for r in 0..b {
        data[r * columns + n_classes] = 0.0;
    }
    Tensor::from_vec(&[b, columns], data).expect("target dims agree")
}

/// Rewrites mid-step numeric blowups as divergence, keeping other errors.
fn guard<T>(r: Result<T>, epoch: usize, step: usize) -> Result<T> {
    r.map_err(|e| match e {
        Error::NonFinite { .. } => Error::Divergence {
            epoch,
            step,
            loss: f64::NAN,
        },
        other => other,
    })
}

/// Train a De-DCGAN (generator + K+1 discriminator) on `[0,1]` images.
pub fn train_gan(images: &[(Tensor<f32>, u16)], n_classes: usize, cfg: &TrainConfig) -> Result<GanOutcome> {
    validate_config(cfg, images.len(), n_classes)?;
    let data = to_signed(images, n_classes)?;
    let gen = Generator::new(cfg.latent_dim, cfg.seed);
    let disc = Discriminator::new(n_classes, cfg.kernel, cfg.activation, cfg.seed);
    let gen_params: Vec<Tensor<f32>> = gen.params().into_iter().map(|(_, t)| t).collect();
    let disc_params: Vec<Tensor<f32>> = disc.params().into_iter().map(|(_, t)| t).collect();
    let mut adam_g = Adam::new(cfg.lr, cfg.beta1);
    let mut adam_d = Adam::new(cfg.lr, cfg.beta1);
    let columns = n_classes + 1;

    let mut stats = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        RngStream::new(cfg.seed, &format!("shuffle.e{epoch}")).shuffle(&mut order);
        let mut latent = RngStream::new(cfg.seed, &format!("latent.e{epoch}"));
        let mut latent_aug = RngStream::new(cfg.seed, &format!("latent-aug.e{epoch}"));
        let (mut d_sum, mut g_sum, mut steps) = (0.0f64, 0.0f64, 0usize);

        for (step, chunk) in order.chunks_exact(cfg.batch_size).enumerate() {
            let (x, labels) = batch_of(&data, chunk);
            let b = chunk.len();

            // discriminator step: real -> class (smoothed), fake -> fake
            let fake_detached = {
                let ng = Graph::no_grad();
                let z = gen.sample_latent(b, &mut latent);
                guard(gen.forward(&ng, &z), epoch, step)?.detach()
            };
            // optional extra batch of generated samples, self-labeled by the
            // discriminator before this step touches its weights
            let augment = if cfg.augment_with_generated {
                let ng = Graph::no_grad();
                let z = gen.sample_latent(b, &mut latent_aug);
                let x_aug = guard(gen.forward(&ng, &z), epoch, step)?.detach();
                let logits = guard(disc.forward(&ng, &x_aug, BnMode::Eval), epoch, step)?;
                Some((x_aug, argmax_rows(&logits, n_classes)))
            } else {
                None
            };
            zero_grads(&disc_params);
            let tape = Graph::new();
            // generated batches normalize with their own batch statistics but
            // never touch the running ones: the discriminator doubles as the
            // eval-time classifier, and its running stats must describe the
            // real images it will be normalizing then
            let real_logits = guard(disc.forward(&tape, &x, BnMode::Train), epoch, step)?;
            let fake_logits = guard(disc.forward(&tape, &fake_detached, BnMode::TrainFrozen), epoch, step)?;
            let loss_real = guard(
                cross_entropy_soft(&tape, &real_logits, &smoothed_targets(&labels, columns, cfg.smoothing)),
                epoch,
                step,
            )?;
            let loss_fake = guard(cross_entropy_soft(&tape, &fake_logits, &fake_targets(b, columns)), epoch, step)?;
            let mut d_loss = guard(tape.add(&loss_real, &loss_fake), epoch, step)?;
            if let Some((x_aug, pseudo)) = augment {
                let aug_logits = guard(disc.forward(&tape, &x_aug, BnMode::TrainFrozen), epoch, step)?;
                let loss_aug = guard(
                    cross_entropy_soft(&tape, &aug_logits, &smoothed_targets(&pseudo, columns, cfg.smoothing)),
                    epoch,
                    step,
                )?;
                d_loss = guard(tape.add(&d_loss, &loss_aug), epoch, step)?;
            }
            let d_val = f64::from(d_loss.item()?);
            if !d_val.is_finite() {
                return Err(Error::Divergence { epoch, step, loss: d_val });
            }
            guard(tape.backward(&d_loss), epoch, step)?;
            adam_d.step(&disc_params)?;

            // generator step: make D spread belief over the real classes
            zero_grads(&gen_params);
            zero_grads(&disc_params); // the G tape deposits grads here too
            let tape = Graph::new();
            let z = gen.sample_latent(b, &mut latent);
            let fake = guard(gen.forward(&tape, &z), epoch, step)?;
            let logits = guard(disc.forward(&tape, &fake, BnMode::TrainFrozen), epoch, step)?;
            let g_loss = guard(
                cross_entropy_soft(&tape, &logits, &uniform_real_targets(b, n_classes)),
                epoch,
                step,
            )?;
            let g_val = f64::from(g_loss.item()?);
            if !g_val.is_finite() {
                return Err(Error::Divergence { epoch, step, loss: g_val });
            }
            guard(tape.backward(&g_loss), epoch, step)?;
            adam_g.step(&gen_params)?;

            d_sum += d_val;
            g_sum += g_val;
            steps += 1;
        }

        stats.push(EpochStats {
            epoch,
            d_loss: d_sum / steps.max(1) as f64,
            g_loss: g_sum / steps.max(1) as f64,
        });
    }

    Ok(GanOutcome { gen, disc, stats })
}

/// Train the supervised CNN baseline on the same image format.
pub fn train_cnn(images: &[(Tensor<f32>, u16)], n_classes: usize, cfg: &TrainConfig) -> Result<CnnOutcome> {
    validate_config(cfg, images.len(), n_classes)?;
    let data = to_signed(images, n_classes)?;
    let model = CnnClassifier::new(n_classes, cfg.seed);
    let params: Vec<Tensor<f32>> = model.params().into_iter().map(|(_, t)| t).collect();
    let mut adam = Adam::new(cfg.lr, cfg.beta1);

    let mut stats = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        RngStream::new(cfg.seed, &format!("shuffle.e{epoch}")).shuffle(&mut order);
        let (mut sum, mut steps) = (0.0f64, 0usize);
        for (step, chunk) in order.chunks_exact(cfg.batch_size).enumerate() {
            let (x, labels) = batch_of(&data, chunk);
            zero_grads(&params);
            let tape = Graph::new();
            let logits = guard(model.forward(&tape, &x, BnMode::Train), epoch, step)?;
            // hard one-hot targets == smoothing of exactly 1
            let targets = smoothed_targets(&labels, n_classes, 1.0);
            let loss = guard(cross_entropy_soft(&tape, &logits, &targets), epoch, step)?;
            let val = f64::from(loss.item()?);
            if !val.is_finite() {
                return Err(Error::Divergence { epoch, step, loss: val });
            }
            guard(tape.backward(&loss), epoch, step)?;
            adam.step(&params)?;
            sum += val;
            steps += 1;
        }
        stats.push(EpochStats {
            epoch,
            d_loss: sum / steps.max(1) as f64,
            g_loss: 0.0,
        });
    }

    Ok(CnnOutcome { model, stats })
}
