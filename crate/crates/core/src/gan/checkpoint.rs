//! Model checkpoints: a manifest plus one tensor container per parameter.
//!
//! ```text
//! <dir>/
//!   manifest.json                    architecture + provenance
//!   params/<param.name>.dgt          one file per parameter / buffer
//! ```
//!
//! No RNG state is persisted: training derives every stream from
//! `(seed, epoch)` names, so restarting from a config replays bit-for-bit
//! and a checkpoint only needs to know the architecture and weights.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::Tensor;

use super::model::{CnnClassifier, Discriminator, Generator};
use super::train::TrainConfig;

pub const CKPT_VERSION: u32 = 1;
const GAN_MODEL: &str = "de-dcgan";
const CNN_MODEL: &str = "cnn";

/// Everything needed to rebuild the nets before weights are restored, plus a
/// full echo of the training config for provenance. The config seed doubles
/// as the RNG state: streams are named, so nothing mutable has to be stored.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GanMeta {
    pub version: u32,
    pub model: String,
    pub n_classes: usize,
    pub epochs_trained: usize,
    pub config: TrainConfig,
}

impl GanMeta {
    pub fn new(disc: &Discriminator, epochs_trained: usize, config: &TrainConfig) -> Self {
        GanMeta {
            version: CKPT_VERSION,
            model: GAN_MODEL.into(),
            n_classes: disc.n_classes,
            epochs_trained,
            config: config.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CnnMeta {
    pub version: u32,
    pub model: String,
    pub n_classes: usize,
    pub epochs_trained: usize,
    pub config: TrainConfig,
}

impl CnnMeta {
    pub fn new(model: &CnnClassifier, epochs_trained: usize, config: &TrainConfig) -> Self {
        CnnMeta {
            version: CKPT_VERSION,
            model: CNN_MODEL.into(),
            n_classes: model.n_classes,
            epochs_trained,
            config: config.clone(),
        }
    }
}

fn write_manifest<M: Serialize>(dir: &Path, meta: &M) -> Result<()> {
    fs::create_dir_all(dir.join("params"))?;
    let mut f = fs::File::create(dir.join("manifest.json"))?;
    f.write_all(serde_json::to_string_pretty(meta)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

fn read_manifest<M: for<'de> Deserialize<'de>>(dir: &Path) -> Result<M> {
    let mut json = String::new();
    fs::File::open(dir.join("manifest.json"))?.read_to_string(&mut json)?;
    serde_json::from_str(&json)
        .map_err(|e| Error::CheckpointMismatch(format!("manifest does not parse: {e}")))
}

fn write_params(dir: &Path, named: &[(String, Tensor<f32>)]) -> Result<()> {
    for (name, t) in named {
        container::write_tensor(&dir.join("params").join(format!("{name}.dgt")), t)?;
    }
    Ok(())
}

/// Copies stored tensors into live parameters, enforcing shape agreement,
/// and returns how many files were consumed.
fn load_params(dir: &Path, named: &[(String, Tensor<f32>)]) -> Result<usize> {
    for (name, t) in named {
        let path = dir.join("params").join(format!("{name}.dgt"));
        if !path.is_file() {
            return Err(Error::CheckpointMismatch(format!("missing parameter {name:?}")));
        }
        let stored: Tensor<f32> = container::read_tensor(&path)?;
        if stored.dims() != t.dims() {
            return Err(Error::CheckpointMismatch(format!(
                "parameter {name:?} has shape {:?}, expected {:?}",
                stored.dims(),
                t.dims()
            )));
        }
        t.data_mut().copy_from_slice(&stored.data());
    }
    Ok(named.len())
}

/// Reads stored buffer tensors by the names a fresh model reports.
fn load_named(dir: &Path, names: &[(String, Tensor<f32>)]) -> Result<Vec<(String, Tensor<f32>)>> {
    names
        .iter()
        .map(|(name, _)| {
            let path = dir.join("params").join(format!("{name}.dgt"));
            if !path.is_file() {
                return Err(Error::CheckpointMismatch(format!("missing buffer {name:?}")));
            }
            Ok((name.clone(), container::read_tensor::<f32>(&path)?))
        })
        .collect()
}

fn check_param_count(dir: &Path, expected: usize) -> Result<()> {
    let found = fs::read_dir(dir.join("params"))?.count();
    if found != expected {
        return Err(Error::CheckpointMismatch(format!(
            "{found} tensor files on disk, architecture expects {expected}"
        )));
    }
    Ok(())
}

pub fn save_gan(dir: &Path, gen: &Generator, disc: &Discriminator, meta: &GanMeta) -> Result<()> {
    if meta.model != GAN_MODEL
        || meta.n_classes != disc.n_classes
        || meta.config.latent_dim != gen.latent_dim
        || meta.config.activation != disc.activation
        || meta.config.kernel != disc.kernel
    {
        return Err(Error::CheckpointMismatch(
            "manifest metadata disagrees with the models being saved".into(),
        ));
    }
    write_manifest(dir, meta)?;
    write_params(dir, &gen.params())?;
    write_params(dir, &disc.params())?;
    write_params(dir, &disc.buffers())
}

pub fn load_gan(dir: &Path) -> Result<(Generator, Discriminator, GanMeta)> {
    let meta: GanMeta = read_manifest(dir)?;
    if meta.model != GAN_MODEL {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint holds a {:?} model, expected {GAN_MODEL:?}",
            meta.model
        )));
    }
    if meta.version != CKPT_VERSION {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint version {} (supported: {CKPT_VERSION})",
            meta.version
        )));
    }
    let gen = Generator::new(meta.config.latent_dim, meta.config.seed);
    let disc = Discriminator::new(meta.n_classes, meta.config.kernel, meta.config.activation, meta.config.seed);
    let mut count = load_params(dir, &gen.params())?;
    count += load_params(dir, &disc.params())?;
    let buffers = load_named(dir, &disc.buffers())?;
    count += buffers.len();
    disc.load_buffers(&buffers)?;
    check_param_count(dir, count)?;
    Ok((gen, disc, meta))
}

pub fn save_cnn(dir: &Path, model: &CnnClassifier, meta: &CnnMeta) -> Result<()> {
    if meta.model != CNN_MODEL || meta.n_classes != model.n_classes {
        return Err(Error::CheckpointMismatch(
            "manifest metadata disagrees with the model being saved".into(),
        ));
    }
    write_manifest(dir, meta)?;
    write_params(dir, &model.params())?;
    write_params(dir, &model.buffers())
}

pub fn load_cnn(dir: &Path) -> Result<(CnnClassifier, CnnMeta)> {
    let meta: CnnMeta = read_manifest(dir)?;
    if meta.model != CNN_MODEL {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint holds a {:?} model, expected {CNN_MODEL:?}",
            meta.model
        )));
    }
    if meta.version != CKPT_VERSION {
        return Err(Error::CheckpointMismatch(format!(
            "checkpoint version {} (supported: {CKPT_VERSION})",
            meta.version
        )));
    }
    let model = CnnClassifier::new(meta.n_classes, meta.config.seed);
    let mut count = load_params(dir, &model.params())?;
    let buffers = load_named(dir, &model.buffers())?;
    count += buffers.len();
    model.load_buffers(&buffers)?;
    check_param_count(dir, count)?;
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::BnMode;
    use crate::gan::eval::noise_images;
    use crate::gan::{Activation, KernelKind};
    use crate::tensor::graph::Graph;

    fn cfg_for(seed: u64, kernel: KernelKind, activation: Activation) -> TrainConfig {
        TrainConfig { seed, kernel, activation, ..TrainConfig::default() }
    }

    fn logits_of(disc: &Discriminator, x: &Tensor<f32>) -> Vec<f32> {
        let g = Graph::no_grad();
        disc.forward(&g, x, BnMode::Eval).unwrap().to_vec()
    }

    #[test]
    fn gan_checkpoint_roundtrips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = cfg_for(31, KernelKind::Deformable, Activation::SeluBn);
        let gen = Generator::new(100, 31);
        let disc = Discriminator::new(4, KernelKind::Deformable, Activation::SeluBn, 31);
        // move the BN running stats off their defaults first
        {
            let g = Graph::no_grad();
            let x = Tensor::from_vec(
                &[2, 2, 64, 64],
                (0..2 * 2 * 64 * 64).map(|i| (i % 113) as f32 / 113.0).collect(),
            )
            .unwrap();
            disc.forward(&g, &x, BnMode::Train).unwrap();
        }
        let meta = GanMeta::new(&disc, 7, &cfg);
        save_gan(dir.path(), &gen, &disc, &meta).unwrap();

        let (gen2, disc2, meta2) = load_gan(dir.path()).unwrap();
        assert_eq!(meta2, meta);
        let x = Tensor::from_vec(
            &[1, 2, 64, 64],
            (0..2 * 64 * 64).map(|i| ((i * 7) % 59) as f32 / 59.0).collect(),
        )
        .unwrap();
        assert_eq!(logits_of(&disc, &x), logits_of(&disc2, &x));
        let g = Graph::no_grad();
        let z = Tensor::from_vec(&[1, 100], vec![0.1; 100]).unwrap();
        assert_eq!(
            gen.forward(&g, &z).unwrap().to_vec(),
            gen2.forward(&g, &z).unwrap().to_vec()
        );
    }

    #[test]
    fn cnn_checkpoint_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let model = CnnClassifier::new(4, 32);
        let meta = CnnMeta::new(&model, 3, &cfg_for(32, KernelKind::Standard, Activation::ReluBn));
        save_cnn(dir.path(), &model, &meta).unwrap();
        let (model2, meta2) = load_cnn(dir.path()).unwrap();
        assert_eq!(meta2, meta);
        let x = noise_images(1, 1).remove(0);
        let batch = Tensor::from_vec(&[1, 2, 64, 64], x.to_vec()).unwrap();
        let g = Graph::no_grad();
        assert_eq!(
            model.forward(&g, &batch, BnMode::Eval).unwrap().to_vec(),
            model2.forward(&g, &batch, BnMode::Eval).unwrap().to_vec()
        );
    }

    #[test]
    fn missing_and_extra_files_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = cfg_for(33, KernelKind::Standard, Activation::Selu);
        let gen = Generator::new(100, 33);
        let disc = Discriminator::new(4, KernelKind::Standard, Activation::Selu, 33);
        save_gan(dir.path(), &gen, &disc, &GanMeta::new(&disc, 0, &cfg)).unwrap();

        let victim = dir.path().join("params").join("disc.head.bias.dgt");
        let bytes = fs::read(&victim).unwrap();
        fs::remove_file(&victim).unwrap();
        assert!(matches!(load_gan(dir.path()), Err(Error::CheckpointMismatch(_))));

        fs::write(&victim, &bytes).unwrap();
        fs::write(dir.path().join("params").join("stray.dgt"), b"junk").unwrap();
        assert!(matches!(load_gan(dir.path()), Err(Error::CheckpointMismatch(_))));
    }

    #[test]
    fn model_kind_confusion_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let model = CnnClassifier::new(4, 34);
        let cfg = cfg_for(34, KernelKind::Standard, Activation::ReluBn);
        save_cnn(dir.path(), &model, &CnnMeta::new(&model, 0, &cfg)).unwrap();
        assert!(matches!(load_gan(dir.path()), Err(Error::CheckpointMismatch(_))));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = cfg_for(35, KernelKind::Standard, Activation::Selu);
        let gen = Generator::new(100, 35);
        let disc = Discriminator::new(4, KernelKind::Standard, Activation::Selu, 35);
        let mut meta = GanMeta::new(&disc, 0, &cfg);
        save_gan(dir.path(), &gen, &disc, &meta).unwrap();
        // claim a different class count than the stored head
        meta.n_classes = 24;
        let json = serde_json::to_string_pretty(&meta).unwrap();
        fs::write(dir.path().join("manifest.json"), json).unwrap();
        assert!(matches!(load_gan(dir.path()), Err(Error::CheckpointMismatch(_))));
    }
}
