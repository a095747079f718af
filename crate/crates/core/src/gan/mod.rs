//! Semi-supervised De-DCGAN: a DCGAN generator plus a K+1-way discriminator
//! (K gesture classes and one "fake" class), with optional deformable
//! convolutions in the discriminator, and a plain supervised CNN baseline.

pub mod checkpoint;
pub mod eval;
pub mod model;
pub mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{load_cnn, load_gan, save_cnn, save_gan, CnnMeta, GanMeta};
pub use eval::{evaluate, generate, noise_images, realness, Classifier, EvalReport};
pub use model::{CnnClassifier, Discriminator, Generator, IMG_CHANNELS, IMG_SIDE};
pub use train::{train_cnn, train_gan, CnnOutcome, EpochStats, GanOutcome, TrainConfig};

/// Hidden activation scheme of the discriminator / classifier stacks.
///
/// `Selu` is the self-normalizing setup (no batch norm anywhere); the other
/// two pair an activation with batch norm after every hidden conv except the
/// first, DCGAN style.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Selu,
    ReluBn,
    SeluBn,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Selu, Activation::ReluBn, Activation::SeluBn];

    pub(crate) fn uses_bn(self) -> bool {
        !matches!(self, Activation::Selu)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Selu => "selu",
            Activation::ReluBn => "relu-bn",
            Activation::SeluBn => "selu-bn",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "selu" => Ok(Activation::Selu),
            "relu-bn" => Ok(Activation::ReluBn),
            "selu-bn" => Ok(Activation::SeluBn),
            other => Err(Error::UnknownKind(format!(
                "activation {other:?} (selu, relu-bn or selu-bn)"
            ))),
        }
    }
}

/// Convolution flavor of the discriminator stack.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Standard,
    Deformable,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Standard => "standard",
            KernelKind::Deformable => "deformable",
        })
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(KernelKind::Standard),
            "deformable" => Ok(KernelKind::Deformable),
            other => Err(Error::UnknownKind(format!(
                "kernel {other:?} (standard or deformable)"
            ))),
        }
    }
}
