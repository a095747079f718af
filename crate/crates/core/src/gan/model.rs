//! Model definitions.
//!
//! All three models work on `[B, 2, 64, 64]` images (two receiver channels).
//! Initialization follows the activation that consumes a layer's output:
//! Lecun for SELU, He for ReLU, and the DCGAN `N(0, 0.02)` for output heads.

use crate::error::{Error, Result};
use crate::nn::{
    pnorm_pool, relu, selu, BatchNorm2d, BnMode, Conv2d, ConvTranspose2d, DeformConv2d, Dense,
    Init, Norm,
};
use crate::rng::RngStream;
use crate::tensor::graph::Graph;
use crate::Tensor;

use super::{Activation, KernelKind};

pub const IMG_SIDE: usize = 64;
pub const IMG_CHANNELS: usize = 2;

/// Channel ladder of the discriminator (after the input's 2 channels).
const DISC_CHANNELS: [usize; 4] = [16, 32, 64, 128];
/// Channel ladder of the CNN baseline.
const CNN_CHANNELS: [usize; 4] = [24, 48, 96, 192];
/// Generator seed feature map: [GEN_SEED_CH, 4, 4] upsampled x16 to 64x64.
const GEN_SEED_CH: usize = 128;
const GEN_SEED_SIDE: usize = 4;

fn act(g: &Graph<f32>, x: &Tensor<f32>, a: Activation) -> Result<Tensor<f32>> {
    match a {
        Activation::Selu | Activation::SeluBn => selu(g, x),
        Activation::ReluBn => relu(g, x),
    }
}

fn prefixed(prefix: &str, params: Vec<(String, Tensor<f32>)>) -> Vec<(String, Tensor<f32>)> {
    params.into_iter().map(|(n, t)| (format!("{prefix}.{n}"), t)).collect()
}

/// DCGAN-style generator: latent -> dense seed map -> four fractional-strided
/// convolutions -> tanh image in [-1, 1]. SELU hidden activations keep the
/// stack self-normalizing without batch norm.
pub struct Generator {
    pub latent_dim: usize,
    dense: Dense<f32>,
    up: Vec<ConvTranspose2d<f32>>,
}

impl Generator {
    pub fn new(latent_dim: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed, "init.gen");
        let dense = Dense::new(latent_dim, GEN_SEED_CH * GEN_SEED_SIDE * GEN_SEED_SIDE, Init::Lecun, &mut rng);
        // 128x4x4 -> 64x8x8 -> 32x16x16 -> 16x32x32 -> 2x64x64
        let ladder = [GEN_SEED_CH, 64, 32, 16, IMG_CHANNELS];
        let up = ladder
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let init = if i + 2 == ladder.len() { Init::Normal(0.02) } else { Init::Lecun };
                ConvTranspose2d::new(w[0], w[1], 4, 2, 1, 0, init, &mut rng)
            })
            .collect();
        Generator { latent_dim, dense, up }
    }

    /// `[B, latent_dim]` noise -> `[B, 2, 64, 64]` image in [-1, 1].
    pub fn forward(&self, g: &Graph<f32>, z: &Tensor<f32>) -> Result<Tensor<f32>> {
        let d = z.dims();
        if d.len() != 2 || d[1] != self.latent_dim {
            return Err(Error::ShapeMismatch {
                op: "generator",
                detail: format!("latent must be [B, {}], got {:?}", self.latent_dim, d),
            });
        }
        let b = d[0];
        let mut h = selu(g, &self.dense.forward(g, z)?)?;
        h = g.reshape(&h, &[b, GEN_SEED_CH, GEN_SEED_SIDE, GEN_SEED_SIDE])?;
        let last = self.up.len() - 1;
        for (i, conv) in self.up.iter().enumerate() {
            h = conv.forward(g, &h)?;
            h = if i == last { g.tanh(&h)? } else { selu(g, &h)? };
        }
        Ok(h)
    }

    pub fn params(&self) -> Vec<(String, Tensor<f32>)> {
        let mut out = prefixed("gen.dense", self.dense.params());
        for (i, conv) in self.up.iter().enumerate() {
            out.extend(prefixed(&format!("gen.convt{}", i + 1), conv.params()));
        }
        out
    }

    /// Draws a latent batch from the named stream.
    pub fn sample_latent(&self, b: usize, rng: &mut RngStream) -> Tensor<f32> {
        let data = rng
            .normal_vec(b * self.latent_dim, 1.0)
            .into_iter()
            .map(|v| v as f32)
            .collect();
        Tensor::from_vec(&[b, self.latent_dim], data).expect("latent dims agree")
    }
}

enum DBlock {
    Std(Conv2d<f32>),
    Deform(DeformConv2d<f32>),
}

impl DBlock {
    fn forward(&self, g: &Graph<f32>, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        match self {
            DBlock::Std(c) => c.forward(g, x),
            DBlock::Deform(c) => c.forward(g, x),
        }
    }

    fn params(&self) -> Vec<(String, Tensor<f32>)> {
        match self {
            DBlock::Std(c) => c.params(),
            DBlock::Deform(c) => c.params(),
        }
    }
}

/// K+1-way discriminator/classifier: four stride-2 conv blocks (standard or
/// deformable), then a dense head. Logit column `K` is the "fake" class.
pub struct Discriminator {
    pub n_classes: usize,
    pub kernel: KernelKind,
    pub activation: Activation,
    blocks: Vec<(DBlock, Option<BatchNorm2d<f32>>)>,
    head: Dense<f32>,
}

impl Discriminator {
    pub fn new(n_classes: usize, kernel: KernelKind, activation: Activation, seed: u64) -> Self {
        let mut rng = RngStream::new(seed, "init.disc");
        let init = match activation {
            Activation::ReluBn => Init::He,
            _ => Init::Lecun,
        };
        let mut blocks = Vec::new();
        let mut in_ch = IMG_CHANNELS;
        for (i, &out_ch) in DISC_CHANNELS.iter().enumerate() {
            let block = match kernel {
                KernelKind::Standard => DBlock::Std(Conv2d::new(in_ch, out_ch, 4, 2, 1, init, &mut rng)),
                KernelKind::Deformable => {
                    DBlock::Deform(DeformConv2d::new(in_ch, out_ch, 4, 2, 1, init, &mut rng))
                }
            };
            // DCGAN convention: no norm on the first block
            let bn = (activation.uses_bn() && i > 0).then(|| BatchNorm2d::new(out_ch));
            blocks.push((block, bn));
            in_ch = out_ch;
        }
        let side = IMG_SIDE >> DISC_CHANNELS.len();
        let head = Dense::new(in_ch * side * side, n_classes + 1, Init::Normal(0.02), &mut rng);
        Discriminator { n_classes, kernel, activation, blocks, head }
    }

    /// `[B, 2, 64, 64]` -> `[B, K+1]` logits.
    pub fn forward(&self, g: &Graph<f32>, x: &Tensor<f32>, mode: BnMode) -> Result<Tensor<f32>> {
        let b = x.dims()[0];
        let mut h = x.clone();
        for (block, bn) in &self.blocks {
            h = block.forward(g, &h)?;
            if let Some(bn) = bn {
                h = bn.forward(g, &h, mode)?;
            }
            h = act(g, &h, self.activation)?;
        }
        let flat: usize = h.dims()[1..].iter().product();
        h = g.reshape(&h, &[b, flat])?;
        self.head.forward(g, &h)
    }

    pub fn params(&self) -> Vec<(String, Tensor<f32>)> {
        let mut out = Vec::new();
        for (i, (block, bn)) in self.blocks.iter().enumerate() {
            out.extend(prefixed(&format!("disc.conv{}", i + 1), block.params()));
            if let Some(bn) = bn {
                out.extend(prefixed(&format!("disc.bn{}", i + 1), bn.params()));
            }
        }
        out.extend(prefixed("disc.head", self.head.params()));
        out
    }

    /// Batch-norm running statistics (empty for the SELU variant).
    pub fn buffers(&self) -> Vec<(String, Tensor<f32>)> {
        let mut out = Vec::new();
        for (i, (_, bn)) in self.blocks.iter().enumerate() {
            if let Some(bn) = bn {
                out.extend(prefixed(&format!("disc.bn{}", i + 1), bn.buffers()));
            }
        }
        out
    }

    pub fn load_buffers(&self, named: &[(String, Tensor<f32>)]) -> Result<()> {
        let bns: Vec<(usize, &BatchNorm2d<f32>)> = self
            .blocks
            .iter()
            .enumerate()
            .filter_map(|(i, (_, bn))| bn.as_ref().map(|b| (i + 1, b)))
            .collect();
        load_bn_buffers(named, &bns, "disc")
    }
}

/// Supervised CNN baseline: unit-stride 3x3 convs with batch norm and ReLU,
/// downsampling by max pooling (the p -> inf norm pool), dense K-way head.
pub struct CnnClassifier {
    pub n_classes: usize,
    convs: Vec<Conv2d<f32>>,
    bns: Vec<BatchNorm2d<f32>>,
    head: Dense<f32>,
}

impl CnnClassifier {
    pub fn new(n_classes: usize, seed: u64) -> Self {
        let mut rng = RngStream::new(seed, "init.cnn");
        let mut convs = Vec::new();
        let mut bns = Vec::new();
        let mut in_ch = IMG_CHANNELS;
        for &out_ch in &CNN_CHANNELS {
            convs.push(Conv2d::new(in_ch, out_ch, 3, 1, 1, Init::He, &mut rng));
            bns.push(BatchNorm2d::new(out_ch));
            in_ch = out_ch;
        }
        let side = IMG_SIDE >> CNN_CHANNELS.len();
        let head = Dense::new(in_ch * side * side, n_classes, Init::Normal(0.02), &mut rng);
        CnnClassifier { n_classes, convs, bns, head }
    }

    /// `[B, 2, 64, 64]` -> `[B, K]` logits.
    pub fn forward(&self, g: &Graph<f32>, x: &Tensor<f32>, mode: BnMode) -> Result<Tensor<f32>> {
        let b = x.dims()[0];
        let mut h = x.clone();
        for (conv, bn) in self.convs.iter().zip(&self.bns) {
            h = conv.forward(g, &h)?;
            h = bn.forward(g, &h, mode)?;
            h = relu(g, &h)?;
            h = pnorm_pool(g, &h, Norm::Inf, 3, 2, 1)?;
        }
        let flat: usize = h.dims()[1..].iter().product();
        h = g.reshape(&h, &[b, flat])?;
        self.head.forward(g, &h)
    }

    pub fn params(&self) -> Vec<(String, Tensor<f32>)> {
        let mut out = Vec::new();
        for (i, (conv, bn)) in self.convs.iter().zip(&self.bns).enumerate() {
            out.extend(prefixed(&format!("cnn.conv{}", i + 1), conv.params()));
            out.extend(prefixed(&format!("cnn.bn{}", i + 1), bn.params()));
        }
        out.extend(prefixed("cnn.head", self.head.params()));
        out
    }

    pub fn buffers(&self) -> Vec<(String, Tensor<f32>)> {
        let mut out = Vec::new();
        for (i, bn) in self.bns.iter().enumerate() {
            out.extend(prefixed(&format!("cnn.bn{}", i + 1), bn.buffers()));
        }
        out
    }

    pub fn load_buffers(&self, named: &[(String, Tensor<f32>)]) -> Result<()> {
        let bns: Vec<(usize, &BatchNorm2d<f32>)> =
            self.bns.iter().enumerate().map(|(i, b)| (i + 1, b)).collect();
        load_bn_buffers(named, &bns, "cnn")
    }
}

/// Restores `{prefix}.bn{i}.running_mean/var` pairs for each `(i, bn)`.
/// Every provided buffer must be consumed and every batch norm covered.
fn load_bn_buffers(
    named: &[(String, Tensor<f32>)],
    bns: &[(usize, &BatchNorm2d<f32>)],
    prefix: &str,
) -> Result<()> {
    let find = |want: &str| -> Option<&Tensor<f32>> {
        named.iter().find(|(n, _)| n == want).map(|(_, t)| t)
    };
    for (i, bn) in bns {
        let chans = bn.gamma.dims()[0];
        let mean_name = format!("{prefix}.bn{i}.running_mean");
        let var_name = format!("{prefix}.bn{i}.running_var");
        let (mean, var) = match (find(&mean_name), find(&var_name)) {
            (Some(m), Some(v)) => (m, v),
            _ => return Err(Error::CheckpointMismatch(format!("missing buffers for {prefix}.bn{i}"))),
        };
        for (name, t) in [(&mean_name, mean), (&var_name, var)] {
            if t.dims() != [chans] {
                return Err(Error::CheckpointMismatch(format!(
                    "buffer {name:?} has shape {:?}, expected [{chans}]",
                    t.dims()
                )));
            }
        }
        bn.load_buffers(mean, var);
    }
    if named.len() != 2 * bns.len() {
        return Err(Error::CheckpointMismatch(format!(
            "{} batch-norm buffers for {} batch norms (wrong model variant?)",
            named.len(),
            bns.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_batch(b: usize, fill: impl Fn(usize) -> f32) -> Tensor<f32> {
        let n = b * IMG_CHANNELS * IMG_SIDE * IMG_SIDE;
        Tensor::from_vec(&[b, IMG_CHANNELS, IMG_SIDE, IMG_SIDE], (0..n).map(fill).collect()).unwrap()
    }

    #[test]
    fn generator_shape_and_range() {
        let gen = Generator::new(100, 1);
        let g = Graph::no_grad();
        let mut rng = RngStream::new(2, "latent");
        let z = gen.sample_latent(3, &mut rng);
        let y = gen.forward(&g, &z).unwrap();
        assert_eq!(y.dims(), &[3, 2, 64, 64]);
        assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        // latent shape guarded
        let bad = Tensor::from_vec(&[3, 7], vec![0.0; 21]).unwrap();
        assert!(gen.forward(&g, &bad).is_err());
    }

    #[test]
    fn discriminator_shapes_for_all_variants() {
        let x = image_batch(2, |i| (i % 97) as f32 / 97.0);
        for kernel in [KernelKind::Standard, KernelKind::Deformable] {
            for activation in Activation::ALL {
                let d = Discriminator::new(4, kernel, activation, 3);
                let g = Graph::no_grad();
                let y = d.forward(&g, &x, BnMode::Train).unwrap();
                assert_eq!(y.dims(), &[2, 5], "{kernel}/{activation}");
                assert!(y.data().iter().all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn cnn_shape() {
        let c = CnnClassifier::new(24, 4);
        let g = Graph::no_grad();
        let x = image_batch(2, |i| (i % 31) as f32 / 31.0);
        let y = c.forward(&g, &x, BnMode::Train).unwrap();
        assert_eq!(y.dims(), &[2, 24]);
    }

    #[test]
    fn param_naming_and_counts() {
        let d_std = Discriminator::new(4, KernelKind::Standard, Activation::Selu, 5);
        // 4 blocks * (weight, bias) + head * 2
        assert_eq!(d_std.params().len(), 10);
        assert!(d_std.buffers().is_empty());

        let d_def = Discriminator::new(4, KernelKind::Deformable, Activation::ReluBn, 5);
        let names: Vec<String> = d_def.params().into_iter().map(|(n, _)| n).collect();
        assert!(names.contains(&"disc.conv1.offset.weight".to_string()));
        assert!(names.contains(&"disc.bn2.gamma".to_string()));
        assert!(!names.contains(&"disc.bn1.gamma".to_string()), "no norm on block 1");
        assert_eq!(names.len(), 4 * 4 + 3 * 2 + 2);
        assert_eq!(d_def.buffers().len(), 6);

        let gen = Generator::new(100, 5);
        assert_eq!(gen.params().len(), 2 + 4 * 2);

        // scalar-count parity: the CNN baseline lives in the same budget
        // ballpark as the discriminator it is compared against
        let count = |ps: Vec<(String, Tensor<f32>)>| -> usize {
            ps.iter().map(|(_, t)| t.dims().iter().product::<usize>()).sum()
        };
        let cnn = count(CnnClassifier::new(24, 5).params());
        let disc = count(Discriminator::new(24, KernelKind::Deformable, Activation::Selu, 5).params());
        let ratio = cnn as f64 / disc as f64;
        assert!((0.5..=1.5).contains(&ratio), "param ratio {ratio}");
    }

    #[test]
    fn same_seed_same_model_different_seed_different() {
        let a = Discriminator::new(4, KernelKind::Standard, Activation::Selu, 7);
        let b = Discriminator::new(4, KernelKind::Standard, Activation::Selu, 7);
        let c = Discriminator::new(4, KernelKind::Standard, Activation::Selu, 8);
        let get = |d: &Discriminator| d.params()[0].1.to_vec();
        assert_eq!(get(&a), get(&b));
        assert_ne!(get(&a), get(&c));
    }

    #[test]
    fn zero_offsets_make_deformable_match_standard_at_init() {
        // with a zero-initialized offset branch, a deformable block computes
        // exactly the standard convolution of its main kernel
        let d = Discriminator::new(4, KernelKind::Deformable, Activation::Selu, 9);
        let s = Discriminator::new(4, KernelKind::Standard, Activation::Selu, 9);
        // same init stream order: deform draws main kernel first, like std
        let x = image_batch(1, |i| ((i * 13) % 101) as f32 / 101.0 - 0.5);
        let g = Graph::no_grad();
        let yd = d.forward(&g, &x, BnMode::Eval).unwrap();
        let ys = s.forward(&g, &x, BnMode::Eval).unwrap();
        // weights came from the same named stream in the same order, so the
        // logits must agree bit for bit
        assert_eq!(&*yd.data(), &*ys.data());
    }
}
