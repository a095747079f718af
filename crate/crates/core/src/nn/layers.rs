//! Parameter-holding layers: thin bundles of tensors with a forward method
//! and named parameter export for checkpoints.

use std::cell::RefCell;

use crate::error::Result;
use crate::nn::conv::{conv2d, conv_transpose2d};
use crate::nn::deform::deform_conv2d;
use crate::nn::norm::{batch_norm, BnMode, RunningStats};
use crate::rng::RngStream;
use crate::tensor::graph::Graph;
use crate::tensor::{Element, Tensor};

/// Weight initialization scheme.
#[derive(Copy, Clone, Debug)]
pub enum Init {
    /// N(0, std) -- the DCGAN convention is `Normal(0.02)`.
    Normal(f64),
    /// He: N(0, sqrt(2 / fan_in)), for ReLU families.
    He,
    /// Lecun: N(0, sqrt(1 / fan_in)), required for SELU self-normalization.
    Lecun,
}

impl Init {
    fn std(self, fan_in: usize) -> f64 {
        match self {
            Init::Normal(s) => s,
            Init::He => (2.0 / fan_in as f64).sqrt(),
            Init::Lecun => (1.0 / fan_in as f64).sqrt(),
        }
    }
}

fn init_param<T: Element>(dims: &[usize], fan_in: usize, init: Init, rng: &mut RngStream) -> Tensor<T> {
    let std = init.std(fan_in);
    let data = rng
        .normal_vec(dims.iter().product(), std)
        .into_iter()
        .map(T::from_f64)
        .collect();
    Tensor::param(dims, data).expect("init_param dims/data agree")
}

/// Fully connected layer; weight is `[in, out]` so `y = x @ w + b`.
pub struct Dense<T: Element> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Element> Dense<T> {
    pub fn new(input: usize, output: usize, init: Init, rng: &mut RngStream) -> Self {
        Dense {
            w: init_param(&[input, output], input, init, rng),
            b: Tensor::param(&[output], vec![T::zero(); output]).unwrap(),
        }
    }

    pub fn forward(&self, g: &Graph<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        g.add_row_bias(&g.matmul(x, &self.w)?, &self.b)
    }

    pub fn params(&self) -> Vec<(String, Tensor<T>)> {
        vec![("weight".into(), self.w.clone()), ("bias".into(), self.b.clone())]
    }
}

/// Standard convolution layer.
pub struct Conv2d<T: Element> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Element> Conv2d<T> {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        init: Init,
        rng: &mut RngStream,
    ) -> Self {
        Conv2d {
            w: init_param(&[out_ch, in_ch, k, k], in_ch * k * k, init, rng),
            b: Tensor::param(&[out_ch], vec![T::zero(); out_ch]).unwrap(),
            stride,
            pad,
        }
    }

    /// All-zero weights and bias: the offset branch of a deformable conv
    /// starts as the identity deformation.
    pub fn zeroed(in_ch: usize, out_ch: usize, k: usize, stride: usize, pad: usize) -> Self {
        Conv2d {
            w: Tensor::param(&[out_ch, in_ch, k, k], vec![T::zero(); out_ch * in_ch * k * k]).unwrap(),
            b: Tensor::param(&[out_ch], vec![T::zero(); out_ch]).unwrap(),
            stride,
            pad,
        }
    }

    pub fn forward(&self, g: &Graph<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d(g, x, &self.w, Some(&self.b), self.stride, self.pad)
    }

    pub fn params(&self) -> Vec<(String, Tensor<T>)> {
        vec![("weight".into(), self.w.clone()), ("bias".into(), self.b.clone())]
    }
}

/// Fractional-strided (transposed) convolution layer; weight is `[in, out, k, k]`.
pub struct ConvTranspose2d<T: Element> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
    pub stride: usize,
    pub pad: usize,
    pub output_pad: usize,
}

impl<T: Element> ConvTranspose2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        output_pad: usize,
        init: Init,
        rng: &mut RngStream,
    ) -> Self {
        ConvTranspose2d {
            w: init_param(&[in_ch, out_ch, k, k], in_ch * k * k, init, rng),
            b: Tensor::param(&[out_ch], vec![T::zero(); out_ch]).unwrap(),
            stride,
            pad,
            output_pad,
        }
    }

    pub fn forward(&self, g: &Graph<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv_transpose2d(g, x, &self.w, Some(&self.b), self.stride, self.pad, self.output_pad)
    }

    pub fn params(&self) -> Vec<(String, Tensor<T>)> {
        vec![("weight".into(), self.w.clone()), ("bias".into(), self.b.clone())]
    }
}

/// Deformable convolution: a main kernel plus a zero-initialized offset
/// branch (a standard conv producing `2*k*k` offset channels with the same
/// stride/padding, hence the same output grid).
pub struct DeformConv2d<T: Element> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
    pub offset: Conv2d<T>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Element> DeformConv2d<T> {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        k: usize,
        stride: usize,
        pad: usize,
        init: Init,
        rng: &mut RngStream,
    ) -> Self {
        DeformConv2d {
            w: init_param(&[out_ch, in_ch, k, k], in_ch * k * k, init, rng),
            b: Tensor::param(&[out_ch], vec![T::zero(); out_ch]).unwrap(),
            offset: Conv2d::zeroed(in_ch, 2 * k * k, k, stride, pad),
            stride,
            pad,
        }
    }

    pub fn forward(&self, g: &Graph<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let offsets = self.offset.forward(g, x)?;
        deform_conv2d(g, x, &self.w, Some(&self.b), &offsets, self.stride, self.pad)
    }

    pub fn params(&self) -> Vec<(String, Tensor<T>)> {
        vec![
            ("weight".into(), self.w.clone()),
            ("bias".into(), self.b.clone()),
            ("offset.weight".into(), self.offset.w.clone()),
            ("offset.bias".into(), self.offset.b.clone()),
        ]
    }
}

/// Batch norm layer with interior-mutable running statistics, so forward can
/// take `&self` everywhere.
pub struct BatchNorm2d<T: Element> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running: RefCell<RunningStats<T>>,
}

impl<T: Element> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Tensor::param(&[channels], vec![T::one(); channels]).unwrap(),
            beta: Tensor::param(&[channels], vec![T::zero(); channels]).unwrap(),
            running: RefCell::new(RunningStats::new(channels)),
        }
    }

    pub fn forward(&self, g: &Graph<T>, x: &Tensor<T>, mode: BnMode) -> Result<Tensor<T>> {
        batch_norm(g, x, &self.gamma, &self.beta, &mut self.running.borrow_mut(), mode)
    }

    pub fn params(&self) -> Vec<(String, Tensor<T>)> {
        vec![("gamma".into(), self.gamma.clone()), ("beta".into(), self.beta.clone())]
    }

    /// Non-trainable state that still belongs in a checkpoint.
    pub fn buffers(&self) -> Vec<(String, Tensor<T>)> {
        let rs = self.running.borrow();
        vec![
            (
                "running_mean".into(),
                Tensor::from_vec(&[rs.mean.len()], rs.mean.clone()).unwrap(),
            ),
            (
                "running_var".into(),
                Tensor::from_vec(&[rs.var.len()], rs.var.clone()).unwrap(),
            ),
        ]
    }

    pub fn load_buffers(&self, mean: &Tensor<T>, var: &Tensor<T>) {
        let mut rs = self.running.borrow_mut();
        rs.mean = mean.to_vec();
        rs.var = var.to_vec();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_forward_shape_and_value() {
        let g = Graph::<f64>::new();
        let mut layer = Dense::<f64> {
            w: Tensor::param(&[2, 3], vec![1., 0., 2., 0., 1., 1.]).unwrap(),
            b: Tensor::param(&[3], vec![0.5, -0.5, 0.0]).unwrap(),
        };
        let _ = &mut layer;
        let x = Tensor::from_vec(&[1, 2], vec![2.0, 3.0]).unwrap();
        let y = layer.forward(&g, &x).unwrap();
        assert_eq!(y.dims(), &[1, 3]);
        assert_eq!(y.to_vec(), vec![2.5, 2.5, 7.0]);
    }

    #[test]
    fn init_scales_with_fan_in() {
        let mut rng = RngStream::new(5, "init-test");
        let w: Tensor<f64> = init_param(&[1000], 1000, Init::Lecun, &mut rng);
        let v = w.to_vec();
        let var: f64 = v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64;
        assert!((var - 1.0 / 1000.0).abs() < 3e-4, "lecun variance 1/fan_in, got {var}");
    }

    #[test]
    fn deform_layer_starts_as_plain_conv() {
        let mut rng = RngStream::new(6, "deform-init");
        let layer = DeformConv2d::<f32>::new(2, 4, 3, 2, 1, Init::Normal(0.05), &mut rng);
        let g = Graph::<f32>::no_grad();
        let x = Tensor::from_vec(&[1, 2, 8, 8], rng.normal_vec(128, 1.0).iter().map(|&v| v as f32).collect()).unwrap();
        let y = layer.forward(&g, &x).unwrap();
        let y_std = conv2d(&g, &x, &layer.w, Some(&layer.b), 2, 1).unwrap();
        for (a, b) in y.to_vec().iter().zip(y_std.to_vec()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn param_names_follow_layer_structure() {
        let mut rng = RngStream::new(7, "names");
        let layer = DeformConv2d::<f32>::new(2, 4, 3, 1, 1, Init::He, &mut rng);
        let names: Vec<String> = layer.params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, vec!["weight", "bias", "offset.weight", "offset.bias"]);
    }
}
