//! Activation functions as taped ops.

use crate::error::Result;
use crate::tensor::graph::Graph;
use crate::tensor::{Element, Tensor};

/// SELU's fixed-point scale: with lecun-normal weights, activations converge
/// toward zero mean / unit variance as depth grows.
pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;

/// `selu(x) = lambda * (x if x > 0 else alpha * (exp(x) - 1))`
pub fn selu<T: Element>(g: &Graph<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let lambda = T::from_f64(SELU_LAMBDA);
    let alpha = T::from_f64(SELU_ALPHA);
    let data = x
        .data()
        .iter()
        .map(|&v| {
            if v > T::zero() {
                lambda * v
            } else {
                lambda * alpha * (v.exp() - T::one())
            }
        })
        .collect();
    g.op("selu", &[x], x.dims().to_vec(), data, move |ctx| {
        let xs = ctx.input_data(0);
        vec![Some(
            ctx.gout
                .iter()
                .zip(xs.iter())
                .map(|(&go, &v)| {
                    if v > T::zero() {
                        go * lambda
                    } else {
                        go * lambda * alpha * v.exp()
                    }
                })
                .collect(),
        )]
    })
}

/// Closed-form SELU derivative (used by gradcheck as the analytic oracle).
pub fn selu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * x.exp()
    }
}

pub fn relu<T: Element>(g: &Graph<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    g.max_scalar(x, T::zero())
}

/// `leaky_relu(x) = x if x > 0 else slope * x`
pub fn leaky_relu<T: Element>(g: &Graph<T>, x: &Tensor<T>, slope: f64) -> Result<Tensor<T>> {
    let a = T::from_f64(slope);
    let data = x
        .data()
        .iter()
        .map(|&v| if v > T::zero() { v } else { a * v })
        .collect();
    g.op("leaky_relu", &[x], x.dims().to_vec(), data, move |ctx| {
        let xs = ctx.input_data(0);
        vec![Some(
            ctx.gout
                .iter()
                .zip(xs.iter())
                .map(|(&go, &v)| if v > T::zero() { go } else { go * a })
                .collect(),
        )]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selu_known_points() {
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[3], vec![1.0, 0.0, -1.0]).unwrap();
        let y = selu(&g, &x).unwrap().to_vec();
        assert!((y[0] - SELU_LAMBDA).abs() < 1e-12);
        assert_eq!(y[1], 0.0);
        let expect = SELU_LAMBDA * SELU_ALPHA * ((-1.0f64).exp() - 1.0);
        assert!((y[2] - expect).abs() < 1e-12);
    }

    #[test]
    fn selu_fixed_point_constants() {
        // lambda and alpha satisfy the self-normalizing fixed point for
        // standard normal inputs: E[selu(Z)] ~ 0, Var[selu(Z)] ~ 1.
        // Check by high-resolution quadrature over the normal density.
        let n = 400_000;
        let (mut mean, mut m2) = (0.0, 0.0);
        let lo = -8.0;
        let hi = 8.0;
        let dz = (hi - lo) / n as f64;
        for i in 0..n {
            let z = lo + (i as f64 + 0.5) * dz;
            let w = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() * dz;
            let s = if z > 0.0 {
                SELU_LAMBDA * z
            } else {
                SELU_LAMBDA * SELU_ALPHA * (z.exp() - 1.0)
            };
            mean += w * s;
            m2 += w * s * s;
        }
        let var = m2 - mean * mean;
        assert!(mean.abs() < 1e-3, "selu mean at fixed point: {mean}");
        assert!((var - 1.0).abs() < 1e-3, "selu var at fixed point: {var}");
    }

    #[test]
    fn relu_and_leaky_grads() {
        let g = Graph::<f64>::new();
        let x = Tensor::param(&[4], vec![-2.0, -0.5, 0.5, 2.0]).unwrap();
        let y = leaky_relu(&g, &x, 0.2).unwrap();
        assert_eq!(y.to_vec(), vec![-0.4, -0.1, 0.5, 2.0]);
        let l = g.reduce_sum(&y).unwrap();
        g.backward(&l).unwrap();
        assert_eq!(x.grad().unwrap(), vec![0.2, 0.2, 1.0, 1.0]);
    }
}
