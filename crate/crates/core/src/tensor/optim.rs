//! Optimizers: plain SGD and Adam with bias correction.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Allocates zeroed gradient buffers for every parameter. Call before each
/// training step so `backward` accumulates into a clean slate.
pub fn zero_grads<T: Element>(params: &[Tensor<T>]) {
    for p in params {
        p.zero_grad();
    }
}

fn take_grad<T: Element>(index: usize, p: &Tensor<T>) -> Result<Vec<T>> {
    p.grad().ok_or_else(|| Error::MissingGrad {
        index,
        dims: p.dims().to_vec(),
    })
}

/// Stochastic gradient descent: `w -= lr * g`.
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Sgd { lr }
    }

    pub fn step<T: Element>(&self, params: &[Tensor<T>]) -> Result<()> {
        let lr = T::from_f64(self.lr);
        for (i, p) in params.iter().enumerate() {
            let g = take_grad(i, p)?;
            let mut data = p.data_mut();
            for (w, gi) in data.iter_mut().zip(&g) {
                *w -= lr * *gi;
            }
        }
        Ok(())
    }
}

/// Adam (Kingma & Ba) with bias-corrected first/second moments:
///
/// ```text
/// m <- b1 m + (1-b1) g        v <- b2 v + (1-b2) g^2
/// w -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
/// ```
///
/// Moment buffers are keyed by position in the `params` slice, which must be
/// stable across steps.
pub struct Adam<T: Element> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    moments: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Element> Adam<T> {
    pub fn new(lr: f64, beta1: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            moments: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &[Tensor<T>]) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (vec![T::zero(); p.numel()], vec![T::zero(); p.numel()]))
                .collect();
        }
        assert_eq!(
            self.moments.len(),
            params.len(),
            "Adam must see the same parameter list every step"
        );
        self.t += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one = T::one();
        let corr1 = T::from_f64(1.0 - self.beta1.powi(self.t as i32));
        let corr2 = T::from_f64(1.0 - self.beta2.powi(self.t as i32));
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(self.eps);
        for (i, p) in params.iter().enumerate() {
            let g = take_grad(i, p)?;
            let (m, v) = &mut self.moments[i];
            let mut data = p.data_mut();
            for j in 0..g.len() {
                m[j] = b1 * m[j] + (one - b1) * g[j];
                v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                let mhat = m[j] / corr1;
                let vhat = v[j] / corr2;
                data[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
