//! Batch normalization over `[B, C, H, W]` feature maps.

use crate::error::{Error, Result};
use crate::tensor::graph::Graph;
use crate::tensor::{Element, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel running statistics, updated in training mode and used verbatim
/// in eval mode. `running = momentum * running + (1 - momentum) * batch`.
#[derive(Clone, Debug)]
pub struct RunningStats<T: Element> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// How one normalization pass treats batch vs running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with batch statistics and fold them into the running ones.
    Train,
    /// Normalize with batch statistics but leave the running ones untouched.
    /// For training passes whose inputs the network will never be asked to
    /// normalize at eval time — a discriminator classifying generated
    /// batches during GAN training keeps its running statistics tracking
    /// real data only.
    TrainFrozen,
    /// Normalize with the running statistics.
    Eval,
}

impl BnMode {
    /// Batch statistics drive the normalization in both training modes.
    pub fn uses_batch_stats(self) -> bool {
        !matches!(self, BnMode::Eval)
    }
}

impl<T: Element> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }
}

/// Normalizes per channel with batch statistics (training modes) or running
/// statistics (eval), then applies the affine `gamma * xhat + beta`.
///
/// Training modes use the population variance (divide by `n`, not `n - 1`)
/// and require a batch of at least 2 samples (`DegenerateBatch` otherwise).
#[allow(clippy::too_many_arguments)]
pub fn batch_norm<T: Element>(
    g: &Graph<T>,
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &mut RunningStats<T>,
    mode: BnMode,
) -> Result<Tensor<T>> {
    let xd = x.dims();
    if xd.len() != 4 {
        return Err(Error::ShapeMismatch {
            op: "batch_norm",
            detail: format!("need [B,C,H,W], got {:?}", xd),
        });
    }
    let (b, c, h, w) = (xd[0], xd[1], xd[2], xd[3]);
    if gamma.dims() != [c] || beta.dims() != [c] || running.mean.len() != c {
        return Err(Error::ShapeMismatch {
            op: "batch_norm",
            detail: format!("gamma {:?}, beta {:?} for {c} channels", gamma.dims(), beta.dims()),
        });
    }
    if mode.uses_batch_stats() && b < 2 {
        return Err(Error::DegenerateBatch(b));
    }
    let n = (b * h * w) as f64;
    let plane = h * w;
    let xs = x.data();

    // statistics used for this pass
    let (mean, var): (Vec<T>, Vec<T>) = if mode.uses_batch_stats() {
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        for ci in 0..c {
            let mut acc = T::zero();
            for bi in 0..b {
                let base = (bi * c + ci) * plane;
                acc = xs[base..base + plane].iter().fold(acc, |a, &v| a + v);
            }
            let mu = acc / T::from_f64(n);
            let mut vacc = T::zero();
            for bi in 0..b {
                let base = (bi * c + ci) * plane;
                vacc = xs[base..base + plane]
                    .iter()
                    .fold(vacc, |a, &v| a + (v - mu) * (v - mu));
            }
            mean[ci] = mu;
            var[ci] = vacc / T::from_f64(n);
        }
        if mode == BnMode::Train {
            let m = T::from_f64(BN_MOMENTUM);
            let om = T::one() - m;
            for ci in 0..c {
                running.mean[ci] = m * running.mean[ci] + om * mean[ci];
                running.var[ci] = m * running.var[ci] + om * var[ci];
            }
        }
        (mean, var)
    } else {
        (running.mean.clone(), running.var.clone())
    };

    let eps = T::from_f64(BN_EPS);
    let gs = gamma.data();
    let bs = beta.data();
    let mut out = vec![T::zero(); xs.len()];
    let mut inv_std = vec![T::zero(); c];
    for ci in 0..c {
        inv_std[ci] = T::one() / (var[ci] + eps).sqrt();
    }
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * plane;
            let (mu, istd, ga, be) = (mean[ci], inv_std[ci], gs[ci], bs[ci]);
            for i in 0..plane {
                out[base + i] = ga * (xs[base + i] - mu) * istd + be;
            }
        }
    }
    drop(xs);
    drop(gs);
    drop(bs);

    g.op("batch_norm", &[x, gamma, beta], xd.to_vec(), out, move |ctx| {
        let xs = ctx.input_data(0);
        let gs = ctx.input_data(1);
        let gout = ctx.gout;
        let nn = T::from_f64(n);

        let mut gbeta = vec![T::zero(); c];
        let mut ggamma = vec![T::zero(); c];
        // per-channel sums of gout and gout * xhat
        for ci in 0..c {
            let (mu, istd) = (mean[ci], inv_std[ci]);
            let mut sg = T::zero();
            let mut sgx = T::zero();
            for bi in 0..b {
                let base = (bi * c + ci) * plane;
                for i in 0..plane {
                    let go = gout[base + i];
                    sg += go;
                    sgx += go * (xs[base + i] - mu) * istd;
                }
            }
            gbeta[ci] = sg;
            ggamma[ci] = sgx;
        }

        let gx = if ctx.needs(0) {
            let mut gx = vec![T::zero(); xs.len()];
            if mode.uses_batch_stats() {
                // dL/dx = (gamma * istd / n) * (n*go - sum(go) - xhat * sum(go*xhat))
                for ci in 0..c {
                    let (mu, istd, ga) = (mean[ci], inv_std[ci], gs[ci]);
                    let (sg, sgx) = (gbeta[ci], ggamma[ci]);
                    let scale = ga * istd / nn;
                    for bi in 0..b {
                        let base = (bi * c + ci) * plane;
                        for i in 0..plane {
                            let xhat = (xs[base + i] - mu) * istd;
                            gx[base + i] = scale * (nn * gout[base + i] - sg - xhat * sgx);
                        }
                    }
                }
            } else {
                // eval mode: stats are constants
                for ci in 0..c {
                    let (istd, ga) = (inv_std[ci], gs[ci]);
                    for bi in 0..b {
                        let base = (bi * c + ci) * plane;
                        for i in 0..plane {
                            gx[base + i] = gout[base + i] * ga * istd;
                        }
                    }
                }
            }
            Some(gx)
        } else {
            None
        };
        let ggamma = if ctx.needs(1) { Some(ggamma) } else { None };
        let gbeta = if ctx.needs(2) { Some(gbeta) } else { None };
        vec![gx, ggamma, gbeta]
    })
}
