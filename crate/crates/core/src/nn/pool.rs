//! p-norm pooling over square windows.
//!
//! `y = (sum_i |f_i|^p)^(1/p)` over each window; `p = inf` degenerates to
//! max-of-absolute-values pooling (plain max pooling for non-negative
//! feature maps, i.e. after ReLU/SELU). `p < 1` is not a norm and is
//! rejected with `BadNorm`.

use crate::error::{Error, Result};
use crate::tensor::graph::Graph;
use crate::tensor::{Element, Tensor};

/// Pooling order: a finite `p >= 1` or the max-pooling limit.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Norm {
    Finite(f64),
    Inf,
}

impl Norm {
    pub fn validate(self) -> Result<Self> {
        if let Norm::Finite(p) = self {
            if !(p >= 1.0) || !p.is_finite() {
                return Err(Error::BadNorm(p));
            }
        }
        Ok(self)
    }
}

/// Pools `x [B, C, H, W]` with a `k x k` window, stride `s`, zero padding `p`.
///
/// Padding contributes zero terms to the sum, which never change the norm.
pub fn pnorm_pool<T: Element>(
    g: &Graph<T>,
    x: &Tensor<T>,
    norm: Norm,
    k: usize,
    s: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    norm.validate()?;
    let dims = x.dims();
    if dims.len() != 4 {
        return Err(Error::ShapeMismatch {
            op: "pnorm_pool",
            detail: format!("need [B,C,H,W], got {:?}", dims),
        });
    }
    let (b, c, h, w) = (dims[0], dims[1], dims[2], dims[3]);
    if h + 2 * pad < k || w + 2 * pad < k || s == 0 {
        return Err(Error::ShapeMismatch {
            op: "pnorm_pool",
            detail: format!("window {k}/stride {s}/pad {pad} on {h}x{w}"),
        });
    }
    let ho = (h + 2 * pad - k) / s + 1;
    let wo = (w + 2 * pad - k) / s + 1;
    let src = x.data();
    let mut out = vec![T::zero(); b * c * ho * wo];
    for bi in 0..b {
        for ci in 0..c {
            let plane = &src[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
            let obase = (bi * c + ci) * ho * wo;
            for oy in 0..ho {
                for ox in 0..wo {
                    out[obase + oy * wo + ox] = pool_window(plane, h, w, k, s, pad, oy, ox, norm);
                }
            }
        }
    }
    drop(src);
    g.op("pnorm_pool", &[x], vec![b, c, ho, wo], out, move |ctx| {
        let src = ctx.input_data(0);
        let y = ctx.output_data();
        let mut grad = vec![T::zero(); src.len()];
        for bi in 0..b {
            for ci in 0..c {
                let pbase = (bi * c + ci) * h * w;
                let obase = (bi * c + ci) * ho * wo;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let go = ctx.gout[obase + oy * wo + ox];
                        if go == T::zero() {
                            continue;
                        }
                        let yv = y[obase + oy * wo + ox];
                        backprop_window(
                            &src[pbase..pbase + h * w],
                            &mut grad[pbase..pbase + h * w],
                            h, w, k, s, pad, oy, ox, norm, yv, go,
                        );
                    }
                }
            }
        }
        vec![Some(grad)]
    })
}

fn pool_window<T: Element>(
    plane: &[T],
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    pad: usize,
    oy: usize,
    ox: usize,
    norm: Norm,
) -> T {
    let mut maxabs = T::zero();
    each_in_window(h, w, k, s, pad, oy, ox, |iy, ix| {
        let a = plane[iy * w + ix].abs();
        if a > maxabs {
            maxabs = a;
        }
    });
    match norm {
        Norm::Inf => maxabs,
        Norm::Finite(p) => {
            if maxabs == T::zero() {
                return T::zero();
            }
            let pe = T::from_f64(p);
            // scale by max|f| so large p does not overflow
            let mut acc = T::zero();
            each_in_window(h, w, k, s, pad, oy, ox, |iy, ix| {
                acc += (plane[iy * w + ix].abs() / maxabs).powf(pe);
            });
            maxabs * acc.powf(pe.recip())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn backprop_window<T: Element>(
    plane: &[T],
    grad: &mut [T],
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    pad: usize,
    oy: usize,
    ox: usize,
    norm: Norm,
    yv: T,
    go: T,
) {
    if yv == T::zero() {
        return; // all-zero window: subgradient 0
    }
    match norm {
        Norm::Inf => {
            // subgradient to the first max-|f| element
            let mut best: Option<(usize, usize)> = None;
            let mut maxabs = T::zero();
            each_in_window(h, w, k, s, pad, oy, ox, |iy, ix| {
                let a = plane[iy * w + ix].abs();
                if a > maxabs {
                    maxabs = a;
                    best = Some((iy, ix));
                }
            });
            if let Some((iy, ix)) = best {
                let sign = if plane[iy * w + ix] >= T::zero() { T::one() } else { -T::one() };
                grad[iy * w + ix] += go * sign;
            }
        }
        Norm::Finite(p) => {
            // dy/df_i = sign(f_i) |f_i|^(p-1) y^(1-p)
            let pe = T::from_f64(p);
            each_in_window(h, w, k, s, pad, oy, ox, |iy, ix| {
                let f = plane[iy * w + ix];
                if f == T::zero() {
                    return;
                }
                let sign = if f >= T::zero() { T::one() } else { -T::one() };
                let d = sign * (f.abs() / yv).powf(pe - T::one());
                grad[iy * w + ix] += go * d;
            });
        }
    }
}

fn each_in_window(
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    pad: usize,
    oy: usize,
    ox: usize,
    mut f: impl FnMut(usize, usize),
) {
    for ky in 0..k {
        for kx in 0..k {
            let iy = (oy * s + ky) as isize - pad as isize;
            let ix = (ox * s + kx) as isize - pad as isize;
            if iy >= 0 && (iy as usize) < h && ix >= 0 && (ix as usize) < w {
                f(iy as usize, ix as usize);
            }
        }
    }
}
