//! 2-D convolution and fractional-strided (transposed) convolution.
//!
//! Both directions route their inner product through gemm:
//!
//! * conv forward: `im2col` gather, then `[O, C*k*k] x [C*k*k, P]`;
//! * conv-transpose forward: `[O*k*k, C] x [C, P_in]`, then `col2im`
//!   scatter-add.
//!
//! The two share the index map `iy = oy*s + ky - p`, read in opposite
//! directions, which is exactly why `<conv(x), y> == <x, conv_t(y)>` --
//! the transposed conv is the adjoint of the conv, a fact the tests check
//! by computing both inner products directly.

use crate::error::{Error, Result};
use crate::tensor::graph::Graph;
use crate::tensor::{Element, Tensor};

/// `floor((len + 2*pad - k) / stride) + 1`
pub fn conv_out_len(len: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || len + 2 * pad < k {
        return None;
    }
    Some((len + 2 * pad - k) / stride + 1)
}

/// `(len - 1) * stride - 2*pad + k + output_pad`
pub fn conv_transpose_out_len(len: usize, k: usize, stride: usize, pad: usize, output_pad: usize) -> Option<usize> {
    if stride == 0 || len == 0 {
        return None;
    }
    let grown = (len - 1) * stride + k + output_pad;
    if grown < 2 * pad {
        return None;
    }
    Some(grown - 2 * pad)
}

/// Gathers conv patches of one `[C, H, W]` plane into `cols [C*k*k, ho*wo]`.
/// Out-of-bounds taps (from padding) contribute zeros.
#[allow(clippy::too_many_arguments)]
pub(crate) fn im2col<T: Element>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    ho: usize,
    wo: usize,
    cols: &mut [T],
) {
    let patch = ho * wo;
    debug_assert_eq!(cols.len(), c * k * k * patch);
    let mut row = 0;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let dst = &mut cols[row * patch..(row + 1) * patch];
                for oy in 0..ho {
                    let iy = (oy * s + ky) as isize - p as isize;
                    let line = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy as usize >= h {
                        for v in line.iter_mut() {
                            *v = T::zero();
                        }
                        continue;
                    }
                    let src_line = &plane[(iy as usize) * w..(iy as usize + 1) * w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - p as isize;
                        *v = if ix >= 0 && (ix as usize) < w {
                            src_line[ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds `cols [C*k*k, ho*wo]` back into a
/// `[C, H, W]` plane through the same index map.
#[allow(clippy::too_many_arguments)]
pub(crate) fn col2im<T: Element>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    ho: usize,
    wo: usize,
    out: &mut [T],
) {
    let patch = ho * wo;
    debug_assert_eq!(cols.len(), c * k * k * patch);
    debug_assert_eq!(out.len(), c * h * w);
    let mut row = 0;
    for ci in 0..c {
        let plane = &mut out[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let src = &cols[row * patch..(row + 1) * patch];
                for oy in 0..ho {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    let dst_line = &mut plane[(iy as usize) * w..(iy as usize + 1) * w];
                    let src_line = &src[oy * wo..(oy + 1) * wo];
                    for (ox, &v) in src_line.iter().enumerate() {
                        let ix = (ox * s + kx) as isize - p as isize;
                        if ix >= 0 && (ix as usize) < w {
                            dst_line[ix as usize] += v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

pub(crate) struct ConvGeom {
    pub b: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub k: usize,
    pub ho: usize,
    pub wo: usize,
}

fn check_conv_shapes<T: Element>(
    op: &'static str,
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
    transposed: bool,
    output_pad: usize,
) -> Result<ConvGeom> {
    let xd = x.dims();
    let wd = weight.dims();
    if xd.len() != 4 || wd.len() != 4 || wd[2] != wd[3] {
        return Err(Error::ShapeMismatch {
            op,
            detail: format!("x {:?}, weight {:?}", xd, wd),
        });
    }
    let (b, c, h, w) = (xd[0], xd[1], xd[2], xd[3]);
    // conv weight is [O, C, k, k]; transposed-conv weight is [C, O, k, k]
    let (o, wc, k) = if transposed {
        (wd[1], wd[0], wd[2])
    } else {
        (wd[0], wd[1], wd[2])
    };
    if wc != c {
        return Err(Error::ShapeMismatch {
            op,
            detail: format!("input has {c} channels, weight expects {wc}"),
        });
    }
    if let Some(bias) = bias {
        if bias.dims() != [o] {
            return Err(Error::ShapeMismatch {
                op,
                detail: format!("bias {:?} for {o} output channels", bias.dims()),
            });
        }
    }
    let (ho, wo) = if transposed {
        if output_pad >= stride {
            return Err(Error::ShapeMismatch {
                op,
                detail: format!("output_pad {output_pad} must be < stride {stride}"),
            });
        }
        (
            conv_transpose_out_len(h, k, stride, pad, output_pad),
            conv_transpose_out_len(w, k, stride, pad, output_pad),
        )
    } else {
        (conv_out_len(h, k, stride, pad), conv_out_len(w, k, stride, pad))
    };
    match (ho, wo) {
        (Some(ho), Some(wo)) if ho > 0 && wo > 0 => Ok(ConvGeom { b, c, h, w, o, k, ho, wo }),
        _ => Err(Error::ShapeMismatch {
            op,
            detail: format!("degenerate output for input {h}x{w}, k={k}, stride={stride}, pad={pad}"),
        }),
    }
}

/// Standard 2-D convolution.
///
/// `x [B, C, H, W]`, `weight [O, C, k, k]`, optional `bias [O]`;
/// output `[B, O, H', W']` with `H' = floor((H + 2p - k)/s) + 1`.
pub fn conv2d<T: Element>(
    g: &Graph<T>,
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let geom = check_conv_shapes("conv2d", x, weight, bias, stride, pad, false, 0)?;
    let ConvGeom { b, c, h, w, o, k, ho, wo } = geom;
    let patch = ho * wo;
    let ck2 = c * k * k;

    let xs = x.data();
    let ws = weight.data();
    let mut cols_all = vec![T::zero(); b * ck2 * patch];
    let mut out = vec![T::zero(); b * o * patch];
    for bi in 0..b {
        let cols = &mut cols_all[bi * ck2 * patch..(bi + 1) * ck2 * patch];
        im2col(&xs[bi * c * h * w..(bi + 1) * c * h * w], c, h, w, k, stride, pad, ho, wo, cols);
        T::gemm(o, ck2, patch, T::one(), &ws, false, cols, false, T::zero(), &mut out[bi * o * patch..(bi + 1) * o * patch]);
    }
    if let Some(bias) = bias {
        let bs = bias.data();
        for bi in 0..b {
            for oi in 0..o {
                let base = (bi * o + oi) * patch;
                for v in &mut out[base..base + patch] {
                    *v += bs[oi];
                }
            }
        }
    }
    drop(xs);
    drop(ws);

    let mut inputs: Vec<&Tensor<T>> = vec![x, weight];
    if let Some(bias) = bias {
        inputs.push(bias);
    }
    let has_bias = bias.is_some();
    g.op("conv2d", &inputs, vec![b, o, ho, wo], out, move |ctx| {
        let gout = ctx.gout;
        let gx = if ctx.needs(0) {
            let ws = ctx.input_data(1);
            let mut gx = vec![T::zero(); b * c * h * w];
            let mut gcols = vec![T::zero(); ck2 * patch];
            for bi in 0..b {
                // d cols = W^T [ck2, o] x gout [o, patch]
                T::gemm(ck2, o, patch, T::one(), &ws, true, &gout[bi * o * patch..(bi + 1) * o * patch], false, T::zero(), &mut gcols);
                col2im(&gcols, c, h, w, k, stride, pad, ho, wo, &mut gx[bi * c * h * w..(bi + 1) * c * h * w]);
            }
            Some(gx)
        } else {
            None
        };
        let gw = if ctx.needs(1) {
            let mut gw = vec![T::zero(); o * ck2];
            for bi in 0..b {
                // accumulate gout [o, patch] x cols^T [patch, ck2]
                T::gemm(
                    o, patch, ck2,
                    T::one(),
                    &gout[bi * o * patch..(bi + 1) * o * patch], false,
                    &cols_all[bi * ck2 * patch..(bi + 1) * ck2 * patch], true,
                    T::one(),
                    &mut gw,
                );
            }
            Some(gw)
        } else {
            None
        };
        let mut grads = vec![gx, gw];
        if has_bias {
            let gb = if ctx.needs(2) {
                let mut gb = vec![T::zero(); o];
                for bi in 0..b {
                    for oi in 0..o {
                        let base = (bi * o + oi) * patch;
                        gb[oi] += gout[base..base + patch].iter().fold(T::zero(), |a, &v| a + v);
                    }
                }
                Some(gb)
            } else {
                None
            };
            grads.push(gb);
        }
        grads
    })
}

/// Fractional-strided (transposed) convolution: the upsampling mirror of
/// [`conv2d`], and its exact adjoint for matching geometry.
///
/// `x [B, C, H, W]`, `weight [C, O, k, k]`, optional `bias [O]`;
/// output `[B, O, H_out, W_out]` with `H_out = (H-1)s - 2p + k + output_pad`.
pub fn conv_transpose2d<T: Element>(
    g: &Graph<T>,
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    pad: usize,
    output_pad: usize,
) -> Result<Tensor<T>> {
    let geom = check_conv_shapes("conv_transpose2d", x, weight, bias, stride, pad, true, output_pad)?;
    let ConvGeom { b, c, h, w, o, k, ho, wo } = geom;
    let p_in = h * w;
    let ok2 = o * k * k;

    let xs = x.data();
    let ws = weight.data();
    let mut out = vec![T::zero(); b * o * ho * wo];
    let mut cols = vec![T::zero(); ok2 * p_in];
    for bi in 0..b {
        // cols [o*k*k, p_in] = W^T [ok2, c] x x_b [c, p_in]
        T::gemm(ok2, c, p_in, T::one(), &ws, true, &xs[bi * c * p_in..(bi + 1) * c * p_in], false, T::zero(), &mut cols);
        // scatter: input positions play the "patch" role, output is the plane
        col2im(&cols, o, ho, wo, k, stride, pad, h, w, &mut out[bi * o * ho * wo..(bi + 1) * o * ho * wo]);
    }
    if let Some(bias) = bias {
        let bs = bias.data();
        for bi in 0..b {
            for oi in 0..o {
                let base = (bi * o + oi) * ho * wo;
                for v in &mut out[base..base + ho * wo] {
                    *v += bs[oi];
                }
            }
        }
    }
    drop(xs);
    drop(ws);

    let mut inputs: Vec<&Tensor<T>> = vec![x, weight];
    if let Some(bias) = bias {
        inputs.push(bias);
    }
    let has_bias = bias.is_some();
    g.op("conv_transpose2d", &inputs, vec![b, o, ho, wo], out, move |ctx| {
        let gout = ctx.gout;
        // Both input and weight grads need gout patches gathered with the
        // forward conv's index map (conv is the adjoint of conv-transpose).
        let mut gcols = vec![T::zero(); ok2 * p_in];
        let gx = if ctx.needs(0) {
            let ws = ctx.input_data(1);
            let mut gx = vec![T::zero(); b * c * p_in];
            for bi in 0..b {
                im2col(&gout[bi * o * ho * wo..(bi + 1) * o * ho * wo], o, ho, wo, k, stride, pad, h, w, &mut gcols);
                // gx_b [c, p_in] = W [c, ok2] x gcols [ok2, p_in]
                T::gemm(c, ok2, p_in, T::one(), &ws, false, &gcols, false, T::zero(), &mut gx[bi * c * p_in..(bi + 1) * c * p_in]);
            }
            Some(gx)
        } else {
            None
        };
        let gw = if ctx.needs(1) {
            let xs = ctx.input_data(0);
            let mut gw = vec![T::zero(); c * ok2];
            for bi in 0..b {
                im2col(&gout[bi * o * ho * wo..(bi + 1) * o * ho * wo], o, ho, wo, k, stride, pad, h, w, &mut gcols);
                // gw [c, ok2] += x_b [c, p_in] x gcols^T [p_in, ok2]
                T::gemm(c, p_in, ok2, T::one(), &xs[bi * c * p_in..(bi + 1) * c * p_in], false, &gcols, true, T::one(), &mut gw);
            }
            Some(gw)
        } else {
            None
        };
        let mut grads = vec![gx, gw];
        if has_bias {
            let gb = if ctx.needs(2) {
                let mut gb = vec![T::zero(); o];
                for bi in 0..b {
                    for oi in 0..o {
                        let base = (bi * o + oi) * ho * wo;
                        gb[oi] += gout[base..base + ho * wo].iter().fold(T::zero(), |a, &v| a + v);
                    }
                }
                Some(gb)
            } else {
                None
            };
            grads.push(gb);
        }
        grads
    })
}
