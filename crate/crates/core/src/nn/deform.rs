//! Bilinear sampling and deformable convolution.
//!
//! The sampling kernel is `g(a, b) = max(0, 1 - |a - b|)` applied per axis,
//! so a fractional position reads a convex blend of its four integer
//! neighbors and positions outside `[0, H-1] x [0, W-1]` fade to zero.
//! The derivative w.r.t. the position is `-sign(a - b)` where `|a - b| < 1`
//! and 0 elsewhere, with `sign(0) = 0` -- the subgradient at kinks.

use crate::error::{Error, Result};
use crate::nn::conv::conv_out_len;
use crate::tensor::graph::Graph;
use crate::tensor::{Element, Tensor};

/// One integer neighbor of a fractional coordinate with its weight and the
/// weight's derivative w.r.t. the coordinate.
#[derive(Copy, Clone)]
struct Tap {
    q: isize,
    w: f64,
    dw: f64,
}

/// The (at most) two taps along one axis for coordinate `p`.
fn axis_taps(p: f64) -> [Tap; 2] {
    let q0 = p.floor();
    let make = |q: f64| {
        let d = p - q;
        let ad = d.abs();
        let w = (1.0 - ad).max(0.0);
        let dw = if ad < 1.0 && d != 0.0 { -d.signum() } else { 0.0 };
        Tap { q: q as isize, w, dw }
    };
    [make(q0), make(q0 + 1.0)]
}

/// Samples `x [C, H, W]` at fractional `points [P, 2]` (row, col) pairs,
/// producing `[P, C]`. Gradients flow to both the image and the points.
pub fn bilinear_sample<T: Element>(
    g: &Graph<T>,
    x: &Tensor<T>,
    points: &Tensor<T>,
) -> Result<Tensor<T>> {
    let xd = x.dims();
    let pd = points.dims();
    if xd.len() != 3 || pd.len() != 2 || pd[1] != 2 {
        return Err(Error::ShapeMismatch {
            op: "bilinear_sample",
            detail: format!("image {:?}, points {:?}", xd, pd),
        });
    }
    let (c, h, w) = (xd[0], xd[1], xd[2]);
    let p = pd[0];
    let xs = x.data();
    let ps = points.data();
    let mut out = vec![T::zero(); p * c];
    for pi in 0..p {
        let py = ps[pi * 2].to_f64();
        let px = ps[pi * 2 + 1].to_f64();
        let ty = axis_taps(py);
        let tx = axis_taps(px);
        for ci in 0..c {
            let plane = &xs[ci * h * w..(ci + 1) * h * w];
            let mut acc = 0.0;
            for a in &ty {
                if a.q < 0 || a.q >= h as isize || a.w == 0.0 {
                    continue;
                }
                for btap in &tx {
                    if btap.q < 0 || btap.q >= w as isize || btap.w == 0.0 {
                        continue;
                    }
                    acc += a.w * btap.w * plane[a.q as usize * w + btap.q as usize].to_f64();
                }
            }
            out[pi * c + ci] = T::from_f64(acc);
        }
    }
    drop(xs);
    drop(ps);
    g.op("bilinear_sample", &[x, points], vec![p, c], out, move |ctx| {
        let xs = ctx.input_data(0);
        let ps = ctx.input_data(1);
        let mut gx = if ctx.needs(0) { Some(vec![T::zero(); c * h * w]) } else { None };
        let mut gp = if ctx.needs(1) { Some(vec![T::zero(); p * 2]) } else { None };
        for pi in 0..p {
            let py = ps[pi * 2].to_f64();
            let px = ps[pi * 2 + 1].to_f64();
            let ty = axis_taps(py);
            let tx = axis_taps(px);
            for ci in 0..c {
                let go = ctx.gout[pi * c + ci].to_f64();
                if go == 0.0 {
                    continue;
                }
                let plane = &xs[ci * h * w..(ci + 1) * h * w];
                for a in &ty {
                    if a.q < 0 || a.q >= h as isize {
                        continue;
                    }
                    for btap in &tx {
                        if btap.q < 0 || btap.q >= w as isize {
                            continue;
                        }
                        let idx = a.q as usize * w + btap.q as usize;
                        if let Some(gx) = gx.as_mut() {
                            let gi = &mut gx[ci * h * w + idx];
                            *gi = *gi + T::from_f64(go * a.w * btap.w);
                        }
                        if let Some(gp) = gp.as_mut() {
                            let xv = plane[idx].to_f64();
                            gp[pi * 2] += T::from_f64(go * a.dw * btap.w * xv);
                            gp[pi * 2 + 1] += T::from_f64(go * a.w * btap.dw * xv);
                        }
                    }
                }
            }
        }
        vec![gx, gp]
    })
}

/// Deformable 2-D convolution.
///
/// `x [B, C, H, W]`, `weight [O, C, k, k]`, optional `bias [O]`, and a
/// per-position offset field `offsets [B, 2*k*k, H', W']`: for kernel tap
/// `n = ky*k + kx`, channel `2n` holds the horizontal shift (delta-x, columns)
/// and channel `2n + 1` the vertical shift (delta-y, rows). Zero offsets make
/// this numerically identical to [`conv2d`](crate::nn::conv::conv2d).
pub fn deform_conv2d<T: Element>(
    g: &Graph<T>,
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    offsets: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let xd = x.dims();
    let wd = weight.dims();
    if xd.len() != 4 || wd.len() != 4 || wd[2] != wd[3] || wd[1] != xd[1] {
        return Err(Error::ShapeMismatch {
            op: "deform_conv2d",
            detail: format!("x {:?}, weight {:?}", xd, wd),
        });
    }
    let (b, c, h, w) = (xd[0], xd[1], xd[2], xd[3]);
    let (o, k) = (wd[0], wd[2]);
    let (ho, wo) = match (conv_out_len(h, k, stride, pad), conv_out_len(w, k, stride, pad)) {
        (Some(a), Some(bb)) => (a, bb),
        _ => {
            return Err(Error::ShapeMismatch {
                op: "deform_conv2d",
                detail: format!("degenerate output for {h}x{w}, k={k}, stride={stride}, pad={pad}"),
            })
        }
    };
    if let Some(bias) = bias {
        if bias.dims() != [o] {
            return Err(Error::ShapeMismatch {
                op: "deform_conv2d",
                detail: format!("bias {:?} for {o} channels", bias.dims()),
            });
        }
    }
    let expected_off = vec![b, 2 * k * k, ho, wo];
    if offsets.dims() != expected_off.as_slice() {
        return Err(Error::OffsetShapeMismatch {
            expected: expected_off,
            got: offsets.dims().to_vec(),
        });
    }

    let k2 = k * k;
    let patch = ho * wo;
    let ck2 = c * k2;
    let xs = x.data();
    let ws = weight.data();
    let offs = offsets.data();
    let mut cols_all = vec![T::zero(); b * ck2 * patch];
    let mut out = vec![T::zero(); b * o * patch];
    for bi in 0..b {
        let cols = &mut cols_all[bi * ck2 * patch..(bi + 1) * ck2 * patch];
        gather_deformed(&xs, &offs, bi, c, h, w, k, stride, pad, ho, wo, cols);
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
    drop(offs);

    let mut inputs: Vec<&Tensor<T>> = vec![x, weight, offsets];
    if let Some(bias) = bias {
        inputs.push(bias);
    }
    let has_bias = bias.is_some();
    g.op("deform_conv2d", &inputs, vec![b, o, ho, wo], out, move |ctx| {
        let gout = ctx.gout;
        let need_x = ctx.needs(0);
        let need_off = ctx.needs(2);
        let gw = if ctx.needs(1) {
            let mut gw = vec![T::zero(); o * ck2];
            for bi in 0..b {
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
        let (gx, goff) = if need_x || need_off {
            let xs = ctx.input_data(0);
            let offs = ctx.input_data(2);
            let ws = ctx.input_data(1);
            let mut gx = vec![T::zero(); b * c * h * w];
            let mut goff = vec![T::zero(); b * 2 * k2 * patch];
            let mut gcols = vec![T::zero(); ck2 * patch];
            for bi in 0..b {
                T::gemm(ck2, o, patch, T::one(), &ws, true, &gout[bi * o * patch..(bi + 1) * o * patch], false, T::zero(), &mut gcols);
                scatter_deformed(
                    &xs, &offs, &gcols, bi, c, h, w, k, stride, pad, ho, wo,
                    need_x.then_some(&mut gx), need_off.then_some(&mut goff),
                );
            }
            (need_x.then_some(gx), need_off.then_some(goff))
        } else {
            (None, None)
        };
        let mut grads = vec![gx, gw, goff];
        if has_bias {
            let gb = if ctx.needs(3) {
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

/// Builds the deformed im2col matrix for sample `bi`.
#[allow(clippy::too_many_arguments)]
fn gather_deformed<T: Element>(
    xs: &[T],
    offs: &[T],
    bi: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    cols: &mut [T],
) {
    let k2 = k * k;
    let patch = ho * wo;
    let off_base = bi * 2 * k2 * patch;
    for n in 0..k2 {
        let (ky, kx) = (n / k, n % k);
        let off_x = &offs[off_base + (2 * n) * patch..off_base + (2 * n + 1) * patch];
        let off_y = &offs[off_base + (2 * n + 1) * patch..off_base + (2 * n + 2) * patch];
        for oy in 0..ho {
            for ox in 0..wo {
                let pcol = oy * wo + ox;
                let py = (oy * stride + ky) as f64 - pad as f64 + off_y[pcol].to_f64();
                let px = (ox * stride + kx) as f64 - pad as f64 + off_x[pcol].to_f64();
                let ty = axis_taps(py);
                let tx = axis_taps(px);
                for ci in 0..c {
                    let plane = &xs[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w];
                    let mut acc = 0.0;
                    for a in &ty {
                        if a.q < 0 || a.q >= h as isize || a.w == 0.0 {
                            continue;
                        }
                        for bt in &tx {
                            if bt.q < 0 || bt.q >= w as isize || bt.w == 0.0 {
                                continue;
                            }
                            acc += a.w * bt.w * plane[a.q as usize * w + bt.q as usize].to_f64();
                        }
                    }
                    cols[(ci * k2 + n) * patch + pcol] = T::from_f64(acc);
                }
            }
        }
    }
}

/// Pushes `gcols` back through the bilinear gather: into the image gradient
/// and/or the offset gradient for sample `bi`.
#[allow(clippy::too_many_arguments)]
fn scatter_deformed<T: Element>(
    xs: &[T],
    offs: &[T],
    gcols: &[T],
    bi: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    mut gx: Option<&mut Vec<T>>,
    mut goff: Option<&mut Vec<T>>,
) {
    let k2 = k * k;
    let patch = ho * wo;
    let off_base = bi * 2 * k2 * patch;
    for n in 0..k2 {
        let (ky, kx) = (n / k, n % k);
        let off_x = &offs[off_base + (2 * n) * patch..off_base + (2 * n + 1) * patch];
        let off_y = &offs[off_base + (2 * n + 1) * patch..off_base + (2 * n + 2) * patch];
        for oy in 0..ho {
            for ox in 0..wo {
                let pcol = oy * wo + ox;
                let py = (oy * stride + ky) as f64 - pad as f64 + off_y[pcol].to_f64();
                let px = (ox * stride + kx) as f64 - pad as f64 + off_x[pcol].to_f64();
                let ty = axis_taps(py);
                let tx = axis_taps(px);
                let mut dy_acc = 0.0;
                let mut dx_acc = 0.0;
                for ci in 0..c {
                    let gc = gcols[(ci * k2 + n) * patch + pcol].to_f64();
                    if gc == 0.0 {
                        continue;
                    }
                    let plane_base = (bi * c + ci) * h * w;
                    for a in &ty {
                        if a.q < 0 || a.q >= h as isize {
                            continue;
                        }
                        for bt in &tx {
                            if bt.q < 0 || bt.q >= w as isize {
                                continue;
                            }
                            let idx = a.q as usize * w + bt.q as usize;
                            if let Some(gx) = gx.as_mut() {
                                let slot = &mut gx[plane_base + idx];
                                *slot = *slot + T::from_f64(gc * a.w * bt.w);
                            }
                            if goff.is_some() {
                                let xv = xs[plane_base + idx].to_f64();
                                dy_acc += gc * a.dw * bt.w * xv;
                                dx_acc += gc * a.w * bt.dw * xv;
                            }
                        }
                    }
                }
                if let Some(goff) = goff.as_mut() {
                    let gy = &mut goff[off_base + (2 * n + 1) * patch + pcol];
                    *gy = *gy + T::from_f64(dy_acc);
                    let gxo = &mut goff[off_base + (2 * n) * patch + pcol];
                    *gxo = *gxo + T::from_f64(dx_acc);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::conv::conv2d;
    use crate::rng::RngStream;

    #[test]
    fn integer_points_read_exact_pixels() {
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let pts = Tensor::from_vec(&[3, 2], vec![0.0, 0.0, 1.0, 2.0, 0.0, 1.0]).unwrap();
        let y = bilinear_sample(&g, &x, &pts).unwrap();
        assert_eq!(y.to_vec(), vec![1.0, 6.0, 2.0]);
    }

    #[test]
    fn midpoint_blends_equally() {
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[1, 2, 2], vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        let pts = Tensor::from_vec(&[1, 2], vec![0.5, 0.5]).unwrap();
        let y = bilinear_sample(&g, &x, &pts).unwrap();
        assert_eq!(y.to_vec(), vec![3.0], "center of a 2x2 patch is its mean");
    }

    #[test]
    fn outside_support_is_zero() {
        let g = Graph::<f64>::new();
        let x = Tensor::<f64>::full(&[1, 3, 3], 5.0);
        let pts = Tensor::from_vec(&[3, 2], vec![-1.0, 1.0, 1.0, 3.0, -0.5, -0.5]).unwrap();
        let y = bilinear_sample(&g, &x, &pts).unwrap();
        assert_eq!(y.to_vec()[0], 0.0);
        assert_eq!(y.to_vec()[1], 0.0);
        // half a pixel outside fades linearly: weight 0.5 * 0.5
        assert_eq!(y.to_vec()[2], 5.0 * 0.25);
    }

    #[test]
    fn point_grad_is_image_slope() {
        // along a ramp image, d(sample)/d(px) equals the ramp slope
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[1, 1, 4], vec![0.0, 10.0, 20.0, 30.0]).unwrap();
        let pts = Tensor::param(&[1, 2], vec![0.0, 1.3]).unwrap();
        let y = bilinear_sample(&g, &x, &pts).unwrap();
        let l = g.reduce_sum(&y).unwrap();
        g.backward(&l).unwrap();
        let gp = pts.grad().unwrap();
        assert!((gp[1] - 10.0).abs() < 1e-12, "slope 10 per pixel, got {}", gp[1]);
    }

    #[test]
    fn point_grad_zero_at_integer_kink() {
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[1, 1, 4], vec![0.0, 10.0, 20.0, 30.0]).unwrap();
        let pts = Tensor::param(&[1, 2], vec![0.0, 2.0]).unwrap();
        let y = bilinear_sample(&g, &x, &pts).unwrap();
        assert_eq!(y.to_vec(), vec![20.0]);
        let l = g.reduce_sum(&y).unwrap();
        g.backward(&l).unwrap();
        assert_eq!(pts.grad().unwrap()[1], 0.0, "sign(0) = 0 at the kink");
    }

    #[test]
    fn zero_offsets_match_standard_conv_bitwise() {
        let mut rng = RngStream::new(21, "deform-eq");
        let (b, c, h, w, o, k, s, p) = (2, 3, 8, 8, 4, 3, 2, 1);
        let xv: Vec<f32> = rng.normal_vec(b * c * h * w, 1.0).iter().map(|&v| v as f32).collect();
        let wv: Vec<f32> = rng.normal_vec(o * c * k * k, 0.2).iter().map(|&v| v as f32).collect();
        let g = Graph::<f32>::no_grad();
        let x = Tensor::from_vec(&[b, c, h, w], xv).unwrap();
        let wt = Tensor::from_vec(&[o, c, k, k], wv).unwrap();
        let ho = conv_out_len(h, k, s, p).unwrap();
        let wo = conv_out_len(w, k, s, p).unwrap();
        let offsets = Tensor::<f32>::zeros(&[b, 2 * k * k, ho, wo]);
        let y_def = deform_conv2d(&g, &x, &wt, None, &offsets, s, p).unwrap();
        let y_std = conv2d(&g, &x, &wt, None, s, p).unwrap();
        assert_eq!(y_def.dims(), y_std.dims());
        for (a, bv) in y_def.to_vec().iter().zip(y_std.to_vec()) {
            assert_eq!(a.to_bits(), bv.to_bits(), "zero-offset deform == conv, bit for bit");
        }
    }

    #[test]
    fn integer_offset_equals_shifted_conv() {
        // shifting every tap one column right samples the translated image
        let (c, h, w, k) = (1, 6, 6, 3);
        let mut rng = RngStream::new(22, "deform-shift");
        let xv = rng.normal_vec(c * h * w, 1.0);
        let wv = rng.normal_vec(c * k * k, 1.0);
        let g = Graph::<f64>::no_grad();
        let x = Tensor::from_vec(&[1, c, h, w], xv.clone()).unwrap();
        // translated image: x shifted left by one column (zero fill on the right)
        let mut xs = vec![0.0; c * h * w];
        for row in 0..h {
            for col in 0..w - 1 {
                xs[row * w + col] = xv[row * w + col + 1];
            }
        }
        let x_shift = Tensor::from_vec(&[1, c, h, w], xs).unwrap();
        let wt = Tensor::from_vec(&[1, c, k, k], wv).unwrap();
        let ho = conv_out_len(h, k, 1, 0).unwrap();
        let wo = conv_out_len(w, k, 1, 0).unwrap();
        // delta-x = +1 on every tap
        let mut ov = vec![0.0; 2 * k * k * ho * wo];
        for n in 0..k * k {
            for pcol in 0..ho * wo {
                ov[(2 * n) * ho * wo + pcol] = 1.0;
            }
        }
        let offsets = Tensor::from_vec(&[1, 2 * k * k, ho, wo], ov).unwrap();
        let y_def = deform_conv2d(&g, &x, &wt, None, &offsets, 1, 0).unwrap();
        let y_std = conv2d(&g, &x_shift, &wt, None, 1, 0).unwrap();
        // interior columns agree exactly; the right edge reads real pixels in
        // the deformed pass but zeros in the shifted image, so compare all
        // columns except the last kernel-width band
        for oy in 0..ho {
            for ox in 0..wo.saturating_sub(1) {
                let a = y_def.to_vec()[oy * wo + ox];
                let b = y_std.to_vec()[oy * wo + ox];
                assert!((a - b).abs() < 1e-10, "mismatch at ({oy},{ox}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn offset_shape_is_enforced() {
        let g = Graph::<f32>::new();
        let x = Tensor::<f32>::zeros(&[1, 2, 8, 8]);
        let wt = Tensor::<f32>::zeros(&[4, 2, 3, 3]);
        let offsets = Tensor::<f32>::zeros(&[1, 18, 8, 8]); // wrong spatial dims for s=2
        let err = deform_conv2d(&g, &x, &wt, None, &offsets, 2, 1).unwrap_err();
        match err {
            Error::OffsetShapeMismatch { expected, got } => {
                assert_eq!(expected, vec![1, 18, 4, 4]);
                assert_eq!(got, vec![1, 18, 8, 8]);
            }
            other => panic!("wrong error: {other:?}"),
        }
    }

    #[test]
    fn grads_flow_to_offsets() {
        let mut rng = RngStream::new(23, "deform-goff");
        let (b, c, h, w, o, k) = (1, 2, 6, 6, 2, 3);
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[b, c, h, w], rng.normal_vec(b * c * h * w, 1.0)).unwrap();
        let wt = Tensor::param(&[o, c, k, k], rng.normal_vec(o * c * k * k, 0.5)).unwrap();
        let ho = conv_out_len(h, k, 1, 1).unwrap();
        let wo = conv_out_len(w, k, 1, 1).unwrap();
        // fractional offsets so the bilinear derivative is nonzero
        let offsets = Tensor::param(
            &[b, 2 * k * k, ho, wo],
            rng.normal_vec(2 * k * k * ho * wo, 0.3),
        )
        .unwrap();
        let y = deform_conv2d(&g, &x, &wt, None, &offsets, 1, 1).unwrap();
        let l = g.reduce_sum(&g.mul(&y, &y).unwrap()).unwrap();
        g.backward(&l).unwrap();
        let goff = offsets.grad().unwrap();
        assert!(goff.iter().any(|&v| v.abs() > 1e-9), "offset gradients are live");
    }
}
