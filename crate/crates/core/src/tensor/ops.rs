//! The op family: elementwise arithmetic, matmul, shape ops, reductions,
//! and the softmax pair. Each op validates shapes, computes forward, and
//! registers its backward closure with the tape.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::tensor::graph::Graph;
use crate::tensor::{numel_of, strides_of, Element, Tensor};

fn same_dims<T: Element>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch {
            op,
            detail: format!("{:?} vs {:?}", a.dims(), b.dims()),
        });
    }
    Ok(())
}

impl<T: Element> Graph<T> {
    // ---- elementwise binary ----

    pub fn add(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        same_dims("add", a, b)?;
        let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x + y).collect();
        self.op("add", &[a, b], a.dims().to_vec(), data, |ctx| {
            vec![Some(ctx.gout.to_vec()), Some(ctx.gout.to_vec())]
        })
    }

    pub fn sub(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        same_dims("sub", a, b)?;
        let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x - y).collect();
        self.op("sub", &[a, b], a.dims().to_vec(), data, |ctx| {
            vec![
                Some(ctx.gout.to_vec()),
                Some(ctx.gout.iter().map(|&g| -g).collect()),
            ]
        })
    }

    pub fn mul(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        same_dims("mul", a, b)?;
        let data = a.data().iter().zip(b.data().iter()).map(|(&x, &y)| x * y).collect();
        self.op("mul", &[a, b], a.dims().to_vec(), data, |ctx| {
            let ga = if ctx.needs(0) {
                let b = ctx.input_data(1);
                Some(ctx.gout.iter().zip(b.iter()).map(|(&g, &y)| g * y).collect())
            } else {
                None
            };
            let gb = if ctx.needs(1) {
                let a = ctx.input_data(0);
                Some(ctx.gout.iter().zip(a.iter()).map(|(&g, &x)| g * x).collect())
            } else {
                None
            };
            vec![ga, gb]
        })
    }

    // ---- scalar broadcast ----

    pub fn add_scalar(&self, a: &Tensor<T>, s: T) -> Result<Tensor<T>> {
        let data = a.data().iter().map(|&x| x + s).collect();
        self.op("add_scalar", &[a], a.dims().to_vec(), data, |ctx| {
            vec![Some(ctx.gout.to_vec())]
        })
    }

    pub fn mul_scalar(&self, a: &Tensor<T>, s: T) -> Result<Tensor<T>> {
        let data = a.data().iter().map(|&x| x * s).collect();
        self.op("mul_scalar", &[a], a.dims().to_vec(), data, move |ctx| {
            vec![Some(ctx.gout.iter().map(|&g| g * s).collect())]
        })
    }

    pub fn neg(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        self.mul_scalar(a, -T::one())
    }

    /// Elementwise max against a constant (`max_scalar(x, 0)` is ReLU's core).
    /// Subgradient convention: derivative 0 at the tie point.
    pub fn max_scalar(&self, a: &Tensor<T>, s: T) -> Result<Tensor<T>> {
        let data = a.data().iter().map(|&x| if x > s { x } else { s }).collect();
        self.op("max_scalar", &[a], a.dims().to_vec(), data, move |ctx| {
            let x = ctx.input_data(0);
            vec![Some(
                ctx.gout
                    .iter()
                    .zip(x.iter())
                    .map(|(&g, &xi)| if xi > s { g } else { T::zero() })
                    .collect(),
            )]
        })
    }

    // ---- elementwise transcendental ----

    pub fn exp(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        let data = a.data().iter().map(|&x| x.exp()).collect();
        self.op("exp", &[a], a.dims().to_vec(), data, |ctx| {
            let y = ctx.output_data();
            vec![Some(ctx.gout.iter().zip(y.iter()).map(|(&g, &yi)| g * yi).collect())]
        })
    }

    pub fn log(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        let data = a.data().iter().map(|&x| x.ln()).collect();
        self.op("log", &[a], a.dims().to_vec(), data, |ctx| {
            let x = ctx.input_data(0);
            vec![Some(ctx.gout.iter().zip(x.iter()).map(|(&g, &xi)| g / xi).collect())]
        })
    }

    pub fn tanh(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        let data = a.data().iter().map(|&x| x.tanh()).collect();
        self.op("tanh", &[a], a.dims().to_vec(), data, |ctx| {
            let y = ctx.output_data();
            vec![Some(
                ctx.gout
                    .iter()
                    .zip(y.iter())
                    .map(|(&g, &yi)| g * (T::one() - yi * yi))
                    .collect(),
            )]
        })
    }

    // ---- linear algebra ----

    /// 2-D matrix product `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        if a.rank() != 2 || b.rank() != 2 || a.dims()[1] != b.dims()[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                detail: format!("{:?} x {:?}", a.dims(), b.dims()),
            });
        }
        let (m, k) = (a.dims()[0], a.dims()[1]);
        let n = b.dims()[1];
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, T::one(), &a.data(), false, &b.data(), false, T::zero(), &mut out);
        self.op("matmul", &[a, b], vec![m, n], out, move |ctx| {
            let ga = if ctx.needs(0) {
                // dL/da = gout * b^T : [m,n] x [n,k]
                let b = ctx.input_data(1);
                let mut g = vec![T::zero(); m * k];
                T::gemm(m, n, k, T::one(), ctx.gout, false, &b, true, T::zero(), &mut g);
                Some(g)
            } else {
                None
            };
            let gb = if ctx.needs(1) {
                // dL/db = a^T * gout : [k,m] x [m,n]
                let a = ctx.input_data(0);
                let mut g = vec![T::zero(); k * n];
                T::gemm(k, m, n, T::one(), &a, true, ctx.gout, false, T::zero(), &mut g);
                Some(g)
            } else {
                None
            };
            vec![ga, gb]
        })
    }

    /// Adds a bias row-wise: `[r,c] + [c] -> [r,c]`.
    pub fn add_row_bias(&self, x: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
        if x.rank() != 2 || bias.rank() != 1 || bias.dims()[0] != x.dims()[1] {
            return Err(Error::ShapeMismatch {
                op: "add_row_bias",
                detail: format!("{:?} + {:?}", x.dims(), bias.dims()),
            });
        }
        let (r, c) = (x.dims()[0], x.dims()[1]);
        let xb = x.data();
        let bb = bias.data();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(xb[i * c + j] + bb[j]);
            }
        }
        drop(xb);
        drop(bb);
        self.op("add_row_bias", &[x, bias], vec![r, c], data, move |ctx| {
            let gb = if ctx.needs(1) {
                let mut g = vec![T::zero(); c];
                for i in 0..r {
                    for j in 0..c {
                        g[j] += ctx.gout[i * c + j];
                    }
                }
                Some(g)
            } else {
                None
            };
            vec![Some(ctx.gout.to_vec()), gb]
        })
    }

    // ---- shape ops ----

    pub fn reshape(&self, a: &Tensor<T>, dims: &[usize]) -> Result<Tensor<T>> {
        if numel_of(dims) != a.numel() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                detail: format!("{:?} -> {:?}", a.dims(), dims),
            });
        }
        self.op("reshape", &[a], dims.to_vec(), a.to_vec(), |ctx| {
            vec![Some(ctx.gout.to_vec())]
        })
    }

    /// 2-D transpose.
    pub fn transpose(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        if a.rank() != 2 {
            return Err(Error::ShapeMismatch {
                op: "transpose",
                detail: format!("need rank 2, got {:?}", a.dims()),
            });
        }
        let (r, c) = (a.dims()[0], a.dims()[1]);
        let src = a.data();
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        drop(src);
        self.op("transpose", &[a], vec![c, r], data, move |ctx| {
            let mut g = vec![T::zero(); r * c];
            for i in 0..r {
                for j in 0..c {
                    g[i * c + j] = ctx.gout[j * r + i];
                }
            }
            vec![Some(g)]
        })
    }

    /// Zero-pads each dimension by `(before, after)`.
    pub fn pad(&self, a: &Tensor<T>, pads: &[(usize, usize)]) -> Result<Tensor<T>> {
        if pads.len() != a.rank() {
            return Err(Error::ShapeMismatch {
                op: "pad",
                detail: format!("{} pad pairs for rank {}", pads.len(), a.rank()),
            });
        }
        let in_dims = a.dims().to_vec();
        let out_dims: Vec<usize> = in_dims
            .iter()
            .zip(pads)
            .map(|(&d, &(lo, hi))| d + lo + hi)
            .collect();
        let offsets: Vec<usize> = pads.iter().map(|&(lo, _)| lo).collect();
        let mut data = vec![T::zero(); numel_of(&out_dims)];
        copy_block(&a.data(), &in_dims, &mut data, &out_dims, &offsets, CopyDir::Scatter);
        let (in_dims_b, out_dims_b, offsets_b) = (in_dims.clone(), out_dims.clone(), offsets.clone());
        self.op("pad", &[a], out_dims, data, move |ctx| {
            let mut g = vec![T::zero(); numel_of(&in_dims_b)];
            copy_block(ctx.gout, &out_dims_b, &mut g, &in_dims_b, &offsets_b, CopyDir::Gather);
            vec![Some(g)]
        })
    }

    /// Extracts `ranges` (one half-open range per dimension).
    pub fn slice(&self, a: &Tensor<T>, ranges: &[Range<usize>]) -> Result<Tensor<T>> {
        if ranges.len() != a.rank()
            || ranges
                .iter()
                .zip(a.dims())
                .any(|(r, &d)| r.start > r.end || r.end > d)
        {
            return Err(Error::ShapeMismatch {
                op: "slice",
                detail: format!("{:?} of {:?}", ranges, a.dims()),
            });
        }
        let in_dims = a.dims().to_vec();
        let out_dims: Vec<usize> = ranges.iter().map(|r| r.end - r.start).collect();
        let offsets: Vec<usize> = ranges.iter().map(|r| r.start).collect();
        let mut data = vec![T::zero(); numel_of(&out_dims)];
        copy_block(&a.data(), &in_dims, &mut data, &out_dims, &offsets, CopyDir::Gather);
        let (in_dims_b, out_dims_b, offsets_b) = (in_dims.clone(), out_dims.clone(), offsets.clone());
        self.op("slice", &[a], out_dims, data, move |ctx| {
            let mut g = vec![T::zero(); numel_of(&in_dims_b)];
            copy_block(ctx.gout, &out_dims_b, &mut g, &in_dims_b, &offsets_b, CopyDir::Scatter);
            vec![Some(g)]
        })
    }

    // ---- reductions ----

    /// Sum of all elements, as a rank-0 tensor.
    pub fn reduce_sum(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        let s = a.data().iter().fold(T::zero(), |acc, &x| acc + x);
        let n = a.numel();
        self.op("reduce_sum", &[a], vec![], vec![s], move |ctx| {
            vec![Some(vec![ctx.gout[0]; n])]
        })
    }

    /// Mean of all elements, as a rank-0 tensor.
    pub fn reduce_mean(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        if a.numel() == 0 {
            return Err(Error::ShapeMismatch {
                op: "reduce_mean",
                detail: "mean of empty tensor".into(),
            });
        }
        let n = a.numel();
        let inv = T::from_f64(1.0 / n as f64);
        let s = a.data().iter().fold(T::zero(), |acc, &x| acc + x) * inv;
        self.op("reduce_mean", &[a], vec![], vec![s], move |ctx| {
            vec![Some(vec![ctx.gout[0] * inv; n])]
        })
    }

    // ---- softmax family (last axis) ----

    pub fn softmax(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        let (rows, cols) = last_axis_rows("softmax", a)?;
        let src = a.data();
        let mut data = vec![T::zero(); src.len()];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let m = row.iter().cloned().fold(T::neg_infinity(), T::max);
            let mut denom = T::zero();
            for (j, &x) in row.iter().enumerate() {
                let e = (x - m).exp();
                data[r * cols + j] = e;
                denom += e;
            }
            for j in 0..cols {
                data[r * cols + j] /= denom;
            }
        }
        drop(src);
        self.op("softmax", &[a], a.dims().to_vec(), data, move |ctx| {
            let y = ctx.output_data();
            let mut g = vec![T::zero(); y.len()];
            for r in 0..rows {
                let o = r * cols;
                let dot = (0..cols).fold(T::zero(), |acc, j| acc + ctx.gout[o + j] * y[o + j]);
                for j in 0..cols {
                    g[o + j] = y[o + j] * (ctx.gout[o + j] - dot);
                }
            }
            vec![Some(g)]
        })
    }

    pub fn log_softmax(&self, a: &Tensor<T>) -> Result<Tensor<T>> {
        let (rows, cols) = last_axis_rows("log_softmax", a)?;
        let src = a.data();
        let mut data = vec![T::zero(); src.len()];
        for r in 0..rows {
            let row = &src[r * cols..(r + 1) * cols];
            let m = row.iter().cloned().fold(T::neg_infinity(), T::max);
            let lse = row.iter().fold(T::zero(), |acc, &x| acc + (x - m).exp()).ln() + m;
            for j in 0..cols {
                data[r * cols + j] = row[j] - lse;
            }
        }
        drop(src);
        self.op("log_softmax", &[a], a.dims().to_vec(), data, move |ctx| {
            let y = ctx.output_data();
            let mut g = vec![T::zero(); y.len()];
            for r in 0..rows {
                let o = r * cols;
                let gsum = (0..cols).fold(T::zero(), |acc, j| acc + ctx.gout[o + j]);
                for j in 0..cols {
                    g[o + j] = ctx.gout[o + j] - y[o + j].exp() * gsum;
                }
            }
            vec![Some(g)]
        })
    }
}

fn last_axis_rows<T: Element>(op: &'static str, a: &Tensor<T>) -> Result<(usize, usize)> {
    if a.rank() == 0 {
        return Err(Error::ShapeMismatch {
            op,
            detail: "rank-0 input".into(),
        });
    }
    let cols = *a.dims().last().unwrap();
    if cols == 0 {
        return Err(Error::ShapeMismatch {
            op,
            detail: "empty last axis".into(),
        });
    }
    Ok((a.numel() / cols, cols))
}

#[derive(Copy, Clone)]
enum CopyDir {
    /// small tensor -> offset block inside big tensor
    Scatter,
    /// offset block inside big tensor -> small tensor
    Gather,
}

/// Copies an n-d block between a small tensor and a region of a big tensor,
/// where the region starts at `offsets` and has the small tensor's dims.
fn copy_block<T: Element>(
    src: &[T],
    src_dims: &[usize],
    dst: &mut [T],
    dst_dims: &[usize],
    offsets: &[usize],
    dir: CopyDir,
) {
    let (small_dims, big_strides) = match dir {
        CopyDir::Scatter => (src_dims, strides_of(dst_dims)),
        CopyDir::Gather => (dst_dims, strides_of(src_dims)),
    };
    let n = numel_of(small_dims);
    if n == 0 {
        return;
    }
    let rank = small_dims.len();
    let mut idx = vec![0usize; rank];
    for lin in 0..n {
        let mut big = 0;
        for d in 0..rank {
            big += (idx[d] + offsets[d]) * big_strides[d];
        }
        match dir {
            CopyDir::Scatter => dst[big] = src[lin],
            CopyDir::Gather => dst[lin] = src[big],
        }
        // increment multi-index (row-major, last axis fastest)
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < small_dims[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::graph::Graph;
    use crate::tensor::Tensor;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn softmax_matches_closed_form() {
        // softmax([2,0,0,0,0])[0] = e^2 / (e^2 + 4)
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[5], vec![2.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let y = g.softmax(&x).unwrap();
        let expect = 2f64.exp() / (2f64.exp() + 4.0);
        assert!((y.to_vec()[0] - expect).abs() < 1e-12);
        let total: f64 = y.to_vec().iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "softmax rows sum to 1");
    }

    #[test]
    fn softmax_shift_invariance() {
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[4], vec![0.3, -1.2, 2.0, 0.7]).unwrap();
        let xs = Tensor::from_vec(&[4], vec![100.3, 98.8, 102.0, 100.7]).unwrap();
        let a = g.softmax(&x).unwrap().to_vec();
        let b = g.softmax(&xs).unwrap().to_vec();
        for (ai, bi) in a.iter().zip(&b) {
            assert!((ai - bi).abs() < 1e-12, "softmax(x + c) == softmax(x)");
        }
    }

    #[test]
    fn matmul_known_product() {
        let g = Graph::<f32>::new();
        let a = Tensor::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::from_vec(&[3, 2], vec![7., 8., 9., 10., 11., 12.]).unwrap();
        let c = g.matmul(&a, &b).unwrap();
        assert_eq!(c.to_vec(), vec![58., 64., 139., 154.]);
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let g = Graph::<f32>::new();
        let a = Tensor::<f32>::zeros(&[2, 3]);
        let b = Tensor::<f32>::zeros(&[4, 2]);
        assert!(g.matmul(&a, &b).is_err());
    }

    #[test]
    fn chain_rule_through_mul_and_sum() {
        // L = sum(x * x) => dL/dx = 2x
        let g = Graph::<f64>::new();
        let x = Tensor::param(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let y = g.mul(&x, &x).unwrap();
        let l = g.reduce_sum(&y).unwrap();
        g.backward(&l).unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, -4.0, 1.0]);
    }

    #[test]
    fn grad_accumulates_across_backwards() {
        let x = Tensor::param(&[2], vec![1.0f64, 2.0]).unwrap();
        for _ in 0..2 {
            let g = Graph::<f64>::new();
            let l = g.reduce_sum(&g.mul(&x, &x).unwrap()).unwrap();
            g.backward(&l).unwrap();
        }
        assert_eq!(x.grad().unwrap(), vec![4.0, 8.0], "two backward passes doubled the grad");
    }

    #[test]
    fn backward_linearity() {
        // grad of (a * loss) is a * grad of loss
        let run = |scale: f64| -> Vec<f64> {
            let g = Graph::<f64>::new();
            let x = Tensor::param(&[3], vec![0.4, -1.1, 2.2]).unwrap();
            let y = g.exp(&x).unwrap();
            let l = g.mul_scalar(&g.reduce_sum(&y).unwrap(), scale).unwrap();
            g.backward(&l).unwrap();
            x.grad().unwrap()
        };
        let g1 = run(1.0);
        let g3 = run(3.0);
        for (a, b) in g1.iter().zip(&g3) {
            assert!(close(3.0 * a, *b, 1e-12));
        }
    }

    #[test]
    fn pad_slice_roundtrip() {
        let g = Graph::<f32>::new();
        let x = Tensor::from_vec(&[2, 2], vec![1., 2., 3., 4.]).unwrap();
        let p = g.pad(&x, &[(1, 1), (2, 0)]).unwrap();
        assert_eq!(p.dims(), &[4, 4]);
        assert_eq!(p.to_vec()[..4], [0., 0., 0., 0.]);
        let s = g.slice(&p, &[1..3, 2..4]).unwrap();
        assert_eq!(s.to_vec(), vec![1., 2., 3., 4.]);
    }

    #[test]
    fn slice_grad_scatters_back() {
        let g = Graph::<f64>::new();
        let x = Tensor::param(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let s = g.slice(&x, &[0..2, 1..2]).unwrap(); // column 1
        let l = g.reduce_sum(&s).unwrap();
        g.backward(&l).unwrap();
        assert_eq!(x.grad().unwrap(), vec![0., 1., 0., 0., 1., 0.]);
    }

    #[test]
    fn transpose_is_involution() {
        let g = Graph::<f32>::new();
        let x = Tensor::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let tt = g.transpose(&g.transpose(&x).unwrap()).unwrap();
        assert_eq!(tt.to_vec(), x.to_vec());
    }

    #[test]
    fn log_softmax_consistent_with_softmax() {
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[2, 3], vec![0.1, -0.4, 1.2, 3.0, 2.9, -5.0]).unwrap();
        let a = g.softmax(&x).unwrap().to_vec();
        let b = g.log_softmax(&x).unwrap().to_vec();
        for (ai, bi) in a.iter().zip(&b) {
            assert!((ai.ln() - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn detached_branch_gets_no_grad() {
        let g = Graph::<f64>::new();
        let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        let d = x.detach();
        assert!(!d.requires_grad());
        let l = g.reduce_sum(&g.mul(&d, &d).unwrap()).unwrap();
        g.backward(&l).unwrap();
        assert!(x.grad().is_none(), "detach cut the gradient path");
    }

    #[test]
    fn same_tensor_twice_accumulates_both_slots() {
        // L = sum(x * x) via two distinct input slots of mul
        let g = Graph::<f64>::new();
        let x = Tensor::param(&[1], vec![3.0]).unwrap();
        let l = g.mul(&x, &x).unwrap();
        let l = g.reduce_sum(&l).unwrap();
        g.backward(&l).unwrap();
        assert_eq!(x.grad().unwrap(), vec![6.0]);
    }
}
