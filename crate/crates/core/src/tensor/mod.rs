//! Dense row-major tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is a cheaply clonable handle (`Rc`) to a dims + data buffer,
//! optionally carrying a gradient buffer of the same shape. Ops are methods
//! on a [`graph::Graph`], which records a tape of backward closures while
//! `recording` is on; [`graph::Graph::backward`] replays the tape in reverse.
//!
//! Training runs in `f32`; gradient checking runs the same generic code in
//! `f64`. The dtype is fixed per tensor by the [`Element`] type parameter.

pub mod graph;
pub mod ops;
pub mod optim;

use std::cell::{Cell, Ref, RefCell, RefMut};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// Scalar dtype tag, as stored in container files.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Scalar element: `f32` or `f64`, with a BLAS-style matmul kernel.
pub trait Element:
    num_traits::Float + num_traits::NumAssignOps + Copy + Send + Sync + fmt::Debug + fmt::Display + 'static
{
    const DTYPE: Dtype;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `c = alpha * op(a) * op(b) + beta * c` for row-major contiguous
    /// matrices; `ta`/`tb` select a transposed read of `a`/`b`.
    ///
    /// `a` is `[m, k]` after `op`, `b` is `[k, n]` after `op`, `c` is `[m, n]`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        ta: bool,
        b: &[Self],
        tb: bool,
        beta: Self,
        c: &mut [Self],
    );
}

macro_rules! impl_element {
    ($t:ty, $dtype:expr, $gemm:path) => {
        impl Element for $t {
            const DTYPE: Dtype = $dtype;

            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                ta: bool,
                b: &[Self],
                tb: bool,
                beta: Self,
                c: &mut [Self],
            ) {
                assert_eq!(a.len(), m * k, "gemm: lhs buffer size");
                assert_eq!(b.len(), k * n, "gemm: rhs buffer size");
                assert_eq!(c.len(), m * n, "gemm: out buffer size");
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    for v in c.iter_mut() {
                        *v *= beta;
                    }
                    return;
                }
                // Row-major [r, c] has strides (c, 1); a transposed read swaps them.
                let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
                let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_element!(f32, Dtype::F32, matrixmultiply::sgemm);
impl_element!(f64, Dtype::F64, matrixmultiply::dgemm);

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

struct Inner<T> {
    id: u64,
    dims: Vec<usize>,
    data: RefCell<Vec<T>>,
    grad: RefCell<Option<Vec<T>>>,
    requires_grad: Cell<bool>,
}

/// Shared handle to an n-dimensional row-major array.
pub struct Tensor<T: Element> {
    inner: Rc<Inner<T>>,
}

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("dims", &self.inner.dims)
            .field("requires_grad", &self.inner.requires_grad.get())
            .finish()
    }
}

pub fn numel_of(dims: &[usize]) -> usize {
    dims.iter().product()
}

impl<T: Element> Tensor<T> {
    fn raw(dims: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Self {
        debug_assert_eq!(numel_of(&dims), data.len());
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                dims,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad: Cell::new(requires_grad),
            }),
        }
    }

    /// Plain data tensor (no gradient tracking).
    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        if numel_of(dims) != data.len() {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                detail: format!("dims {:?} need {} elements, got {}", dims, numel_of(dims), data.len()),
            });
        }
        Ok(Self::raw(dims.to_vec(), data, false))
    }

    /// Trainable parameter: tracked by the tape, gradient accumulated.
    pub fn param(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let t = Self::from_vec(dims, data)?;
        t.inner.requires_grad.set(true);
        Ok(t)
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::raw(dims.to_vec(), vec![T::zero(); numel_of(dims)], false)
    }

    pub fn full(dims: &[usize], v: T) -> Self {
        Self::raw(dims.to_vec(), vec![v; numel_of(dims)], false)
    }

    /// Rank-0 tensor holding one value.
    pub fn scalar(v: T) -> Self {
        Self::raw(vec![], vec![v], false)
    }

    pub(crate) fn from_op(dims: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Self {
        Self::raw(dims, data, requires_grad)
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn dims(&self) -> &[usize] {
        &self.inner.dims
    }

    pub fn rank(&self) -> usize {
        self.inner.dims.len()
    }

    pub fn numel(&self) -> usize {
        numel_of(&self.inner.dims)
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad.get()
    }

    pub fn set_requires_grad(&self, on: bool) {
        self.inner.requires_grad.set(on);
    }

    /// Immutable view of the data buffer.
    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.inner.data.borrow()
    }

    /// Mutable view of the data buffer (optimizers, initializers).
    pub fn data_mut(&self) -> RefMut<'_, Vec<T>> {
        self.inner.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.inner.data.borrow().clone()
    }

    /// Sole element of a rank-0/one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(Error::NotScalar {
                rank: self.rank(),
                numel: self.numel(),
            });
        }
        Ok(self.inner.data.borrow()[0])
    }

    /// Copy of the gradient buffer, if one has been accumulated/allocated.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    /// Allocate (or reset) the gradient buffer to zeros.
    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = Some(vec![T::zero(); self.numel()]);
    }

    /// Drop the gradient buffer entirely.
    pub fn clear_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[T]) {
        debug_assert_eq!(g.len(), self.numel(), "gradient length mismatch");
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(buf) => {
                for (b, &gi) in buf.iter_mut().zip(g) {
                    *b += gi;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Detached copy: same values, fresh identity, no grad tracking.
    /// Used to stop gradients (e.g. feeding generated samples to the
    /// discriminator without backpropagating into the generator).
    pub fn detach(&self) -> Tensor<T> {
        Tensor::raw(self.inner.dims.clone(), self.to_vec(), false)
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.inner.dims)
    }

    /// Converts element type (f32 <-> f64). Data-only; grads are not carried.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        let data = self.data().iter().map(|&v| U::from_f64(v.to_f64())).collect();
        Tensor::<U>::raw(self.inner.dims.clone(), data, false)
    }
}

pub fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

pub(crate) fn all_finite<T: Element>(xs: &[T]) -> bool {
    xs.iter().all(|v| v.is_finite())
}
