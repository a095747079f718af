//! Reverse-mode tape.
//!
//! Ops call [`Graph::op`] with the forward result and a backward closure.
//! While recording, the closure is pushed onto the tape; `backward` seeds the
//! loss gradient with 1 and replays the tape in exact reverse order, so
//! gradient flow is deterministic for a fixed op sequence.

use std::cell::{Ref, RefCell};

use crate::error::{Error, Result};
use crate::tensor::{all_finite, Element, Tensor};

/// Context handed to a backward closure.
pub struct BackCtx<'a, T: Element> {
    /// Gradient of the loss w.r.t. this op's output (same layout as output).
    pub gout: &'a [T],
    inputs: &'a [Tensor<T>],
    output: &'a Tensor<T>,
}

impl<'a, T: Element> BackCtx<'a, T> {
    /// The i-th input tensor (shapes, ids).
    pub fn input(&self, i: usize) -> &Tensor<T> {
        &self.inputs[i]
    }

    /// Borrow of the i-th input's data.
    pub fn input_data(&self, i: usize) -> Ref<'a, Vec<T>> {
        self.inputs[i].data()
    }

    /// Borrow of the forward output's data (for ops like exp/softmax whose
    /// derivative is cheaper in terms of the output).
    pub fn output_data(&self) -> Ref<'a, Vec<T>> {
        self.output.data()
    }

    /// Whether the i-th input needs a gradient at all. Backward closures may
    /// skip expensive work (e.g. conv input gradients when the input is a
    /// plain data batch) when this is false.
    pub fn needs(&self, i: usize) -> bool {
        self.inputs[i].requires_grad()
    }
}

type BackwardFn<T> = Box<dyn FnOnce(&BackCtx<'_, T>) -> Vec<Option<Vec<T>>>>;

struct Record<T: Element> {
    inputs: Vec<Tensor<T>>,
    output: Tensor<T>,
    backward: BackwardFn<T>,
}

/// Records ops applied through it; replays them backwards for gradients.
pub struct Graph<T: Element> {
    recording: bool,
    records: RefCell<Vec<Record<T>>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    /// Recording graph: every op touching a grad-requiring tensor is taped.
    pub fn new() -> Self {
        Graph {
            recording: true,
            records: RefCell::new(Vec::new()),
        }
    }

    /// Inference-only graph: nothing is taped, `backward` is a no-op.
    pub fn no_grad() -> Self {
        Graph {
            recording: false,
            records: RefCell::new(Vec::new()),
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    /// Number of taped records (diagnostics/tests).
    pub fn tape_len(&self) -> usize {
        self.records.borrow().len()
    }

    /// Registers one op: validates the forward result is finite, wraps it in
    /// a tensor, and (if recording and any input requires grad) tapes the
    /// backward closure. The closure must return one `Option<Vec<T>>` per
    /// input, in input order; `None` means "no gradient for this slot".
    pub fn op(
        &self,
        name: &'static str,
        inputs: &[&Tensor<T>],
        dims: Vec<usize>,
        data: Vec<T>,
        backward: impl FnOnce(&BackCtx<'_, T>) -> Vec<Option<Vec<T>>> + 'static,
    ) -> Result<Tensor<T>> {
        debug_assert_eq!(
            crate::tensor::numel_of(&dims),
            data.len(),
            "op {name}: dims/data length out of sync"
        );
        if !all_finite(&data) {
            return Err(Error::NonFinite { op: name });
        }
        let track = self.recording && inputs.iter().any(|t| t.requires_grad());
        let out = Tensor::from_op(dims, data, track);
        if track {
            self.records.borrow_mut().push(Record {
                inputs: inputs.iter().map(|t| (*t).clone()).collect(),
                output: out.clone(),
                backward: Box::new(backward),
            });
        }
        Ok(out)
    }

    /// Reverse pass from a rank-0 loss. Consumes the tape; gradients
    /// accumulate (call `zero_grad`/`clear_grad` on parameters between
    /// steps). Tensors that do not require grad are skipped.
    pub fn backward(&self, loss: &Tensor<T>) -> Result<()> {
        if loss.rank() != 0 {
            return Err(Error::NotScalar {
                rank: loss.rank(),
                numel: loss.numel(),
            });
        }
        loss.accumulate_grad(&[T::one()]);
        let records = self.records.take();
        for rec in records.into_iter().rev() {
            let gout = match rec.output.grad() {
                Some(g) => g,
                None => continue, // branch not connected to the loss
            };
            let ctx = BackCtx {
                gout: &gout,
                inputs: &rec.inputs,
                output: &rec.output,
            };
            let grads = (rec.backward)(&ctx);
            debug_assert_eq!(
                grads.len(),
                rec.inputs.len(),
                "backward closure returned wrong arity"
            );
            for (t, g) in rec.inputs.iter().zip(grads) {
                if let Some(g) = g {
                    if t.requires_grad() {
                        debug_assert_eq!(g.len(), t.numel(), "gradient shape mismatch");
                        t.accumulate_grad(&g);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_rejects_non_scalar() {
        let g = Graph::<f64>::new();
        let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        let y = g.add(&x, &x).unwrap();
        let err = g.backward(&y).unwrap_err();
        assert!(matches!(err, Error::NotScalar { rank: 1, numel: 2 }));
    }

    #[test]
    fn no_grad_graph_tapes_nothing() {
        let g = Graph::<f32>::no_grad();
        let x = Tensor::param(&[2], vec![1.0, 2.0]).unwrap();
        let y = g.mul(&x, &x).unwrap();
        assert_eq!(g.tape_len(), 0);
        assert!(!y.requires_grad());
    }

    #[test]
    fn untracked_inputs_tape_nothing() {
        let g = Graph::<f32>::new();
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let y = g.mul(&x, &x).unwrap();
        assert_eq!(g.tape_len(), 0);
        assert!(!y.requires_grad());
    }

    #[test]
    fn nonfinite_output_is_an_error() {
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(&[1], vec![-1.0]).unwrap();
        let err = g.log(&x).unwrap_err();
        assert!(matches!(err, Error::NonFinite { op: "log" }));
    }
}
