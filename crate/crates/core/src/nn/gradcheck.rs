//! Finite-difference gradient checking.
//!
//! For each registered layer this builds small random cases in `f64`,
//! computes tape gradients of a random linear functional of the output, and
//! compares against central differences `(f(x+e) - f(x-e)) / 2e`. Inputs are
//! jittered away from kinks (ReLU corners, bilinear integer points, pooling
//! ties) so the comparison tests the smooth piece the tape actually
//! differentiates; kink subgradient conventions are pinned by unit tests.
//!
//! SELU additionally checks the tape against its closed-form derivative,
//! which must agree to 1e-6 in absolute terms.

use std::fmt;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::nn::act::{leaky_relu, relu, selu, selu_derivative};
use crate::nn::conv::{conv2d, conv_out_len, conv_transpose2d};
use crate::nn::deform::{bilinear_sample, deform_conv2d};
use crate::nn::norm::{batch_norm, BnMode, RunningStats};
use crate::nn::pool::{pnorm_pool, Norm};
use crate::rng::RngStream;
use crate::tensor::graph::Graph;
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TRIALS: usize = 20;

/// Worst relative error seen for one named parameter group.
#[derive(Clone, Debug)]
pub struct GroupReport {
    pub group: String,
    pub max_rel_err: f64,
}

/// Outcome of checking one layer across all trials.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub layer: String,
    pub trials: usize,
    pub eps: f64,
    pub tol: f64,
    pub max_rel_err: f64,
    pub groups: Vec<GroupReport>,
    pub pass: bool,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: {} ({} trials, eps {:.0e}, tol {:.0e}, max rel err {:.3e})",
            self.layer,
            if self.pass { "PASS" } else { "FAIL" },
            self.trials,
            self.eps,
            self.tol,
            self.max_rel_err
        )?;
        for g in &self.groups {
            writeln!(f, "  {:<14} max rel err {:.3e}", g.group, g.max_rel_err)?;
        }
        Ok(())
    }
}

type ForwardFn = Box<dyn Fn(&Graph<f64>, &[Tensor<f64>]) -> Result<Tensor<f64>>>;

/// One random test case: named differentiable inputs plus a forward closure
/// that can be re-run under perturbation.
struct Case {
    groups: Vec<&'static str>,
    inputs: Vec<Tensor<f64>>,
    forward: ForwardFn,
}

const REGISTRY: &[&str] = &[
    "add",
    "sub",
    "mul",
    "add-scalar",
    "mul-scalar",
    "max-scalar",
    "matmul",
    "add-row-bias",
    "reshape",
    "transpose",
    "pad",
    "slice",
    "reduce-sum",
    "reduce-mean",
    "exp",
    "log",
    "tanh",
    "softmax",
    "log-softmax",
    "selu",
    "relu",
    "leaky-relu",
    "pnorm-pool",
    "conv2d",
    "fractional-strided-conv2d",
    "bilinear-sample",
    "deform-conv",
    "batch-norm",
    "relu-bn",
];

/// Names accepted by [`check`], in reporting order.
pub fn registered_layers() -> &'static [&'static str] {
    REGISTRY
}

/// Default pass tolerance for a layer: 1e-4 for smooth paths per the fd
/// oracle, 1e-3 where bilinear kinks contribute extra curvature, 1e-6 for
/// SELU's analytic comparison.
pub fn default_tol(layer: &str) -> f64 {
    match layer {
        "selu" => 1e-6,
        "bilinear-sample" | "deform-conv" => 1e-3,
        _ => 1e-4,
    }
}

/// Runs the finite-difference check for one registered layer.
pub fn check(layer: &str, trials: usize, eps: f64, tol: Option<f64>, seed: u64) -> Result<CheckReport> {
    if !REGISTRY.contains(&layer) {
        return Err(Error::UnknownLayer {
            requested: layer.to_string(),
            known: REGISTRY.join(", "),
        });
    }
    let tol = tol.unwrap_or_else(|| default_tol(layer));
    let mut rng = RngStream::new(seed, &format!("gradcheck.{layer}"));
    let mut groups: Vec<GroupReport> = Vec::new();
    let mut max_err: f64 = 0.0;
    for trial in 0..trials {
        let case = build_case(layer, &mut rng, trial)?;
        let errs = run_case(&case, eps, &mut rng)?;
        if groups.is_empty() {
            groups = case
                .groups
                .iter()
                .map(|g| GroupReport {
                    group: g.to_string(),
                    max_rel_err: 0.0,
                })
                .collect();
        }
        for (g, e) in groups.iter_mut().zip(&errs) {
            g.max_rel_err = g.max_rel_err.max(*e);
            max_err = max_err.max(*e);
        }
        if layer == "selu" {
            let e = selu_analytic_diff(&case)?;
            max_err = max_err.max(e);
            groups[0].max_rel_err = groups[0].max_rel_err.max(e);
        }
    }
    Ok(CheckReport {
        layer: layer.to_string(),
        trials,
        eps,
        tol,
        max_rel_err: max_err,
        pass: max_err <= tol,
        groups,
    })
}

/// Central-difference comparison for one case. Returns the worst relative
/// error per input group.
fn run_case(case: &Case, eps: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    // analytic pass
    let g = Graph::<f64>::new();
    let y = (case.forward)(&g, &case.inputs)?;
    let wvals: Vec<f64> = rng.normal_vec(y.numel(), 1.0);
    let w = Tensor::from_vec(y.dims(), wvals.clone())?;
    let loss = g.reduce_sum(&g.mul(&y, &w)?)?;
    for t in &case.inputs {
        t.clear_grad();
    }
    g.backward(&loss)?;
    let analytic: Vec<Vec<f64>> = case
        .inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    // numeric pass
    let ng = Graph::<f64>::no_grad();
    let eval = |inputs: &[Tensor<f64>]| -> Result<f64> {
        let y = (case.forward)(&ng, inputs)?;
        let v: f64 = y.data().iter().zip(&wvals).map(|(a, b)| a * b).sum();
        Ok(v)
    };
    let mut errs = vec![0.0f64; case.inputs.len()];
    for (ti, t) in case.inputs.iter().enumerate() {
        for i in 0..t.numel() {
            let orig = t.data()[i];
            t.data_mut()[i] = orig + eps;
            let fp = eval(&case.inputs)?;
            t.data_mut()[i] = orig - eps;
            let fm = eval(&case.inputs)?;
            t.data_mut()[i] = orig;
            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic[ti][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            if rel > errs[ti] {
                errs[ti] = rel;
            }
        }
    }
    Ok(errs)
}

/// |tape gradient - closed-form derivative| for SELU, max over elements.
fn selu_analytic_diff(case: &Case) -> Result<f64> {
    let x = &case.inputs[0];
    let g = Graph::<f64>::new();
    let y = selu(&g, x)?;
    let loss = g.reduce_sum(&y)?;
    x.clear_grad();
    g.backward(&loss)?;
    let grad = x.grad().unwrap();
    let mut worst: f64 = 0.0;
    for (gi, &xi) in grad.iter().zip(x.data().iter()) {
        worst = worst.max((gi - selu_derivative(xi)).abs());
    }
    Ok(worst)
}

// ---- case builders ----

fn rand_dims(rng: &mut RngStream, rank: Range<usize>, lo: usize, hi: usize) -> Vec<usize> {
    let r = rng.uniform(rank);
    (0..r).map(|_| rng.uniform(lo..=hi)).collect()
}

fn tensor_in(rng: &mut RngStream, dims: &[usize]) -> Tensor<f64> {
    Tensor::param(dims, rng.normal_vec(dims.iter().product(), 1.0)).unwrap()
}

/// Pushes every element at least `margin` away from `kink`.
fn jitter_away(t: &Tensor<f64>, kink: f64, margin: f64) {
    let mut d = t.data_mut();
    for v in d.iter_mut() {
        if (*v - kink).abs() < margin {
            *v = kink + margin * if *v >= kink { 1.0 } else { -1.0 } + (*v - kink);
        }
    }
}

/// A fractional coordinate whose fractional part stays in [0.25, 0.75] so
/// finite differences never cross a bilinear kink.
fn safe_frac_coord(rng: &mut RngStream, lo: isize, hi: isize) -> f64 {
    let base: i64 = rng.uniform(lo as i64..hi as i64);
    base as f64 + rng.uniform(0.25..0.75)
}

fn build_case(layer: &str, rng: &mut RngStream, trial: usize) -> Result<Case> {
    let case = match layer {
        "add" | "sub" | "mul" => {
            let dims = rand_dims(rng, 1..4, 1, 6);
            let a = tensor_in(rng, &dims);
            let b = tensor_in(rng, &dims);
            let op = layer.to_string();
            Case {
                groups: vec!["lhs", "rhs"],
                inputs: vec![a, b],
                forward: Box::new(move |g, ins| match op.as_str() {
                    "add" => g.add(&ins[0], &ins[1]),
                    "sub" => g.sub(&ins[0], &ins[1]),
                    _ => g.mul(&ins[0], &ins[1]),
                }),
            }
        }
        "add-scalar" | "mul-scalar" => {
            let dims = rand_dims(rng, 1..4, 1, 6);
            let a = tensor_in(rng, &dims);
            let s = rng.normal();
            let is_add = layer == "add-scalar";
            Case {
                groups: vec!["input"],
                inputs: vec![a],
                forward: Box::new(move |g, ins| {
                    if is_add {
                        g.add_scalar(&ins[0], s)
                    } else {
                        g.mul_scalar(&ins[0], s)
                    }
                }),
            }
        }
        "max-scalar" => {
            let dims = rand_dims(rng, 1..4, 1, 6);
            let a = tensor_in(rng, &dims);
            let s = rng.normal() * 0.5;
            jitter_away(&a, s, 0.05);
            Case {
                groups: vec!["input"],
                inputs: vec![a],
                forward: Box::new(move |g, ins| g.max_scalar(&ins[0], s)),
            }
        }
        "matmul" => {
            let (m, k, n) = (rng.uniform(1..=6), rng.uniform(1..=6), rng.uniform(1..=6));
            let a = tensor_in(rng, &[m, k]);
            let b = tensor_in(rng, &[k, n]);
            Case {
                groups: vec!["lhs", "rhs"],
                inputs: vec![a, b],
                forward: Box::new(|g, ins| g.matmul(&ins[0], &ins[1])),
            }
        }
        "add-row-bias" => {
            let (r, c) = (rng.uniform(1..=6), rng.uniform(1..=6));
            let x = tensor_in(rng, &[r, c]);
            let b = tensor_in(rng, &[c]);
            Case {
                groups: vec!["input", "bias"],
                inputs: vec![x, b],
                forward: Box::new(|g, ins| g.add_row_bias(&ins[0], &ins[1])),
            }
        }
        "reshape" => {
            let (a, b) = (rng.uniform(1..=4), rng.uniform(1..=4));
            let x = tensor_in(rng, &[a, b]);
            Case {
                groups: vec!["input"],
                inputs: vec![x],
                forward: Box::new(move |g, ins| g.reshape(&ins[0], &[b * a])),
            }
        }
        "transpose" => {
            let (r, c) = (rng.uniform(1..=6), rng.uniform(1..=6));
            let x = tensor_in(rng, &[r, c]);
            Case {
                groups: vec!["input"],
                inputs: vec![x],
                forward: Box::new(|g, ins| g.transpose(&ins[0])),
            }
        }
        "pad" => {
            let dims = rand_dims(rng, 1..4, 1, 5);
            let pads: Vec<(usize, usize)> = dims.iter().map(|_| (rng.uniform(0..=2), rng.uniform(0..=2))).collect();
            let x = tensor_in(rng, &dims);
            Case {
                groups: vec!["input"],
                inputs: vec![x],
                forward: Box::new(move |g, ins| g.pad(&ins[0], &pads)),
            }
        }
        "slice" => {
            let dims = rand_dims(rng, 1..4, 2, 6);
            let ranges: Vec<Range<usize>> = dims
                .iter()
                .map(|&d| {
                    let start = rng.uniform(0..d);
                    let end = rng.uniform(start + 1..=d);
                    start..end
                })
                .collect();
            let x = tensor_in(rng, &dims);
            Case {
                groups: vec!["input"],
                inputs: vec![x],
                forward: Box::new(move |g, ins| g.slice(&ins[0], &ranges)),
            }
        }
        "reduce-sum" | "reduce-mean" => {
            let dims = rand_dims(rng, 1..4, 1, 6);
            let x = tensor_in(rng, &dims);
            let is_sum = layer == "reduce-sum";
            Case {
                groups: vec!["input"],
                inputs: vec![x],
                forward: Box::new(move |g, ins| {
                    if is_sum {
                        g.reduce_sum(&ins[0])
                    } else {
                        g.reduce_mean(&ins[0])
                    }
                }),
            }
        }
        "exp" | "tanh" => {
            let dims = rand_dims(rng, 1..4, 1, 6);
            let x = tensor_in(rng, &dims);
            let is_exp = layer == "exp";
            Case {
                groups: vec!["input"],
                inputs: vec![x],
                forward: Box::new(move |g, ins| if is_exp { g.exp(&ins[0]) } else { g.tanh(&ins[0]) }),
            }
        }
        "log" => {
            let dims = rand_dims(rng, 1..4, 1, 6);
            let x = tensor_in(rng, &dims);
            {
                let mut d = x.data_mut();
                for v in d.iter_mut() {
                    *v = v.abs() + 0.5;
                }
            }
            Case {
                groups: vec!["input"],
                inputs: vec![x],
                forward: Box::new(|g, ins| g.log(&ins[0])),
            }
        }
        "softmax" | "log-softmax" => {
            let (r, c) = (rng.uniform(1..=5), rng.uniform(2..=6));
            let x = tensor_in(rng, &[r, c]);
            let is_plain = layer == "softmax";
            Case {
                groups: vec!["input"],
                inputs: vec![x],
                forward: Box::new(move |g, ins| {
                    if is_plain {
                        g.softmax(&ins[0])
                    } else {
                        g.log_softmax(&ins[0])
                    }
                }),
            }
        }
        "selu" | "relu" | "leaky-relu" => {
            let dims = rand_dims(rng, 1..4, 1, 6);
            let x = tensor_in(rng, &dims);
            jitter_away(&x, 0.0, 0.05);
            let which = layer.to_string();
            Case {
                groups: vec!["input"],
                inputs: vec![x],
                forward: Box::new(move |g, ins| match which.as_str() {
                    "selu" => selu(g, &ins[0]),
                    "relu" => relu(g, &ins[0]),
                    _ => leaky_relu(g, &ins[0], 0.2),
                }),
            }
        }
        "pnorm-pool" => {
            let norm = match trial % 4 {
                0 => Norm::Finite(1.0),
                1 => Norm::Finite(2.0),
                2 => Norm::Finite(4.0),
                _ => Norm::Inf,
            };
            let (b, c) = (rng.uniform(1..=2), rng.uniform(1..=2));
            let (h, w) = (rng.uniform(3..=6), rng.uniform(3..=6));
            let k = rng.uniform(2..=3.min(h.min(w)));
            let s = rng.uniform(1..=2);
            let x = tensor_in(rng, &[b, c, h, w]);
            // keep magnitudes off zero (p=1 sign kink) and spread out
            // (argmax ties for p = inf)
            {
                let mut d = x.data_mut();
                for (i, v) in d.iter_mut().enumerate() {
                    let sign = if *v >= 0.0 { 1.0 } else { -1.0 };
                    *v = sign * (v.abs() + 0.3 + 0.01 * (i as f64));
                }
            }
            Case {
                groups: vec!["input"],
                inputs: vec![x],
                forward: Box::new(move |g, ins| pnorm_pool(g, &ins[0], norm, k, s, 0)),
            }
        }
        "conv2d" => {
            let (b, c, o) = (rng.uniform(1..=2), rng.uniform(1..=3), rng.uniform(1..=3));
            let k = rng.uniform(1..=3);
            let (h, w) = (rng.uniform(k..=6), rng.uniform(k..=6));
            let s = rng.uniform(1..=2);
            let p = rng.uniform(0..=1);
            let x = tensor_in(rng, &[b, c, h, w]);
            let wt = tensor_in(rng, &[o, c, k, k]);
            let bias = tensor_in(rng, &[o]);
            Case {
                groups: vec!["input", "weight", "bias"],
                inputs: vec![x, wt, bias],
                forward: Box::new(move |g, ins| conv2d(g, &ins[0], &ins[1], Some(&ins[2]), s, p)),
            }
        }
        "fractional-strided-conv2d" => {
            let (b, c, o) = (rng.uniform(1..=2), rng.uniform(1..=3), rng.uniform(1..=3));
            let k = rng.uniform(2..=4);
            let (h, w) = (rng.uniform(1..=4), rng.uniform(1..=4));
            let s = rng.uniform(1..=3);
            // keep k - 2p >= 1 so the smallest input still yields output
            let p = rng.uniform(0..=((k - 1) / 2));
            let op = rng.uniform(0..s);
            let x = tensor_in(rng, &[b, c, h, w]);
            let wt = tensor_in(rng, &[c, o, k, k]);
            let bias = tensor_in(rng, &[o]);
            Case {
                groups: vec!["input", "weight", "bias"],
                inputs: vec![x, wt, bias],
                forward: Box::new(move |g, ins| {
                    conv_transpose2d(g, &ins[0], &ins[1], Some(&ins[2]), s, p, op)
                }),
            }
        }
        "bilinear-sample" => {
            let (c, h, w) = (rng.uniform(1..=3), rng.uniform(2..=6), rng.uniform(2..=6));
            let pnum = rng.uniform(1..=6);
            let x = tensor_in(rng, &[c, h, w]);
            let mut pts = Vec::with_capacity(pnum * 2);
            for _ in 0..pnum {
                pts.push(safe_frac_coord(rng, -1, h as isize));
                pts.push(safe_frac_coord(rng, -1, w as isize));
            }
            let points = Tensor::param(&[pnum, 2], pts).unwrap();
            Case {
                groups: vec!["image", "points"],
                inputs: vec![x, points],
                forward: Box::new(|g, ins| bilinear_sample(g, &ins[0], &ins[1])),
            }
        }
        "deform-conv" => {
            let (b, c, o) = (rng.uniform(1..=2), rng.uniform(1..=2), rng.uniform(1..=2));
            let k = rng.uniform(2..=3);
            let (h, w) = (rng.uniform(k..=5), rng.uniform(k..=5));
            let s = rng.uniform(1..=2);
            let p = rng.uniform(0..=1);
            let ho = conv_out_len(h, k, s, p).unwrap();
            let wo = conv_out_len(w, k, s, p).unwrap();
            let x = tensor_in(rng, &[b, c, h, w]);
            let wt = tensor_in(rng, &[o, c, k, k]);
            let bias = tensor_in(rng, &[o]);
            // offsets chosen so every sampled coordinate keeps its fractional
            // part in [0.25, 0.75]: integer base shift plus safe fraction
            let mut ov = Vec::with_capacity(b * 2 * k * k * ho * wo);
            for _ in 0..b * 2 * k * k * ho * wo {
                let base: i64 = rng.uniform(-1..=1);
                ov.push(base as f64 + rng.uniform(0.25..0.75));
            }
            let offsets = Tensor::param(&[b, 2 * k * k, ho, wo], ov).unwrap();
            Case {
                groups: vec!["input", "weight", "offsets", "bias"],
                inputs: vec![x, wt, offsets, bias],
                forward: Box::new(move |g, ins| {
                    deform_conv2d(g, &ins[0], &ins[1], Some(&ins[3]), &ins[2], s, p)
                }),
            }
        }
        "batch-norm" => {
            let (b, c) = (rng.uniform(2..=4), rng.uniform(1..=3));
            let (h, w) = (rng.uniform(1..=3), rng.uniform(1..=3));
            let x = tensor_in(rng, &[b, c, h, w]);
            let gamma = tensor_in(rng, &[c]);
            let beta = tensor_in(rng, &[c]);
            let mode = if trial % 2 == 0 { BnMode::Train } else { BnMode::Eval };
            let stats = RunningStats::<f64> {
                mean: rng.normal_vec(c, 0.5),
                var: rng.normal_vec(c, 0.2).iter().map(|v| v.abs() + 0.5).collect(),
            };
            Case {
                groups: vec!["input", "gamma", "beta"],
                inputs: vec![x, gamma, beta],
                forward: Box::new(move |g, ins| {
                    let mut rs = stats.clone();
                    batch_norm(g, &ins[0], &ins[1], &ins[2], &mut rs, mode)
                }),
            }
        }
        "relu-bn" => {
            // the composed block: batch norm, then ReLU
            let (b, c) = (rng.uniform(2..=4), rng.uniform(1..=2));
            let (h, w) = (rng.uniform(2..=3), rng.uniform(2..=3));
            let x = tensor_in(rng, &[b, c, h, w]);
            // spread values so no normalized activation sits near the ReLU kink
            {
                let mut d = x.data_mut();
                let n = d.len();
                for (i, v) in d.iter_mut().enumerate() {
                    *v = (i as f64 + 0.37) / n as f64 * 4.0 - 2.0 + 0.05 * *v;
                }
            }
            let gamma = tensor_in(rng, &[c]);
            let beta = tensor_in(rng, &[c]);
            Case {
                groups: vec!["input", "gamma", "beta"],
                inputs: vec![x, gamma, beta],
                forward: Box::new(move |g, ins| {
                    let mut rs = RunningStats::new(ins[1].numel());
                    let y = batch_norm(g, &ins[0], &ins[1], &ins[2], &mut rs, BnMode::Train)?;
                    relu(g, &y)
                }),
            }
        }
        other => {
            return Err(Error::UnknownLayer {
                requested: other.to_string(),
                known: REGISTRY.join(", "),
            })
        }
    };
    Ok(case)
}
