//! Inference: classification, accuracy/confusion reports with latency
//! measurement, sample generation, and the discriminator's real-ness score.

use std::time::Instant;

use crate::error::Result;
use crate::nn::BnMode;
use crate::rng::RngStream;
use crate::tensor::graph::Graph;
use crate::Tensor;

use super::model::{CnnClassifier, Discriminator, Generator, IMG_CHANNELS, IMG_SIDE};
use super::train::to_signed;

/// Batch size used for plain inference passes.
const EVAL_BATCH: usize = 32;

/// Anything that maps an image batch to class logits. The logit matrix may
/// have extra columns past `n_classes` (the discriminator's fake column);
/// classification ignores them.
pub trait Classifier {
    fn n_classes(&self) -> usize;
    fn logits(&self, g: &Graph<f32>, x: &Tensor<f32>) -> Result<Tensor<f32>>;
}

impl Classifier for Discriminator {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn logits(&self, g: &Graph<f32>, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.forward(g, x, BnMode::Eval)
    }
}

impl Classifier for CnnClassifier {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn logits(&self, g: &Graph<f32>, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.forward(g, x, BnMode::Eval)
    }
}

fn batch_tensor(rows: &[&Vec<f32>]) -> Tensor<f32> {
    let mut flat = Vec::with_capacity(rows.len() * IMG_CHANNELS * IMG_SIDE * IMG_SIDE);
    for r in rows {
        flat.extend_from_slice(r);
    }
    Tensor::from_vec(&[rows.len(), IMG_CHANNELS, IMG_SIDE, IMG_SIDE], flat).expect("batch dims agree")
}

pub(crate) fn argmax_rows(logits: &Tensor<f32>, k: usize) -> Vec<u16> {
    let cols = logits.dims()[1];
    let data = logits.data();
    data.chunks_exact(cols)
        .map(|row| {
            let mut best = 0usize;
            for j in 1..k {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best as u16
        })
        .collect()
}

/// Predicted class per `[0,1]` image.
pub fn classify<C: Classifier>(model: &C, images: &[Tensor<f32>]) -> Result<Vec<u16>> {
    let labeled: Vec<(Tensor<f32>, u16)> = images.iter().map(|t| (t.clone(), 0)).collect();
    let data = to_signed(&labeled, 1)?;
    let k = model.n_classes();
    let mut out = Vec::with_capacity(images.len());
    for chunk in data.chunks(EVAL_BATCH) {
        let rows: Vec<&Vec<f32>> = chunk.iter().map(|(v, _)| v).collect();
        let g = Graph::no_grad();
        let logits = model.logits(&g, &batch_tensor(&rows))?;
        out.extend(argmax_rows(&logits, k));
    }
    Ok(out)
}

/// Accuracy, confusion matrix and single-frame latency of a classifier.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `confusion[true_class][predicted_class]`
    pub confusion: Vec<Vec<usize>>,
    /// Median wall time of a single-image forward pass.
    pub median_latency_us: f64,
}

impl EvalReport {
    /// Per-class recall; NaN-free (classes with no samples report 0).
    pub fn recalls(&self) -> Vec<f64> {
        self.confusion
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let total: usize = row.iter().sum();
                if total == 0 {
                    0.0
                } else {
                    row[i] as f64 / total as f64
                }
            })
            .collect()
    }
}

/// Evaluate on labeled `[0,1]` images. `timing_passes` single-image forwards
/// (at least 100) produce the median latency.
pub fn evaluate<C: Classifier>(
    model: &C,
    images: &[(Tensor<f32>, u16)],
    timing_passes: usize,
) -> Result<EvalReport> {
    let k = model.n_classes();
    let data = to_signed(images, k)?;

    let mut confusion = vec![vec![0usize; k]; k];
    let mut correct = 0usize;
    for chunk in data.chunks(EVAL_BATCH) {
        let rows: Vec<&Vec<f32>> = chunk.iter().map(|(v, _)| v).collect();
        let g = Graph::no_grad();
        let logits = model.logits(&g, &batch_tensor(&rows))?;
        for (pred, (_, truth)) in argmax_rows(&logits, k).into_iter().zip(chunk) {
            confusion[usize::from(*truth)][usize::from(pred)] += 1;
            if pred == *truth {
                correct += 1;
            }
        }
    }

    // single-frame latency: median over repeated passes on one image
    let passes = timing_passes.max(100);
    let one = batch_tensor(&[&data[0].0]);
    for _ in 0..3 {
        let g = Graph::no_grad();
        model.logits(&g, &one)?;
    }
    let mut times_us = Vec::with_capacity(passes);
    for _ in 0..passes {
        let g = Graph::no_grad();
        let t0 = Instant::now();
        model.logits(&g, &one)?;
        times_us.push(t0.elapsed().as_secs_f64() * 1e6);
    }
    times_us.sort_by(f64::total_cmp);
    let median_latency_us = times_us[times_us.len() / 2];

    let n = data.len();
    Ok(EvalReport {
        n,
        correct,
        accuracy: correct as f64 / n as f64,
        confusion,
        median_latency_us,
    })
}

/// Draw `n` images from the generator (stream `"gen.latent"` of `seed`),
/// mapped back to `[0,1]`.
pub fn generate(gen: &Generator, n: usize, seed: u64) -> Result<Vec<Tensor<f32>>> {
    let mut rng = RngStream::new(seed, "gen.latent");
    let mut out = Vec::with_capacity(n);
    let mut remaining = n;
    while remaining > 0 {
        let b = remaining.min(EVAL_BATCH);
        let g = Graph::no_grad();
        let z = gen.sample_latent(b, &mut rng);
        let imgs = gen.forward(&g, &z)?;
        let data = imgs.data();
        let stride = IMG_CHANNELS * IMG_SIDE * IMG_SIDE;
        for s in 0..b {
            let img: Vec<f32> = data[s * stride..(s + 1) * stride]
                .iter()
                .map(|&v| ((v + 1.0) / 2.0).clamp(0.0, 1.0))
                .collect();
            out.push(Tensor::from_vec(&[IMG_CHANNELS, IMG_SIDE, IMG_SIDE], img)?);
        }
        remaining -= b;
    }
    Ok(out)
}

/// The discriminator's belief that each `[0,1]` image is real:
/// `1 - P(fake)` under the K+1 softmax.
pub fn realness(disc: &Discriminator, images: &[Tensor<f32>]) -> Result<Vec<f64>> {
    let labeled: Vec<(Tensor<f32>, u16)> = images.iter().map(|t| (t.clone(), 0)).collect();
    let data = to_signed(&labeled, 1)?;
    let k = disc.n_classes;
    let mut out = Vec::with_capacity(images.len());
    for chunk in data.chunks(EVAL_BATCH) {
        let rows: Vec<&Vec<f32>> = chunk.iter().map(|(v, _)| v).collect();
        let g = Graph::no_grad();
        let logits = disc.logits(&g, &batch_tensor(&rows))?;
        let probs = g.softmax(&logits)?;
        let pd = probs.data();
        for row in pd.chunks_exact(k + 1) {
            out.push(1.0 - f64::from(row[k]));
        }
    }
    Ok(out)
}

/// Uniform-noise images in `[0,1]`, for real-ness baselines.
pub fn noise_images(n: usize, seed: u64) -> Vec<Tensor<f32>> {
    let mut rng = RngStream::new(seed, "noise.images");
    (0..n)
        .map(|_| {
            let data: Vec<f32> = (0..IMG_CHANNELS * IMG_SIDE * IMG_SIDE)
                .map(|_| rng.uniform(0.0f64..1.0) as f32)
                .collect();
            Tensor::from_vec(&[IMG_CHANNELS, IMG_SIDE, IMG_SIDE], data).expect("image dims agree")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::{Activation, KernelKind};

    #[test]
    fn generate_is_deterministic_and_bounded() {
        let gen = Generator::new(100, 21);
        let a = generate(&gen, 3, 5).unwrap();
        let b = generate(&gen, 3, 5).unwrap();
        let c = generate(&gen, 3, 6).unwrap();
        assert_eq!(a.len(), 3);
        for ((x, y), z) in a.iter().zip(&b).zip(&c) {
            assert_eq!(x.dims(), &[2, 64, 64]);
            assert_eq!(x.to_vec(), y.to_vec());
            assert_ne!(x.to_vec(), z.to_vec());
            assert!(x.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn realness_is_a_probability() {
        let disc = Discriminator::new(4, KernelKind::Standard, Activation::Selu, 22);
        let imgs = noise_images(5, 1);
        let r = realness(&disc, &imgs).unwrap();
        assert_eq!(r.len(), 5);
        assert!(r.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn evaluate_counts_and_confusion_shape() {
        let disc = Discriminator::new(3, KernelKind::Standard, Activation::Selu, 23);
        let images: Vec<(Tensor<f32>, u16)> = noise_images(7, 2)
            .into_iter()
            .zip([0u16, 1, 2, 0, 1, 2, 0])
            .collect();
        let report = evaluate(&disc, &images, 0).unwrap();
        assert_eq!(report.n, 7);
        assert_eq!(report.confusion.len(), 3);
        let total: usize = report.confusion.iter().flatten().sum();
        assert_eq!(total, 7);
        assert!(report.median_latency_us > 0.0);
        assert_eq!(report.recalls().len(), 3);
        // label out of range rejected
        let bad = vec![(noise_images(1, 3).remove(0), 9u16)];
        assert!(evaluate(&disc, &bad, 0).is_err());
    }

    #[test]
    fn classify_matches_evaluate_predictions() {
        let disc = Discriminator::new(3, KernelKind::Standard, Activation::SeluBn, 24);
        let imgs = noise_images(4, 4);
        let preds = classify(&disc, &imgs).unwrap();
        assert_eq!(preds.len(), 4);
        assert!(preds.iter().all(|&p| p < 3));
    }
}
