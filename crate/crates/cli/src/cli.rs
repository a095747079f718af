use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use handwave_core::nn::gradcheck;

use crate::bench::{run_bench, BENCH_CSV_HEADER};
use crate::config::{resolve, Overrides};
use crate::csvout::write_csv;
use crate::experiment::run_experiment;
use crate::stages::{run_eval, run_gen, run_synth, run_tfa, run_train, SplitSel, EVAL_CSV_HEADER};

/// Micro-Doppler gesture pipeline: synthesize CW radar captures, turn them
/// into time-frequency images, train and compare classifiers on them.
#[derive(Parser)]
#[command(name = "handwave", version, about)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON experiment config; defaults apply for every missing field.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<crate::config::ExperimentConfig> {
        resolve(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a raw I/Q frame dataset.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output dataset directory.
        #[arg(long, default_value = "frames")]
        out: PathBuf,
    },
    /// Transform a frame dataset into spectrogram images.
    Tfa {
        /// Frame dataset directory (from `synth`).
        frames: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output image dataset directory.
        #[arg(long, default_value = "images")]
        out: PathBuf,
    },
    /// Train the first configured axis on the train split of an image dataset.
    Train {
        /// Image dataset directory (from `tfa`).
        images: PathBuf,
        /// Training seed; defaults to the first configured seed.
        #[arg(long)]
        train_seed: Option<u64>,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Checkpoint directory to write.
        #[arg(long, default_value = "ckpt")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one split of an image dataset.
    Eval {
        /// Checkpoint directory (from `train`).
        ckpt: PathBuf,
        /// Image dataset directory.
        images: PathBuf,
        /// Which split to grade: train, val, test or all.
        #[arg(long, default_value = "test")]
        split: SplitSel,
        /// Timed single-image forward passes for the latency figure.
        #[arg(long, default_value_t = 100)]
        timing_passes: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// CSV report path (optional).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample images from a trained generator.
    Gen {
        /// GAN checkpoint directory.
        ckpt: PathBuf,
        /// Number of samples.
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for DGT tensors and PGM previews.
        #[arg(long, default_value = "samples")]
        out: PathBuf,
    },
    /// Time two checkpoints head to head on one identical input.
    Bench {
        ckpt_a: PathBuf,
        ckpt_b: PathBuf,
        /// Timed passes per model.
        #[arg(long, default_value_t = 100)]
        repeats: usize,
        /// Untimed passes per model before the clock starts.
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output path.
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
    },
    /// Finite-difference check of one registered layer (or all of them).
    Gradcheck {
        /// Layer name, e.g. deform-conv.
        layer: Option<String>,
        /// Check every registered layer.
        #[arg(long, conflicts_with = "layer")]
        all: bool,
        #[arg(long, default_value_t = gradcheck::DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = gradcheck::DEFAULT_EPS)]
        eps: f64,
        /// Relative-error tolerance; per-layer default when omitted.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the full comparison: synth, tfa, then train + eval per axis and seed.
    Experiment {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory for every stage artifact and results.csv.
        #[arg(long, default_value = "experiment")]
        out: PathBuf,
    },
}

pub fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth { cfg, out } => {
            let cfg = cfg.resolve()?;
            let n = run_synth(&cfg, &out).context("synth")?;
            println!("wrote {n} frames to {}", out.display());
        }
        Command::Tfa { frames, cfg, out } => {
            let cfg = cfg.resolve()?;
            let n = run_tfa(&frames, &cfg, &out).context("tfa")?;
            println!("wrote {n} {} images to {}", cfg.tfa.transform, out.display());
        }
        Command::Train {
            images,
            train_seed,
            cfg,
            out,
        } => {
            let cfg = cfg.resolve()?;
            let axis = &cfg.axes[0];
            let seed = train_seed.unwrap_or(cfg.train.seeds[0]);
            let trained = run_train(&images, &cfg, axis, seed, &out).context("train")?;
            let last = trained.stats.last().expect("at least one epoch");
            println!(
                "trained {} seed {seed}: {} params, epoch {} d_loss {:.4} g_loss {:.4} -> {}",
                axis.label(),
                trained.params,
                last.epoch,
                last.d_loss,
                last.g_loss,
                out.display()
            );
        }
        Command::Eval {
            ckpt,
            images,
            split,
            timing_passes,
            cfg,
            out,
        } => {
            let cfg = cfg.resolve()?;
            let ev = run_eval(&ckpt, &images, cfg.train.split, split, timing_passes).context("eval")?;
            println!(
                "{} on {split}: n {} accuracy {:.4} median_infer {:.1} us",
                ev.model, ev.report.n, ev.report.accuracy, ev.report.median_latency_us
            );
            for (c, r) in ev.report.recalls().iter().enumerate() {
                println!("  class {c} recall {r:.4}");
            }
            if let Some(path) = out {
                write_csv(&path, &EVAL_CSV_HEADER, &[ev.csv_row()])?;
                println!("wrote {}", path.display());
            }
        }
        Command::Gen { ckpt, n, seed, out } => {
            let g = run_gen(&ckpt, n, seed, &out).context("gen")?;
            println!(
                "wrote {} samples to {} (mean realness {:.4})",
                g.n,
                out.display(),
                g.mean_realness
            );
        }
        Command::Bench {
            ckpt_a,
            ckpt_b,
            repeats,
            warmup,
            seed,
            out,
        } => {
            let b = run_bench(&ckpt_a, &ckpt_b, repeats, warmup, seed).context("bench")?;
            for r in &b.rows {
                println!(
                    "{}: median {:.3} ms (p10 {:.3}, p90 {:.3}), {} params",
                    r.model, r.median_ms, r.p10_ms, r.p90_ms, r.params
                );
            }
            write_csv(&out, &BENCH_CSV_HEADER, &b.csv_rows())?;
            println!("wrote {}", out.display());
        }
        Command::Gradcheck {
            layer,
            all,
            trials,
            eps,
            tol,
            seed,
        } => {
            let layers: Vec<String> = if all {
                gradcheck::registered_layers().iter().map(|s| s.to_string()).collect()
            } else {
                match layer {
                    Some(l) => vec![l],
                    None => bail!("pass a layer name or --all (see --help)"),
                }
            };
            let mut failed = Vec::new();
            for name in &layers {
                let report = gradcheck::check(name, trials, eps, tol, seed)?;
                println!("{report}");
                if !report.pass {
                    failed.push(name.clone());
                }
            }
            if !failed.is_empty() {
                bail!("gradient check failed for: {}", failed.join(", "));
            }
        }
        Command::Experiment { cfg, out } => {
            let cfg = cfg.resolve()?;
            let result = run_experiment(&cfg, &out).context("experiment")?;
            println!("axis medians (test split):");
            for s in &result.summaries {
                match s.delta {
                    Some(d) => println!("  {} acc {:.4} (vs cnn {:+.4})", s.axis, s.acc_test, d),
                    None => println!("  {} acc {:.4}", s.axis, s.acc_test),
                }
            }
            println!("wrote {}", out.join("results.csv").display());
        }
    }
    Ok(())
}
