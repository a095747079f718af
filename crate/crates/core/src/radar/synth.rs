//! I/Q synthesis and dataset assembly.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use super::trajectory::Trajectory;
use super::{doppler_hz, GestureKind, GestureSpec, IQFrame, CARRIER_HZ, REFERENCE_RANGE_M, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Phase offsets of the two receiver channels (a quadrature pair).
const CHANNEL_PHASE: [f64; 2] = [0.0, FRAC_PI_2];

/// The four (distance, scale) placements a dataset cycles through, in meters.
/// Scale is always below distance so the hand never sweeps into the antenna.
pub const PLACEMENT_GRID: [(f64, f64); 4] = [(0.3, 0.2), (0.5, 0.2), (1.0, 0.2), (1.0, 0.5)];

/// Knobs for dataset generation.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub fs_hz: f64,
    /// `None` synthesizes noiseless frames.
    pub snr_db: Option<f64>,
    /// Nominal hand speed; per-sample speeds jitter around it.
    pub speed_mps: f64,
    pub duration_s: f64,
    pub seed: u64,
    /// Fractional speed jitter: each sample draws from
    /// `speed * (1 ± speed_jitter)`.
    pub speed_jitter: f64,
    /// Start-phase jitter: each sample starts up to this fraction of the way
    /// around its cycle.
    pub start_jitter: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            fs_hz: 500.0,
            snr_db: Some(20.0),
            speed_mps: 1.0,
            duration_s: 1.0,
            seed: 0,
            speed_jitter: 0.1,
            start_jitter: 0.25,
        }
    }
}

fn validate(spec: &GestureSpec, fs_hz: f64) -> Result<()> {
    let bad = |msg: String| Err(Error::BadGeometry(msg));
    let fields = [
        ("distance_m", spec.distance_m),
        ("scale_m", spec.scale_m),
        ("speed_mps", spec.speed_mps),
        ("duration_s", spec.duration_s),
        ("start_frac", spec.start_frac),
        ("fs_hz", fs_hz),
    ];
    for (name, v) in fields {
        if !v.is_finite() {
            return bad(format!("{name} = {v} is not finite"));
        }
    }
    if spec.distance_m <= 0.0 || spec.scale_m <= 0.0 || spec.duration_s <= 0.0 || fs_hz <= 0.0 {
        return bad(format!(
            "distance {} m, scale {} m, duration {} s, fs {} Hz must all be positive",
            spec.distance_m, spec.scale_m, spec.duration_s, fs_hz
        ));
    }
    if spec.speed_mps < 0.0 {
        return bad(format!("speed {} m/s is negative", spec.speed_mps));
    }
    if spec.scale_m >= spec.distance_m {
        return bad(format!(
            "gesture scale {} m must be smaller than its distance {} m",
            spec.scale_m, spec.distance_m
        ));
    }
    if !(0.0..1.0).contains(&spec.start_frac) {
        return bad(format!("start_frac {} outside [0, 1)", spec.start_frac));
    }
    let v_eff = spec.speed_mps * spec.kind.speed_factor();
    let max_doppler_hz = doppler_hz(v_eff);
    if max_doppler_hz > fs_hz / 2.0 {
        return Err(Error::NyquistViolation {
            max_doppler_hz,
            half_fs_hz: fs_hz / 2.0,
        });
    }
    Ok(())
}

/// Synthesize one two-channel I/Q capture of `spec` at `fs_hz`.
///
/// The model: the hand travels its cycle at constant speed, the radar sees
/// range `R(t) = d + x(t)` (x = line-of-sight displacement), and each channel
/// records
///
/// ```text
/// s_k(t) = (0.3 / R)^2 * exp(j * (4 pi f_c / c) * R + j phi_k) + n_k(t)
/// ```
///
/// with `phi = [0, pi/2]`. With `snr_db = Some(r)`, white complex Gaussian
/// noise is added at `r` dB below the frame's mean signal power; the draws
/// come from streams `"noise.ch0"` / `"noise.ch1"` of `spec.seed`, so frames
/// are reproducible sample-for-sample.
///
/// The caller owns labeling: the returned frame has `label = 0`.
pub fn synthesize(spec: &GestureSpec, fs_hz: f64, snr_db: Option<f64>) -> Result<IQFrame> {
    validate(spec, fs_hz)?;
    let v = spec.speed_mps * spec.kind.speed_factor();
    let traj = Trajectory::new(spec.kind, spec.scale_m);
    let start = spec.start_frac * traj.len();
    let n = (fs_hz * spec.duration_s).round() as usize;
    let k_phase = 4.0 * PI * CARRIER_HZ / SPEED_OF_LIGHT;

    let mut channels: [Vec<Complex64>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for i in 0..n {
        let t = i as f64 / fs_hz;
        let x = traj.position(start + v * t)[0];
        let r = spec.distance_m + x;
        let amp = (REFERENCE_RANGE_M / r).powi(2);
        let phase = k_phase * r;
        for (ch, &phi) in channels.iter_mut().zip(&CHANNEL_PHASE) {
            ch.push(Complex64::from_polar(amp, phase + phi));
        }
    }

    if let Some(snr) = snr_db {
        let p_sig = channels[0].iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        let sigma = (p_sig / 10f64.powf(snr / 10.0)).sqrt();
        let per_part = sigma / 2f64.sqrt(); // split across re/im
        for (ch, stream) in channels.iter_mut().zip(["noise.ch0", "noise.ch1"]) {
            let mut rng = RngStream::new(spec.seed, stream);
            for z in ch.iter_mut() {
                *z += Complex64::new(rng.normal() * per_part, rng.normal() * per_part);
            }
        }
    }

    Ok(IQFrame {
        spec: spec.clone(),
        fs_hz,
        snr_db,
        label: 0,
        channels,
    })
}

/// Generate `per_class` captures for every class in `classes`, labeled by
/// class index.
///
/// Each sample gets its own derived seed (`"sample.{class}.{i}"` off the
/// master seed), a placement from [`PLACEMENT_GRID`] cycled by sample index,
/// and jittered speed / start phase, so no two samples of a class are
/// identical yet the whole dataset is a pure function of `params`.
pub fn make_dataset(classes: &[GestureKind], per_class: usize, params: &SynthParams) -> Result<Vec<IQFrame>> {
    if classes.is_empty() || per_class == 0 {
        return Err(Error::EmptyDataset(format!(
            "{} classes x {per_class} samples",
            classes.len()
        )));
    }
    let mut frames = Vec::with_capacity(classes.len() * per_class);
    for (label, &kind) in classes.iter().enumerate() {
        for i in 0..per_class {
            let seed = RngStream::derive_seed(params.seed, &format!("sample.{kind}.{i}"));
            let mut jitter = RngStream::new(seed, "jitter");
            let (distance_m, scale_m) = PLACEMENT_GRID[i % PLACEMENT_GRID.len()];
            let speed_mps = params.speed_mps * (1.0 + params.speed_jitter * jitter.uniform(-1.0..=1.0));
            let start_frac = params.start_jitter * jitter.uniform(0.0..1.0);
            let spec = GestureSpec {
                kind,
                distance_m,
                scale_m,
                speed_mps,
                duration_s: params.duration_s,
                start_frac,
                seed,
            };
            let mut frame = synthesize(&spec, params.fs_hz, params.snr_db)?;
            frame.label = label as u16;
            frames.push(frame);
        }
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radar::{class_catalog, BasicGesture};

    fn quiet(kind: GestureKind, d: f64, scale: f64, speed: f64, duration: f64) -> IQFrame {
        let spec = GestureSpec::new(kind, d, scale, speed, duration);
        synthesize(&spec, 500.0, None).unwrap()
    }

    /// |DFT| at integer bin k (signed: negative k = negative frequency).
    fn dft_mag(x: &[Complex64], k: i64) -> f64 {
        let n = x.len() as f64;
        let w = -2.0 * PI * k as f64 / n;
        x.iter()
            .enumerate()
            .map(|(i, z)| z * Complex64::from_polar(1.0, w * i as f64))
            .sum::<Complex64>()
            .norm()
            / n
    }

    #[test]
    fn linear_stroke_concentrates_energy_at_the_doppler_line() {
        // 0.8 s at 1 m/s over a 0.2 m stroke = exactly two out-and-back
        // cycles; bin spacing 1.25 Hz.
        let frame = quiet(GestureKind::Linear, 0.5, 0.2, 1.0, 0.8);
        let n = frame.len() as i64;
        let df = frame.fs_hz / n as f64;
        let (mut best_k, mut best_mag) = (0i64, 0.0f64);
        for k in -n / 2..n / 2 {
            let m = dft_mag(&frame.channels[0], k);
            if m > best_mag {
                best_mag = m;
                best_k = k;
            }
        }
        let f_peak = (best_k as f64 * df).abs();
        let f_dop = doppler_hz(1.0);
        assert!(
            (f_peak - f_dop).abs() <= 2.5,
            "spectral peak at {f_peak:.2} Hz, expected the Doppler line {f_dop:.2} Hz"
        );
    }

    #[test]
    fn zero_speed_is_a_pure_carrier() {
        let frame = quiet(GestureKind::Basic(BasicGesture::Circle), 0.5, 0.2, 0.0, 0.2);
        for ch in &frame.channels {
            for z in ch {
                assert_eq!(*z, ch[0], "static capture should be constant");
            }
        }
    }

    #[test]
    fn channels_are_in_quadrature() {
        let frame = quiet(GestureKind::Basic(BasicGesture::Tick), 0.5, 0.2, 1.0, 0.5);
        let j = Complex64::new(0.0, 1.0);
        for (a, b) in frame.channels[0].iter().zip(&frame.channels[1]) {
            assert!((b - j * a).norm() <= 1e-9, "ch1 != j * ch0: {b} vs {}", j * a);
        }
    }

    #[test]
    fn received_power_follows_the_fourth_power_law() {
        // Static case: the circle's start point sits exactly at the nominal
        // distance, so doubling it divides power by exactly 2^4.
        let mean_power = |f: &IQFrame| f.channels[0].iter().map(|z| z.norm_sqr()).sum::<f64>() / f.len() as f64;
        let near = quiet(GestureKind::Basic(BasicGesture::Circle), 0.3, 0.2, 0.0, 0.1);
        let far = quiet(GestureKind::Basic(BasicGesture::Circle), 0.6, 0.2, 0.0, 0.1);
        let ratio = mean_power(&near) / mean_power(&far);
        assert!((ratio - 16.0).abs() < 1e-9, "static ratio {ratio}");

        // Moving case: range modulation skews the mean a little, but the
        // fourth-power law still holds to a few percent when the gesture is
        // small relative to its distance.
        let near = quiet(GestureKind::Basic(BasicGesture::Circle), 1.0, 0.2, 1.0, 2.0);
        let far = quiet(GestureKind::Basic(BasicGesture::Circle), 2.0, 0.2, 1.0, 2.0);
        let ratio = mean_power(&near) / mean_power(&far);
        assert!((ratio / 16.0 - 1.0).abs() < 0.05, "moving ratio {ratio}");
    }

    #[test]
    fn nyquist_guard_trips_exactly_when_doppler_exceeds_half_fs() {
        let fast = GestureSpec::new(GestureKind::Fast(BasicGesture::Circle), 0.5, 0.2, 1.0, 0.5);
        // v_eff = 2 m/s -> 77.4 Hz of Doppler
        assert!(synthesize(&fast, 160.0, None).is_ok());
        match synthesize(&fast, 150.0, None) {
            Err(Error::NyquistViolation { max_doppler_hz, half_fs_hz }) => {
                assert!((max_doppler_hz - doppler_hz(2.0)).abs() < 1e-9);
                assert_eq!(half_fs_hz, 75.0);
            }
            other => panic!("expected Nyquist violation, got {other:?}"),
        }
        // same fs is fine at nominal speed
        let slow = GestureSpec::new(GestureKind::Basic(BasicGesture::Circle), 0.5, 0.2, 1.0, 0.5);
        assert!(synthesize(&slow, 150.0, None).is_ok());
    }

    #[test]
    fn geometry_validation_rejects_nonsense() {
        let ok = GestureSpec::new(GestureKind::Basic(BasicGesture::Circle), 0.5, 0.2, 1.0, 0.5);
        assert!(synthesize(&ok, 500.0, None).is_ok());
        let cases = [
            GestureSpec { scale_m: 0.5, ..ok.clone() },  // scale == distance
            GestureSpec { scale_m: 0.7, ..ok.clone() },  // scale > distance
            GestureSpec { distance_m: -1.0, ..ok.clone() },
            GestureSpec { speed_mps: -0.1, ..ok.clone() },
            GestureSpec { duration_s: 0.0, ..ok.clone() },
            GestureSpec { start_frac: 1.0, ..ok.clone() },
            GestureSpec { start_frac: -0.2, ..ok.clone() },
            GestureSpec { distance_m: f64::NAN, ..ok.clone() },
        ];
        for spec in cases {
            assert!(
                matches!(synthesize(&spec, 500.0, None), Err(Error::BadGeometry(_))),
                "{spec:?} should be rejected"
            );
        }
    }

    #[test]
    fn noise_lands_at_the_requested_snr() {
        let mut spec = GestureSpec::new(GestureKind::Basic(BasicGesture::Circle), 0.5, 0.2, 1.0, 2.0);
        spec.seed = 9;
        let clean = synthesize(&spec, 500.0, None).unwrap();
        let noisy = synthesize(&spec, 500.0, Some(20.0)).unwrap();
        let (mut p_sig, mut p_noise) = (0.0, 0.0);
        let mut count = 0usize;
        for ch in 0..2 {
            for (c, y) in clean.channels[ch].iter().zip(&noisy.channels[ch]) {
                p_sig += c.norm_sqr();
                p_noise += (y - c).norm_sqr();
                count += 1;
            }
        }
        let snr = 10.0 * (p_sig / p_noise).log10();
        assert!(count >= 2000);
        assert!((snr - 20.0).abs() < 0.6, "empirical SNR {snr:.2} dB");
    }

    #[test]
    fn same_seed_same_frame_different_seed_different_noise() {
        let mut spec = GestureSpec::new(GestureKind::Basic(BasicGesture::Square), 0.5, 0.2, 1.0, 0.5);
        spec.seed = 11;
        let a = synthesize(&spec, 500.0, Some(10.0)).unwrap();
        let b = synthesize(&spec, 500.0, Some(10.0)).unwrap();
        assert_eq!(a.channels[0], b.channels[0]);
        assert_eq!(a.channels[1], b.channels[1]);
        spec.seed = 12;
        let c = synthesize(&spec, 500.0, Some(10.0)).unwrap();
        assert_ne!(a.channels[0], c.channels[0]);
    }

    #[test]
    fn dataset_cycles_placements_and_is_reproducible() {
        let classes = class_catalog(4).unwrap();
        let params = SynthParams {
            duration_s: 0.25,
            ..SynthParams::default()
        };
        let frames = make_dataset(&classes, 8, &params).unwrap();
        assert_eq!(frames.len(), 32);
        for (idx, f) in frames.iter().enumerate() {
            assert_eq!(f.label as usize, idx / 8);
            let (d, s) = PLACEMENT_GRID[idx % 8 % 4];
            assert_eq!((f.spec.distance_m, f.spec.scale_m), (d, s));
            assert!(f.spec.scale_m < f.spec.distance_m);
            let rel = f.spec.speed_mps / params.speed_mps;
            assert!((0.9..=1.1).contains(&rel), "speed jitter out of band: {rel}");
            assert!((0.0..0.25).contains(&f.spec.start_frac));
        }
        // distinct per-sample seeds
        let seeds: std::collections::HashSet<u64> = frames.iter().map(|f| f.spec.seed).collect();
        assert_eq!(seeds.len(), frames.len());
        // pure function of params
        let again = make_dataset(&classes, 8, &params).unwrap();
        for (a, b) in frames.iter().zip(&again) {
            assert_eq!(a.channels[0], b.channels[0]);
        }
        assert!(make_dataset(&[], 4, &params).is_err());
        assert!(make_dataset(&classes, 0, &params).is_err());
    }
}
