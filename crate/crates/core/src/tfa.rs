//! Time-frequency analysis: STFT and CWT spectrograms of I/Q captures.
//!
//! Both transforms keep the full complex spectrum — the sign of a Doppler
//! shift is the difference between an approaching and a receding hand, so
//! collapsing to magnitude-only frequencies would throw away the most
//! discriminative part of the signal. The STFT is DC-centered (negative
//! frequencies in the top rows... i.e. row 0 is -fs/2, the middle row is DC).
//! The CWT uses an analytic Morlet and covers a positive log-frequency band.
//!
//! Spectrogram powers are turned into classifier food by `log1p` compression,
//! per-image min-max normalization and bilinear resampling to a square image,
//! one image channel per receiver channel.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

pub use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radar::IQFrame;
use crate::Tensor;

/// A power spectrogram with labeled axes. `power` is row-major
/// `[rows, cols]`; `freqs_hz` ascends.
#[derive(Clone, Debug)]
pub struct Spectrogram {
    pub rows: usize,
    pub cols: usize,
    pub power: Vec<f64>,
    pub freqs_hz: Vec<f64>,
    pub times_s: Vec<f64>,
}

impl Spectrogram {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.power[row * self.cols + col]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StftParams {
    pub window: usize,
    pub hop: usize,
}

impl Default for StftParams {
    fn default() -> Self {
        StftParams { window: 64, hop: 4 }
    }
}

/// Symmetric Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 * (1.0 - (TAU * i as f64 / (n - 1) as f64).cos()))
        .collect()
}

/// Short-time Fourier transform, power spectrogram.
///
/// Hann-windowed segments every `hop` samples, full complex spectrum per
/// segment, DC-centered. `cols = 1 + (len - window) / hop`. Power is the
/// raw `|X[k]|^2` (so Parseval reads `sum_k power = window * sum_n |x w|^2`
/// per column).
pub fn stft(x: &[Complex64], fs_hz: f64, p: &StftParams) -> Result<Spectrogram> {
    let n = p.window;
    if n < 2 || n % 2 != 0 {
        return Err(Error::BadScale(format!("window {n} must be even and >= 2")));
    }
    if p.hop == 0 {
        return Err(Error::BadScale("hop must be >= 1".into()));
    }
    if n > x.len() {
        return Err(Error::WindowTooLong { window: n, signal: x.len() });
    }
    let cols = 1 + (x.len() - n) / p.hop;
    let w = hann(n);
    // n-th roots of unity; X[k] = sum_m y[m] * tw[(k*m) % n]
    let tw: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(1.0, -TAU * j as f64 / n as f64))
        .collect();

    let mut power = vec![0.0; n * cols];
    let mut seg = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..cols {
        let s0 = c * p.hop;
        for m in 0..n {
            seg[m] = x[s0 + m] * w[m];
        }
        for k in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, y) in seg.iter().enumerate() {
                acc += y * tw[(k * m) % n];
            }
            // fftshift: k >= n/2 are the negative frequencies
            let row = (k + n / 2) % n;
            power[row * cols + c] = acc.norm_sqr();
        }
    }

    let freqs_hz = (0..n).map(|r| (r as f64 - (n / 2) as f64) * fs_hz / n as f64).collect();
    let times_s = (0..cols).map(|c| ((c * p.hop) as f64 + (n - 1) as f64 / 2.0) / fs_hz).collect();
    Ok(Spectrogram { rows: n, cols, power, freqs_hz, times_s })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CwtParams {
    pub n_scales: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    /// Morlet center frequency (rad); scale a maps to f = omega0 / (2 pi a).
    pub omega0: f64,
    /// Wavelet truncated at |t| <= support * a.
    pub support: f64,
    pub hop: usize,
}

impl Default for CwtParams {
    fn default() -> Self {
        CwtParams {
            n_scales: 64,
            f_min_hz: 2.0,
            f_max_hz: 60.0,
            omega0: 6.0,
            support: 4.0,
            hop: 4,
        }
    }
}

/// Continuous wavelet transform with an analytic Morlet, power scalogram.
///
/// `n_scales` log-spaced center frequencies from `f_min_hz` to `f_max_hz`
/// (rows ascend in frequency), columns every `hop` samples, zero padding
/// outside the signal.
pub fn cwt(x: &[Complex64], fs_hz: f64, p: &CwtParams) -> Result<Spectrogram> {
    if x.is_empty() {
        return Err(Error::BadScale("empty signal".into()));
    }
    if p.n_scales == 0 {
        return Err(Error::BadScale("need at least one scale".into()));
    }
    if !(p.f_min_hz > 0.0 && p.f_min_hz < p.f_max_hz) {
        return Err(Error::BadScale(format!(
            "need 0 < f_min < f_max, got [{}, {}]",
            p.f_min_hz, p.f_max_hz
        )));
    }
    if p.f_max_hz > fs_hz / 2.0 {
        return Err(Error::BadScale(format!(
            "f_max {} Hz above Nyquist {} Hz",
            p.f_max_hz,
            fs_hz / 2.0
        )));
    }
    if p.omega0 <= 0.0 || p.support <= 0.0 || p.hop == 0 {
        return Err(Error::BadScale("omega0, support and hop must be positive".into()));
    }

    let freqs_hz: Vec<f64> = (0..p.n_scales)
        .map(|i| {
            if p.n_scales == 1 {
                p.f_min_hz
            } else {
                p.f_min_hz * (p.f_max_hz / p.f_min_hz).powf(i as f64 / (p.n_scales - 1) as f64)
            }
        })
        .collect();

    let cols = 1 + (x.len() - 1) / p.hop;
    let dt = 1.0 / fs_hz;
    let norm = PI.powf(-0.25);
    let mut power = vec![0.0; p.n_scales * cols];
    for (row, &f) in freqs_hz.iter().enumerate() {
        let a = p.omega0 / (TAU * f);
        let half = (p.support * a * fs_hz).ceil() as i64;
        // conj(psi_a(t)) sampled on the tap grid
        let taps: Vec<Complex64> = (-half..=half)
            .map(|j| {
                let t = j as f64 * dt;
                let env = norm / a.sqrt() * (-t * t / (2.0 * a * a)).exp();
                Complex64::from_polar(env, -p.omega0 * t / a)
            })
            .collect();
        for c in 0..cols {
            let center = (c * p.hop) as i64;
            let mut acc = Complex64::new(0.0, 0.0);
            for (ti, tap) in taps.iter().enumerate() {
                let idx = center + (ti as i64 - half);
                if idx >= 0 && (idx as usize) < x.len() {
                    acc += x[idx as usize] * tap;
                }
            }
            power[row * cols + c] = (acc * dt).norm_sqr();
        }
    }

    let times_s = (0..cols).map(|c| (c * p.hop) as f64 * dt).collect();
    Ok(Spectrogram {
        rows: p.n_scales,
        cols,
        power,
        freqs_hz,
        times_s,
    })
}

/// `ln(1 + 1000 p)` compression followed by min-max to [0, 1].
/// A constant image (no dynamic range) maps to all zeros.
pub fn log_normalize(power: &[f64]) -> Vec<f64> {
    let compressed: Vec<f64> = power.iter().map(|&p| (1.0 + 1e3 * p).ln()).collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in &compressed {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; power.len()];
    }
    compressed.iter().map(|&v| (v - lo) / range).collect()
}

/// Corner-aligned bilinear resample of a row-major `[h, w]` image.
pub fn resize_bilinear(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    assert_eq!(src.len(), h * w, "source extent mismatch");
    assert!(h > 0 && w > 0 && oh > 0 && ow > 0);
    let map = |o: usize, on: usize, sn: usize| -> f64 {
        if on <= 1 {
            0.0
        } else {
            o as f64 * (sn - 1) as f64 / (on - 1) as f64
        }
    };
    let mut out = vec![0.0; oh * ow];
    for oy in 0..oh {
        let fy = map(oy, oh, h);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let dy = fy - y0 as f64;
        for ox in 0..ow {
            let fx = map(ox, ow, w);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let dx = fx - x0 as f64;
            out[oy * ow + ox] = src[y0 * w + x0] * (1.0 - dy) * (1.0 - dx)
                + src[y0 * w + x1] * (1.0 - dy) * dx
                + src[y1 * w + x0] * dy * (1.0 - dx)
                + src[y1 * w + x1] * dy * dx;
        }
    }
    out
}

/// Which time-frequency transform to apply.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    Stft,
    Cwt,
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::Stft => "stft",
            Transform::Cwt => "cwt",
        })
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stft" => Ok(Transform::Stft),
            "cwt" => Ok(Transform::Cwt),
            other => Err(Error::UnknownKind(format!("transform {other:?} (stft or cwt)"))),
        }
    }
}

/// How to turn a capture into a fixed-size two-channel image.
///
/// `window` only affects the STFT; the CWT keeps its default scale grid
/// (its resolution is set by the scales, not a window).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageParams {
    pub transform: Transform,
    pub window: usize,
    pub hop: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for ImageParams {
    fn default() -> Self {
        ImageParams {
            transform: Transform::Stft,
            window: 64,
            hop: 4,
            height: 64,
            width: 64,
        }
    }
}

/// One capture -> one `[2, height, width]` image in [0, 1].
pub fn frame_to_image(frame: &IQFrame, p: &ImageParams) -> Result<Tensor<f32>> {
    if p.height == 0 || p.width == 0 {
        return Err(Error::BadScale("image sides must be >= 1".into()));
    }
    let mut data = Vec::with_capacity(2 * p.height * p.width);
    for ch in &frame.channels {
        let sg = match p.transform {
            Transform::Stft => stft(ch, frame.fs_hz, &StftParams { window: p.window, hop: p.hop })?,
            Transform::Cwt => cwt(ch, frame.fs_hz, &CwtParams { hop: p.hop, ..CwtParams::default() })?,
        };
        let img = log_normalize(&sg.power);
        let img = resize_bilinear(&img, sg.rows, sg.cols, p.height, p.width);
        data.extend(img.iter().map(|&v| v as f32));
    }
    Tensor::from_vec(&[2, p.height, p.width], data)
}

/// Transform a whole capture set, carrying labels through.
pub fn frames_to_images(frames: &[IQFrame], p: &ImageParams) -> Result<Vec<(Tensor<f32>, u16)>> {
    frames.iter().map(|f| Ok((frame_to_image(f, p)?, f.label))).collect()
}
