//! Synthetic CW-radar gesture capture.
//!
//! A hand gesture is a closed (or ping-ponged) trajectory in a plane through
//! the radar's line of sight. The radar sees range modulation
//! `R(t) = d + x(t)` (far-field: `x` is the LOS displacement), which shows up
//! as micro-Doppler in the demodulated I/Q stream of each receiver channel:
//!
//! ```text
//! s_k(t) = A(R) * exp(j * (4 pi f_c / c) * R(t) + j phi_k) + n_k(t)
//! ```
//!
//! with `A(R) = (0.3 / R)^2` (unit amplitude at 0.3 m) and a 90-degree
//! inter-channel phase offset, plus optional white complex noise at a
//! configured SNR.

pub mod synth;
pub mod trajectory;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use num_complex::Complex64;

pub use synth::{make_dataset, synthesize, SynthParams};

/// Propagation speed used throughout (m/s).
pub const SPEED_OF_LIGHT: f64 = 2.998e8;
/// Carrier frequency of the CW radar (Hz).
pub const CARRIER_HZ: f64 = 5.8e9;
/// Range at which the received amplitude is 1.
pub const REFERENCE_RANGE_M: f64 = 0.3;

/// Doppler shift of a target closing at `v` m/s.
pub fn doppler_hz(v_mps: f64) -> f64 {
    2.0 * v_mps * CARRIER_HZ / SPEED_OF_LIGHT
}

/// The four primitive gestures.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum BasicGesture {
    Circle,
    Square,
    Tick,
    Cross,
}

impl BasicGesture {
    pub const ALL: [BasicGesture; 4] = [
        BasicGesture::Circle,
        BasicGesture::Square,
        BasicGesture::Tick,
        BasicGesture::Cross,
    ];

    fn name(self) -> &'static str {
        match self {
            BasicGesture::Circle => "circle",
            BasicGesture::Square => "square",
            BasicGesture::Tick => "tick",
            BasicGesture::Cross => "cross",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "circle" => BasicGesture::Circle,
            "square" => BasicGesture::Square,
            "tick" => BasicGesture::Tick,
            "cross" => BasicGesture::Cross,
            _ => return None,
        })
    }
}

/// A gesture class: a primitive, an ordered pair of distinct primitives
/// performed back to back, a reversed or double-speed variant, or the
/// straight-line calibration stroke (a pure Doppler tone, used by tests and
/// diagnostics).
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum GestureKind {
    Basic(BasicGesture),
    Pair(BasicGesture, BasicGesture),
    Reversed(BasicGesture),
    Fast(BasicGesture),
    Linear,
}

impl GestureKind {
    /// Speed multiplier relative to the nominal hand speed.
    pub fn speed_factor(&self) -> f64 {
        match self {
            GestureKind::Fast(_) => 2.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for GestureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GestureKind::Basic(b) => f.write_str(b.name()),
            GestureKind::Pair(a, b) => write!(f, "{}+{}", a.name(), b.name()),
            GestureKind::Reversed(b) => write!(f, "{}-rev", b.name()),
            GestureKind::Fast(b) => write!(f, "{}-fast", b.name()),
            GestureKind::Linear => f.write_str("linear"),
        }
    }
}

impl FromStr for GestureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownKind(s.to_string());
        if s == "linear" {
            return Ok(GestureKind::Linear);
        }
        if let Some(b) = BasicGesture::parse(s) {
            return Ok(GestureKind::Basic(b));
        }
        if let Some((a, b)) = s.split_once('+') {
            let (a, b) = (
                BasicGesture::parse(a).ok_or_else(unknown)?,
                BasicGesture::parse(b).ok_or_else(unknown)?,
            );
            if a == b {
                return Err(unknown()); // pairs are of distinct gestures
            }
            return Ok(GestureKind::Pair(a, b));
        }
        if let Some(base) = s.strip_suffix("-rev") {
            return Ok(GestureKind::Reversed(BasicGesture::parse(base).ok_or_else(unknown)?));
        }
        if let Some(base) = s.strip_suffix("-fast") {
            return Ok(GestureKind::Fast(BasicGesture::parse(base).ok_or_else(unknown)?));
        }
        Err(unknown())
    }
}

/// The class list for an `n`-way problem.
///
/// * 4 classes: the primitives.
/// * 24 classes: 4 primitives + the 12 ordered pairs of distinct primitives
///   + 4 reversed + 4 double-speed variants.
pub fn class_catalog(n: usize) -> Result<Vec<GestureKind>> {
    let mut classes: Vec<GestureKind> = BasicGesture::ALL.iter().map(|&b| GestureKind::Basic(b)).collect();
    match n {
        4 => Ok(classes),
        24 => {
            for &a in &BasicGesture::ALL {
                for &b in &BasicGesture::ALL {
                    if a != b {
                        classes.push(GestureKind::Pair(a, b));
                    }
                }
            }
            for &b in &BasicGesture::ALL {
                classes.push(GestureKind::Reversed(b));
            }
            for &b in &BasicGesture::ALL {
                classes.push(GestureKind::Fast(b));
            }
            debug_assert_eq!(classes.len(), 24);
            Ok(classes)
        }
        other => Err(Error::UnknownKind(format!("no {other}-class catalog (4 or 24)"))),
    }
}

/// Full description of one synthetic capture.
#[derive(Clone, Debug, PartialEq)]
pub struct GestureSpec {
    pub kind: GestureKind,
    /// Radar-to-gesture-center distance `d` (m).
    pub distance_m: f64,
    /// Side of the bounding box the path fits in (m). Must be `< distance_m`.
    pub scale_m: f64,
    /// Nominal hand speed along the path (m/s).
    pub speed_mps: f64,
    /// Capture length (s).
    pub duration_s: f64,
    /// Starting point along the path as a fraction of its length, in [0, 1).
    pub start_frac: f64,
    /// Seed for this capture's noise draws.
    pub seed: u64,
}

impl GestureSpec {
    pub fn new(kind: GestureKind, distance_m: f64, scale_m: f64, speed_mps: f64, duration_s: f64) -> Self {
        GestureSpec {
            kind,
            distance_m,
            scale_m,
            speed_mps,
            duration_s,
            start_frac: 0.0,
            seed: 0,
        }
    }
}

/// One captured frame: two I/Q channels plus the provenance needed to
/// regenerate it.
#[derive(Clone, Debug)]
pub struct IQFrame {
    pub spec: GestureSpec,
    pub fs_hz: f64,
    pub snr_db: Option<f64>,
    pub label: u16,
    pub channels: [Vec<Complex64>; 2],
}

impl IQFrame {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels[0].is_empty()
    }

    /// Packs the frame as a `[2, T, 2]` f32 tensor: channel, time, (re, im).
    pub fn to_tensor(&self) -> crate::Tensor<f32> {
        let t = self.len();
        let mut data = Vec::with_capacity(2 * t * 2);
        for ch in &self.channels {
            for z in ch {
                data.push(z.re as f32);
                data.push(z.im as f32);
            }
        }
        crate::Tensor::from_vec(&[2, t, 2], data).expect("frame dims consistent")
    }

    /// Rebuilds channels from a `[2, T, 2]` tensor (inverse of `to_tensor`,
    /// up to f32 rounding).
    pub fn channels_from_tensor(t: &crate::Tensor<f32>) -> Result<[Vec<Complex64>; 2]> {
        let d = t.dims();
        if d.len() != 3 || d[0] != 2 || d[2] != 2 {
            return Err(Error::BadDataset(format!("frame tensor must be [2,T,2], got {:?}", d)));
        }
        let n = d[1];
        let data = t.data();
        let mut out: [Vec<Complex64>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
        for ch in 0..2 {
            for i in 0..n {
                let base = (ch * n + i) * 2;
                out[ch].push(Complex64::new(data[base] as f64, data[base + 1] as f64));
            }
        }
        Ok(out)
    }
}
