//! Gesture paths, parameterized by arc length.
//!
//! Every gesture is reduced to a closed cycle in the plane (x = line of
//! sight, y = transverse), centered on the gesture center and fitting a
//! `scale x scale` box. Closed shapes are traversed CCW; open strokes
//! (tick, linear) are closed by retracing, so one "cycle" is out and back.
//! Positions are queried by arc length, which makes constant-speed
//! traversal trivial: `arc = start + v * t`.

use super::{BasicGesture, GestureKind};

#[derive(Clone, Debug)]
enum Seg {
    Line { p0: [f64; 2], p1: [f64; 2], len: f64 },
    /// CCW circular arc: angle theta0 + s / radius at arc length s.
    Arc { center: [f64; 2], radius: f64, theta0: f64, len: f64 },
}

impl Seg {
    fn len(&self) -> f64 {
        match self {
            Seg::Line { len, .. } | Seg::Arc { len, .. } => *len,
        }
    }

    fn at(&self, s: f64) -> [f64; 2] {
        match self {
            Seg::Line { p0, p1, len } => {
                let f = if *len > 0.0 { s / len } else { 0.0 };
                [p0[0] + f * (p1[0] - p0[0]), p0[1] + f * (p1[1] - p0[1])]
            }
            Seg::Arc { center, radius, theta0, .. } => {
                let th = theta0 + s / radius;
                [center[0] + radius * th.cos(), center[1] + radius * th.sin()]
            }
        }
    }
}

fn line(p0: [f64; 2], p1: [f64; 2]) -> Seg {
    let len = ((p1[0] - p0[0]).powi(2) + (p1[1] - p0[1]).powi(2)).sqrt();
    Seg::Line { p0, p1, len }
}

/// Consecutive line segments through `points`, optionally closed back to the
/// first point. Degenerate (zero-length) edges are dropped.
fn polyline(points: &[[f64; 2]], close: bool) -> Vec<Seg> {
    let mut segs = Vec::new();
    for w in points.windows(2) {
        let seg = line(w[0], w[1]);
        if seg.len() > 0.0 {
            segs.push(seg);
        }
    }
    if close && points.len() > 1 {
        let seg = line(points[points.len() - 1], points[0]);
        if seg.len() > 0.0 {
            segs.push(seg);
        }
    }
    segs
}

/// One cycle of a basic gesture. Open strokes are retraced to close them.
fn basic_cycle(b: BasicGesture, scale: f64) -> Vec<Seg> {
    let h = scale / 2.0;
    match b {
        // Start at the top of the circle: x_los(0) = 0, so a capture that
        // never moves sits exactly at the nominal distance.
        BasicGesture::Circle => {
            let radius = h;
            vec![Seg::Arc {
                center: [0.0, 0.0],
                radius,
                theta0: std::f64::consts::FRAC_PI_2,
                len: std::f64::consts::TAU * radius,
            }]
        }
        BasicGesture::Square => polyline(
            &[[h, 0.0], [h, h], [-h, h], [-h, -h], [h, -h]],
            true,
        ),
        BasicGesture::Tick => {
            let stroke = [[-h, 0.0], [-h / 3.0, -h], [h, h]];
            retraced(polyline(&stroke, false))
        }
        BasicGesture::Cross => polyline(
            &[[-h, h], [h, -h], [-h, -h], [h, h]],
            true,
        ),
    }
}

fn linear_cycle(scale: f64) -> Vec<Seg> {
    let h = scale / 2.0;
    retraced(polyline(&[[-h, 0.0], [h, 0.0]], false))
}

/// Appends the reverse of `segs`, closing an open stroke by retracing it.
fn retraced(mut segs: Vec<Seg>) -> Vec<Seg> {
    let back: Vec<Seg> = segs
        .iter()
        .rev()
        .map(|s| match s {
            Seg::Line { p0, p1, len } => Seg::Line { p0: *p1, p1: *p0, len: *len },
            Seg::Arc { .. } => unreachable!("open strokes are polylines"),
        })
        .collect();
    segs.extend(back);
    segs
}

fn start_of(segs: &[Seg]) -> [f64; 2] {
    segs[0].at(0.0)
}

/// A gesture cycle, queryable by arc length.
#[derive(Clone, Debug)]
pub struct Trajectory {
    segs: Vec<Seg>,
    len: f64,
    reversed: bool,
}

impl Trajectory {
    pub fn new(kind: GestureKind, scale: f64) -> Self {
        let (segs, reversed) = match kind {
            GestureKind::Basic(b) | GestureKind::Fast(b) => (basic_cycle(b, scale), false),
            GestureKind::Reversed(b) => (basic_cycle(b, scale), true),
            GestureKind::Linear => (linear_cycle(scale), false),
            GestureKind::Pair(a, b) => {
                let ca = basic_cycle(a, scale);
                let cb = basic_cycle(b, scale);
                let (sa, sb) = (start_of(&ca), start_of(&cb));
                let mut segs = ca;
                let over = line(sa, sb);
                let back = line(sb, sa);
                if over.len() > 0.0 {
                    segs.push(over);
                }
                segs.extend(cb);
                if back.len() > 0.0 {
                    segs.push(back);
                }
                (segs, false)
            }
        };
        let len = segs.iter().map(Seg::len).sum();
        Trajectory { segs, len, reversed }
    }

    /// Cycle length (m).
    pub fn len(&self) -> f64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.segs.is_empty()
    }

    /// Position after traveling `arc` meters from the start (wraps around the
    /// cycle; negative arcs wrap backwards).
    pub fn position(&self, arc: f64) -> [f64; 2] {
        let mut s = arc.rem_euclid(self.len);
        if self.reversed {
            s = self.len - s;
        }
        for seg in &self.segs {
            if s <= seg.len() {
                return seg.at(s);
            }
            s -= seg.len();
        }
        // float slack at the very end of the cycle
        let last = self.segs.last().expect("non-empty trajectory");
        last.at(last.len())
    }
}

/// Length of one cycle of `kind` at the given scale.
pub fn path_length(kind: GestureKind, scale: f64) -> f64 {
    Trajectory::new(kind, scale).len()
}

/// Position at arc length `arc` along one cycle. Convenience wrapper; build a
/// [`Trajectory`] when sampling many points.
pub fn position(kind: GestureKind, scale: f64, arc: f64) -> [f64; 2] {
    Trajectory::new(kind, scale).position(arc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radar::class_catalog;

    const EPS: f64 = 1e-9;

    fn close(a: [f64; 2], b: [f64; 2]) -> bool {
        (a[0] - b[0]).abs() < EPS && (a[1] - b[1]).abs() < EPS
    }

    #[test]
    fn every_cycle_closes_and_wraps() {
        for kind in class_catalog(24).unwrap() {
            let t = Trajectory::new(kind, 0.2);
            assert!(t.len() > 0.0);
            assert!(close(t.position(t.len()), t.position(0.0)), "{kind} does not close");
            assert!(close(t.position(0.37 + t.len()), t.position(0.37)), "{kind} does not wrap");
            assert!(close(t.position(-0.1), t.position(t.len() - 0.1)), "{kind} negative wrap");
        }
    }

    #[test]
    fn cycles_fill_but_never_leave_the_box() {
        let scale = 0.3;
        let h = scale / 2.0;
        for kind in class_catalog(24).unwrap() {
            let t = Trajectory::new(kind, scale);
            let (mut max_x, mut max_y) = (0.0f64, 0.0f64);
            for i in 0..5000 {
                let p = t.position(t.len() * i as f64 / 5000.0);
                assert!(p[0].abs() <= h + EPS && p[1].abs() <= h + EPS, "{kind} leaves box at {p:?}");
                max_x = max_x.max(p[0].abs());
                max_y = max_y.max(p[1].abs());
            }
            assert!(max_x > h * 0.99, "{kind} too narrow: {max_x}");
            assert!(max_y > h * 0.99, "{kind} too short: {max_y}");
        }
    }

    #[test]
    fn circle_is_round_and_unit_speed() {
        let t = Trajectory::new(GestureKind::Basic(BasicGesture::Circle), 0.2);
        let r = 0.1;
        assert!((t.len() - std::f64::consts::TAU * r).abs() < EPS);
        let dh = 1e-6;
        for i in 0..100 {
            let s = t.len() * i as f64 / 100.0;
            let p = t.position(s);
            assert!((p[0].hypot(p[1]) - r).abs() < EPS);
            let q = t.position(s + dh);
            let speed = ((q[0] - p[0]).hypot(q[1] - p[1])) / dh;
            assert!((speed - 1.0).abs() < 1e-4, "speed {speed} at {s}");
        }
        // starts at the top, heading in -x (CCW)
        assert!(close(t.position(0.0), [0.0, r]));
        assert!(t.position(1e-3)[0] < 0.0);
    }

    #[test]
    fn perimeters_match_geometry() {
        let s = 0.4;
        let sq2 = std::f64::consts::SQRT_2;
        let cases = [
            (GestureKind::Basic(BasicGesture::Circle), std::f64::consts::PI * s),
            (GestureKind::Basic(BasicGesture::Square), 4.0 * s),
            (GestureKind::Basic(BasicGesture::Cross), 2.0 * s * (1.0 + sq2)),
            (GestureKind::Linear, 2.0 * s),
        ];
        for (kind, want) in cases {
            assert!((path_length(kind, s) - want).abs() < EPS, "{kind}");
        }
        // tick: out-and-back over two line segments
        let one_way = s * ((1.0f64 / 9.0 + 0.25).sqrt() + (4.0f64 / 9.0 + 1.0).sqrt());
        assert!((path_length(GestureKind::Basic(BasicGesture::Tick), s) - 2.0 * one_way).abs() < EPS);
    }

    #[test]
    fn open_strokes_retrace_themselves() {
        for kind in [GestureKind::Basic(BasicGesture::Tick), GestureKind::Linear] {
            let t = Trajectory::new(kind, 0.2);
            for i in 1..50 {
                let s = t.len() / 2.0 * i as f64 / 50.0;
                assert!(close(t.position(s), t.position(t.len() - s)), "{kind} at {s}");
            }
        }
    }

    #[test]
    fn reversal_flips_the_parameter() {
        for b in BasicGesture::ALL {
            let fwd = Trajectory::new(GestureKind::Basic(b), 0.2);
            let rev = Trajectory::new(GestureKind::Reversed(b), 0.2);
            assert_eq!(fwd.len(), rev.len());
            for i in 0..40 {
                let s = fwd.len() * i as f64 / 40.0;
                assert!(close(rev.position(s), fwd.position(fwd.len() - s)), "{b:?} at {s}");
            }
        }
    }

    #[test]
    fn pair_walks_a_then_transit_then_b() {
        let (a, b) = (BasicGesture::Circle, BasicGesture::Square);
        let t = Trajectory::new(GestureKind::Pair(a, b), 0.2);
        let ca = Trajectory::new(GestureKind::Basic(a), 0.2);
        let cb = Trajectory::new(GestureKind::Basic(b), 0.2);
        let transit = {
            let (pa, pb) = (ca.position(0.0), cb.position(0.0));
            (pa[0] - pb[0]).hypot(pa[1] - pb[1])
        };
        assert!((t.len() - (ca.len() + cb.len() + 2.0 * transit)).abs() < EPS);
        // first leg is the full A cycle
        for i in 0..20 {
            let s = ca.len() * i as f64 / 20.0;
            assert!(close(t.position(s), ca.position(s)));
        }
        // after A and the transit we are walking B
        let off = ca.len() + transit;
        for i in 0..20 {
            let s = cb.len() * i as f64 / 20.0;
            assert!(close(t.position(off + s), cb.position(s)));
        }
    }
}
