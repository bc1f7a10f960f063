//! Walker kinematics: standing, straight legs at constant speed, in-place turns with a
//! triangular yaw-rate profile, and optional head glances on top of the body heading.

use std::f64::consts::PI;

use rand::Rng;

use crate::datamodel::{circular_diff, Angle, Position2D};

/// Fraction of a triangular-rate manoeuvre completed at normalised time `u`.
fn s_curve(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    if u <= 0.5 {
        2.0 * u * u
    } else {
        1.0 - 2.0 * (1.0 - u) * (1.0 - u)
    }
}

/// Derivative of [`s_curve`] with respect to `u`.
fn s_rate(u: f64) -> f64 {
    if !(0.0..=1.0).contains(&u) {
        0.0
    } else if u <= 0.5 {
        4.0 * u
    } else {
        4.0 * (1.0 - u)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Segment {
    Stand { t0: f64, t1: f64, at: Position2D, psi: f64 },
    Walk { t0: f64, t1: f64, from: Position2D, psi: f64, speed: f64 },
    Turn { t0: f64, t1: f64, at: Position2D, psi: f64, delta: f64 },
}

impl Segment {
    fn span(&self) -> (f64, f64) {
        match *self {
            Segment::Stand { t0, t1, .. } | Segment::Walk { t0, t1, .. } | Segment::Turn { t0, t1, .. } => (t0, t1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Glance {
    pub t0: f64,
    pub amplitude: f64,
    pub out_s: f64,
    pub hold_s: f64,
}

impl Glance {
    fn end(&self) -> f64 {
        self.t0 + 2.0 * self.out_s + self.hold_s
    }

    /// Head yaw relative to the body and its rate, radians and rad/s.
    fn offset(&self, t: f64) -> (f64, f64) {
        let (a, d) = (self.amplitude, self.out_s);
        let back = self.t0 + d + self.hold_s;
        if t < self.t0 || t >= self.end() {
            (0.0, 0.0)
        } else if t < self.t0 + d {
            let u = (t - self.t0) / d;
            (a * s_curve(u), a * s_rate(u) / d)
        } else if t < back {
            (a, 0.0)
        } else {
            let u = (t - back) / d;
            (a * (1.0 - s_curve(u)), -a * s_rate(u) / d)
        }
    }
}

/// Instantaneous truth state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct State {
    pub position: Position2D,
    /// Body (walking) heading and its rate.
    pub body: f64,
    pub body_rate: f64,
    /// Head heading (body plus glance) and its rate.
    pub head: f64,
    pub head_rate: f64,
    /// Time since the current leg started, when walking.
    pub leg_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Timeline {
    pub segments: Vec<Segment>,
    pub glances: Vec<Glance>,
    pub duration: f64,
}

pub(crate) struct TimelineSpec<'a> {
    pub waypoints: &'a [Position2D],
    pub speed: f64,
    pub stand_s: f64,
    pub turn_s_per_90: f64,
    pub turn_jitter: f64,
    pub glances: Option<super::Glances>,
}

impl Timeline {
    pub fn build<R: Rng>(spec: &TimelineSpec<'_>, rng: &mut R) -> Timeline {
        let wps = spec.waypoints;
        let legs: Vec<(Position2D, f64, f64)> = wps
            .windows(2)
            .filter(|w| w[0].distance(&w[1]) > 0.0)
            .map(|w| {
                let d = w[1] - w[0];
                (w[0], d.y.atan2(d.x), d.norm())
            })
            .collect();
        let mut segments = Vec::new();
        let mut t = 0.0;
        let psi0 = legs[0].1;
        segments.push(Segment::Stand { t0: 0.0, t1: spec.stand_s, at: legs[0].0, psi: psi0 });
        t += spec.stand_s;
        for (k, &(from, psi, len)) in legs.iter().enumerate() {
            let dur = len / spec.speed;
            segments.push(Segment::Walk { t0: t, t1: t + dur, from, psi, speed: spec.speed });
            t += dur;
            if let Some(&(_, next, _)) = legs.get(k + 1) {
                let delta = circular_diff(Angle::from_radians(next), Angle::from_radians(psi));
                if delta.abs() > 1e-12 {
                    let jitter = 1.0 + spec.turn_jitter * rng.random_range(-1.0..1.0);
                    let dur = (spec.turn_s_per_90 * delta.abs() / (PI / 2.0)).max(0.3) * jitter;
                    let at = from + Position2D::step(len, Angle::from_radians(psi));
                    segments.push(Segment::Turn { t0: t, t1: t + dur, at, psi, delta });
                    t += dur;
                }
            }
        }
        let (last_from, last_psi, last_len) = *legs.last().expect("at least one leg");
        let end = last_from + Position2D::step(last_len, Angle::from_radians(last_psi));
        segments.push(Segment::Stand { t0: t, t1: t + spec.stand_s, at: end, psi: last_psi });
        let duration = t + spec.stand_s;

        let mut glances = Vec::new();
        if let Some(super::Glances {
            per_minute,
            amplitude_deg: (amp_lo, amp_hi),
            out_s,
            hold_s: (hold_lo, hold_hi),
        }) = spec.glances
        {
            let rate = per_minute / 60.0;
            let mut g = spec.stand_s;
            loop {
                // exponential inter-arrival times
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                g += -u.ln() / rate;
                let amp = rng.random_range(amp_lo..=amp_hi).to_radians();
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let hold = rng.random_range(hold_lo..=hold_hi);
                let glance = Glance { t0: g, amplitude: sign * amp, out_s, hold_s: hold };
                if glance.end() > duration - spec.stand_s {
                    break;
                }
                if glances.last().is_none_or(|p: &Glance| p.end() < glance.t0) {
                    glances.push(glance);
                }
            }
        }
        Timeline { segments, glances, duration }
    }

    pub fn state(&self, t: f64) -> State {
        let seg = self
            .segments
            .iter()
            .find(|s| t < s.span().1)
            .unwrap_or_else(|| self.segments.last().expect("non-empty timeline"));
        let (position, body, body_rate, leg_time) = match *seg {
            Segment::Stand { at, psi, .. } => (at, psi, 0.0, None),
            Segment::Walk { t0, t1, from, psi, speed } => {
                let tau = (t - t0).clamp(0.0, t1 - t0);
                (from + Position2D::step(speed * tau, Angle::from_radians(psi)), psi, 0.0, Some(t - t0))
            }
            Segment::Turn { t0, t1, at, psi, delta } => {
                let u = (t - t0) / (t1 - t0);
                (at, psi + delta * s_curve(u), delta * s_rate(u) / (t1 - t0), None)
            }
        };
        let (g, g_rate) = self
            .glances
            .iter()
            .find(|gl| t >= gl.t0 && t < gl.end())
            .map_or((0.0, 0.0), |gl| gl.offset(t));
        State {
            position,
            body,
            body_rate,
            head: body + g,
            head_rate: body_rate + g_rate,
            leg_time,
        }
    }

    /// Step peak times: `(k + 0.5) / step_hz` after each leg start, within the leg.
    pub fn stride_times(&self, step_hz: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for seg in &self.segments {
            if let Segment::Walk { t0, t1, .. } = *seg {
                let mut k = 0;
                loop {
                    let t = t0 + (k as f64 + 0.5) / step_hz;
                    if t >= t1 {
                        break;
                    }
                    out.push(t);
                    k += 1;
                }
            }
        }
        out
    }
}
