//! Phone-referenced rolling-window offset for the earable magnetometer heading.

use crate::datamodel::{circular_diff, circular_mean, Angle};

pub const WINDOW_CAP: usize = 15;
pub const MIN_SPACING_S: f64 = 15.0;

#[derive(Clone, Debug, PartialEq)]
pub struct MagCalibState {
    /// Time-ordered `(t, offset)` pairs, at most `cap` long, spaced at least `spacing` s.
    pub window: Vec<(f64, Angle)>,
    pub current_offset: Angle,
    pub last_point_time: Option<f64>,
    pub cap: usize,
    pub spacing: f64,
    /// Reference points dropped for arriving too soon after the previous one.
    pub dropped: usize,
    pub rollovers: usize,
}

impl Default for MagCalibState {
    fn default() -> Self {
        MagCalibState::new(WINDOW_CAP, MIN_SPACING_S)
    }
}

impl MagCalibState {
    pub fn new(cap: usize, spacing: f64) -> Self {
        MagCalibState {
            window: Vec::new(),
            current_offset: Angle::ZERO,
            last_point_time: None,
            cap: cap.max(1),
            spacing,
            dropped: 0,
            rollovers: 0,
        }
    }

    pub fn is_calibrated(&self) -> bool {
        !self.window.is_empty()
    }

    pub fn apply(&self, earable_heading: Angle) -> Angle {
        earable_heading.rotated(self.current_offset.radians())
    }

    fn recompute(mut self) -> Self {
        let offsets: Vec<Angle> = self.window.iter().map(|p| p.1).collect();
        // an antipodal window has no mean; keep the newest offset then
        self.current_offset = circular_mean(&offsets, None)
            .unwrap_or_else(|_| offsets.last().copied().unwrap_or(Angle::ZERO));
        self
    }
}

pub fn mag_add_reference_point(
    state: &MagCalibState,
    t: f64,
    phone_heading: Angle,
    earable_heading: Angle,
) -> MagCalibState {
    let mut next = state.clone();
    if let Some(last) = state.last_point_time {
        if t < last + state.spacing - 1e-9 {
            next.dropped += 1;
            return next;
        }
    }
    next.window
        .push((t, Angle::from_radians(circular_diff(phone_heading, earable_heading))));
    if next.window.len() > next.cap {
        let excess = next.window.len() - next.cap;
        next.window.drain(..excess);
    }
    next.last_point_time = Some(t);
    next.recompute()
}

/// True when consecutive wrapped headings jump across north.
pub fn crosses_north(prev: Angle, new: Angle) -> bool {
    (new.radians() - prev.radians()).abs() > std::f64::consts::PI
}

pub fn mag_check_rollover(state: &MagCalibState, prev_heading: Angle, new_heading: Angle) -> MagCalibState {
    let mut next = state.clone();
    if !crosses_north(prev_heading, new_heading) {
        return next;
    }
    next.rollovers += 1;
    if let Some(&newest) = next.window.last() {
        next.window = vec![newest];
    }
    next.recompute()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn deg(d: f64) -> Angle {
        Angle::from_degrees(d)
    }

    fn assert_deg(a: Angle, want: f64) {
        assert!(circular_diff(a, deg(want)).abs() < 1e-9, "{} vs {want}", a.degrees());
    }

    #[test]
    fn single_point() {
        let s = mag_add_reference_point(&MagCalibState::default(), 0.0, deg(90.0), deg(80.0));
        assert_eq!(s.window.len(), 1);
        assert_deg(s.window[0].1, 10.0);
        assert_deg(s.current_offset, 10.0);
    }

    #[test]
    fn sixteenth_point_evicts_oldest() {
        let mut s = MagCalibState::default();
        for k in 0..16 {
            s = mag_add_reference_point(&s, 15.0 * k as f64, deg(k as f64), deg(0.0));
        }
        assert_eq!(s.window.len(), 15);
        assert_eq!(s.window[0].0, 15.0);
        assert_deg(s.current_offset, 8.0);
    }

    #[test]
    fn mean_across_north() {
        let s = mag_add_reference_point(&MagCalibState::default(), 0.0, deg(359.0), deg(0.0));
        let s = mag_add_reference_point(&s, 15.0, deg(1.0), deg(0.0));
        assert_deg(s.current_offset, 0.0);
    }

    #[test]
    fn early_points_dropped() {
        let s = mag_add_reference_point(&MagCalibState::default(), 0.0, deg(10.0), deg(0.0));
        let s = mag_add_reference_point(&s, 10.0, deg(50.0), deg(0.0));
        assert_eq!(s.window.len(), 1);
        assert_eq!(s.dropped, 1);
    }

    fn two_points() -> MagCalibState {
        let s = mag_add_reference_point(&MagCalibState::default(), 0.0, deg(10.0), deg(0.0));
        mag_add_reference_point(&s, 15.0, deg(20.0), deg(0.0))
    }

    #[test]
    fn rollover_resets_to_newest() {
        let s = two_points();
        for (a, b) in [(358.0, 1.0), (1.0, 358.0)] {
            let r = mag_check_rollover(&s, deg(a), deg(b));
            assert_eq!(r.window, vec![s.window[1]]);
            assert_deg(r.current_offset, 20.0);
        }
        assert_eq!(mag_check_rollover(&s, deg(10.0), deg(20.0)), s);
    }

    proptest! {
        #[test]
        fn window_invariants(steps in proptest::collection::vec((0.0f64..40.0, 0.0f64..360.0, 0.0f64..360.0, any::<bool>()), 1..80)) {
            let mut s = MagCalibState::default();
            let mut t = 0.0;
            let mut prev = deg(0.0);
            for (dt, phone, ear, roll) in steps {
                t += dt;
                s = mag_add_reference_point(&s, t, deg(phone), deg(ear));
                if roll {
                    s = mag_check_rollover(&s, prev, deg(ear));
                }
                prev = deg(ear);
                prop_assert!(s.window.len() <= 15);
                for w in s.window.windows(2) {
                    prop_assert!(w[1].0 - w[0].0 >= 15.0 - 1e-9);
                }
                let offsets: Vec<Angle> = s.window.iter().map(|p| p.1).collect();
                if let Ok(m) = circular_mean(&offsets, None) {
                    prop_assert!(circular_diff(m, s.current_offset).abs() < 1e-12);
                }
            }
        }
    }
}
