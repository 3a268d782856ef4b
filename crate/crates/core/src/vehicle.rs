//! Longitudinal double-integrator vehicles, a fixed-step clock, and a bounded
//! state history that serves communication-delayed samples.

use std::collections::VecDeque;

use crate::error::{ensure_finite, invalid, Error, Result};

/// Default integration step. Makes a 60 ms delay exactly six steps.
pub const DEFAULT_DT: f64 = 0.01;

/// Relative slack used when checking that a delay is a whole number of steps.
const STEP_MULTIPLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleSpec {
    pub length: f64,
    pub accel_min: f64,
    pub accel_max: f64,
    /// Saturate commands to `[accel_min, accel_max]`. Off by default so the
    /// comfort metrics see the raw control law.
    pub clamp: bool,
}

impl VehicleSpec {
    pub fn new(length: f64, accel_min: f64, accel_max: f64) -> Result<Self> {
        ensure_finite("length", length)?;
        ensure_finite("accel_min", accel_min)?;
        ensure_finite("accel_max", accel_max)?;
        if length <= 0.0 {
            return Err(invalid("length", "must be positive"));
        }
        if !(accel_min < 0.0 && accel_max > 0.0) {
            return Err(invalid("accel_min/accel_max", "need accel_min < 0 < accel_max"));
        }
        Ok(Self {
            length,
            accel_min,
            accel_max,
            clamp: false,
        })
    }

    pub fn with_clamp(mut self, clamp: bool) -> Self {
        self.clamp = clamp;
        self
    }

    pub fn limit(&self, accel_cmd: f64) -> f64 {
        if self.clamp {
            accel_cmd.clamp(self.accel_min, self.accel_max)
        } else {
            accel_cmd
        }
    }
}

/// Position, speed and acceleration of one vehicle at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
}

impl VehicleState {
    pub fn new(position: f64, speed: f64, accel: f64) -> Self {
        Self {
            position,
            speed,
            accel,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("position", self.position)?;
        ensure_finite("speed", self.speed)?;
        ensure_finite("accel", self.accel)
    }
}

/// One explicit Euler step. Position advances with the pre-step speed and the
/// command becomes the new acceleration.
pub fn step(state: VehicleState, accel_cmd: f64, dt: f64) -> Result<VehicleState> {
    state.validate()?;
    ensure_finite("accel_cmd", accel_cmd)?;
    ensure_finite("dt", dt)?;
    if dt <= 0.0 {
        return Err(invalid("dt", "must be positive"));
    }
    Ok(step_unchecked(state, accel_cmd, dt))
}

#[inline]
pub(crate) fn step_unchecked(state: VehicleState, accel_cmd: f64, dt: f64) -> VehicleState {
    VehicleState {
        position: state.position + state.speed * dt,
        speed: state.speed + accel_cmd * dt,
        accel: accel_cmd,
    }
}

/// Number of whole steps in `duration`, or an error when it is not integral.
pub fn steps_in(duration: f64, dt: f64) -> Result<usize> {
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(invalid("duration", "must be finite and non-negative"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", "must be finite and positive"));
    }
    let n = (duration / dt).round();
    if (n * dt - duration).abs() > STEP_MULTIPLE_TOL * duration.abs().max(1.0) {
        return Err(Error::DelayNotMultiple { tau: duration, dt });
    }
    Ok(n as usize)
}

/// Fixed-step simulation clock. Time is `t0 + n * dt`, never accumulated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    t0: f64,
    dt: f64,
    step: usize,
}

impl SimClock {
    pub fn new(t0: f64, dt: f64) -> Result<Self> {
        ensure_finite("t0", t0)?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", "must be finite and positive"));
        }
        Ok(Self { t0, dt, step: 0 })
    }

    /// Like [`SimClock::new`] but also checks that `delay` is a whole number of steps.
    pub fn for_delay(t0: f64, dt: f64, delay: f64) -> Result<Self> {
        let clock = Self::new(t0, dt)?;
        steps_in(delay, dt)?;
        Ok(clock)
    }

    pub fn t(&self) -> f64 {
        self.time_at(self.step)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time_at(&self, step: usize) -> f64 {
        self.t0 + step as f64 * self.dt
    }

    pub fn tick(&mut self) {
        self.step += 1;
    }
}

/// Timestamped samples at constant spacing `dt`, keeping at most `capacity`
/// of the most recent ones.
#[derive(Debug, Clone)]
pub struct StateHistory {
    t0: f64,
    dt: f64,
    capacity: usize,
    /// Step index of `samples[0]` relative to `t0`.
    first: usize,
    samples: VecDeque<VehicleState>,
}

impl StateHistory {
    pub fn new(t0: f64, dt: f64, capacity: usize) -> Result<Self> {
        ensure_finite("t0", t0)?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", "must be finite and positive"));
        }
        if capacity == 0 {
            return Err(invalid("capacity", "must hold at least one sample"));
        }
        Ok(Self {
            t0,
            dt,
            capacity,
            first: 0,
            samples: VecDeque::with_capacity(capacity),
        })
    }

    /// History able to answer queries delayed by up to `max_delay`.
    pub fn for_delay(t0: f64, dt: f64, max_delay: f64) -> Result<Self> {
        let n = steps_in(max_delay, dt)?;
        Self::new(t0, dt, n + 1)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Time stamp of the next sample to be pushed.
    pub fn next_time(&self) -> f64 {
        self.t0 + (self.first + self.samples.len()) as f64 * self.dt
    }

    /// Appends the sample for the next time slot, evicting the oldest when full.
    pub fn push(&mut self, state: VehicleState) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
            self.first += 1;
        }
        self.samples.push_back(state);
    }

    /// Iterates `(time, state)` over the retained samples.
    pub fn iter(&self) -> impl Iterator<Item = (f64, &VehicleState)> + '_ {
        self.samples
            .iter()
            .enumerate()
            .map(move |(i, s)| (self.t0 + (self.first + i) as f64 * self.dt, s))
    }

    fn index_of(&self, t: f64) -> Result<i64> {
        ensure_finite("t", t)?;
        let offset = t - self.t0;
        let idx = (offset / self.dt).round();
        if (idx * self.dt - offset).abs() > STEP_MULTIPLE_TOL * offset.abs().max(1.0) {
            return Err(Error::MissingSample { t });
        }
        Ok(idx as i64)
    }

    /// The sample stored at `t - tau`. Queries before the start of the
    /// history hold the earliest sample; no interpolation is ever done.
    pub fn delayed(&self, t: f64, tau: f64) -> Result<VehicleState> {
        ensure_finite("tau", tau)?;
        if tau < 0.0 {
            return Err(invalid("tau", "must be non-negative"));
        }
        let lag = steps_in(tau, self.dt).map_err(|_| Error::DelayNotMultiple { tau, dt: self.dt })?;
        let now = self.index_of(t)?;
        match self.delayed_steps(now, lag) {
            Some(state) => Ok(state),
            None if now - (lag as i64) < self.first as i64 && !self.samples.is_empty() => {
                Err(Error::HistoryExhausted { t, tau })
            }
            None => Err(Error::MissingSample { t }),
        }
    }

    /// Sample `lag` steps before step `now`, holding the first sample for
    /// pre-history queries.
    #[inline]
    pub(crate) fn delayed_steps(&self, now: i64, lag: usize) -> Option<VehicleState> {
        if self.samples.is_empty() {
            return None;
        }
        let target = now - lag as i64;
        if target < 0 {
            // Before t0: hold the initial state, but only while it is retained.
            return (self.first == 0).then(|| self.samples[0]);
        }
        let rel = target - self.first as i64;
        if rel < 0 {
            return None;
        }
        self.samples.get(rel as usize).copied()
    }
}

/// Free-function form of [`StateHistory::delayed`].
pub fn delayed_state(history: &StateHistory, t: f64, tau: f64) -> Result<VehicleState> {
    history.delayed(t, tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(position: f64, speed: f64, accel: f64) -> VehicleState {
        VehicleState::new(position, speed, accel)
    }

    #[test]
    fn euler_zero_accel() {
        assert_eq!(step(s(0.0, 10.0, 0.0), 0.0, 0.01).unwrap(), s(0.1, 10.0, 0.0));
    }

    #[test]
    fn euler_braking() {
        let next = step(s(100.0, 20.0, 0.0), -1.0, 0.01).unwrap();
        assert!((next.position - 100.2).abs() < 1e-12);
        assert!((next.speed - 19.99).abs() < 1e-12);
        assert_eq!(next.accel, -1.0);
    }

    #[test]
    fn rest_stays_at_rest() {
        assert_eq!(step(s(5.0, 0.0, 0.0), 0.0, 0.01).unwrap(), s(5.0, 0.0, 0.0));
    }

    #[test]
    fn step_rejects_non_finite() {
        let err = step(s(f64::NAN, 0.0, 0.0), 0.0, 0.01).unwrap_err();
        assert!(err.to_string().contains("position"), "{err}");
        let err = step(s(0.0, 0.0, 0.0), f64::INFINITY, 0.01).unwrap_err();
        assert!(err.to_string().contains("accel_cmd"), "{err}");
        assert!(step(s(0.0, 0.0, 0.0), 0.0, 0.0).is_err());
    }

    #[test]
    fn clamp_is_opt_in() {
        let spec = VehicleSpec::new(5.0, -3.0, 2.0).unwrap();
        assert_eq!(spec.limit(-8.0), -8.0);
        assert_eq!(spec.with_clamp(true).limit(-8.0), -3.0);
        assert!(VehicleSpec::new(5.0, 1.0, 2.0).is_err());
        assert!(VehicleSpec::new(0.0, -1.0, 2.0).is_err());
    }

    fn history(speeds: &[f64]) -> StateHistory {
        let mut h = StateHistory::new(0.0, 0.01, 64).unwrap();
        for &v in speeds {
            h.push(s(0.0, v, 0.0));
        }
        h
    }

    #[test]
    fn zero_delay_is_identity() {
        let h = history(&[1.0, 2.0, 3.0]);
        assert_eq!(h.delayed(0.02, 0.0).unwrap().speed, 3.0);
    }

    #[test]
    fn pre_history_holds_initial_state() {
        let h = history(&[14.0, 15.0, 16.0]);
        assert_eq!(h.delayed(0.02, 0.06).unwrap().speed, 14.0);
    }

    #[test]
    fn six_step_lookup() {
        let mut speeds = vec![14.0];
        speeds.extend((1..=5).map(|i| 14.0 + 0.01 * i as f64));
        speeds.push(14.5);
        let h = history(&speeds);
        assert_eq!(h.next_time(), 0.07);
        assert_eq!(h.delayed(0.06, 0.06).unwrap().speed, 14.0);
        assert_eq!(h.delayed(0.06, 0.0).unwrap().speed, 14.5);
    }

    #[test]
    fn fractional_delay_rejected() {
        let h = history(&[1.0, 2.0]);
        assert!(matches!(
            h.delayed(0.01, 0.005),
            Err(Error::DelayNotMultiple { .. })
        ));
    }

    #[test]
    fn evicted_sample_is_an_error() {
        let mut h = StateHistory::for_delay(0.0, 0.01, 0.02).unwrap();
        for i in 0..10 {
            h.push(s(i as f64, 0.0, 0.0));
        }
        assert_eq!(h.capacity(), 3);
        assert_eq!(h.delayed(0.09, 0.02).unwrap().position, 7.0);
        assert!(matches!(
            h.delayed(0.09, 0.03),
            Err(Error::HistoryExhausted { .. })
        ));
    }

    #[test]
    fn clock_does_not_accumulate() {
        let mut c = SimClock::for_delay(0.0, 0.01, 0.06).unwrap();
        for _ in 0..2490 {
            c.tick();
        }
        assert_eq!(c.t(), 2490.0 * 0.01);
        assert!(SimClock::for_delay(0.0, 0.01, 0.065).is_err());
    }
}
