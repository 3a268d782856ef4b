//! Safety, convergence and comfort measures over a recorded car-following run.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// Jerk samples at the start of a run excluded from the comfort extrema.
///
/// Sample 0 has jerk 0 by definition and sample 1 carries the step from zero
/// acceleration to the first command, which is a finite-difference artifact
/// of the command onset rather than ride behaviour.
pub const COMFORT_ONSET_SAMPLES: usize = 2;

/// Bands that define consensus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusThresholds {
    /// Relative band on the gap error, as a fraction of the desired gap.
    pub eta_r: f64,
    /// Relative band on the speed error, as a fraction of the leader speed.
    pub eta_v: f64,
    pub delta_a: f64,
    pub delta_jerk: f64,
}

impl Default for ConsensusThresholds {
    fn default() -> Self {
        Self {
            eta_r: 0.05,
            eta_v: 0.05,
            delta_a: 0.001,
            delta_jerk: 0.005,
        }
    }
}

impl ConsensusThresholds {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_r", self.eta_r),
            ("eta_v", self.eta_v),
            ("delta_a", self.delta_a),
            ("delta_jerk", self.delta_jerk),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and positive, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Weights of the comfort score. Units normalize acceleration and jerk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComfortWeights {
    pub omega_1: f64,
    pub omega_2: f64,
}

impl Default for ComfortWeights {
    fn default() -> Self {
        Self {
            omega_1: 1.0,
            omega_2: 1.0,
        }
    }
}

impl ComfortWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.omega_1) || !ok(self.omega_2) {
            return Err(invalid("omega_1/omega_2", "must be finite and non-negative"));
        }
        if self.omega_1 == 0.0 && self.omega_2 == 0.0 {
            return Err(invalid("omega_1/omega_2", "must not both be zero"));
        }
        Ok(())
    }
}

/// How the no-collision constraint reads a gap series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SafetyMode {
    /// Leader physically ahead in the same lane: any gap `<= l_j` is a collision.
    SameLane,
    /// Leader projected from another lane. The check arms once the gap first
    /// exceeds `l_j`; a later gap `<= l_j` is a violation.
    #[default]
    Projected,
}

impl SafetyMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SafetyMode::SameLane => "same_lane",
            SafetyMode::Projected => "projected",
        }
    }
}

impl fmt::Display for SafetyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SafetyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "same_lane" => Ok(SafetyMode::SameLane),
            "projected" => Ok(SafetyMode::Projected),
            other => Err(invalid("mode", format!("unknown safety mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyOutcome {
    pub violated: bool,
    /// Smallest gap over the checked region; `None` when a projected check never armed.
    pub min_gap: Option<f64>,
}

/// No-collision check over a gap series `r_j(t - tau) - r_i(t)`.
///
/// The caller slices the series to the window of interest, normally from the
/// first sample through the consensus time.
pub fn check_safety(gaps: &[f64], leader_length: f64, mode: SafetyMode) -> SafetyOutcome {
    let armed = match mode {
        SafetyMode::SameLane => gaps,
        SafetyMode::Projected => match gaps.iter().position(|&g| g > leader_length) {
            Some(i) => &gaps[i..],
            None => &[],
        },
    };
    let violated = armed.iter().any(|&g| g <= leader_length);
    let min_gap = armed.iter().copied().reduce(f64::min);
    SafetyOutcome { violated, min_gap }
}

/// Quantities the consensus test reads at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusSample {
    pub gap: f64,
    pub desired_gap: f64,
    /// Delayed leader speed.
    pub leader_speed: f64,
    pub follower_speed: f64,
    pub accel: f64,
    pub jerk: f64,
}

/// All four consensus bands hold at this instant.
///
/// The headway band bounds the gap error `|gap - desired|` by `eta_r` of the
/// desired gap. For a non-positive leader speed the relative speed band is
/// replaced by an absolute band of `eta_v` m/s.
pub fn consensus_reached(sample: &ConsensusSample, thresholds: &ConsensusThresholds) -> bool {
    let gap_ok = (sample.gap - sample.desired_gap).abs() <= thresholds.eta_r * sample.desired_gap;
    let speed_band = if sample.leader_speed > 0.0 {
        thresholds.eta_v * sample.leader_speed
    } else {
        thresholds.eta_v
    };
    let speed_ok = (sample.leader_speed - sample.follower_speed).abs() <= speed_band;
    gap_ok
        && speed_ok
        && sample.accel.abs() <= thresholds.delta_a
        && sample.jerk.abs() <= thresholds.delta_jerk
}

/// Index of the first sample that starts a run of `hold_steps + 1` true flags.
pub fn first_sustained(flags: impl IntoIterator<Item = bool>, hold_steps: usize) -> Option<usize> {
    let mut tracker = ConvergenceTracker::new(hold_steps);
    flags.into_iter().find_map(|f| tracker.push(f))
}

/// Streaming form of [`first_sustained`].
#[derive(Debug, Clone)]
pub struct ConvergenceTracker {
    hold_steps: usize,
    index: usize,
    run: usize,
}

impl ConvergenceTracker {
    pub fn new(hold_steps: usize) -> Self {
        Self {
            hold_steps,
            index: 0,
            run: 0,
        }
    }

    /// Feeds the next flag; returns the start index once the hold is satisfied.
    pub fn push(&mut self, flag: bool) -> Option<usize> {
        let i = self.index;
        self.index += 1;
        if flag {
            self.run += 1;
            if self.run > self.hold_steps {
                return Some(i - self.hold_steps);
            }
        } else {
            self.run = 0;
        }
        None
    }
}

/// Earliest time `t0 + i*dt` such that consensus holds at every sample in
/// `[t, t + hold_window]`, or `None` if the run ends first.
pub fn convergence_time(
    samples: &[ConsensusSample],
    t0: f64,
    dt: f64,
    thresholds: &ConsensusThresholds,
    hold_window: f64,
) -> Result<Option<f64>> {
    if !(hold_window.is_finite() && hold_window >= 0.0) {
        return Err(invalid("hold_window", "must be finite and non-negative"));
    }
    let hold_steps = crate::vehicle::steps_in(hold_window, dt)?;
    Ok(first_sustained(
        samples.iter().map(|s| consensus_reached(s, thresholds)),
        hold_steps,
    )
    .map(|i| t0 + i as f64 * dt))
}

/// Backward-difference jerk; the first sample's jerk is 0.
pub fn jerk_series(accels: &[f64], dt: f64) -> Result<Vec<f64>> {
    if accels.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: accels.len(),
        });
    }
    let mut out = Vec::with_capacity(accels.len());
    out.push(0.0);
    out.extend(accels.windows(2).map(|w| (w[1] - w[0]) / dt));
    Ok(out)
}

/// Acceleration and jerk extrema of a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComfortExtrema {
    pub max_accel: f64,
    /// Magnitude of the strongest deceleration.
    pub max_decel: f64,
    pub max_jerk: f64,
    pub min_jerk: f64,
}

impl ComfortExtrema {
    /// Extrema over `accels`, and over `jerks` from sample `onset_skip` onward.
    pub fn measure(accels: &[f64], jerks: &[f64], onset_skip: usize) -> Self {
        let (lo, hi) = accels
            .iter()
            .fold((0.0_f64, 0.0_f64), |(lo, hi), &a| (lo.min(a), hi.max(a)));
        let tail = jerks.get(onset_skip..).unwrap_or(&[]);
        let (jmin, jmax) = tail
            .iter()
            .fold(None, |acc: Option<(f64, f64)>, &j| match acc {
                None => Some((j, j)),
                Some((lo, hi)) => Some((lo.min(j), hi.max(j))),
            })
            .unwrap_or((0.0, 0.0));
        Self {
            max_accel: hi,
            max_decel: 0.0 - lo,
            max_jerk: jmax,
            min_jerk: jmin,
        }
    }

    pub fn peak_accel(&self) -> f64 {
        self.max_accel.max(self.max_decel)
    }

    pub fn peak_jerk(&self) -> f64 {
        self.max_jerk.abs().max(self.min_jerk.abs())
    }
}

/// Outcome of one run against the three constraint families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub t_consensus: Option<f64>,
    pub max_accel: f64,
    pub max_decel: f64,
    pub max_jerk: f64,
    pub min_jerk: f64,
    pub omega: f64,
    pub min_gap: Option<f64>,
    pub safety_violated: bool,
}

impl RunMetrics {
    pub fn extrema(&self) -> ComfortExtrema {
        ComfortExtrema {
            max_accel: self.max_accel,
            max_decel: self.max_decel,
            max_jerk: self.max_jerk,
            min_jerk: self.min_jerk,
        }
    }

    pub fn peak_jerk(&self) -> f64 {
        self.extrema().peak_jerk()
    }
}

/// `w1 * max(max_accel, max_decel) + w2 * max(|max_jerk|, |min_jerk|)`.
pub fn omega_score(extrema: &ComfortExtrema, weights: &ComfortWeights) -> f64 {
    weights.omega_1 * extrema.peak_accel() + weights.omega_2 * extrema.peak_jerk()
}
