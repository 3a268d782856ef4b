//! Two-vehicle car-following runs: a constant-speed leader, a follower driven
//! by one of the controllers, and a delayed V2V link between them.

use crate::controller::{
    consensus_law, desired_gap_for, linear_feedback_accel, ControllerInput, GainPair,
    LinearFeedbackGains,
};
use crate::error::{ensure_finite, invalid, Error, Result};
use crate::metrics::{
    check_safety, consensus_reached, omega_score, ComfortExtrema, ComfortWeights,
    ConsensusSample, ConsensusThresholds, ConvergenceTracker, RunMetrics, SafetyMode,
    COMFORT_ONSET_SAMPLES,
};
use crate::vehicle::{step_unchecked, steps_in, StateHistory, VehicleSpec, VehicleState};

/// Simulation and evaluation settings shared by table builds and scenario runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildConfig {
    pub dt: f64,
    /// Horizon of each candidate simulation during a table build.
    pub t_max: f64,
    pub comm_delay: f64,
    pub leader_length: f64,
    pub time_gap: f64,
    pub thresholds: ConsensusThresholds,
    pub weights: ComfortWeights,
    pub safety_mode: SafetyMode,
    pub hold_window: f64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_max: 120.0,
            comm_delay: 0.06,
            leader_length: 5.0,
            time_gap: 0.7,
            thresholds: ConsensusThresholds::default(),
            weights: ComfortWeights::default(),
            safety_mode: SafetyMode::Projected,
            hold_window: 1.0,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dt", self.dt),
            ("t_max", self.t_max),
            ("leader_length", self.leader_length),
            ("time_gap", self.time_gap),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and positive, got {v}"),
                });
            }
        }
        if !(self.comm_delay.is_finite() && self.comm_delay >= 0.0) {
            return Err(invalid("comm_delay", "must be finite and non-negative"));
        }
        if !(self.hold_window.is_finite() && self.hold_window >= 0.0) {
            return Err(invalid("hold_window", "must be finite and non-negative"));
        }
        if self.t_max <= self.hold_window {
            return Err(invalid("t_max", "must exceed hold_window"));
        }
        steps_in(self.comm_delay, self.dt).map_err(|_| Error::DelayNotMultiple {
            tau: self.comm_delay,
            dt: self.dt,
        })?;
        steps_in(self.hold_window, self.dt)?;
        steps_in(self.t_max, self.dt)?;
        self.thresholds.validate()?;
        self.weights.validate()
    }

    pub fn delay_steps(&self) -> usize {
        (self.comm_delay / self.dt).round() as usize
    }

    pub fn hold_steps(&self) -> usize {
        (self.hold_window / self.dt).round() as usize
    }

    pub fn desired_gap(&self, follower_speed: f64) -> f64 {
        desired_gap_for(
            follower_speed,
            self.leader_length,
            self.time_gap,
            self.comm_delay,
        )
    }
}

/// Initial condition of a run, keyed like a table cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialCondition {
    /// `r_j(t0 - tau) - r_i(t0)`.
    pub dr: f64,
    pub vi: f64,
    pub vj: f64,
}

impl InitialCondition {
    pub fn new(dr: f64, vi: f64, vj: f64) -> Self {
        Self { dr, vi, vj }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Controller {
    Consensus(GainPair),
    LinearFeedback {
        gains: LinearFeedbackGains,
        /// Time gap the linear law regulates to.
        time_gap: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Simulate the full duration.
    Horizon,
    /// Stop as soon as the consensus hold window is satisfied.
    Consensus,
}

/// One recorded instant of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub follower: VehicleState,
    pub jerk: f64,
    pub leader: VehicleState,
    pub leader_delayed: VehicleState,
    pub gap: f64,
    pub desired_gap: f64,
}

impl Sample {
    pub fn gap_error(&self) -> f64 {
        self.gap - self.desired_gap
    }

    pub fn consensus_sample(&self) -> ConsensusSample {
        ConsensusSample {
            gap: self.gap,
            desired_gap: self.desired_gap,
            leader_speed: self.leader_delayed.speed,
            follower_speed: self.follower.speed,
            accel: self.follower.accel,
            jerk: self.jerk,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn gaps(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.gap)
    }
}

/// Simulates one run starting at `t0 = 0`.
///
/// The follower starts at `r = 0` with speed `vi` and zero acceleration. The
/// leader drives at constant speed `vj`; its history is seeded back to
/// `t0 - tau` so that the first delayed sample sits exactly at `dr`. The
/// command computed from the state at step `n` is applied over `[t_n, t_n+1]`.
pub fn simulate(
    cfg: &BuildConfig,
    init: InitialCondition,
    controller: &Controller,
    duration: f64,
    stop: StopRule,
    follower_limits: Option<&VehicleSpec>,
) -> Result<Trajectory> {
    ensure_finite("dr", init.dr)?;
    ensure_finite("vi", init.vi)?;
    ensure_finite("vj", init.vj)?;
    let dt = cfg.dt;
    let steps = steps_in(duration, dt)?;
    let lag = cfg.delay_steps();

    let mut history = StateHistory::new(-(lag as f64) * dt, dt, lag + 1)?;
    let mut leader = VehicleState::new(init.dr, init.vj, 0.0);
    for _ in 0..lag {
        history.push(leader);
        leader = step_unchecked(leader, 0.0, dt);
    }
    let mut follower = VehicleState::new(0.0, init.vi, 0.0);
    let mut prev_accel = follower.accel;
    let mut tracker = ConvergenceTracker::new(cfg.hold_steps());
    let mut stop_at = None;

    let mut samples = Vec::with_capacity(match stop {
        StopRule::Horizon => steps + 1,
        StopRule::Consensus => (steps + 1).min(4096),
    });
    for n in 0..=steps {
        history.push(leader);
        // With the history seeded back to -tau, the delayed sample is always the oldest.
        let leader_delayed = history
            .delayed_steps((n + lag) as i64, lag)
            .expect("history holds the delayed sample");
        let jerk = if n == 0 {
            0.0
        } else {
            (follower.accel - prev_accel) / dt
        };
        let sample = Sample {
            t: n as f64 * dt,
            follower,
            jerk,
            leader,
            leader_delayed,
            gap: leader_delayed.position - follower.position,
            desired_gap: cfg.desired_gap(follower.speed),
        };
        samples.push(sample);

        if stop == StopRule::Consensus {
            if stop_at.is_none()
                && tracker
                    .push(consensus_reached(&sample.consensus_sample(), &cfg.thresholds))
                    .is_some()
            {
                stop_at = Some(n);
            }
            if stop_at == Some(n) {
                break;
            }
        }
        if n == steps {
            break;
        }

        let input = ControllerInput {
            follower,
            leader_delayed,
            leader_length: cfg.leader_length,
            time_gap: cfg.time_gap,
            comm_delay: cfg.comm_delay,
            adjacency: 1,
        };
        let mut cmd = match controller {
            Controller::Consensus(gains) => consensus_law(&input, *gains),
            Controller::LinearFeedback { gains, time_gap } => {
                let input = ControllerInput {
                    time_gap: *time_gap,
                    ..input
                };
                linear_feedback_accel(&input, leader_delayed.accel, gains)
            }
        };
        if let Some(spec) = follower_limits {
            cmd = spec.limit(cmd);
        }
        if !cmd.is_finite() {
            return Err(Error::NonFinite {
                field: "accel_cmd",
                value: cmd,
            });
        }
        prev_accel = follower.accel;
        follower = step_unchecked(follower, cmd, dt);
        leader = step_unchecked(leader, 0.0, dt);
    }
    Ok(Trajectory { dt, samples })
}

/// Scores a trajectory against the safety, efficiency and comfort constraints.
///
/// Safety and comfort are measured from `t0` through the consensus time, or
/// over the whole run when consensus is never reached.
pub fn evaluate(traj: &Trajectory, cfg: &BuildConfig) -> RunMetrics {
    let idx = first_consensus_index(traj, cfg);
    let end = idx.unwrap_or(traj.samples.len().saturating_sub(1));
    let window = &traj.samples[..=end.min(traj.samples.len().saturating_sub(1))];

    let gaps: Vec<f64> = window.iter().map(|s| s.gap).collect();
    let safety = check_safety(&gaps, cfg.leader_length, cfg.safety_mode);
    let accels: Vec<f64> = window.iter().map(|s| s.follower.accel).collect();
    let jerks: Vec<f64> = window.iter().map(|s| s.jerk).collect();
    let extrema = ComfortExtrema::measure(&accels, &jerks, COMFORT_ONSET_SAMPLES);

    RunMetrics {
        t_consensus: idx.map(|i| traj.samples[i].t),
        max_accel: extrema.max_accel,
        max_decel: extrema.max_decel,
        max_jerk: extrema.max_jerk,
        min_jerk: extrema.min_jerk,
        omega: omega_score(&extrema, &cfg.weights),
        min_gap: safety.min_gap,
        safety_violated: safety.violated,
    }
}

/// Sample index at which the consensus hold window starts, if any.
pub fn first_consensus_index(traj: &Trajectory, cfg: &BuildConfig) -> Option<usize> {
    crate::metrics::first_sustained(
        traj.samples
            .iter()
            .map(|s| consensus_reached(&s.consensus_sample(), &cfg.thresholds)),
        cfg.hold_steps(),
    )
}
