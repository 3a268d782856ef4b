//! Follower acceleration laws: the delayed consensus law (scheduled or fixed
//! gains) and a linear feedback stand-in used as baseline and fallback.

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::vehicle::VehicleState;

/// A `(k, gamma)` gain pair. The NaN/NaN pair is the "no usable gains" sentinel.
#[derive(Debug, Clone, Copy)]
pub struct GainPair {
    pub k: f64,
    pub gamma: f64,
}

impl GainPair {
    pub const SENTINEL: GainPair = GainPair {
        k: f64::NAN,
        gamma: f64::NAN,
    };

    pub fn new(k: f64, gamma: f64) -> Result<Self> {
        ensure_finite("k", k)?;
        ensure_finite("gamma", gamma)?;
        if k <= 0.0 {
            return Err(invalid("k", "must be positive"));
        }
        if gamma <= 0.0 {
            return Err(invalid("gamma", "must be positive"));
        }
        Ok(Self { k, gamma })
    }

    pub fn is_valid(&self) -> bool {
        self.k.is_finite() && self.gamma.is_finite() && self.k > 0.0 && self.gamma > 0.0
    }

    pub fn valid(self) -> Option<Self> {
        self.is_valid().then_some(self)
    }
}

/// Sentinels compare equal to each other; valid pairs compare bitwise.
impl PartialEq for GainPair {
    fn eq(&self, other: &Self) -> bool {
        match (self.is_valid(), other.is_valid()) {
            (true, true) => {
                self.k.to_bits() == other.k.to_bits()
                    && self.gamma.to_bits() == other.gamma.to_bits()
            }
            (false, false) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerInput {
    pub follower: VehicleState,
    /// Leader sample delayed by `comm_delay`.
    pub leader_delayed: VehicleState,
    pub leader_length: f64,
    pub time_gap: f64,
    pub comm_delay: f64,
    /// `a_ij`: 1 when the follower receives the leader's state, else 0.
    pub adjacency: u8,
}

impl ControllerInput {
    pub fn validate(&self) -> Result<()> {
        self.follower.validate()?;
        self.leader_delayed.validate()?;
        ensure_finite("leader_length", self.leader_length)?;
        ensure_finite("time_gap", self.time_gap)?;
        ensure_finite("comm_delay", self.comm_delay)?;
        if self.time_gap <= 0.0 {
            return Err(invalid("time_gap", "must be positive"));
        }
        if self.comm_delay < 0.0 {
            return Err(invalid("comm_delay", "must be non-negative"));
        }
        if self.adjacency > 1 {
            return Err(invalid("adjacency", "must be 0 or 1"));
        }
        Ok(())
    }

    /// `r_j(t - tau) - r_i(t)`.
    pub fn gap(&self) -> f64 {
        self.leader_delayed.position - self.follower.position
    }
}

/// Spacing the consensus law regulates to: `l_j + v_i (t_g + tau)`.
pub fn desired_gap(follower_speed: f64, input: &ControllerInput) -> f64 {
    desired_gap_for(
        follower_speed,
        input.leader_length,
        input.time_gap,
        input.comm_delay,
    )
}

#[inline]
pub fn desired_gap_for(follower_speed: f64, leader_length: f64, time_gap: f64, delay: f64) -> f64 {
    leader_length + follower_speed * (time_gap + delay)
}

/// Delayed consensus law
///
/// `-a k [(r_i - r_j^tau + l_j + v_i (t_g + tau)) + gamma (v_i - v_j^tau)]`
///
/// Returns [`Error::InvalidGains`] for the sentinel pair so the caller can
/// switch to its fallback controller.
pub fn consensus_accel(input: &ControllerInput, gains: GainPair) -> Result<f64> {
    if !gains.is_valid() {
        return Err(Error::InvalidGains);
    }
    Ok(consensus_law(input, gains))
}

#[inline]
pub(crate) fn consensus_law(input: &ControllerInput, gains: GainPair) -> f64 {
    if input.adjacency == 0 {
        return 0.0;
    }
    let f = &input.follower;
    let l = &input.leader_delayed;
    let position_term = f.position - l.position
        + desired_gap_for(f.speed, input.leader_length, input.time_gap, input.comm_delay);
    let speed_term = gains.gamma * (f.speed - l.speed);
    -f64::from(input.adjacency) * gains.k * (position_term + speed_term)
}

/// The consensus law with one gain pair used for every initial condition.
pub fn fixed_gain_consensus_accel(input: &ControllerInput, static_gains: GainPair) -> Result<f64> {
    consensus_accel(input, static_gains)
}

/// Gains of the linear spacing/speed/feedforward law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFeedbackGains {
    pub k_a: f64,
    pub k_v: f64,
    pub k_d: f64,
    pub standstill_gap: f64,
}

impl LinearFeedbackGains {
    pub fn new(k_a: f64, k_v: f64, k_d: f64, standstill_gap: f64) -> Result<Self> {
        ensure_finite("k_a", k_a)?;
        ensure_finite("k_v", k_v)?;
        ensure_finite("k_d", k_d)?;
        ensure_finite("standstill_gap", standstill_gap)?;
        if k_v < 0.0 || k_d < 0.0 {
            return Err(invalid("k_v/k_d", "must be non-negative"));
        }
        Ok(Self {
            k_a,
            k_v,
            k_d,
            standstill_gap,
        })
    }

    /// Non-normative baseline gains in the range commonly quoted for
    /// linear CACC spacing control.
    pub fn baseline() -> Self {
        Self {
            k_a: 0.5,
            k_v: 0.58,
            k_d: 0.1,
            standstill_gap: 0.0,
        }
    }

    /// Soft gains used when no scheduled gain exists for a run.
    pub fn conservative() -> Self {
        Self {
            k_a: 0.0,
            k_v: 0.3,
            k_d: 0.05,
            standstill_gap: 0.0,
        }
    }
}

/// `k_a a_j^tau + k_v (v_j^tau - v_i) + k_d (r_j^tau - r_i - s_0 - l_j - v_i t_g)`.
pub fn linear_feedback_accel(
    input: &ControllerInput,
    leader_accel_delayed: f64,
    gains: &LinearFeedbackGains,
) -> f64 {
    let f = &input.follower;
    let l = &input.leader_delayed;
    let spacing_error = l.position
        - f.position
        - gains.standstill_gap
        - input.leader_length
        - f.speed * input.time_gap;
    gains.k_a * leader_accel_delayed + gains.k_v * (l.speed - f.speed) + gains.k_d * spacing_error
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(ri: f64, vi: f64, rj: f64, vj: f64) -> ControllerInput {
        ControllerInput {
            follower: VehicleState::new(ri, vi, 0.0),
            leader_delayed: VehicleState::new(rj, vj, 0.0),
            leader_length: 5.0,
            time_gap: 0.7,
            comm_delay: 0.06,
            adjacency: 1,
        }
    }

    #[test]
    fn desired_gap_examples() {
        let inp = input(0.0, 0.0, 0.0, 0.0);
        assert_eq!(desired_gap(0.0, &inp), 5.0);
        assert!((desired_gap(20.0, &inp) - 20.2).abs() < 1e-12);
        assert!((desired_gap(14.0, &inp) - 15.64).abs() < 1e-12);
    }

    #[test]
    fn consensus_examples() {
        let g3 = GainPair::new(0.1, 3.0).unwrap();
        let a = consensus_accel(&input(0.0, 28.0, 50.0, 14.0), g3).unwrap();
        assert!((a + 1.828).abs() < 1e-12, "{a}");

        let eq = input(0.0, 14.0, 15.64, 14.0);
        assert!(consensus_accel(&eq, g3).unwrap().abs() < 1e-12);

        let mut decoupled = input(0.0, 28.0, 50.0, 14.0);
        decoupled.adjacency = 0;
        assert_eq!(consensus_accel(&decoupled, g3).unwrap(), 0.0);
    }

    #[test]
    fn fixed_gain_matches_scheduled_law() {
        let g1 = GainPair::new(0.1, 1.0).unwrap();
        let inp = input(0.0, 28.0, 50.0, 14.0);
        let a = fixed_gain_consensus_accel(&inp, g1).unwrap();
        assert_eq!(a, consensus_accel(&inp, g1).unwrap());
        // -0.1 * ((0 - 50 + 5 + 28 * 0.76) + 1 * (28 - 14))
        assert!((a - 0.972).abs() < 1e-12, "{a}");
    }

    #[test]
    fn sentinel_requests_fallback() {
        let inp = input(0.0, 28.0, 50.0, 14.0);
        assert!(matches!(
            consensus_accel(&inp, GainPair::SENTINEL),
            Err(Error::InvalidGains)
        ));
        assert_eq!(GainPair::SENTINEL, GainPair::SENTINEL);
        assert!(GainPair::new(0.0, 1.0).is_err());
        assert!(GainPair::new(0.1, f64::NAN).is_err());
    }

    #[test]
    fn gap_surplus_accelerates() {
        let g = GainPair::new(0.1, 2.0).unwrap();
        let a = consensus_accel(&input(0.0, 14.0, 30.0, 14.0), g).unwrap();
        assert!(a > 0.0);
    }

    #[test]
    fn linear_feedback_examples() {
        let mut inp = input(0.0, 14.0, 14.8, 14.0);
        let eq = LinearFeedbackGains::new(0.5, 0.58, 0.1, 0.0).unwrap();
        assert!(linear_feedback_accel(&inp, 0.0, &eq).abs() < 1e-12);

        inp = input(0.0, 28.0, 50.0, 14.0);
        let speed_only = LinearFeedbackGains::new(0.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(linear_feedback_accel(&inp, 0.0, &speed_only), -14.0);

        let ff = LinearFeedbackGains::new(1.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(linear_feedback_accel(&inp, 0.5, &ff), 0.5);
        assert!(LinearFeedbackGains::new(0.0, -1.0, 0.0, 0.0).is_err());
    }
}
