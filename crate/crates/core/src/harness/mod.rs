//! Scenario runs, the four-scenario comparison suite, and their file outputs.

pub mod config;
mod output;

use std::fmt;
use std::path::PathBuf;

use rayon::prelude::*;

pub use output::{
    write_comparison_csv, write_report_csv, write_table_matrix, write_trajectory_csv,
    TRAJECTORY_COLUMNS,
};

use crate::controller::{GainPair, LinearFeedbackGains};
use crate::error::{invalid, Error, Result};
use crate::metrics::RunMetrics;
use crate::sim::{evaluate, simulate, BuildConfig, Controller, InitialCondition, StopRule, Trajectory};
use crate::table::GainTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeaderProfile {
    ConstantSpeed,
}

/// Linear feedback gains together with the time gap they regulate to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearBaseline {
    pub gains: LinearFeedbackGains,
    pub time_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerSpec {
    /// Gains scheduled from the table at `t0`.
    Lookup,
    FixedConsensus(GainPair),
    LinearFeedback(LinearBaseline),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ControllerKind {
    Lookup,
    FixedConsensus,
    LinearFeedback,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 3] = [
        ControllerKind::Lookup,
        ControllerKind::FixedConsensus,
        ControllerKind::LinearFeedback,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::Lookup => "lookup",
            ControllerKind::FixedConsensus => "fixed_consensus",
            ControllerKind::LinearFeedback => "linear_feedback",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl ControllerSpec {
    pub fn kind(&self) -> ControllerKind {
        match self {
            ControllerSpec::Lookup => ControllerKind::Lookup,
            ControllerSpec::FixedConsensus(_) => ControllerKind::FixedConsensus,
            ControllerSpec::LinearFeedback(_) => ControllerKind::LinearFeedback,
        }
    }
}

/// Baseline controllers for the comparison, plus the fallback used when the
/// table has no gains for a run.
///
/// The defaults are illustrative stand-ins and carry no claim of matching
/// any published parameterization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baselines {
    pub fixed_consensus: GainPair,
    pub linear_feedback: LinearBaseline,
    pub fallback: LinearBaseline,
}

impl Default for Baselines {
    fn default() -> Self {
        Self {
            fixed_consensus: GainPair { k: 0.1, gamma: 1.0 },
            linear_feedback: LinearBaseline {
                gains: LinearFeedbackGains::baseline(),
                time_gap: 0.76,
            },
            fallback: LinearBaseline {
                gains: LinearFeedbackGains::conservative(),
                time_gap: 0.76,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub id: String,
    pub initial: InitialCondition,
    pub duration: f64,
    pub leader_profile: LeaderProfile,
    pub controller: ControllerSpec,
}

impl ScenarioConfig {
    pub fn new(id: impl Into<String>, initial: InitialCondition, controller: ControllerSpec) -> Self {
        Self {
            id: id.into(),
            initial,
            duration: 120.0,
            leader_profile: LeaderProfile::ConstantSpeed,
            controller,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(invalid("duration", "must be finite and positive"));
        }
        for (name, v) in [("vi0", self.initial.vi), ("vj0", self.initial.vj)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and non-negative, got {v}"),
                });
            }
        }
        if !self.initial.dr.is_finite() {
            return Err(invalid("dr0", "must be finite"));
        }
        Ok(())
    }

    /// The four reference initial conditions `(dr0, vi0, vj0)`.
    pub fn reference_suite() -> Vec<ScenarioConfig> {
        [
            ("scenario1", 50.0, 28.0, 14.0),
            ("scenario2", 20.0, 16.0, 22.0),
            ("scenario3", -30.0, 18.0, 10.0),
            ("scenario4", -80.0, 4.0, 21.0),
        ]
        .into_iter()
        .map(|(id, dr, vi, vj)| {
            ScenarioConfig::new(id, InitialCondition::new(dr, vi, vj), ControllerSpec::Lookup)
        })
        .collect()
    }
}

/// Gains actually driving a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainsUsed {
    Consensus(GainPair),
    LinearFeedback(LinearBaseline),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: String,
    pub controller: ControllerKind,
    pub metrics: RunMetrics,
    pub gains: GainsUsed,
    pub fallback_engaged: bool,
    pub trajectory_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub report: RunReport,
    pub trajectory: Trajectory,
}

/// Runs one scenario. Lookup gains are chosen once, from the initial
/// condition, and held for the whole run.
pub fn run_scenario(
    scenario: &ScenarioConfig,
    sim: &BuildConfig,
    table: Option<&GainTable>,
    baselines: &Baselines,
) -> Result<ScenarioRun> {
    scenario.validate()?;
    sim.validate()?;
    let init = scenario.initial;
    let (gains, fallback_engaged) = match scenario.controller {
        ControllerSpec::Lookup => {
            let table = table.ok_or(Error::MissingTable)?;
            match table.lookup(init.dr, init.vi, init.vj).and_then(GainPair::valid) {
                Some(g) => (GainsUsed::Consensus(g), false),
                None => (GainsUsed::LinearFeedback(baselines.fallback), true),
            }
        }
        ControllerSpec::FixedConsensus(g) => {
            if !g.is_valid() {
                return Err(Error::InvalidGains);
            }
            (GainsUsed::Consensus(g), false)
        }
        ControllerSpec::LinearFeedback(b) => (GainsUsed::LinearFeedback(b), false),
    };
    let controller = match gains {
        GainsUsed::Consensus(g) => Controller::Consensus(g),
        GainsUsed::LinearFeedback(b) => Controller::LinearFeedback {
            gains: b.gains,
            time_gap: b.time_gap,
        },
    };
    let trajectory = simulate(sim, init, &controller, scenario.duration, StopRule::Horizon, None)?;
    let metrics = evaluate(&trajectory, sim);
    Ok(ScenarioRun {
        report: RunReport {
            scenario: scenario.id.clone(),
            controller: scenario.controller.kind(),
            metrics,
            gains,
            fallback_engaged,
            trajectory_path: None,
        },
        trajectory,
    })
}

/// Convergence-time comparison of the lookup controller against one baseline
/// on one scenario. A run that never converges counts as infinitely slow.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingVerdict {
    pub scenario: String,
    pub baseline: ControllerKind,
    pub lookup_time: Option<f64>,
    pub baseline_time: Option<f64>,
}

impl OrderingVerdict {
    pub fn lookup_faster(&self) -> bool {
        match (self.lookup_time, self.baseline_time) {
            (Some(l), Some(b)) => l < b,
            (Some(_), None) => true,
            (None, _) => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    /// One per (scenario, controller), scenario-major in input order.
    pub runs: Vec<ScenarioRun>,
    pub verdicts: Vec<OrderingVerdict>,
}

impl ComparisonReport {
    pub fn reports(&self) -> impl Iterator<Item = &RunReport> {
        self.runs.iter().map(|r| &r.report)
    }

    pub fn get(&self, scenario: &str, controller: ControllerKind) -> Option<&RunReport> {
        self.reports()
            .find(|r| r.scenario == scenario && r.controller == controller)
    }

    pub fn scenarios(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = Vec::new();
        for r in self.reports() {
            if !ids.contains(&r.scenario.as_str()) {
                ids.push(&r.scenario);
            }
        }
        ids
    }
}

/// Runs every controller on every scenario. Runs execute in parallel but the
/// report is assembled in fixed order.
pub fn run_suite(
    table: &GainTable,
    sim: &BuildConfig,
    baselines: &Baselines,
    scenarios: &[ScenarioConfig],
) -> Result<ComparisonReport> {
    let jobs: Vec<ScenarioConfig> = scenarios
        .iter()
        .flat_map(|s| {
            [
                ControllerSpec::Lookup,
                ControllerSpec::FixedConsensus(baselines.fixed_consensus),
                ControllerSpec::LinearFeedback(baselines.linear_feedback),
            ]
            .map(|controller| ScenarioConfig {
                controller,
                ..s.clone()
            })
        })
        .collect();
    let runs = jobs
        .par_iter()
        .map(|job| run_scenario(job, sim, Some(table), baselines))
        .collect::<Result<Vec<_>>>()?;

    let mut verdicts = Vec::new();
    for s in scenarios {
        let time = |kind| {
            runs.iter()
                .find(|r| r.report.scenario == s.id && r.report.controller == kind)
                .and_then(|r| r.report.metrics.t_consensus)
        };
        for baseline in [ControllerKind::FixedConsensus, ControllerKind::LinearFeedback] {
            verdicts.push(OrderingVerdict {
                scenario: s.id.clone(),
                baseline,
                lookup_time: time(ControllerKind::Lookup),
                baseline_time: time(baseline),
            });
        }
    }
    Ok(ComparisonReport { runs, verdicts })
}
