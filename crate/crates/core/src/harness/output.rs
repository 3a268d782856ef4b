use std::io::Write;

use super::{ComparisonReport, ControllerKind, GainsUsed, RunReport};
use crate::error::Result;
use crate::metrics::consensus_reached;
use crate::sim::{BuildConfig, Trajectory};

pub const TRAJECTORY_COLUMNS: [&str; 10] = [
    "t",
    "r_i",
    "v_i",
    "a_i",
    "jerk_i",
    "r_j",
    "v_j",
    "gap",
    "gap_error",
    "consensus_flag",
];

const REPORT_COLUMNS: [&str; 15] = [
    "scenario",
    "controller",
    "gamma",
    "k",
    "fallback_engaged",
    "t_consensus",
    "max_accel",
    "max_decel",
    "max_jerk",
    "min_jerk",
    "peak_jerk",
    "omega",
    "min_gap",
    "safety_violated",
    "trajectory",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per sample. `r_j`/`v_j` are the leader's true state; `gap` uses
/// the delayed leader sample the follower actually received.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, cfg: &BuildConfig, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_COLUMNS)?;
    for s in &traj.samples {
        let flag = consensus_reached(&s.consensus_sample(), &cfg.thresholds);
        w.write_record([
            s.t.to_string(),
            s.follower.position.to_string(),
            s.follower.speed.to_string(),
            s.follower.accel.to_string(),
            s.jerk.to_string(),
            s.leader.position.to_string(),
            s.leader.speed.to_string(),
            s.gap.to_string(),
            s.gap_error().to_string(),
            u8::from(flag).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn report_row(r: &RunReport) -> Vec<String> {
    let (gamma, k) = match r.gains {
        GainsUsed::Consensus(g) => (g.gamma.to_string(), g.k.to_string()),
        GainsUsed::LinearFeedback(_) => (String::new(), String::new()),
    };
    let m = &r.metrics;
    vec![
        r.scenario.clone(),
        r.controller.to_string(),
        gamma,
        k,
        r.fallback_engaged.to_string(),
        opt(m.t_consensus),
        m.max_accel.to_string(),
        m.max_decel.to_string(),
        m.max_jerk.to_string(),
        m.min_jerk.to_string(),
        m.peak_jerk().to_string(),
        m.omega.to_string(),
        opt(m.min_gap),
        m.safety_violated.to_string(),
        r.trajectory_path
            .as_ref()
            .and_then(|p| p.file_name())
            .map(|p| p.to_string_lossy().into_owned())
            .unwrap_or_default(),
    ]
}

pub fn write_report_csv<'a, W: Write>(
    reports: impl IntoIterator<Item = &'a RunReport>,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    for r in reports {
        w.write_record(report_row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_comparison_csv<W: Write>(report: &ComparisonReport, out: W) -> Result<()> {
    write_report_csv(report.reports(), out)
}

/// Convergence times and peak jerks laid out controller-by-scenario, followed
/// by the ordering verdicts.
pub fn write_table_matrix<W: Write>(report: &ComparisonReport, mut out: W) -> Result<()> {
    let ids = report.scenarios();
    let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.2}"));
    write!(out, "{:<17}", "controller")?;
    for id in &ids {
        write!(out, " {:>10}", format!("t[{id}]"))?;
    }
    for id in &ids {
        write!(out, " {:>10}", format!("jerk[{id}]"))?;
    }
    writeln!(out)?;
    for kind in ControllerKind::ALL {
        write!(out, "{:<17}", kind.as_str())?;
        for id in &ids {
            let t = report.get(id, kind).and_then(|r| r.metrics.t_consensus);
            write!(out, " {:>10}", cell(t))?;
        }
        for id in &ids {
            let j = report.get(id, kind).map(|r| r.metrics.peak_jerk());
            write!(out, " {:>10}", cell(j))?;
        }
        writeln!(out)?;
    }
    writeln!(out)?;
    for v in &report.verdicts {
        writeln!(
            out,
            "{}: lookup {} vs {} {} -> {}",
            v.scenario,
            cell(v.lookup_time),
            v.baseline,
            cell(v.baseline_time),
            if v.lookup_faster() { "faster" } else { "NOT faster" }
        )?;
    }
    out.flush()?;
    Ok(())
}
