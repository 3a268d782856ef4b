//! `key = value` config files with `[section]` headers.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use super::{Baselines, ControllerSpec, LeaderProfile, LinearBaseline, ScenarioConfig};
use crate::controller::{GainPair, LinearFeedbackGains};
use crate::error::{Error, Result};
use crate::metrics::{ComfortWeights, ConsensusThresholds};
use crate::sim::{BuildConfig, InitialCondition};
use crate::stability::FrequencySweep;
use crate::table::{AxisGrid, CandidateSets, TableAxes};

/// A parsed config file that remembers its path for diagnostics.
pub struct ConfigDoc {
    path: PathBuf,
    ini: Ini,
}

impl ConfigDoc {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let ini = Ini::load_from_file(&path).map_err(|e| Error::Config {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        Ok(Self { path, ini })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config {
            path: PathBuf::from("<inline>"),
            reason: e.to_string(),
        })?;
        Ok(Self {
            path: PathBuf::from("<inline>"),
            ini,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.clone(),
            reason: reason.into(),
        }
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.ini.section(Some(section)).is_some()
    }

    pub fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.ini
            .section(Some(section))
            .and_then(|s| s.get(key))
            .map(str::trim)
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str> {
        self.raw(section, key)
            .ok_or_else(|| self.err(format!("missing `{key}` in [{section}]")))
    }

    pub fn value<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        self.raw(section, key)
            .map(|raw| {
                raw.parse::<T>()
                    .map_err(|_| self.err(format!("[{section}] {key} = `{raw}` is not valid")))
            })
            .transpose()
    }

    pub fn value_or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.value(section, key)?.unwrap_or(default))
    }

    pub fn required<T: FromStr>(&self, section: &str, key: &str) -> Result<T> {
        self.value(section, key)?
            .ok_or_else(|| self.err(format!("missing `{key}` in [{section}]")))
    }

    /// A list written either as `a, b, c` or as the inclusive range `start:step:end`.
    pub fn list(&self, section: &str, key: &str) -> Result<Vec<f64>> {
        let raw = self.require(section, key)?;
        parse_list(raw).map_err(|reason| self.err(format!("[{section}] {key}: {reason}")))
    }

    fn tag_err(&self, e: Error) -> Error {
        match e {
            Error::InvalidParameter { name, reason } => self.err(format!("{name}: {reason}")),
            other => other,
        }
    }
}

pub fn parse_list(raw: &str) -> std::result::Result<Vec<f64>, String> {
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("`{}` is not a number", s.trim()))
    };
    if raw.contains(':') {
        let parts: Vec<&str> = raw.split(':').collect();
        let [start, step, end] = parts[..] else {
            return Err("range must be start:step:end".into());
        };
        let grid = AxisGrid::range(num(start)?, num(end)?, num(step)?).map_err(|e| e.to_string())?;
        return Ok(grid.values().to_vec());
    }
    raw.split(',').map(num).collect()
}

pub fn build_config(doc: &ConfigDoc) -> Result<BuildConfig> {
    let d = BuildConfig::default();
    let th = ConsensusThresholds::default();
    let w = ComfortWeights::default();
    let cfg = BuildConfig {
        dt: doc.value_or("sim", "dt", d.dt)?,
        t_max: doc.value_or("sim", "tmax", d.t_max)?,
        comm_delay: doc.value_or("sim", "tau", d.comm_delay)?,
        leader_length: doc.value_or("sim", "lj", d.leader_length)?,
        time_gap: doc.value_or("sim", "tg", d.time_gap)?,
        hold_window: doc.value_or("sim", "hold", d.hold_window)?,
        thresholds: ConsensusThresholds {
            eta_r: doc.value_or("consensus", "eta_r", th.eta_r)?,
            eta_v: doc.value_or("consensus", "eta_v", th.eta_v)?,
            delta_a: doc.value_or("consensus", "delta_a", th.delta_a)?,
            delta_jerk: doc.value_or("consensus", "delta_jerk", th.delta_jerk)?,
        },
        weights: ComfortWeights {
            omega_1: doc.value_or("comfort", "w1", w.omega_1)?,
            omega_2: doc.value_or("comfort", "w2", w.omega_2)?,
        },
        safety_mode: match doc.raw("safety", "mode") {
            Some(m) => m.parse().map_err(|e| doc.tag_err(e))?,
            None => d.safety_mode,
        },
    };
    cfg.validate().map_err(|e| doc.tag_err(e))?;
    Ok(cfg)
}

pub fn table_axes(doc: &ConfigDoc) -> Result<TableAxes> {
    let grid = |key| AxisGrid::new(doc.list("axes", key)?).map_err(|e| doc.tag_err(e));
    Ok(TableAxes::new(grid("dr")?, grid("vi")?, grid("vj")?))
}

pub fn candidate_sets(doc: &ConfigDoc) -> Result<CandidateSets> {
    CandidateSets::new(
        doc.list("candidates", "gamma")?,
        doc.list("candidates", "k")?,
    )
    .map_err(|e| doc.tag_err(e))
}

pub fn frequency_sweep(doc: &ConfigDoc) -> Result<FrequencySweep> {
    let d = FrequencySweep::default();
    FrequencySweep::new(
        doc.value_or("sweep", "omega_min", d.omega_min)?,
        doc.value_or("sweep", "omega_max", d.omega_max)?,
        doc.value_or("sweep", "points", d.points)?,
    )
    .map_err(|e| doc.tag_err(e))
}

fn gain_pair(doc: &ConfigDoc, section: &str, default: GainPair) -> Result<GainPair> {
    GainPair::new(
        doc.value_or(section, "k", default.k)?,
        doc.value_or(section, "gamma", default.gamma)?,
    )
    .map_err(|e| doc.tag_err(e))
}

fn linear_baseline(doc: &ConfigDoc, section: &str, default: LinearBaseline) -> Result<LinearBaseline> {
    let g = default.gains;
    let gains = LinearFeedbackGains::new(
        doc.value_or(section, "k_a", g.k_a)?,
        doc.value_or(section, "k_v", g.k_v)?,
        doc.value_or(section, "k_d", g.k_d)?,
        doc.value_or(section, "standstill_gap", g.standstill_gap)?,
    )
    .map_err(|e| doc.tag_err(e))?;
    let time_gap: f64 = doc.value_or(section, "time_gap", default.time_gap)?;
    if !(time_gap.is_finite() && time_gap > 0.0) {
        return Err(doc.err(format!("[{section}] time_gap must be positive")));
    }
    Ok(LinearBaseline { gains, time_gap })
}

/// Baseline and fallback controller settings; every section is optional.
pub fn baselines(doc: &ConfigDoc) -> Result<Baselines> {
    let d = Baselines::default();
    Ok(Baselines {
        fixed_consensus: gain_pair(doc, "fixed_consensus", d.fixed_consensus)?,
        linear_feedback: linear_baseline(doc, "linear_feedback", d.linear_feedback)?,
        fallback: linear_baseline(doc, "fallback", d.fallback)?,
    })
}

/// Scenario files listed under `[suite] scenarios`, resolved against the
/// directory of `doc`.
pub fn suite_scenario_paths(doc: &ConfigDoc) -> Option<Vec<PathBuf>> {
    let raw = doc.raw("suite", "scenarios")?;
    let base = doc.path().parent().unwrap_or(Path::new("."));
    Some(
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| base.join(s))
            .collect(),
    )
}

pub fn scenario(doc: &ConfigDoc, baselines: &Baselines) -> Result<ScenarioConfig> {
    let s = "scenario";
    let id = doc
        .raw(s, "id")
        .map(str::to_string)
        .or_else(|| {
            doc.path()
                .file_stem()
                .map(|stem| stem.to_string_lossy().into_owned())
        })
        .unwrap_or_else(|| "scenario".into());
    let leader_profile = match doc.raw(s, "leader_profile").unwrap_or("constant") {
        "constant" | "constant_speed" => LeaderProfile::ConstantSpeed,
        other => return Err(doc.err(format!("unknown leader_profile `{other}`"))),
    };
    let controller = match doc.raw(s, "controller").unwrap_or("lookup") {
        "lookup" => ControllerSpec::Lookup,
        "fixed_consensus" => ControllerSpec::FixedConsensus(gain_pair(
            doc,
            "fixed_consensus",
            baselines.fixed_consensus,
        )?),
        "linear_feedback" => ControllerSpec::LinearFeedback(linear_baseline(
            doc,
            "linear_feedback",
            baselines.linear_feedback,
        )?),
        other => return Err(doc.err(format!("unknown controller `{other}`"))),
    };
    let cfg = ScenarioConfig {
        id,
        initial: InitialCondition::new(
            doc.required(s, "dr0")?,
            doc.required(s, "vi0")?,
            doc.required(s, "vj0")?,
        ),
        duration: doc.value_or(s, "duration", 120.0)?,
        leader_profile,
        controller,
    };
    cfg.validate().map_err(|e| doc.tag_err(e))?;
    Ok(cfg)
}
