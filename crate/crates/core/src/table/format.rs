//! Line-oriented text persistence for [`GainTable`].
//!
//! ```text
//! gaintable-v1
//! axes dr=<list> vi=<list> vj=<list>
//! candidates gamma=<list> k=<list>
//! meta dt=<s> tmax=<s> tau=<s> lj=<m> tg=<s> eta_r=.. eta_v=.. delta_a=.. delta_jerk=.. w1=.. w2=.. mode=.. hold=<s>
//! cell <i1> <i2> <i3> <k|NaN> <gamma|NaN>     (one per cell, i1 outermost)
//! ```
//!
//! Numbers use Rust's shortest round-trip decimal form, so a load reproduces
//! every bit of the saved table.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{AxisGrid, CandidateSets, GainTable, TableAxes};
use crate::controller::GainPair;
use crate::error::{Error, Result};
use crate::metrics::{ComfortWeights, ConsensusThresholds};
use crate::sim::BuildConfig;

pub const FORMAT_VERSION: &str = "gaintable-v1";

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub(super) fn header_lines(table: &GainTable) -> [String; 4] {
    let c = &table.config;
    [
        FORMAT_VERSION.to_string(),
        format!(
            "axes dr={} vi={} vj={}",
            join(table.axes.dr.values()),
            join(table.axes.vi.values()),
            join(table.axes.vj.values())
        ),
        format!(
            "candidates gamma={} k={}",
            join(table.candidates.gammas()),
            join(table.candidates.ks())
        ),
        format!(
            "meta dt={} tmax={} tau={} lj={} tg={} eta_r={} eta_v={} delta_a={} delta_jerk={} w1={} w2={} mode={} hold={}",
            c.dt,
            c.t_max,
            c.comm_delay,
            c.leader_length,
            c.time_gap,
            c.thresholds.eta_r,
            c.thresholds.eta_v,
            c.thresholds.delta_a,
            c.thresholds.delta_jerk,
            c.weights.omega_1,
            c.weights.omega_2,
            c.safety_mode,
            c.hold_window
        ),
    ]
}

pub fn write_table<W: Write>(table: &GainTable, mut out: W) -> Result<()> {
    for line in header_lines(table) {
        writeln!(out, "{line}")?;
    }
    let [n1, n2, n3] = table.axes.shape();
    let mut cells = table.cells().iter();
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            for i3 in 0..n3 {
                let c = cells.next().expect("cell count matches axes");
                if c.is_valid() {
                    writeln!(out, "cell {i1} {i2} {i3} {} {}", c.k, c.gamma)?;
                } else {
                    writeln!(out, "cell {i1} {i2} {i3} NaN NaN")?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_table(table: &GainTable, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_table(table, BufWriter::new(file))
}

pub fn load_table(path: impl AsRef<Path>) -> Result<GainTable> {
    read_table(BufReader::new(File::open(path)?))
}

fn malformed(line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedRow {
        line,
        reason: reason.into(),
    }
}

fn parse_num(line: usize, key: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .map_err(|_| malformed(line, format!("`{key}`: `{raw}` is not a number")))
}

/// Parses `tag k1=v1 k2=v2 ...` into its fields, checking the tag.
fn fields<'a>(line_no: usize, line: &'a str, tag: &str) -> Result<HashMap<&'a str, &'a str>> {
    let mut parts = line.split(' ');
    if parts.next() != Some(tag) {
        return Err(malformed(line_no, format!("expected `{tag}` line")));
    }
    let mut map = HashMap::new();
    for part in parts {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| malformed(line_no, format!("`{part}` is not key=value")))?;
        if map.insert(k, v).is_some() {
            return Err(malformed(line_no, format!("duplicate key `{k}`")));
        }
    }
    Ok(map)
}

fn take<'a>(map: &HashMap<&str, &'a str>, line: usize, key: &str) -> Result<&'a str> {
    map.get(key)
        .copied()
        .ok_or_else(|| malformed(line, format!("missing `{key}`")))
}

fn list(map: &HashMap<&str, &str>, line: usize, key: &str) -> Result<Vec<f64>> {
    take(map, line, key)?
        .split(',')
        .map(|s| parse_num(line, key, s))
        .collect()
}

fn with_line<T>(line: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidParameter { name, reason } => malformed(line, format!("{name}: {reason}")),
        other => other,
    })
}

pub fn read_table<R: BufRead>(input: R) -> Result<GainTable> {
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next_header = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, l)) => Ok((n, l?)),
            None => Err(malformed(0, format!("file ends before the {what} line"))),
        }
    };

    let (_, version) = next_header("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }

    let (n, axes_line) = next_header("axes")?;
    let m = fields(n, &axes_line, "axes")?;
    let axes = TableAxes::new(
        with_line(n, AxisGrid::new(list(&m, n, "dr")?))?,
        with_line(n, AxisGrid::new(list(&m, n, "vi")?))?,
        with_line(n, AxisGrid::new(list(&m, n, "vj")?))?,
    );

    let (n, cand_line) = next_header("candidates")?;
    let m = fields(n, &cand_line, "candidates")?;
    let candidates = with_line(
        n,
        CandidateSets::new(list(&m, n, "gamma")?, list(&m, n, "k")?),
    )?;

    let (n, meta_line) = next_header("meta")?;
    let m = fields(n, &meta_line, "meta")?;
    let num = |key: &str| parse_num(n, key, take(&m, n, key)?);
    let config = BuildConfig {
        dt: num("dt")?,
        t_max: num("tmax")?,
        comm_delay: num("tau")?,
        leader_length: num("lj")?,
        time_gap: num("tg")?,
        thresholds: ConsensusThresholds {
            eta_r: num("eta_r")?,
            eta_v: num("eta_v")?,
            delta_a: num("delta_a")?,
            delta_jerk: num("delta_jerk")?,
        },
        weights: ComfortWeights {
            omega_1: num("w1")?,
            omega_2: num("w2")?,
        },
        safety_mode: with_line(n, take(&m, n, "mode")?.parse())?,
        hold_window: num("hold")?,
    };

    let expected = axes.cell_count();
    let mut cells = Vec::with_capacity(expected);
    for (n, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        if cells.len() == expected {
            return Err(Error::CellCountMismatch {
                expected,
                found: expected + 1,
            });
        }
        let parts: Vec<&str> = line.split(' ').collect();
        if parts.len() != 6 || parts[0] != "cell" {
            return Err(malformed(n, "expected `cell <i1> <i2> <i3> <k> <gamma>`"));
        }
        let want = axes.unflatten(cells.len());
        for (axis, (raw, want)) in parts[1..4].iter().zip(want).enumerate() {
            let idx: usize = raw
                .parse()
                .map_err(|_| malformed(n, format!("bad index `{raw}`")))?;
            if idx != want {
                return Err(malformed(
                    n,
                    format!("axis {} index {idx} out of row-major order (expected {want})", axis + 1),
                ));
            }
        }
        let k = parse_num(n, "k", parts[4])?;
        let gamma = parse_num(n, "gamma", parts[5])?;
        let pair = match (k.is_nan(), gamma.is_nan()) {
            (true, true) => GainPair::SENTINEL,
            (false, false) => GainPair::new(k, gamma)
                .map_err(|e| malformed(n, format!("invalid gains: {e}")))?,
            _ => return Err(malformed(n, "k and gamma must both be NaN or both be numbers")),
        };
        cells.push(pair);
    }
    if cells.len() != expected {
        return Err(Error::CellCountMismatch {
            expected,
            found: cells.len(),
        });
    }
    GainTable::from_cells(axes, candidates, config, cells)
}
