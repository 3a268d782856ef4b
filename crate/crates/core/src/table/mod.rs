//! Offline gain-table construction and online nearest-cell lookup.

mod format;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

pub use format::{load_table, read_table, save_table, write_table, FORMAT_VERSION};

use crate::controller::GainPair;
use crate::error::{ensure_finite, invalid, Result};
use crate::sim::{evaluate, simulate, BuildConfig, Controller, InitialCondition, StopRule};

/// Strictly ascending grid of one table axis.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisGrid {
    values: Vec<f64>,
}

impl AxisGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("axis", "needs at least one value"));
        }
        for &v in &values {
            ensure_finite("axis value", v)?;
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("axis", "values must be strictly ascending"));
        }
        Ok(Self { values })
    }

    /// `start, start + step, ...` up to and including `end`.
    pub fn range(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) || !start.is_finite() || !end.is_finite() {
            return Err(invalid("axis range", "needs finite bounds and a positive step"));
        }
        let count = ((end - start) / step + 1e-9).floor();
        if count < 0.0 {
            return Err(invalid("axis range", "end precedes start"));
        }
        Self::new((0..=count as usize).map(|i| start + i as f64 * step).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.first() && x <= self.last()
    }

    /// Index of the grid value closest to `x`; exact midpoints go to the
    /// smaller value. `None` outside `[first, last]` or for NaN.
    pub fn nearest(&self, x: f64) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let hi = self.values.partition_point(|&v| v < x);
        if hi == 0 {
            return Some(0);
        }
        let lo = hi - 1;
        if hi == self.values.len() {
            return Some(lo);
        }
        if x - self.values[lo] <= self.values[hi] - x {
            Some(lo)
        } else {
            Some(hi)
        }
    }
}

/// The three cell axes: initial gap, follower speed, leader speed.
#[derive(Debug, Clone, PartialEq)]
pub struct TableAxes {
    pub dr: AxisGrid,
    pub vi: AxisGrid,
    pub vj: AxisGrid,
}

impl TableAxes {
    pub fn new(dr: AxisGrid, vi: AxisGrid, vj: AxisGrid) -> Self {
        Self { dr, vi, vj }
    }

    /// `dr = -100..=100 step 10`, `vi = vj = 2..=34 step 2`.
    pub fn standard() -> Self {
        Self {
            dr: AxisGrid::range(-100.0, 100.0, 10.0).expect("valid grid"),
            vi: AxisGrid::range(2.0, 34.0, 2.0).expect("valid grid"),
            vj: AxisGrid::range(2.0, 34.0, 2.0).expect("valid grid"),
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.dr.len(), self.vi.len(), self.vj.len()]
    }

    pub fn cell_count(&self) -> usize {
        self.shape().iter().product()
    }

    /// Row-major position of `(i1, i2, i3)`, `i1` outermost.
    pub fn flat_index(&self, [i1, i2, i3]: [usize; 3]) -> usize {
        let [_, n2, n3] = self.shape();
        (i1 * n2 + i2) * n3 + i3
    }

    pub fn unflatten(&self, flat: usize) -> [usize; 3] {
        let [_, n2, n3] = self.shape();
        [flat / (n2 * n3), (flat / n3) % n2, flat % n3]
    }

    pub fn key(&self, [i1, i2, i3]: [usize; 3]) -> InitialCondition {
        InitialCondition::new(
            self.dr.values()[i1],
            self.vi.values()[i2],
            self.vj.values()[i3],
        )
    }
}

/// Candidate gains searched for every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSets {
    gammas: Vec<f64>,
    ks: Vec<f64>,
}

impl CandidateSets {
    pub fn new(gammas: Vec<f64>, ks: Vec<f64>) -> Result<Self> {
        for (name, set) in [("gamma candidates", &gammas), ("k candidates", &ks)] {
            if set.is_empty() {
                return Err(invalid(name, "must not be empty"));
            }
            if set.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                return Err(invalid(name, "values must be finite and positive"));
            }
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid(name, "values must be strictly ascending"));
            }
        }
        Ok(Self { gammas, ks })
    }

    /// `gamma = 1..=10`, `k = 0.1`.
    pub fn standard() -> Self {
        Self {
            gammas: (1..=10).map(f64::from).collect(),
            ks: vec![0.1],
        }
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn ks(&self) -> &[f64] {
        &self.ks
    }

    /// All pairs, gamma-major, each in ascending order.
    pub fn pairs(&self) -> impl Iterator<Item = GainPair> + '_ {
        self.gammas
            .iter()
            .flat_map(move |&gamma| self.ks.iter().map(move |&k| GainPair { k, gamma }))
    }

    pub fn contains(&self, pair: &GainPair) -> bool {
        self.gammas.contains(&pair.gamma) && self.ks.contains(&pair.k)
    }
}

/// How one candidate fared on one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateOutcome {
    pub gains: GainPair,
    pub safe: bool,
    /// Sample index at which consensus starts.
    pub consensus_step: Option<usize>,
    pub omega: f64,
}

/// Simulates one candidate on one cell up to the consensus point (or `t_max`).
pub fn evaluate_candidate(
    cfg: &BuildConfig,
    init: InitialCondition,
    gains: GainPair,
) -> Result<CandidateOutcome> {
    let traj = simulate(
        cfg,
        init,
        &Controller::Consensus(gains),
        cfg.t_max,
        StopRule::Consensus,
        None,
    )?;
    let m = evaluate(&traj, cfg);
    Ok(CandidateOutcome {
        gains,
        safe: !m.safety_violated,
        consensus_step: m.t_consensus.map(|t| (t / cfg.dt).round() as usize),
        omega: m.omega,
    })
}

/// Picks the cell's gains from its candidate outcomes.
///
/// Safe candidates first; among those, the earliest consensus; then the
/// smallest comfort score; then the lexicographically smallest `(gamma, k)`.
/// Returns the sentinel when nothing is safe or no safe candidate converges.
pub fn select_gains(outcomes: &[CandidateOutcome]) -> GainPair {
    let converged: Vec<(usize, &CandidateOutcome)> = outcomes
        .iter()
        .filter(|o| o.safe)
        .filter_map(|o| o.consensus_step.map(|s| (s, o)))
        .collect();
    let Some(fastest) = converged.iter().map(|(s, _)| *s).min() else {
        return GainPair::SENTINEL;
    };
    let quickest: Vec<&CandidateOutcome> = converged
        .iter()
        .filter(|(s, _)| *s == fastest)
        .map(|(_, o)| *o)
        .collect();
    if let [only] = quickest[..] {
        return only.gains;
    }
    let best_omega = quickest
        .iter()
        .map(|o| o.omega)
        .fold(f64::INFINITY, f64::min);
    quickest
        .into_iter()
        .filter(|o| o.omega == best_omega)
        .map(|o| o.gains)
        .min_by(|a, b| a.gamma.total_cmp(&b.gamma).then(a.k.total_cmp(&b.k)))
        .unwrap_or(GainPair::SENTINEL)
}

/// Evaluates every candidate on one cell and selects its gains.
pub fn build_cell(
    cfg: &BuildConfig,
    candidates: &CandidateSets,
    init: InitialCondition,
) -> Result<GainPair> {
    let outcomes = candidates
        .pairs()
        .map(|g| evaluate_candidate(cfg, init, g))
        .collect::<Result<Vec<_>>>()?;
    Ok(select_gains(&outcomes))
}

/// Dense 3-D table of scheduled gains plus the settings it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTable {
    pub axes: TableAxes,
    pub candidates: CandidateSets,
    pub config: BuildConfig,
    cells: Vec<GainPair>,
}

impl GainTable {
    pub fn from_cells(
        axes: TableAxes,
        candidates: CandidateSets,
        config: BuildConfig,
        cells: Vec<GainPair>,
    ) -> Result<Self> {
        if cells.len() != axes.cell_count() {
            return Err(crate::error::Error::CellCountMismatch {
                expected: axes.cell_count(),
                found: cells.len(),
            });
        }
        Ok(Self {
            axes,
            candidates,
            config,
            cells,
        })
    }

    pub fn cells(&self) -> &[GainPair] {
        &self.cells
    }

    pub fn cell(&self, index: [usize; 3]) -> Option<GainPair> {
        let [n1, n2, n3] = self.axes.shape();
        (index[0] < n1 && index[1] < n2 && index[2] < n3)
            .then(|| self.cells[self.axes.flat_index(index)])
    }

    /// Nearest cell to the query, or `None` when any coordinate is outside
    /// its axis range.
    pub fn nearest_index(&self, dr: f64, vi: f64, vj: f64) -> Option<[usize; 3]> {
        Some([
            self.axes.dr.nearest(dr)?,
            self.axes.vi.nearest(vi)?,
            self.axes.vj.nearest(vj)?,
        ])
    }

    /// Gains of the nearest cell. `None` when out of range; the returned pair
    /// may be the sentinel. Either one means "use the fallback controller".
    pub fn lookup(&self, dr: f64, vi: f64, vj: f64) -> Option<GainPair> {
        self.nearest_index(dr, vi, vj)
            .map(|idx| self.cells[self.axes.flat_index(idx)])
    }

    pub fn valid_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.is_valid()).count()
    }

    /// SHA-256 over the canonical header lines (axes, candidates, settings).
    pub fn config_digest(&self) -> String {
        let mut h = Sha256::new();
        for line in format::header_lines(self) {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

/// Free-function form of [`GainTable::lookup`].
pub fn lookup(table: &GainTable, dr: f64, vi: f64, vj: f64) -> Option<GainPair> {
    table.lookup(dr, vi, vj)
}

/// Worker count for [`build_table`]. Results are identical for every choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Serial,
    /// Rayon's global pool.
    #[default]
    Auto,
    Workers(usize),
}

/// Builds the full table, evaluating every candidate on every cell.
pub fn build_table(
    axes: &TableAxes,
    candidates: &CandidateSets,
    cfg: &BuildConfig,
    parallelism: Parallelism,
) -> Result<GainTable> {
    cfg.validate()?;
    let n = axes.cell_count();
    let cell = |flat: usize| build_cell(cfg, candidates, axes.key(axes.unflatten(flat)));
    let cells = match parallelism {
        Parallelism::Serial => (0..n).map(cell).collect::<Result<Vec<_>>>()?,
        Parallelism::Auto => (0..n).into_par_iter().map(cell).collect::<Result<Vec<_>>>()?,
        Parallelism::Workers(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| invalid("workers", e.to_string()))?
            .install(|| (0..n).into_par_iter().map(cell).collect::<Result<Vec<_>>>())?,
    };
    GainTable::from_cells(axes.clone(), candidates.clone(), *cfg, cells)
}
