//! Offline stability checks: the coupling-gain lower bound from the
//! closed-loop topology spectrum, and a string-stability magnitude sweep.

use nalgebra::{Complex, DMatrix};

use crate::controller::GainPair;
use crate::error::{ensure_finite, invalid, Error, Result};

/// Largest matrix handled by the general eigensolver.
pub const MAX_GENERAL_DIM: usize = 16;

const EIG_TOL: f64 = 1e-9;

/// How a [`TopologyMatrix`] was assembled, carried into reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assembly {
    /// `diag(a_12 k_12, a_23 k_23, ...)` for a predecessor-following string.
    PredecessorDiagonal,
    /// Weighted Laplacian `L = D - A` of the information graph.
    Laplacian,
    Custom,
}

impl Assembly {
    pub fn as_str(&self) -> &'static str {
        match self {
            Assembly::PredecessorDiagonal => "predecessor-diagonal",
            Assembly::Laplacian => "laplacian",
            Assembly::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyMatrix {
    entries: DMatrix<f64>,
    assembly: Assembly,
}

impl TopologyMatrix {
    /// Square matrix from row-major entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::BadMatrixShape {
                rows: n,
                cols: rows.first().map_or(0, Vec::len),
            });
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(m, Assembly::Custom)
    }

    pub fn new(entries: DMatrix<f64>, assembly: Assembly) -> Result<Self> {
        if entries.nrows() == 0 || entries.nrows() != entries.ncols() {
            return Err(Error::BadMatrixShape {
                rows: entries.nrows(),
                cols: entries.ncols(),
            });
        }
        for &v in entries.iter() {
            ensure_finite("matrix entry", v)?;
        }
        Ok(Self { entries, assembly })
    }

    /// Diagonal of `a_(i-1)i * k_(i-1)i` over the followers of a string.
    pub fn predecessor_diagonal(adjacency: &[f64], gains: &[f64]) -> Result<Self> {
        if adjacency.len() != gains.len() {
            return Err(invalid("gains", "need one gain per link"));
        }
        let d: Vec<f64> = adjacency.iter().zip(gains).map(|(a, k)| a * k).collect();
        Self::new(
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)),
            Assembly::PredecessorDiagonal,
        )
    }

    /// Weighted Laplacian of `weights[i][j]` (the weight of information
    /// flowing from `j` to `i`).
    pub fn laplacian(weights: &[Vec<f64>]) -> Result<Self> {
        let w = Self::from_rows(weights)?.entries;
        let n = w.nrows();
        let l = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                (0..n).filter(|&c| c != i).map(|c| w[(i, c)]).sum()
            } else {
                -w[(i, j)]
            }
        });
        Self::new(l, Assembly::Laplacian)
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn assembly(&self) -> Assembly {
        self.assembly
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    fn is_triangular(&self) -> bool {
        let n = self.n();
        let upper = (0..n).all(|i| (0..i).all(|j| self.entries[(i, j)] == 0.0));
        let lower = (0..n).all(|i| (i + 1..n).all(|j| self.entries[(i, j)] == 0.0));
        upper || lower
    }

    /// Spectrum of the matrix. Triangular (incl. diagonal) matrices are read
    /// off exactly; others go through a real Schur decomposition.
    pub fn eigenvalues(&self) -> Result<Vec<Complex<f64>>> {
        let n = self.n();
        if self.is_triangular() {
            return Ok((0..n)
                .map(|i| Complex::new(self.entries[(i, i)], 0.0))
                .collect());
        }
        if n > MAX_GENERAL_DIM {
            return Err(invalid(
                "matrix",
                format!("general eigensolver limited to n <= {MAX_GENERAL_DIM}"),
            ));
        }
        let schur = nalgebra::linalg::Schur::try_new(self.entries.clone(), 1e-14, 10_000)
            .ok_or(Error::EigenNoConvergence)?;
        Ok(schur.complex_eigenvalues().iter().copied().collect())
    }
}

/// `max |Im mu| / sqrt(|Re mu| |mu|)` over the spectrum.
///
/// Real eigenvalues contribute 0. A purely imaginary pair makes the bound
/// infinite: no finite coupling gain satisfies it.
pub fn gamma_lower_bound(m: &TopologyMatrix) -> Result<f64> {
    Ok(gamma_bound_of(&m.eigenvalues()?))
}

pub fn gamma_bound_of(eigenvalues: &[Complex<f64>]) -> f64 {
    eigenvalues
        .iter()
        .map(|mu| {
            let scale = mu.norm().max(1.0);
            if mu.im.abs() <= EIG_TOL * scale {
                0.0
            } else if mu.re.abs() <= EIG_TOL * scale {
                f64::INFINITY
            } else {
                mu.im.abs() / (mu.re.abs() * mu.norm()).sqrt()
            }
        })
        .fold(0.0, f64::max)
}

/// Log-spaced frequency grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencySweep {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
}

impl Default for FrequencySweep {
    fn default() -> Self {
        Self {
            omega_min: 1e-3,
            omega_max: 1e2,
            points: 400,
        }
    }
}

impl FrequencySweep {
    pub fn new(omega_min: f64, omega_max: f64, points: usize) -> Result<Self> {
        let s = Self {
            omega_min,
            omega_max,
            points,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_min.is_finite() && self.omega_max.is_finite()) {
            return Err(invalid("sweep", "bounds must be finite"));
        }
        if !(0.0 < self.omega_min && self.omega_min < self.omega_max) {
            return Err(invalid("sweep", "need 0 < omega_min < omega_max"));
        }
        if self.points < 2 {
            return Err(invalid("sweep", "need at least two points"));
        }
        Ok(())
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        let (lo, hi) = (self.omega_min.ln(), self.omega_max.ln());
        let last = (self.points - 1) as f64;
        (0..self.points).map(move |i| (lo + (hi - lo) * i as f64 / last).exp())
    }
}

/// Parameters of the spacing-error transfer function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferParams {
    pub gains: GainPair,
    pub adjacency: f64,
    pub time_gap: f64,
    pub delay: f64,
}

/// `|G(j omega)|` with
/// `G(s) = a k e^{-tau s} (1 + s (t_g + tau) + s gamma) / (s^2 + gamma s + 1)`.
///
/// Returns `None` where the denominator vanishes.
pub fn transfer_magnitude(p: &TransferParams, omega: f64) -> Option<f64> {
    let s = Complex::new(0.0, omega);
    let delay = (-s * p.delay).exp();
    let num = delay
        * p.adjacency
        * p.gains.k
        * (Complex::new(1.0, 0.0) + s * (p.time_gap + p.delay) + s * p.gains.gamma);
    let den = s * s + s * p.gains.gamma + 1.0;
    if den.norm() == 0.0 {
        return None;
    }
    Some((num / den).norm())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StringStabilityReport {
    pub max_magnitude: f64,
    pub worst_omega: f64,
    /// Sweep frequencies skipped because the denominator vanished there.
    pub skipped: Vec<f64>,
}

impl StringStabilityReport {
    pub fn is_string_stable(&self) -> bool {
        self.max_magnitude <= 1.0
    }
}

pub fn string_stability_margin(
    gains: GainPair,
    adjacency: f64,
    time_gap: f64,
    delay: f64,
    sweep: &FrequencySweep,
) -> Result<StringStabilityReport> {
    if !gains.is_valid() {
        return Err(Error::InvalidGains);
    }
    sweep.validate()?;
    let p = TransferParams {
        gains,
        adjacency,
        time_gap,
        delay,
    };
    let mut report = StringStabilityReport {
        max_magnitude: 0.0,
        worst_omega: sweep.omega_min,
        skipped: Vec::new(),
    };
    for omega in sweep.frequencies() {
        match transfer_magnitude(&p, omega) {
            Some(mag) if mag > report.max_magnitude => {
                report.max_magnitude = mag;
                report.worst_omega = omega;
            }
            Some(_) => {}
            None => report.skipped.push(omega),
        }
    }
    Ok(report)
}
