//! Observability constraints and the exact minimum-PMU solver.

mod setcover;
mod simplex;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridModel, IncidencePair};

pub use setcover::{min_pmu_blp, solve_set_cover, BlpOptions, BlpSolution, SetCover};
pub use simplex::{solve_packing_lp, PackingLp, PackingStatus};

/// Row-wise slack used by [`ObservabilityConstraint::check`].
pub const CHECK_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// Every bus metered or adjacent to a metered bus: `𝒜x ≥ 1`.
    Complete,
    /// No two adjacent buses both unobserved: `ℬ𝒜x ≥ 1`.
    DepthOne,
    None,
}

impl ConstraintKind {
    pub fn name(self) -> &'static str {
        match self {
            ConstraintKind::Complete => "complete",
            ConstraintKind::DepthOne => "depth_one",
            ConstraintKind::None => "none",
        }
    }
}

impl std::str::FromStr for ConstraintKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "complete" | "co" => Ok(ConstraintKind::Complete),
            "depth_one" | "depthone" | "doou" => Ok(ConstraintKind::DepthOne),
            "none" => Ok(ConstraintKind::None),
            other => Err(Error::Config(format!("unknown constraint kind '{other}'"))),
        }
    }
}

/// `matrix · x ≥ 1` for a nonnegative integer matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservabilityConstraint {
    kind: ConstraintKind,
    matrix: DMatrix<u32>,
    /// Columns with a positive entry, per row.
    cover: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub satisfied: bool,
    pub violated_rows: Vec<usize>,
}

impl ObservabilityConstraint {
    pub fn new(kind: ConstraintKind, incidence: &IncidencePair) -> Self {
        let a = incidence.bus_to_bus.map(u32::from);
        let matrix = match kind {
            ConstraintKind::Complete => a,
            ConstraintKind::DepthOne => incidence.branch_to_bus.map(u32::from) * a,
            ConstraintKind::None => DMatrix::zeros(0, a.ncols()),
        };
        Self::from_matrix(kind, matrix)
    }

    pub fn for_grid(kind: ConstraintKind, grid: &GridModel) -> Self {
        Self::new(kind, &crate::grid::incidence_matrices(grid))
    }

    pub fn from_matrix(kind: ConstraintKind, matrix: DMatrix<u32>) -> Self {
        let cover = (0..matrix.nrows())
            .map(|i| (0..matrix.ncols()).filter(|&j| matrix[(i, j)] > 0).collect())
            .collect();
        ObservabilityConstraint {
            kind,
            matrix,
            cover,
        }
    }

    pub fn kind(&self) -> ConstraintKind {
        self.kind
    }

    pub fn matrix(&self) -> &DMatrix<u32> {
        &self.matrix
    }

    pub fn n_rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_buses(&self) -> usize {
        self.matrix.ncols()
    }

    /// Columns that cover row `i`.
    pub fn row_support(&self, i: usize) -> &[usize] {
        &self.cover[i]
    }

    /// Sparse rows `(column, value)`.
    pub fn sparse_rows(&self) -> Vec<Vec<(usize, f64)>> {
        self.cover
            .iter()
            .enumerate()
            .map(|(i, cols)| cols.iter().map(|&j| (j, self.matrix[(i, j)] as f64)).collect())
            .collect()
    }

    /// `matrix · x`
    pub fn lhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_buses() {
            return Err(Error::Contract(format!(
                "selection has {} entries, constraint has {} columns",
                x.len(),
                self.n_buses()
            )));
        }
        Ok(self
            .cover
            .iter()
            .enumerate()
            .map(|(i, cols)| cols.iter().map(|&j| self.matrix[(i, j)] as f64 * x[j]).sum())
            .collect())
    }

    /// Rows with `(matrix · x)_i < 1 − 1e-9`.
    pub fn check(&self, x: &[f64]) -> Result<CheckResult> {
        let violated_rows: Vec<usize> = self
            .lhs(x)?
            .iter()
            .enumerate()
            .filter(|(_, &v)| v < 1.0 - CHECK_TOL)
            .map(|(i, _)| i)
            .collect();
        Ok(CheckResult {
            satisfied: violated_rows.is_empty(),
            violated_rows,
        })
    }

    pub fn is_satisfied(&self, x: &[f64]) -> Result<bool> {
        Ok(self.check(x)?.satisfied)
    }

    pub fn set_cover(&self) -> SetCover {
        SetCover::new(self.n_buses(), self.cover.clone())
    }
}

/// Number of buses `k` with `(𝒜x)_k = 0`, i.e. neither metered nor adjacent to
/// a meter.
pub fn count_unobserved(x: &[f64], bus_to_bus: &DMatrix<u8>) -> Result<usize> {
    let n = bus_to_bus.ncols();
    if x.len() != n {
        return Err(Error::Contract(format!(
            "selection has {} entries, network has {n} buses",
            x.len()
        )));
    }
    Ok((0..bus_to_bus.nrows())
        .filter(|&k| (0..n).all(|j| bus_to_bus[(k, j)] == 0 || x[j] <= 0.5))
        .count())
}
