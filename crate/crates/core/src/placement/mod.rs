//! Placement drivers: penalized majorization-minimization, swap local search,
//! the iterative minimum-PMU search and the box-relaxation baseline.

mod box_relax;
mod local_search;
mod min_pmu;
mod penalized;
mod swap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    EstimationProblem, DEFAULT_BRANCH_NOISE, DEFAULT_VOLTAGE_NOISE,
};
use crate::grid::{incidence_matrices, GridModel, IncidencePair};
use crate::observability::{count_unobserved, ConstraintKind, ObservabilityConstraint};

pub use box_relax::{box_relax_round, project_capped_simplex, BoxRelaxConfig};
pub use local_search::{greedy_seed, local_search, local_search_with, LocalSearchConfig, SearchOutcome};
pub use min_pmu::{min_pmu_iterative, MinPmuConfig};
pub use penalized::{penalized, penalized_mi, penalized_mmse, MuChoice, PenalizedConfig};
pub use swap::{LinearSwap, LogDetSwap, SwapObjective, TraceSwap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Minimize the MSE `f_e`.
    Mse,
    /// Maximize the log-det information `f_MI`.
    Mi,
}

impl ObjectiveKind {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Mse => "mse",
            ObjectiveKind::Mi => "mi",
        }
    }
}

impl std::str::FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" | "mmse" => Ok(ObjectiveKind::Mse),
            "mi" => Ok(ObjectiveKind::Mi),
            other => Err(Error::Config(format!("unknown objective '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    PenalizedMmse,
    PenalizedMi,
    LocalSearch,
    MinPmuIterative,
    BoxRelaxBaseline,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::PenalizedMmse => "penalized-mmse",
            Algorithm::PenalizedMi => "penalized-mi",
            Algorithm::LocalSearch => "local-search",
            Algorithm::MinPmuIterative => "min-pmu",
            Algorithm::BoxRelaxBaseline => "box-relax",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "penalized-mmse" | "penalized-mse" => Ok(Algorithm::PenalizedMmse),
            "penalized-mi" => Ok(Algorithm::PenalizedMi),
            "local-search" => Ok(Algorithm::LocalSearch),
            "min-pmu" | "min-pmu-iterative" => Ok(Algorithm::MinPmuIterative),
            "box-relax" | "box-relax-round" => Ok(Algorithm::BoxRelaxBaseline),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// Noise and injection settings used to build the estimation problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationSettings {
    /// Multiplies MW injections; `None` means `1/baseMVA`.
    pub injection_scale: Option<f64>,
    pub voltage_noise: f64,
    pub branch_noise: f64,
}

impl Default for EstimationSettings {
    fn default() -> Self {
        EstimationSettings {
            injection_scale: None,
            voltage_noise: DEFAULT_VOLTAGE_NOISE,
            branch_noise: DEFAULT_BRANCH_NOISE,
        }
    }
}

/// A grid together with its estimation problem and incidence matrices.
#[derive(Clone, Debug)]
pub struct Network {
    pub problem: EstimationProblem,
    pub incidence: IncidencePair,
    /// Diagonal shift added to a numerically singular `B`, if any.
    pub regularization: Option<f64>,
}

impl Network {
    pub fn from_grid(grid: &GridModel, settings: &EstimationSettings) -> Result<Self> {
        let scale = settings.injection_scale.unwrap_or(1.0 / grid.base_mva());
        let problem =
            EstimationProblem::from_grid(grid, scale, settings.voltage_noise, settings.branch_noise)?;
        Ok(Network {
            problem,
            incidence: incidence_matrices(grid),
            regularization: grid.regularization(),
        })
    }

    pub fn n_buses(&self) -> usize {
        self.problem.dim()
    }

    pub fn constraint(&self, kind: ConstraintKind) -> ObservabilityConstraint {
        ObservabilityConstraint::new(kind, &self.incidence)
    }

    /// Metrics and observability status of a binary placement.
    pub fn evaluate(&self, x: &[f64], budget: usize) -> Result<(PlacementRecord, FinalMetrics)> {
        let m = self.problem.metrics(x)?;
        let normalized_mi = self.problem.normalized_mi(x)?;
        let unobserved = count_unobserved(x, &self.incidence.bus_to_bus)?;
        let status = if self.constraint(ConstraintKind::Complete).is_satisfied(x)? {
            "complete"
        } else if self.constraint(ConstraintKind::DepthOne).is_satisfied(x)? {
            "depth_one"
        } else {
            "unobservable"
        };
        let record = PlacementRecord {
            x: x.iter().map(|&v| u8::from(v > 0.5)).collect(),
            s: budget,
            f_e: m.f_e,
            f_mi: m.f_mi,
            observability_status: status.to_string(),
        };
        let metrics = FinalMetrics {
            f_e: m.f_e,
            f_mi: m.f_mi,
            normalized_mi,
            unobserved_count: unobserved,
        };
        Ok((record, metrics))
    }
}

/// `{x, S, f_e, f_mi, observability_status}`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub x: Vec<u8>,
    #[serde(rename = "S")]
    pub s: usize,
    pub f_e: f64,
    pub f_mi: f64,
    /// `complete`, `depth_one` or `unobservable`: the strongest condition met.
    pub observability_status: String,
}

impl PlacementRecord {
    pub fn support(&self) -> Vec<usize> {
        self.x
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == 1)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn x_f64(&self) -> Vec<f64> {
        self.x.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub f_e: f64,
    pub f_mi: f64,
    pub normalized_mi: f64,
    pub unobserved_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub kappa: usize,
    /// `F_μ` for penalized runs, the objective otherwise.
    pub objective: f64,
    pub g_tilde: Option<f64>,
    pub mu: Option<f64>,
    pub step: String,
    pub time_ms: f64,
    pub kkt_residual: Option<f64>,
    pub newton_steps: Option<usize>,
    #[serde(default)]
    pub trust_active: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub epsilon: Option<f64>,
    pub mu_final: Option<f64>,
    pub mu_escalations: usize,
    /// Right-hand-side relaxation applied to covering rows with no strict
    /// interior.
    pub covering_relaxation: Option<f64>,
    /// Largest change made by rounding the final iterate.
    pub rounding_change: Option<f64>,
    pub regularization: Option<f64>,
    /// Objective of the fractional point before rounding (baseline only).
    pub relaxed_objective: Option<f64>,
    /// Objective of the rounded point before the swap polish, and the number
    /// of swaps the polish made.
    pub pre_polish_objective: Option<f64>,
    pub polish_moves: Option<usize>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: Algorithm,
    pub objective: ObjectiveKind,
    pub constraint: ConstraintKind,
    pub budget: usize,
    pub iterations: Vec<IterationRecord>,
    pub final_placement: PlacementRecord,
    pub final_metrics: FinalMetrics,
    pub wall_time_s: f64,
    pub config_snapshot: serde_json::Value,
    pub diagnostics: Diagnostics,
}

impl RunReport {
    /// Value of the run's objective at the final placement, in its natural
    /// sense (MSE or `f_MI`).
    pub fn objective_value(&self) -> f64 {
        match self.objective {
            ObjectiveKind::Mse => self.final_metrics.f_e,
            ObjectiveKind::Mi => self.final_metrics.f_mi,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub(crate) fn check_budget(n: usize, budget: usize) -> Result<()> {
    if budget == 0 || budget > n {
        return Err(Error::Config(format!("budget S must lie in [1, {n}], got {budget}")));
    }
    Ok(())
}

/// Rounds at 0.5, then repairs the count to `budget` by flipping the entries
/// closest to 0.5 (lowest index on ties). Returns the binary vector and the
/// largest entry change.
pub fn round_with_repair(x: &[f64], budget: usize) -> (Vec<f64>, f64) {
    let mut out: Vec<f64> = x.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect();
    let ones = out.iter().filter(|&&v| v == 1.0).count();
    let by_closeness = |idx: &mut Vec<usize>| {
        idx.sort_by(|&a, &b| {
            (x[a] - 0.5)
                .abs()
                .partial_cmp(&(x[b] - 0.5).abs())
                .unwrap()
                .then(a.cmp(&b))
        })
    };
    if ones > budget {
        let mut idx: Vec<usize> = (0..x.len()).filter(|&k| out[k] == 1.0).collect();
        by_closeness(&mut idx);
        for &k in idx.iter().take(ones - budget) {
            out[k] = 0.0;
        }
    } else if ones < budget {
        let mut idx: Vec<usize> = (0..x.len()).filter(|&k| out[k] == 0.0).collect();
        by_closeness(&mut idx);
        for &k in idx.iter().take(budget - ones) {
            out[k] = 1.0;
        }
    }
    let change = x
        .iter()
        .zip(&out)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    (out, change)
}

/// Indicator of the `budget` largest entries (lowest index on ties).
pub fn top_s(x: &[f64], budget: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap().then(a.cmp(&b)));
    let mut out = vec![0.0; x.len()];
    for &k in idx.iter().take(budget) {
        out[k] = 1.0;
    }
    out
}

fn support_to_x(n: usize, support: &[usize]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for &k in support {
        x[k] = 1.0;
    }
    x
}
