//! Optimal PMU placement for DC state estimation.
//!
//! The crate covers the whole pipeline: MATPOWER case parsing and the DC
//! susceptance model ([`grid`]), the Gaussian prior and PMU measurement model
//! with the MSE and log-det objectives ([`estimation`]), observability
//! constraints and an exact minimum-PMU solver ([`observability`]), the
//! penalty / surrogate machinery with its barrier inner solver ([`convex`]),
//! and the placement drivers built on top ([`placement`]).
// `!(v > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convex;
pub mod error;
pub mod estimation;
pub mod grid;
pub mod linalg;
pub mod observability;
pub mod placement;
pub mod synthetic;

pub use error::{Error, Result};
pub use estimation::{
    monte_carlo_mse, EstimationProblem, InjectionStats, LinearEstimator, MeasurementModel,
    Metrics, MonteCarloResult, Placement, StatePrior,
};
pub use grid::{
    build_susceptance, incidence_matrices, load_case, parse_case, GridModel, GridSnapshot,
    IeeeCase, IncidencePair,
};
pub use observability::{
    count_unobserved, min_pmu_blp, BlpOptions, BlpSolution, ConstraintKind,
    ObservabilityConstraint,
};
pub use placement::{
    box_relax_round, local_search, min_pmu_iterative, penalized, penalized_mi, penalized_mmse,
    Algorithm, BoxRelaxConfig, EstimationSettings, FinalMetrics, LocalSearchConfig, MinPmuConfig,
    MuChoice, Network, ObjectiveKind, PenalizedConfig, PlacementRecord, RunReport,
};
pub use synthetic::{random_grid, SyntheticSpec};
