//! Penalty, surrogate bounds and the barrier solver behind the penalized
//! placement iterations.

pub mod barrier;
pub mod bounds;
pub mod penalty;
pub mod subproblem;
pub mod surrogate;

pub use barrier::{BarrierOptions, BarrierResult, ConvexObjective, LinearConstraints};
pub use bounds::{log_det_minorizer, trace_inverse_majorizer, BoundDirection, ReciprocalBound};
pub use penalty::{auto_mu, g_tilde, g_value, linearize, AffineMinorant, PenaltyState};
pub use subproblem::{solve_subproblem, SubproblemSolution, SubproblemSpec};
pub use surrogate::{
    epsilon_select, mi_surrogate, mse_surrogate, select_epsilon, EpsilonShift, SurrogateCoeffs,
    SurrogateKind,
};
