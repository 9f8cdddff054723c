//! Penalized majorization-minimization for the MSE and log-det objectives
//! (Algorithms 1 and 2).
//!
//! Each iteration minimizes `surrogate(x) + μ/ℓ(x)` over the constraint
//! polytope, where the surrogate is the reciprocal bound of the objective at
//! the current point and `ℓ` is the tangent of `g` there. Both terms majorize
//! their true counterparts and touch at the current point, so
//! `F_μ = f + μ·g̃` cannot increase.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::local_search::{local_search_with, swap_objective};
use super::swap::LinearSwap;
use super::{
    check_budget, support_to_x, round_with_repair, Algorithm, Diagnostics, IterationRecord, Network,
    ObjectiveKind, RunReport,
};
use crate::convex::barrier::{analytic_center, strictly_feasible_point, LinearConstraints};
use crate::convex::penalty::{auto_mu, check_exponent, g_tilde, linearize, DEFAULT_EXPONENT};
use crate::convex::subproblem::{solve_subproblem, SubproblemSpec};
use crate::convex::surrogate::{epsilon_select, mi_surrogate, mse_surrogate};
use crate::error::{Error, Result};
use crate::observability::{min_pmu_blp, BlpOptions, ConstraintKind, ObservabilityConstraint};

/// Right-hand-side relaxation of the covering rows when `Σx = S` leaves them
/// no strict interior.
pub const COVER_RELAXATION: f64 = 1e-6;

/// Fraction of the way toward a feasible binary point taken when the
/// iterations settle on a fractional point.
const VERTEX_PULL: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuChoice {
    /// `|f(x0)| / g̃(x0)` snapped to a power of ten.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenalizedConfig {
    pub objective: ObjectiveKind,
    pub constraint: ConstraintKind,
    pub budget: usize,
    /// Exponent `L` of the penalty, in `(1, 2]`.
    pub exponent: f64,
    pub mu: MuChoice,
    pub max_iterations: usize,
    /// Relative change of `F_μ` below which the iteration has settled.
    pub objective_tol: f64,
    /// Largest `g̃` accepted as binary.
    pub penalty_tol: f64,
    pub max_mu_escalations: usize,
    pub mu_growth: f64,
    /// Largest entry change allowed when rounding the final iterate.
    pub rounding_tol: f64,
    /// Weight of the analytic center blended into each subproblem start.
    pub center_blend: f64,
    /// Starting point; analytic center of the feasible polytope when `None`.
    pub initial: Option<Vec<f64>>,
    /// Finish with a swap search that keeps the constraint satisfied.
    pub polish: bool,
}

impl PenalizedConfig {
    pub fn new(objective: ObjectiveKind, constraint: ConstraintKind, budget: usize) -> Self {
        PenalizedConfig {
            objective,
            constraint,
            budget,
            exponent: DEFAULT_EXPONENT,
            mu: MuChoice::Auto,
            max_iterations: 500,
            objective_tol: 1e-6,
            penalty_tol: 1e-6,
            max_mu_escalations: 3,
            mu_growth: 10.0,
            rounding_tol: 1e-4,
            center_blend: 1e-3,
            initial: None,
            polish: true,
        }
    }
}

pub fn penalized_mmse(
    network: &Network,
    constraint: ConstraintKind,
    budget: usize,
) -> Result<RunReport> {
    penalized(network, &PenalizedConfig::new(ObjectiveKind::Mse, constraint, budget))
}

pub fn penalized_mi(
    network: &Network,
    constraint: ConstraintKind,
    budget: usize,
) -> Result<RunReport> {
    penalized(network, &PenalizedConfig::new(ObjectiveKind::Mi, constraint, budget))
}

fn polytope(constraint: &ObservabilityConstraint, relaxation: f64, budget: f64) -> LinearConstraints {
    let n = constraint.n_buses();
    let mut cons = LinearConstraints::new(n);
    cons.push_unit_box();
    for row in constraint.sparse_rows() {
        cons.push_le(row.into_iter().map(|(j, a)| (j, -a)).collect(), relaxation - 1.0);
    }
    cons.push_eq(vec![1.0; n], budget);
    cons
}

/// Interior start and analytic center of the polytope, relaxing the covering
/// rows if needed. Returns `(center, relaxation)`.
fn interior_center(constraint: &ObservabilityConstraint, budget: usize) -> Result<(Vec<f64>, f64)> {
    let n = constraint.n_buses();
    let uniform = vec![budget as f64 / n as f64; n];
    for relaxation in [0.0, COVER_RELAXATION] {
        let cons = polytope(constraint, relaxation, budget as f64);
        match strictly_feasible_point(&cons, &uniform) {
            Ok((x, _)) => return Ok((analytic_center(&cons, &x)?, relaxation)),
            Err(Error::Infeasible(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Numerical(
        "no interior point found for the observability polytope".into(),
    ))
}

/// A binary point of the budget satisfying the constraint, chosen to agree
/// with `x` as much as a swap search can manage (maximizes `Σ x_k v_k`).
fn nearest_feasible_vertex(
    x: &[f64],
    constraint: &ObservabilityConstraint,
    cover_witness: &[usize],
    budget: usize,
) -> Result<Option<Vec<f64>>> {
    let n = x.len();
    let (rounded, _) = round_with_repair(x, budget);
    let mut start: Vec<usize> = cover_witness.to_vec();
    if !constraint.is_satisfied(&rounded)? {
        if start.len() > budget {
            return Ok(None);
        }
        let mut rest: Vec<usize> = (0..n).filter(|k| !start.contains(k)).collect();
        rest.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap().then(a.cmp(&b)));
        start.extend(rest.into_iter().take(budget - start.len()));
    } else {
        start = (0..n).filter(|&k| rounded[k] == 1.0).collect();
    }
    let mut obj = LinearSwap::new(x.iter().map(|v| -v).collect());
    let out = local_search_with(&mut obj, &start, Some(constraint), 1e-12, usize::MAX)?;
    Ok(Some(support_to_x(n, &out.support)))
}

struct Evaluator<'a> {
    network: &'a Network,
    objective: ObjectiveKind,
    exponent: f64,
    budget: f64,
}

impl Evaluator<'_> {
    /// Objective in minimization form: `f_e` or `−f_MI`.
    fn f(&self, x: &[f64]) -> Result<f64> {
        match self.objective {
            ObjectiveKind::Mse => self.network.problem.f_e(x),
            ObjectiveKind::Mi => Ok(-self.network.problem.f_mi(x)?),
        }
    }

    fn g_tilde(&self, x: &[f64]) -> f64 {
        g_tilde(x, self.exponent, self.budget).max(0.0)
    }
}

/// Algorithms 1 and 2.
pub fn penalized(network: &Network, config: &PenalizedConfig) -> Result<RunReport> {
    let start_time = Instant::now();
    let n = network.n_buses();
    check_budget(n, config.budget)?;
    check_exponent(config.exponent)?;
    if let MuChoice::Fixed(mu) = config.mu {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::Config(format!("penalty weight μ must be finite and ≥ 0, got {mu}")));
        }
    }
    let constraint = network.constraint(config.constraint);
    let mut diagnostics = Diagnostics {
        regularization: network.regularization,
        ..Default::default()
    };
    let mut cover_witness = Vec::new();
    if constraint.n_rows() > 0 {
        let blp = min_pmu_blp(&constraint, &BlpOptions::default())?;
        cover_witness = blp.witness.clone();
        if config.budget < blp.s_min {
            return Err(Error::Infeasible(format!(
                "budget {} is below the minimum {} PMUs for {} observability",
                config.budget,
                blp.s_min,
                config.constraint.name()
            )));
        }
    }
    let (center, relaxation) = interior_center(&constraint, config.budget)?;
    if relaxation > 0.0 {
        diagnostics.covering_relaxation = Some(relaxation);
        diagnostics
            .notes
            .push("covering rows relaxed: no strict interior at this budget".into());
    }
    let mut x = match &config.initial {
        Some(x0) => {
            if x0.len() != n {
                return Err(Error::Config(format!(
                    "initial point has {} entries, network has {n} buses",
                    x0.len()
                )));
            }
            x0.clone()
        }
        None => center.clone(),
    };

    let shift = epsilon_select(&network.problem)?;
    diagnostics.epsilon = Some(shift.epsilon);
    let eval = Evaluator {
        network,
        objective: config.objective,
        exponent: config.exponent,
        budget: config.budget as f64,
    };
    let mut f = eval.f(&x)?;
    let mut gt = eval.g_tilde(&x);
    let mut mu = match config.mu {
        // For log-det the scale is the information gained over the prior.
        MuChoice::Auto => match config.objective {
            ObjectiveKind::Mse => auto_mu(f, gt),
            ObjectiveKind::Mi => auto_mu(-f - network.problem.f_mi(&vec![0.0; n])?, gt),
        },
        MuChoice::Fixed(m) => m,
    };
    let mut big_f = f + mu * gt;
    let mut iterations = vec![IterationRecord {
        kappa: 0,
        objective: big_f,
        g_tilde: Some(gt),
        mu: Some(mu),
        step: "start".into(),
        time_ms: start_time.elapsed().as_secs_f64() * 1e3,
        kkt_residual: None,
        newton_steps: None,
        trust_active: false,
    }];

    let mut kappa = 0;
    let mut escalations = 0;
    let mut segment_iterations = 0;
    let mut pulled = false;
    loop {
        let settled;
        let mut descended = false;
        if segment_iterations < config.max_iterations {
            kappa += 1;
            segment_iterations += 1;
            let coeffs = match config.objective {
                ObjectiveKind::Mse => mse_surrogate(&network.problem, &shift, &x)?,
                ObjectiveKind::Mi => mi_surrogate(&network.problem, &shift, &x)?,
            };
            let minorant = linearize(&x, config.exponent);
            let spec = SubproblemSpec {
                coeffs: &coeffs.per_bus,
                epsilon: shift.epsilon,
                mu,
                minorant: (mu > 0.0).then_some(&minorant),
                constraint: &constraint,
                relaxation,
                budget: config.budget as f64,
            };
            let theta = config.center_blend;
            let start: Vec<f64> = x
                .iter()
                .zip(&center)
                .map(|(a, c)| (1.0 - theta) * a + theta * c)
                .collect();
            let sol = solve_subproblem(&spec, &start)?;
            let mut x_new = sol.x.clone();
            let mut step = "surrogate minimizer".to_string();
            if sol.trust_active {
                for (v, old) in x_new.iter_mut().zip(&x) {
                    *v = 0.5 * (*v + old);
                }
                step = "trust midpoint".into();
            }
            for v in x_new.iter_mut() {
                *v = v.clamp(0.0, 1.0);
            }
            let f_new = eval.f(&x_new)?;
            let gt_new = eval.g_tilde(&x_new);
            let big_new = f_new + mu * gt_new;
            let change = (big_new - big_f).abs();
            if big_new < big_f {
                descended = true;
                x = x_new;
                f = f_new;
                gt = gt_new;
                big_f = big_new;
                iterations.push(IterationRecord {
                    kappa,
                    objective: big_f,
                    g_tilde: Some(gt),
                    mu: Some(mu),
                    step,
                    time_ms: start_time.elapsed().as_secs_f64() * 1e3,
                    kkt_residual: Some(sol.kkt_residual),
                    newton_steps: Some(sol.newton_steps),
                    trust_active: sol.trust_active,
                });
            }
            settled = !descended || change <= config.objective_tol * big_f.abs().max(1.0);
        } else {
            settled = true;
        }
        if !settled {
            continue;
        }
        if gt <= config.penalty_tol {
            break;
        }
        // Settled while still fractional, typically on a fractional vertex of
        // the covering polytope or between interchangeable buses. Move part way
        // toward the nearest feasible binary point first; failing that, raise μ.
        if !pulled {
            if let Some(vertex) = nearest_feasible_vertex(&x, &constraint, &cover_witness, config.budget)? {
                pulled = true;
                segment_iterations = 0;
                for (v, t) in x.iter_mut().zip(&vertex) {
                    *v = (1.0 - VERTEX_PULL) * *v + VERTEX_PULL * t;
                }
                f = eval.f(&x)?;
                gt = eval.g_tilde(&x);
                big_f = f + mu * gt;
                iterations.push(IterationRecord {
                    kappa,
                    objective: big_f,
                    g_tilde: Some(gt),
                    mu: Some(mu),
                    step: "vertex pull".into(),
                    time_ms: start_time.elapsed().as_secs_f64() * 1e3,
                    kkt_residual: None,
                    newton_steps: None,
                    trust_active: false,
                });
                continue;
            }
        }
        if escalations >= config.max_mu_escalations {
            return Err(Error::Numerical(format!(
                "penalized iterations stalled at g̃ = {gt:.3e} after {escalations} μ escalations \
                 (μ = {mu:.3e}, F_μ = {big_f:.6e}, {kappa} iterations)"
            )));
        }
        escalations += 1;
        segment_iterations = 0;
        pulled = false;
        mu *= config.mu_growth;
        big_f = f + mu * gt;
        iterations.push(IterationRecord {
            kappa,
            objective: big_f,
            g_tilde: Some(gt),
            mu: Some(mu),
            step: "μ escalation".into(),
            time_ms: start_time.elapsed().as_secs_f64() * 1e3,
            kkt_residual: None,
            newton_steps: None,
            trust_active: false,
        });
    }
    diagnostics.mu_final = Some(mu);
    diagnostics.mu_escalations = escalations;

    let (mut binary, change) = round_with_repair(&x, config.budget);
    diagnostics.rounding_change = Some(change);
    if change > config.rounding_tol {
        diagnostics.notes.push(format!(
            "rounding moved an entry by {change:.3e}, above {:.1e}",
            config.rounding_tol
        ));
    }
    if !constraint.is_satisfied(&binary)? {
        return Err(Error::Numerical(format!(
            "rounded placement violates {} observability",
            config.constraint.name()
        )));
    }
    if config.polish {
        let mut obj = swap_objective(network, config.objective)?;
        let support: Vec<usize> = (0..n).filter(|&k| binary[k] == 1.0).collect();
        let out = local_search_with(obj.as_mut(), &support, Some(&constraint), 1e-12, usize::MAX)?;
        let sign = match config.objective {
            ObjectiveKind::Mse => 1.0,
            ObjectiveKind::Mi => -1.0,
        };
        diagnostics.pre_polish_objective = Some(sign * out.initial_value);
        diagnostics.polish_moves = Some(out.moves.len());
        binary = support_to_x(n, &out.support);
        if !constraint.is_satisfied(&binary)? {
            return Err(Error::Numerical("polished placement violates the constraint".into()));
        }
    }
    let (final_placement, final_metrics) = network.evaluate(&binary, config.budget)?;
    let algorithm = match config.objective {
        ObjectiveKind::Mse => Algorithm::PenalizedMmse,
        ObjectiveKind::Mi => Algorithm::PenalizedMi,
    };
    Ok(RunReport {
        algorithm,
        objective: config.objective,
        constraint: config.constraint,
        budget: config.budget,
        iterations,
        final_placement,
        final_metrics,
        wall_time_s: start_time.elapsed().as_secs_f64(),
        config_snapshot: serde_json::to_value(config)?,
        diagnostics,
    })
}
