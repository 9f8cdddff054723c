//! Baseline: solve the box relaxation by projected gradient, then keep the `S`
//! largest entries.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{check_budget, top_s, Algorithm, Diagnostics, IterationRecord, Network, ObjectiveKind, RunReport};
use crate::error::{Error, Result};
use crate::observability::ConstraintKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRelaxConfig {
    pub objective: ObjectiveKind,
    pub budget: usize,
    pub max_iterations: usize,
    /// Stop when a step moves no entry by more than this.
    pub step_tol: f64,
    pub armijo: f64,
}

impl BoxRelaxConfig {
    pub fn new(objective: ObjectiveKind, budget: usize) -> Self {
        BoxRelaxConfig {
            objective,
            budget,
            max_iterations: 5000,
            step_tol: 1e-9,
            armijo: 1e-4,
        }
    }
}

/// Euclidean projection onto `{x : Σx = S, 0 ≤ x ≤ 1}`.
///
/// The projection is `clamp(v − τ, 0, 1)`; `τ` is found exactly by walking
/// the breakpoints of the piecewise-linear map `τ ↦ Σ clamp(v_k − τ, 0, 1)`.
pub fn project_capped_simplex(v: &[f64], budget: f64) -> Result<Vec<f64>> {
    let n = v.len();
    if !(budget >= 0.0 && budget <= n as f64) {
        return Err(Error::Contract(format!("cannot project onto Σx = {budget} with {n} entries")));
    }
    let total = |tau: f64| v.iter().map(|&x| (x - tau).clamp(0.0, 1.0)).sum::<f64>();
    let mut breaks: Vec<f64> = v.iter().flat_map(|&x| [x, x - 1.0]).collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // total is nonincreasing in τ: n at the lowest breakpoint, 0 at the highest.
    let mut tau = breaks[0];
    let mut prev = (breaks[0], total(breaks[0]));
    for &b in &breaks[1..] {
        let cur = total(b);
        if cur <= budget {
            let (b0, t0) = prev;
            tau = if t0 == cur { b0 } else { b0 + (t0 - budget) * (b - b0) / (t0 - cur) };
            break;
        }
        prev = (b, cur);
    }
    Ok(v.iter().map(|&x| (x - tau).clamp(0.0, 1.0)).collect())
}

fn objective(network: &Network, kind: ObjectiveKind, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let p = &network.problem;
    Ok(match kind {
        ObjectiveKind::Mse => (p.f_e(x)?, p.grad_f_e(x)?),
        ObjectiveKind::Mi => (-p.f_mi(x)?, p.grad_f_mi(x)?.into_iter().map(|g| -g).collect()),
    })
}

pub fn box_relax_round(network: &Network, config: &BoxRelaxConfig) -> Result<RunReport> {
    let start_time = Instant::now();
    let n = network.n_buses();
    check_budget(n, config.budget)?;
    let s = config.budget as f64;
    let mut x = vec![s / n as f64; n];
    let (mut f, mut grad) = objective(network, config.objective, &x)?;
    let mut alpha = 1.0 / grad.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(1e-300);
    let mut iterations = Vec::new();
    let mut converged = false;
    for it in 0..config.max_iterations {
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a - alpha * g).collect();
            let cand = project_capped_simplex(&trial, s)?;
            let decrease: f64 = grad.iter().zip(cand.iter().zip(&x)).map(|(g, (c, a))| g * (c - a)).sum();
            let (fc, gc) = objective(network, config.objective, &cand)?;
            if fc <= f + config.armijo * decrease {
                accepted = Some((cand, fc, gc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else { break };
        let moved = cand.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = cand;
        f = fc;
        grad = gc;
        alpha *= 2.0;
        iterations.push(IterationRecord {
            kappa: it + 1,
            objective: match config.objective {
                ObjectiveKind::Mse => f,
                ObjectiveKind::Mi => -f,
            },
            g_tilde: None,
            mu: None,
            step: "projected gradient".into(),
            time_ms: start_time.elapsed().as_secs_f64() * 1e3,
            kkt_residual: None,
            newton_steps: None,
            trust_active: false,
        });
        if moved <= config.step_tol {
            converged = true;
            break;
        }
    }
    let binary = top_s(&x, config.budget);
    let (final_placement, final_metrics) = network.evaluate(&binary, config.budget)?;
    let mut diagnostics = Diagnostics {
        regularization: network.regularization,
        relaxed_objective: Some(match config.objective {
            ObjectiveKind::Mse => f,
            ObjectiveKind::Mi => -f,
        }),
        ..Default::default()
    };
    if !converged {
        diagnostics
            .notes
            .push("projected gradient stopped before the step tolerance was met".into());
    }
    Ok(RunReport {
        algorithm: Algorithm::BoxRelaxBaseline,
        objective: config.objective,
        constraint: ConstraintKind::None,
        budget: config.budget,
        iterations,
        final_placement,
        final_metrics,
        wall_time_s: start_time.elapsed().as_secs_f64(),
        config_snapshot: serde_json::to_value(config)?,
        diagnostics,
    })
}
