//! Best-improvement swap search over the vertices of `{x ∈ {0,1}^N, Σx = S}`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::swap::{LogDetSwap, SwapObjective, TraceSwap};
use super::{
    check_budget, support_to_x, Algorithm, Diagnostics, IterationRecord, Network, ObjectiveKind,
    RunReport,
};
use crate::error::{Error, Result};
use crate::observability::{ConstraintKind, ObservabilityConstraint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalSearchConfig {
    pub objective: ObjectiveKind,
    pub budget: usize,
    /// Starting support; greedy seed when `None`.
    pub initial: Option<Vec<usize>>,
    /// Moves must improve by more than this fraction of `max(1, |f|)`.
    pub rel_improvement: f64,
    pub max_moves: usize,
}

impl LocalSearchConfig {
    pub fn new(objective: ObjectiveKind, budget: usize) -> Self {
        LocalSearchConfig {
            objective,
            budget,
            initial: None,
            rel_improvement: 1e-12,
            max_moves: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchMove {
    pub out: usize,
    pub inn: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub support: Vec<usize>,
    pub value: f64,
    pub initial_value: f64,
    pub moves: Vec<SearchMove>,
    pub evaluations: usize,
}

/// Coverage bookkeeping so that only swaps keeping every row covered are
/// offered.
struct CoverGuard<'a> {
    constraint: &'a ObservabilityConstraint,
    rows_of: Vec<Vec<usize>>,
    count: Vec<usize>,
}

impl<'a> CoverGuard<'a> {
    fn new(constraint: &'a ObservabilityConstraint, support: &[usize]) -> Result<Self> {
        let n = constraint.n_buses();
        let mut rows_of = vec![Vec::new(); n];
        for r in 0..constraint.n_rows() {
            for &k in constraint.row_support(r) {
                rows_of[k].push(r);
            }
        }
        let mut guard = CoverGuard {
            constraint,
            rows_of,
            count: vec![0; constraint.n_rows()],
        };
        for &k in support {
            guard.add(k);
        }
        if let Some(r) = guard.count.iter().position(|&c| c == 0) {
            return Err(Error::Infeasible(format!(
                "starting support leaves constraint row {r} uncovered"
            )));
        }
        Ok(guard)
    }

    fn add(&mut self, k: usize) {
        for &r in &self.rows_of[k] {
            self.count[r] += 1;
        }
    }

    fn remove(&mut self, k: usize) {
        for &r in &self.rows_of[k] {
            self.count[r] -= 1;
        }
    }

    fn allows(&self, out: usize, inn: usize) -> bool {
        let m = self.constraint.matrix();
        self.rows_of[out]
            .iter()
            .all(|&r| self.count[r] > 1 || m[(r, inn)] > 0)
    }
}

/// Greedy seed: starting from `start`, repeatedly adds the bus with the best
/// marginal value (lowest index on ties) until `budget` buses are selected.
pub fn greedy_seed<O: SwapObjective + ?Sized>(
    obj: &mut O,
    start: &[usize],
    budget: usize,
) -> Result<Vec<usize>> {
    check_budget(obj.n(), budget)?;
    obj.reset(start)?;
    let n = obj.n();
    let mut selected = vec![false; n];
    for &k in start {
        selected[k] = true;
    }
    for _ in start.len()..budget {
        let cand: Vec<usize> = (0..n).filter(|&k| !selected[k]).collect();
        let vals: Vec<Result<f64>> = cand.par_iter().map(|&k| obj.eval_add(k)).collect();
        let mut best: Option<(f64, usize)> = None;
        for (&k, v) in cand.iter().zip(vals) {
            let v = v?;
            if best.is_none_or(|(b, _)| v < b) {
                best = Some((v, k));
            }
        }
        let (_, k) = best.ok_or_else(|| Error::Contract("no bus left to add".into()))?;
        obj.apply_add(k)?;
        selected[k] = true;
    }
    Ok(obj.support())
}

/// Swap search from `initial`. With a constraint, only swaps that keep it
/// satisfied are considered and `initial` must satisfy it.
pub fn local_search_with<O: SwapObjective + ?Sized>(
    obj: &mut O,
    initial: &[usize],
    constraint: Option<&ObservabilityConstraint>,
    rel_improvement: f64,
    max_moves: usize,
) -> Result<SearchOutcome> {
    let n = obj.n();
    obj.reset(initial)?;
    let mut guard = match constraint {
        Some(c) if c.n_rows() > 0 => Some(CoverGuard::new(c, initial)?),
        _ => None,
    };
    let initial_value = obj.current();
    let mut moves = Vec::new();
    let mut evaluations = 0;
    while moves.len() < max_moves {
        let support = obj.support();
        let mut selected = vec![false; n];
        for &k in &support {
            selected[k] = true;
        }
        let pairs: Vec<(usize, usize)> = support
            .iter()
            .flat_map(|&o| (0..n).filter(|&i| !selected[i]).map(move |i| (o, i)))
            .filter(|&(o, i)| guard.as_ref().is_none_or(|g| g.allows(o, i)))
            .collect();
        evaluations += pairs.len();
        let vals: Vec<Result<f64>> = pairs
            .par_iter()
            .map(|&(o, i)| obj.eval_swap(o, i))
            .collect();
        let current = obj.current();
        let threshold = current - rel_improvement * current.abs().max(1.0);
        let mut best: Option<(f64, usize, usize)> = None;
        // pairs are ordered by (out, in), so strict comparison keeps the lowest index.
        for (&(o, i), v) in pairs.iter().zip(vals) {
            let v = v?;
            if v < threshold && best.is_none_or(|(b, _, _)| v < b) {
                best = Some((v, o, i));
            }
        }
        let Some((_, o, i)) = best else { break };
        obj.apply_swap(o, i)?;
        if let Some(g) = guard.as_mut() {
            g.add(i);
            g.remove(o);
        }
        moves.push(SearchMove {
            out: o,
            inn: i,
            value: obj.current(),
        });
    }
    Ok(SearchOutcome {
        support: obj.support(),
        value: obj.current(),
        initial_value,
        moves,
        evaluations,
    })
}

pub(crate) fn swap_objective(
    network: &Network,
    objective: ObjectiveKind,
) -> Result<Box<dyn SwapObjective + Send>> {
    Ok(match objective {
        ObjectiveKind::Mse => Box::new(TraceSwap::new(&network.problem)?),
        ObjectiveKind::Mi => Box::new(LogDetSwap::new(&network.problem)?),
    })
}

/// Algorithm 3 on the unconstrained vertex set.
pub fn local_search(network: &Network, config: &LocalSearchConfig) -> Result<RunReport> {
    let start = Instant::now();
    let n = network.n_buses();
    check_budget(n, config.budget)?;
    let mut obj = swap_objective(network, config.objective)?;
    let initial = match &config.initial {
        Some(s) => {
            if s.len() != config.budget {
                return Err(Error::Config(format!(
                    "initial support has {} buses, budget is {}",
                    s.len(),
                    config.budget
                )));
            }
            s.clone()
        }
        None => greedy_seed(obj.as_mut(), &[], config.budget)?,
    };
    let outcome = local_search_with(
        obj.as_mut(),
        &initial,
        None,
        config.rel_improvement,
        config.max_moves,
    )?;
    let sign = match config.objective {
        ObjectiveKind::Mse => 1.0,
        ObjectiveKind::Mi => -1.0,
    };
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let mut iterations = vec![IterationRecord {
        kappa: 0,
        objective: sign * outcome.initial_value,
        g_tilde: None,
        mu: None,
        step: "seed".into(),
        time_ms: elapsed,
        kkt_residual: None,
        newton_steps: None,
        trust_active: false,
    }];
    for (k, m) in outcome.moves.iter().enumerate() {
        iterations.push(IterationRecord {
            kappa: k + 1,
            objective: sign * m.value,
            g_tilde: None,
            mu: None,
            step: format!("swap out {} in {}", m.out, m.inn),
            time_ms: elapsed,
            kkt_residual: None,
            newton_steps: None,
            trust_active: false,
        });
    }
    let x = support_to_x(n, &outcome.support);
    let (final_placement, final_metrics) = network.evaluate(&x, config.budget)?;
    let mut diagnostics = Diagnostics {
        regularization: network.regularization,
        ..Default::default()
    };
    diagnostics
        .notes
        .push(format!("{} swap evaluations", outcome.evaluations));
    Ok(RunReport {
        algorithm: Algorithm::LocalSearch,
        objective: config.objective,
        constraint: ConstraintKind::None,
        budget: config.budget,
        iterations,
        final_placement,
        final_metrics,
        wall_time_s: start.elapsed().as_secs_f64(),
        config_snapshot: serde_json::to_value(config)?,
        diagnostics,
    })
}
