//! Smallest budget whose local-search MSE meets a tolerance (Algorithm 4).

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::local_search::{greedy_seed, local_search_with};
use super::swap::TraceSwap;
use super::{support_to_x, Algorithm, Diagnostics, IterationRecord, Network, ObjectiveKind, RunReport};
use crate::error::{Error, Result};
use crate::observability::ConstraintKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinPmuConfig {
    /// MSE tolerance `ε_tol`.
    pub tolerance: f64,
    /// Starting budget; `N/2` when `None`.
    pub s0: Option<usize>,
    /// Bisect on `S` instead of stepping by one.
    pub bisection: bool,
    pub rel_improvement: f64,
}

impl MinPmuConfig {
    pub fn new(tolerance: f64) -> Self {
        MinPmuConfig {
            tolerance,
            s0: None,
            bisection: false,
            rel_improvement: 1e-12,
        }
    }
}

struct Probe {
    support: Vec<usize>,
    f_e: f64,
}

pub fn min_pmu_iterative(network: &Network, config: &MinPmuConfig) -> Result<RunReport> {
    let start_time = Instant::now();
    let n = network.n_buses();
    if !(config.tolerance > 0.0) || !config.tolerance.is_finite() {
        return Err(Error::Config(format!(
            "tolerance must be positive and finite, got {}",
            config.tolerance
        )));
    }
    let full = network.problem.f_e(&vec![1.0; n])?;
    if config.tolerance < full {
        return Err(Error::Infeasible(format!(
            "tolerance {:.6e} is below the MSE {full:.6e} of a PMU at every bus",
            config.tolerance
        )));
    }
    let s0 = config.s0.unwrap_or((n / 2).max(1)).clamp(1, n);
    let mut obj = TraceSwap::new(&network.problem)?;
    let mut cache: BTreeMap<usize, Probe> = BTreeMap::new();
    let mut iterations = Vec::new();

    let mut probe = |s: usize, cache: &mut BTreeMap<usize, Probe>, iterations: &mut Vec<IterationRecord>| -> Result<bool> {
        if let std::collections::btree_map::Entry::Vacant(slot) = cache.entry(s) {
            let (support, f_e) = if s == n {
                ((0..n).collect(), full)
            } else {
                let seed = greedy_seed(&mut obj, &[], s)?;
                let out = local_search_with(&mut obj, &seed, None, config.rel_improvement, usize::MAX)?;
                (out.support, out.value)
            };
            iterations.push(IterationRecord {
                kappa: iterations.len(),
                objective: f_e,
                g_tilde: None,
                mu: None,
                step: format!("S = {s}"),
                time_ms: start_time.elapsed().as_secs_f64() * 1e3,
                kkt_residual: None,
                newton_steps: None,
                trust_active: false,
            });
            slot.insert(Probe { support, f_e });
        }
        Ok(cache[&s].f_e <= config.tolerance)
    };

    let answer = if config.bisection {
        // Invariant: hi meets the tolerance, everything below lo is unknown or fails.
        let (mut lo, mut hi) = (1, n);
        probe(n, &mut cache, &mut iterations)?;
        if probe(s0, &mut cache, &mut iterations)? {
            hi = s0;
        } else {
            lo = s0 + 1;
        }
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if probe(mid, &mut cache, &mut iterations)? {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        hi
    } else {
        let mut s = s0;
        let mut visits: BTreeMap<usize, usize> = BTreeMap::new();
        loop {
            *visits.entry(s).or_default() += 1;
            let ok = probe(s, &mut cache, &mut iterations)?;
            if ok {
                if s == 1 {
                    break 1;
                }
                let below = probe(s - 1, &mut cache, &mut iterations)?;
                if !below {
                    break s;
                }
                s -= 1;
            } else {
                // s = n always meets the tolerance, so s < n here.
                s += 1;
            }
            if visits.get(&s).copied().unwrap_or(0) >= 2 {
                // Local search is not monotone in S; settle on the smallest passing budget.
                break cache
                    .iter()
                    .filter(|(_, p)| p.f_e <= config.tolerance)
                    .map(|(&k, _)| k)
                    .next()
                    .unwrap_or(n);
            }
        }
    };

    let chosen = &cache[&answer];
    let x = support_to_x(n, &chosen.support);
    let (final_placement, final_metrics) = network.evaluate(&x, answer)?;
    let mut diagnostics = Diagnostics {
        regularization: network.regularization,
        ..Default::default()
    };
    diagnostics
        .notes
        .push(format!("{} budgets probed", cache.len()));
    Ok(RunReport {
        algorithm: Algorithm::MinPmuIterative,
        objective: ObjectiveKind::Mse,
        constraint: ConstraintKind::None,
        budget: answer,
        iterations,
        final_placement,
        final_metrics,
        wall_time_s: start_time.elapsed().as_secs_f64(),
        config_snapshot: serde_json::to_value(config)?,
        diagnostics,
    })
}
