//! Exact unit-cost set cover by depth-first branch-and-bound.
//!
//! Each node applies the classic reductions (essential columns, dominated
//! rows, dominated columns) to a fixpoint, bounds with the packing LP, and
//! takes a greedy cover as incumbent candidate. Branching is on the most
//! fractional LP variable, `x_j = 1` first. Everything is sequential and ties
//! go to the lowest index, so the witness is reproducible.

use std::time::Instant;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use super::simplex::{solve_packing_lp, PackingStatus};
use super::ObservabilityConstraint;
use crate::error::{Error, Result};

const INTEGRAL_TOL: f64 = 1e-9;
const BOUND_TOL: f64 = 1e-7;

/// Unit-cost set cover: pick the fewest columns so that every row contains at
/// least one picked column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetCover {
    n_cols: usize,
    rows: Vec<Vec<usize>>,
}

impl SetCover {
    pub fn new(n_cols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
        }
        SetCover { n_cols, rows }
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn is_cover(&self, cols: &[usize]) -> bool {
        let mut picked = FixedBitSet::with_capacity(self.n_cols);
        for &c in cols {
            picked.insert(c);
        }
        self.rows.iter().all(|r| r.iter().any(|&c| picked.contains(c)))
    }

    /// Largest-coverage-first greedy cover with a redundancy sweep. Lowest
    /// index wins ties.
    pub fn greedy(&self) -> Result<Vec<usize>> {
        let rows: Vec<usize> = (0..self.rows.len()).collect();
        let cols: Vec<usize> = (0..self.n_cols).collect();
        self.check_coverable()?;
        Ok(greedy_cover(&self.rows, &rows, &cols))
    }

    fn check_coverable(&self) -> Result<()> {
        if let Some(i) = self.rows.iter().position(|r| r.is_empty()) {
            return Err(Error::Infeasible(format!(
                "constraint row {i} cannot be covered by any bus"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlpOptions {
    /// Nodes explored before giving up on the optimality proof.
    pub node_limit: usize,
    /// Simplex pivot cap per node; `None` scales with the LP size.
    pub lp_iteration_cap: Option<usize>,
}

impl Default for BlpOptions {
    fn default() -> Self {
        BlpOptions {
            node_limit: 1_000_000,
            lp_iteration_cap: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlpSolution {
    pub s_min: usize,
    /// Selected bus indices, increasing.
    pub witness: Vec<usize>,
    /// Proven lower bound; equals `s_min` when `proven_optimal`.
    pub lower_bound: usize,
    pub gap: usize,
    pub proven_optimal: bool,
    pub nodes_explored: usize,
    /// Nodes whose LP hit the pivot cap and used the fallback bound.
    pub lp_fallbacks: usize,
    pub wall_time_s: f64,
}

/// Minimum number of PMUs satisfying `constraint`, solved exactly.
pub fn min_pmu_blp(constraint: &ObservabilityConstraint, options: &BlpOptions) -> Result<BlpSolution> {
    solve_set_cover(&constraint.set_cover(), options)
}

pub fn solve_set_cover(problem: &SetCover, options: &BlpOptions) -> Result<BlpSolution> {
    let start = Instant::now();
    problem.check_coverable()?;
    let incumbent = problem.greedy()?;
    let mut search = Search {
        problem,
        options,
        best: incumbent,
        nodes: 0,
        truncated: false,
        lp_fallbacks: 0,
        root_bound: 0,
    };
    let status = vec![ColState::Free; problem.n_cols];
    search.node(status, 0);

    let s_min = search.best.len();
    let lower_bound = if search.truncated {
        search.root_bound.min(s_min)
    } else {
        s_min
    };
    let mut witness = search.best;
    witness.sort_unstable();
    Ok(BlpSolution {
        s_min,
        witness,
        lower_bound,
        gap: s_min - lower_bound,
        proven_optimal: !search.truncated,
        nodes_explored: search.nodes,
        lp_fallbacks: search.lp_fallbacks,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ColState {
    Free,
    In,
    Out,
}

struct Reduced {
    rows: Vec<usize>,
    cols: Vec<usize>,
}

struct Search<'a> {
    problem: &'a SetCover,
    options: &'a BlpOptions,
    best: Vec<usize>,
    nodes: usize,
    truncated: bool,
    lp_fallbacks: usize,
    root_bound: usize,
}

impl Search<'_> {
    fn offer(&mut self, cols: Vec<usize>) {
        if cols.len() < self.best.len() {
            debug_assert!(self.problem.is_cover(&cols));
            self.best = cols;
        }
    }

    fn node(&mut self, mut status: Vec<ColState>, depth: usize) {
        if self.nodes >= self.options.node_limit {
            self.truncated = true;
            return;
        }
        self.nodes += 1;

        let Some(red) = reduce(self.problem, &mut status) else {
            return;
        };
        let fixed: Vec<usize> = (0..status.len()).filter(|&j| status[j] == ColState::In).collect();
        if red.rows.is_empty() {
            if depth == 0 {
                self.root_bound = fixed.len();
            }
            self.offer(fixed);
            return;
        }
        if fixed.len() + 1 >= self.best.len() {
            return;
        }

        // Local LP over the reduced rows and free columns.
        let mut local = vec![usize::MAX; self.problem.n_cols];
        for (l, &c) in red.cols.iter().enumerate() {
            local[c] = l;
        }
        let local_rows: Vec<Vec<usize>> = red
            .rows
            .iter()
            .map(|&r| {
                self.problem.rows[r]
                    .iter()
                    .filter(|&&c| local[c] != usize::MAX)
                    .map(|&c| local[c])
                    .collect()
            })
            .collect();
        let cap = self
            .options
            .lp_iteration_cap
            .unwrap_or(20 * (local_rows.len() + red.cols.len()) + 100);
        let lp = solve_packing_lp(&local_rows, red.cols.len(), cap);
        let coverage: Vec<usize> = {
            let mut cnt = vec![0usize; red.cols.len()];
            for r in &local_rows {
                for &l in r {
                    cnt[l] += 1;
                }
            }
            cnt
        };
        let mut lb = lp.value;
        if lp.status == PackingStatus::IterationLimit {
            self.lp_fallbacks += 1;
            let max_cover = coverage.iter().copied().max().unwrap_or(1).max(1);
            lb = lb.max(local_rows.len().div_ceil(max_cover) as f64);
        }
        let bound = fixed.len() + (lb - BOUND_TOL).ceil().max(1.0) as usize;
        if depth == 0 {
            self.root_bound = bound;
        }
        if bound >= self.best.len() {
            return;
        }

        let mut candidate = fixed.clone();
        candidate.extend(greedy_cover(&self.problem.rows, &red.rows, &red.cols));
        self.offer(candidate);
        if bound >= self.best.len() {
            return;
        }

        let branch_local = if lp.status == PackingStatus::Optimal {
            let fractional = (0..red.cols.len())
                .filter(|&l| lp.x[l] > INTEGRAL_TOL && lp.x[l] < 1.0 - INTEGRAL_TOL)
                .min_by(|&a, &b| {
                    let da = (lp.x[a] - 0.5).abs();
                    let db = (lp.x[b] - 0.5).abs();
                    da.partial_cmp(&db)
                        .unwrap()
                        .then(coverage[b].cmp(&coverage[a]))
                        .then(a.cmp(&b))
                });
            match fractional {
                Some(l) => l,
                None => {
                    let mut integral = fixed;
                    integral.extend((0..red.cols.len()).filter(|&l| lp.x[l] > 0.5).map(|l| red.cols[l]));
                    self.offer(integral);
                    return;
                }
            }
        } else {
            (0..red.cols.len())
                .max_by(|&a, &b| coverage[a].cmp(&coverage[b]).then(b.cmp(&a)))
                .unwrap()
        };
        let col = red.cols[branch_local];

        let mut take = status.clone();
        take[col] = ColState::In;
        self.node(take, depth + 1);
        status[col] = ColState::Out;
        self.node(status, depth + 1);
    }
}

/// Applies the reductions to a fixpoint. Returns `None` if some row can no
/// longer be covered.
fn reduce(problem: &SetCover, status: &mut [ColState]) -> Option<Reduced> {
    let n = problem.n_cols;
    loop {
        let mut covered = FixedBitSet::with_capacity(problem.rows.len());
        for (i, row) in problem.rows.iter().enumerate() {
            if row.iter().any(|&c| status[c] == ColState::In) {
                covered.insert(i);
            }
        }
        let mut active = Vec::new();
        let mut essential = None;
        for (i, row) in problem.rows.iter().enumerate() {
            if covered.contains(i) {
                continue;
            }
            let mut free = row.iter().filter(|&&c| status[c] == ColState::Free);
            match (free.next(), free.next()) {
                (None, _) => return None,
                (Some(&c), None) => {
                    essential = Some(c);
                    break;
                }
                _ => active.push(i),
            }
        }
        if let Some(c) = essential {
            status[c] = ColState::In;
            continue;
        }
        let mut changed = false;

        // Row dominance: a row whose free set contains another row's free set
        // is implied by it.
        let sets: Vec<FixedBitSet> = active
            .iter()
            .map(|&i| {
                let mut s = FixedBitSet::with_capacity(n);
                for &c in &problem.rows[i] {
                    if status[c] == ColState::Free {
                        s.insert(c);
                    }
                }
                s
            })
            .collect();
        let mut order: Vec<usize> = (0..active.len()).collect();
        order.sort_by_key(|&a| (sets[a].count_ones(..), active[a]));
        let mut kept: Vec<usize> = Vec::new();
        for &a in &order {
            if !kept.iter().any(|&k| sets[k].is_subset(&sets[a])) {
                kept.push(a);
            }
        }
        kept.sort_by_key(|&a| active[a]);
        let rows: Vec<usize> = kept.iter().map(|&a| active[a]).collect();

        // Column dominance over the kept rows.
        let m = kept.len();
        let mut col_rows: Vec<FixedBitSet> = vec![FixedBitSet::with_capacity(m); n];
        for (r, &a) in kept.iter().enumerate() {
            for c in sets[a].ones() {
                col_rows[c].insert(r);
            }
        }
        let free: Vec<usize> = (0..n).filter(|&c| status[c] == ColState::Free).collect();
        for &c in &free {
            if col_rows[c].is_clear() {
                status[c] = ColState::Out;
                changed = true;
            }
        }
        let live: Vec<usize> = free.into_iter().filter(|&c| status[c] == ColState::Free).collect();
        let mut dominated = Vec::new();
        for &c1 in &live {
            let cnt1 = col_rows[c1].count_ones(..);
            for &c2 in &live {
                if c1 == c2 || !col_rows[c1].is_subset(&col_rows[c2]) {
                    continue;
                }
                if col_rows[c2].count_ones(..) > cnt1 || c2 < c1 {
                    dominated.push(c1);
                    break;
                }
            }
        }
        for c in dominated {
            status[c] = ColState::Out;
            changed = true;
        }
        if !changed {
            let cols = (0..n).filter(|&c| status[c] == ColState::Free).collect();
            return Some(Reduced { rows, cols });
        }
    }
}

/// Greedy cover of `rows` (indices into `all_rows`) using only `cols`.
fn greedy_cover(all_rows: &[Vec<usize>], rows: &[usize], cols: &[usize]) -> Vec<usize> {
    let n = cols.iter().copied().max().map_or(0, |c| c + 1);
    let mut allowed = FixedBitSet::with_capacity(n);
    for &c in cols {
        allowed.insert(c);
    }
    let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, &i) in rows.iter().enumerate() {
        for &c in &all_rows[i] {
            if c < n && allowed.contains(c) {
                col_rows[c].push(r);
            }
        }
    }
    let mut uncovered = vec![true; rows.len()];
    let mut left = rows.len();
    let mut chosen = Vec::new();
    while left > 0 {
        let mut best: Option<(usize, usize)> = None;
        for &c in cols {
            let gain = col_rows[c].iter().filter(|&&r| uncovered[r]).count();
            if gain > 0 && best.is_none_or(|(_, g)| gain > g) {
                best = Some((c, gain));
            }
        }
        let (c, _) = best.expect("rows are coverable by the given columns");
        for &r in &col_rows[c] {
            if uncovered[r] {
                uncovered[r] = false;
                left -= 1;
            }
        }
        chosen.push(c);
    }
    // Drop columns made redundant by later picks, highest index first.
    let mut times = vec![0usize; rows.len()];
    for &c in &chosen {
        for &r in &col_rows[c] {
            times[r] += 1;
        }
    }
    let mut order = chosen.clone();
    order.sort_unstable_by(|a, b| b.cmp(a));
    let mut keep = FixedBitSet::with_capacity(n);
    for &c in &chosen {
        keep.insert(c);
    }
    for c in order {
        if col_rows[c].iter().all(|&r| times[r] > 1) {
            for &r in &col_rows[c] {
                times[r] -= 1;
            }
            keep.set(c, false);
        }
    }
    chosen.retain(|&c| keep.contains(c));
    chosen
}
