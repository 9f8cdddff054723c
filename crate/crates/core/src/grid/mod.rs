//! Network topology and the DC susceptance matrix.
//!
//! A [`GridModel`] is built once from case data and is immutable afterwards.
//! Buses are re-indexed densely as `0..N`; the external bus numbers from the
//! case file are kept only for reporting.

mod cases;
mod matpower;
mod snapshot;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{singular_extremes, Mat};

pub use cases::{load_case, IeeeCase, DATA_DIR_ENV};
pub use matpower::parse_case;
pub use snapshot::GridSnapshot;

/// Singularity test: smallest singular value below this fraction of the largest.
pub const SINGULARITY_RATIO: f64 = 1e-8;
/// Diagonal shift applied to a singular susceptance matrix, relative to `max|B|`.
pub const REGULARIZATION_SCALE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External bus number from the case file.
    pub id: u32,
    /// Real power demand in MW.
    pub p_load_mw: f64,
    /// Real power of in-service generators at this bus, in MW.
    pub p_gen_mw: f64,
    /// Shunt conductance, MW demanded at 1.0 p.u. voltage.
    pub gs: f64,
    /// Shunt susceptance, MVAr injected at 1.0 p.u. voltage.
    pub bs: f64,
}

impl Bus {
    pub fn new(id: u32) -> Self {
        Bus {
            id,
            p_load_mw: 0.0,
            p_gen_mw: 0.0,
            gs: 0.0,
            bs: 0.0,
        }
    }

    pub fn net_injection_mw(&self) -> f64 {
        self.p_gen_mw - self.p_load_mw
    }
}

/// In-service branch between two internal bus indices. Impedances are per unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub resistance: f64,
    pub reactance: f64,
    /// Total line charging susceptance.
    pub charging: f64,
}

/// Branch as it appears in a case file, addressed by external bus numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchRecord {
    pub from_bus: u32,
    pub to_bus: u32,
    pub resistance: f64,
    pub reactance: f64,
    pub charging: f64,
}

#[derive(Clone, Debug)]
pub struct GridModel {
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    bus_index: BTreeMap<u32, usize>,
    adjacency: Vec<Vec<usize>>,
    susceptance: Mat,
    regularization: Option<f64>,
}

impl GridModel {
    /// Validates topology and assembles the susceptance matrix.
    pub fn new(base_mva: f64, buses: Vec<Bus>, records: Vec<BranchRecord>) -> Result<Self> {
        let mut model = Self::assemble(base_mva, buses, records)?;
        let (b, delta) = build_susceptance(&model)?;
        model.susceptance = b;
        model.regularization = delta;
        Ok(model)
    }

    /// Topology only; the susceptance matrix is left empty.
    fn assemble(base_mva: f64, buses: Vec<Bus>, records: Vec<BranchRecord>) -> Result<Self> {
        if buses.is_empty() {
            return Err(Error::Validation("case has no buses".into()));
        }
        if !(base_mva > 0.0) {
            return Err(Error::Validation(format!("baseMVA must be positive, got {base_mva}")));
        }
        let mut bus_index = BTreeMap::new();
        for (i, bus) in buses.iter().enumerate() {
            if bus_index.insert(bus.id, i).is_some() {
                return Err(Error::Validation(format!("duplicate bus id {}", bus.id)));
            }
        }
        let n = buses.len();
        let mut branches = Vec::with_capacity(records.len());
        let mut adjacency = vec![Vec::new(); n];
        for rec in &records {
            let lookup = |id: u32| {
                bus_index.get(&id).copied().ok_or_else(|| {
                    Error::Validation(format!("branch references unknown bus {id}"))
                })
            };
            let from = lookup(rec.from_bus)?;
            let to = lookup(rec.to_bus)?;
            if from == to {
                return Err(Error::Validation(format!(
                    "self-loop branch at bus {}",
                    rec.from_bus
                )));
            }
            adjacency[from].push(to);
            adjacency[to].push(from);
            branches.push(Branch {
                from,
                to,
                resistance: rec.resistance,
                reactance: rec.reactance,
                charging: rec.charging,
            });
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
            nbrs.dedup();
        }
        check_connected(&adjacency, &buses)?;
        Ok(GridModel {
            base_mva,
            buses,
            branches,
            bus_index,
            adjacency,
            susceptance: Mat::zeros(0, 0),
            regularization: None,
        })
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Sorted, de-duplicated neighbour set of an internal bus index.
    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.adjacency[k]
    }

    pub fn degree(&self, k: usize) -> usize {
        self.adjacency[k].len()
    }

    pub fn susceptance(&self) -> &Mat {
        &self.susceptance
    }

    /// Diagonal shift added to make `B` invertible, if one was needed.
    pub fn regularization(&self) -> Option<f64> {
        self.regularization
    }

    pub fn internal_index(&self, external_id: u32) -> Option<usize> {
        self.bus_index.get(&external_id).copied()
    }

    pub fn external_id(&self, k: usize) -> u32 {
        self.buses[k].id
    }

    /// Net real power injections (generation minus load) scaled by `scale`,
    /// usually `1/baseMVA` to obtain per-unit values.
    pub fn injections(&self, scale: f64) -> Vec<f64> {
        self.buses
            .iter()
            .map(|b| b.net_injection_mw() * scale)
            .collect()
    }

    /// Same network with buses listed in a different order. `order[i]` is the
    /// old internal index of the bus placed at new position `i`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let n = self.n_buses();
        let mut seen = vec![false; n];
        if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::Contract("permutation is not a bijection on buses".into()));
        }
        let buses = order.iter().map(|&i| self.buses[i].clone()).collect();
        let records = self
            .branches
            .iter()
            .map(|br| BranchRecord {
                from_bus: self.buses[br.from].id,
                to_bus: self.buses[br.to].id,
                resistance: br.resistance,
                reactance: br.reactance,
                charging: br.charging,
            })
            .collect();
        GridModel::new(self.base_mva, buses, records)
    }
}

fn check_connected(adjacency: &[Vec<usize>], buses: &[Bus]) -> Result<()> {
    let n = adjacency.len();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(k) = queue.pop_front() {
        for &m in &adjacency[k] {
            if !seen[m] {
                seen[m] = true;
                count += 1;
                queue.push_back(m);
            }
        }
    }
    if count != n {
        let stray = seen.iter().position(|s| !s).unwrap();
        return Err(Error::Topology(format!(
            "network is disconnected: bus {} unreachable from bus {}",
            buses[stray].id, buses[0].id
        )));
    }
    Ok(())
}

/// Imaginary part of the bus admittance matrix, including line charging and
/// bus shunts. Tap ratios and phase shifts are ignored.
///
/// Returns the matrix and the diagonal shift applied if it was numerically
/// singular.
pub fn build_susceptance(model: &GridModel) -> Result<(Mat, Option<f64>)> {
    let n = model.n_buses();
    let mut b = Mat::zeros(n, n);
    for (i, br) in model.branches.iter().enumerate() {
        let z2 = br.resistance * br.resistance + br.reactance * br.reactance;
        if !(z2 > 0.0) || !z2.is_finite() {
            return Err(Error::Data(format!(
                "branch {} ({} - {}) has zero series impedance",
                i,
                model.buses[br.from].id,
                model.buses[br.to].id
            )));
        }
        // Im(1 / (r + jx)) = -x / (r² + x²)
        let series = -br.reactance / z2;
        let (f, t) = (br.from, br.to);
        b[(f, f)] += series + 0.5 * br.charging;
        b[(t, t)] += series + 0.5 * br.charging;
        b[(f, t)] -= series;
        b[(t, f)] -= series;
    }
    for (k, bus) in model.buses.iter().enumerate() {
        b[(k, k)] += bus.bs / model.base_mva;
    }

    let (smin, smax) = singular_extremes(&b);
    if smin < SINGULARITY_RATIO * smax || smax == 0.0 {
        let scale = b.abs().max().max(1.0e-300);
        let delta = REGULARIZATION_SCALE * scale;
        for k in 0..n {
            b[(k, k)] += delta;
        }
        return Ok((b, Some(delta)));
    }
    Ok((b, None))
}

/// Bus-to-bus and branch-to-bus 0/1 incidence matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct IncidencePair {
    /// `N × N`, ones on the diagonal and between adjacent buses.
    pub bus_to_bus: nalgebra::DMatrix<u8>,
    /// `N_B × N`, one row per branch with ones at both endpoints.
    pub branch_to_bus: nalgebra::DMatrix<u8>,
    pub n_branches: usize,
}

pub fn incidence_matrices(model: &GridModel) -> IncidencePair {
    let n = model.n_buses();
    let nb = model.n_branches();
    let mut a = nalgebra::DMatrix::<u8>::zeros(n, n);
    for k in 0..n {
        a[(k, k)] = 1;
        for &m in model.neighbors(k) {
            a[(k, m)] = 1;
        }
    }
    let mut bb = nalgebra::DMatrix::<u8>::zeros(nb, n);
    for (i, br) in model.branches().iter().enumerate() {
        bb[(i, br.from)] = 1;
        bb[(i, br.to)] = 1;
    }
    IncidencePair {
        bus_to_bus: a,
        branch_to_bus: bb,
        n_branches: nb,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn path3() -> GridModel {
        let buses = (1..=3).map(Bus::new).collect();
        let line = |f, t| BranchRecord {
            from_bus: f,
            to_bus: t,
            resistance: 0.0,
            reactance: 0.1,
            charging: 0.0,
        };
        GridModel::new(100.0, buses, vec![line(1, 2), line(2, 3)]).unwrap()
    }

    #[test]
    fn path_graph_incidence() {
        let inc = incidence_matrices(&path3());
        let a: Vec<u8> = inc.bus_to_bus.transpose().iter().copied().collect();
        assert_eq!(a, vec![1, 1, 0, 1, 1, 1, 0, 1, 1]);
        let b: Vec<u8> = inc.branch_to_bus.transpose().iter().copied().collect();
        assert_eq!(b, vec![1, 1, 0, 0, 1, 1]);
        assert_eq!(inc.n_branches, 2);
    }

    #[test]
    fn single_reactance_branch_susceptance() {
        let buses = vec![Bus::new(1), Bus::new(2)];
        let rec = BranchRecord {
            from_bus: 1,
            to_bus: 2,
            resistance: 0.0,
            reactance: 0.5,
            charging: 0.0,
        };
        let assembled = GridModel::assemble(100.0, buses, vec![rec]).unwrap();
        // Singular on its own, so compare the raw assembly before the shift.
        let (b, delta) = build_susceptance(&assembled).unwrap();
        let delta = delta.expect("pure Laplacian must be regularized");
        assert!((delta - 2e-6).abs() < 1e-18);
        let expected = [[-2.0, 2.0], [2.0, -2.0]];
        for i in 0..2 {
            for j in 0..2 {
                let shift = if i == j { delta } else { 0.0 };
                assert_eq!(b[(i, j)] - shift, expected[i][j]);
            }
        }
    }

    #[test]
    fn rejects_bad_topology() {
        let line = |f, t| BranchRecord {
            from_bus: f,
            to_bus: t,
            resistance: 0.0,
            reactance: 0.1,
            charging: 0.0,
        };
        let err = GridModel::new(100.0, (1..=3).map(Bus::new).collect(), vec![line(1, 2)]);
        assert!(matches!(err, Err(Error::Topology(_))));
        let err = GridModel::new(100.0, vec![Bus::new(1), Bus::new(1)], vec![]);
        assert!(matches!(err, Err(Error::Validation(_))));
        let err = GridModel::new(100.0, vec![Bus::new(1), Bus::new(2)], vec![line(1, 1)]);
        assert!(matches!(err, Err(Error::Validation(_))));
        let err = GridModel::new(100.0, vec![Bus::new(1), Bus::new(2)], vec![line(1, 7)]);
        assert!(matches!(err, Err(Error::Validation(_))));
        let mut zero = line(1, 2);
        zero.reactance = 0.0;
        let err = GridModel::new(100.0, vec![Bus::new(1), Bus::new(2)], vec![zero]);
        assert!(matches!(err, Err(Error::Data(_))));
    }
}
