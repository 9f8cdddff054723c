//! Random connected test networks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{BranchRecord, Bus, GridModel};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_buses: usize,
    /// Branches added on top of a random spanning tree.
    pub extra_branches: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n_buses: usize, extra_branches: usize, seed: u64) -> Self {
        SyntheticSpec {
            n_buses,
            extra_branches,
            seed,
        }
    }
}

/// Random spanning tree plus distinct extra branches, with random reactances,
/// line charging, loads and a few generators. Bus ids are `1..=n`.
pub fn random_grid(spec: &SyntheticSpec) -> Result<GridModel> {
    let n = spec.n_buses;
    if n < 2 {
        return Err(Error::Config("a synthetic grid needs at least 2 buses".into()));
    }
    let max_extra = n * (n - 1) / 2 - (n - 1);
    if spec.extra_branches > max_extra {
        return Err(Error::Config(format!(
            "{} extra branches requested, at most {max_extra} fit",
            spec.extra_branches
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut used = vec![vec![false; n]; n];
    for i in 1..n {
        let a = order[i];
        let b = order[rng.random_range(0..i)];
        used[a][b] = true;
        used[b][a] = true;
        edges.push((a.min(b), a.max(b)));
    }
    while edges.len() < n - 1 + spec.extra_branches {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b || used[a][b] {
            continue;
        }
        used[a][b] = true;
        used[b][a] = true;
        edges.push((a.min(b), a.max(b)));
    }
    let mut buses: Vec<Bus> = (0..n)
        .map(|k| {
            let mut bus = Bus::new(k as u32 + 1);
            bus.p_load_mw = rng.random_range(10.0..100.0);
            bus
        })
        .collect();
    let total_load: f64 = buses.iter().map(|b| b.p_load_mw).sum();
    let n_gen = (n / 4).max(1);
    let mut gens: Vec<usize> = (0..n).collect();
    gens.shuffle(&mut rng);
    for &g in &gens[..n_gen] {
        buses[g].p_gen_mw = total_load / n_gen as f64;
    }
    let records = edges
        .into_iter()
        .map(|(a, b)| BranchRecord {
            from_bus: a as u32 + 1,
            to_bus: b as u32 + 1,
            resistance: 0.0,
            reactance: rng.random_range(0.05..0.5),
            charging: rng.random_range(0.01..0.1),
        })
        .collect();
    GridModel::new(100.0, buses, records)
}
