mod common;

use proptest::prelude::*;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pmu_core::observability::SetCover;
use pmu_core::{
    count_unobserved, incidence_matrices, local_search, min_pmu_blp, random_grid, BlpOptions,
    ConstraintKind, EstimationSettings, GridModel, IeeeCase, LocalSearchConfig, Network,
    ObjectiveKind, ObservabilityConstraint, SyntheticSpec,
};

/// Rows of the depth-one condition: one per branch, the union of the closed
/// neighborhoods of its two ends.
fn branch_rows(grid: &GridModel) -> Vec<Vec<usize>> {
    let closed = common::closed_neighborhoods(grid);
    grid.branches()
        .iter()
        .map(|br| {
            let mut r = closed[br.from].clone();
            r.extend(&closed[br.to]);
            r.sort_unstable();
            r.dedup();
            r
        })
        .collect()
}

fn oracle_rows(grid: &GridModel, kind: ConstraintKind) -> Vec<Vec<usize>> {
    match kind {
        ConstraintKind::Complete => common::closed_neighborhoods(grid),
        ConstraintKind::DepthOne => branch_rows(grid),
        ConstraintKind::None => Vec::new(),
    }
}

fn covers(rows: &[Vec<usize>], support: &[usize]) -> bool {
    rows.iter().all(|r| r.iter().any(|c| support.contains(c)))
}

fn unobserved_scan(grid: &GridModel, support: &[usize]) -> usize {
    (0..grid.n_buses())
        .filter(|&k| !support.contains(&k) && grid.neighbors(k).iter().all(|m| !support.contains(m)))
        .count()
}

#[test]
fn ieee30_depth_one_witness_is_not_complete() {
    let g = IeeeCase::Ieee30.load().unwrap();
    let depth = ObservabilityConstraint::for_grid(ConstraintKind::DepthOne, &g);
    let sol = min_pmu_blp(&depth, &BlpOptions::default()).unwrap();
    assert!(sol.proven_optimal);
    assert_eq!(sol.s_min, 4);
    assert!(covers(&branch_rows(&g), &sol.witness));
    assert!(!covers(&common::closed_neighborhoods(&g), &sol.witness));
    let x = common::indicator(30, &sol.witness);
    let complete = ObservabilityConstraint::for_grid(ConstraintKind::Complete, &g);
    let check = complete.check(&x).unwrap();
    assert!(!check.satisfied);
    assert!(!check.violated_rows.is_empty());
    assert!(depth.is_satisfied(&x).unwrap());
}

#[test]
fn unobserved_count_matches_neighbor_scan() {
    let g = IeeeCase::Ieee30.load().unwrap();
    let net = Network::from_grid(&g, &EstimationSettings::default()).unwrap();
    let report = local_search(&net, &LocalSearchConfig::new(ObjectiveKind::Mse, 4)).unwrap();
    let support = report.final_placement.support();
    let expect = unobserved_scan(&g, &support);
    assert_eq!(report.final_metrics.unobserved_count, expect);
    let x = report.final_placement.x_f64();
    assert_eq!(count_unobserved(&x, &net.incidence.bus_to_bus).unwrap(), expect);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let sub = sample(&mut rng, 30, 4).into_vec();
        let x = common::indicator(30, &sub);
        let bb = incidence_matrices(&g).bus_to_bus;
        assert_eq!(count_unobserved(&x, &bb).unwrap(), unobserved_scan(&g, &sub));
    }
}

#[test]
fn constraint_rows_match_definitions() {
    for case in [IeeeCase::Ieee30, IeeeCase::Ieee39] {
        let g = case.load().unwrap();
        for kind in [ConstraintKind::Complete, ConstraintKind::DepthOne] {
            let c = ObservabilityConstraint::for_grid(kind, &g);
            let rows = oracle_rows(&g, kind);
            assert_eq!(c.n_rows(), rows.len());
            for (i, r) in rows.iter().enumerate() {
                assert_eq!(c.row_support(i), r.as_slice(), "{} {} row {i}", case.name(), kind.name());
            }
        }
    }
}

#[test]
fn table_minimums() {
    let expected = [(10, 4), (13, 7), (17, 11), (32, 18)];
    for (case, (co, doou)) in IeeeCase::ALL.into_iter().zip(expected) {
        let g = case.load().unwrap();
        for (kind, want) in [(ConstraintKind::Complete, co), (ConstraintKind::DepthOne, doou)] {
            let c = ObservabilityConstraint::for_grid(kind, &g);
            let sol = min_pmu_blp(&c, &BlpOptions::default()).unwrap();
            assert_eq!(sol.s_min, want, "{} {}", case.name(), kind.name());
            assert!(sol.proven_optimal);
            assert_eq!(sol.witness.len(), sol.s_min);
            assert!(covers(&oracle_rows(&g, kind), &sol.witness));
        }
    }
}

#[test]
fn uncoverable_row_is_infeasible() {
    let sc = SetCover::new(3, vec![vec![0], vec![]]);
    assert!(matches!(sc.greedy(), Err(pmu_core::Error::Infeasible(_))));
}

#[test]
fn greedy_is_never_better_than_exact() {
    for seed in 0..50 {
        let n = 10 + (seed as usize % 16);
        let g = random_grid(&SyntheticSpec::new(n, n / 3, seed)).unwrap();
        for kind in [ConstraintKind::Complete, ConstraintKind::DepthOne] {
            let c = ObservabilityConstraint::for_grid(kind, &g);
            let greedy = c.set_cover().greedy().unwrap();
            assert!(covers(&oracle_rows(&g, kind), &greedy));
            let exact = min_pmu_blp(&c, &BlpOptions::default()).unwrap();
            assert!(greedy.len() >= exact.s_min, "seed {seed}");
        }
    }
}

fn small_grid() -> impl Strategy<Value = GridModel> {
    (4usize..=18, 0usize..8, any::<u64>()).prop_map(|(n, extra, seed)| {
        let max_extra = n * (n - 1) / 2 - (n - 1);
        random_grid(&SyntheticSpec::new(n, extra.min(max_extra), seed)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn exact_minimum_matches_enumeration(g in small_grid()) {
        for kind in [ConstraintKind::Complete, ConstraintKind::DepthOne] {
            let c = ObservabilityConstraint::for_grid(kind, &g);
            let sol = min_pmu_blp(&c, &BlpOptions::default()).unwrap();
            let rows = oracle_rows(&g, kind);
            prop_assert_eq!(sol.s_min, common::brute_force_cover(g.n_buses(), &rows));
            prop_assert!(covers(&rows, &sol.witness));
            prop_assert!(sol.proven_optimal);
            prop_assert_eq!(sol.gap, 0);
            let x = common::indicator(g.n_buses(), &sol.witness);
            prop_assert!(c.is_satisfied(&x).unwrap());
        }
    }

    #[test]
    fn lhs_is_the_matrix_product(g in small_grid(), seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..g.n_buses()).map(|_| rng.random_range(0.0..1.0)).collect();
        for kind in [ConstraintKind::Complete, ConstraintKind::DepthOne] {
            let c = ObservabilityConstraint::for_grid(kind, &g);
            let lhs = c.lhs(&x).unwrap();
            for (i, v) in lhs.iter().enumerate() {
                let want: f64 = (0..g.n_buses()).map(|j| c.matrix()[(i, j)] as f64 * x[j]).sum();
                prop_assert!((v - want).abs() < 1e-12);
            }
        }
    }
}
