//! Shared fixtures for the benchmarks.

use pmu_core::{EstimationSettings, IeeeCase, Network};

pub fn network(case: IeeeCase) -> Network {
    Network::from_grid(&case.load().expect("bundled case parses"), &EstimationSettings::default())
        .expect("bundled case builds")
}
