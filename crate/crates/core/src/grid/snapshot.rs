use serde::{Deserialize, Serialize};

use super::{Bus, BranchRecord, GridModel};
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// JSON snapshot of a parsed network.
///
/// `susceptance` is the dense `B` in row-major order. Loading a snapshot keeps
/// the stored matrix as-is, so a save/load cycle is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSnapshot {
    pub base_mva: f64,
    pub n_buses: usize,
    pub buses: Vec<Bus>,
    pub branches: Vec<SnapshotBranch>,
    pub susceptance: Vec<f64>,
    pub regularization: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotBranch {
    pub from_bus: u32,
    pub to_bus: u32,
    pub resistance: f64,
    pub reactance: f64,
    pub charging: f64,
}

impl GridModel {
    pub fn to_snapshot(&self) -> GridSnapshot {
        let n = self.n_buses();
        let mut flat = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                flat.push(self.susceptance[(i, j)]);
            }
        }
        GridSnapshot {
            base_mva: self.base_mva,
            n_buses: n,
            buses: self.buses.clone(),
            branches: self
                .branches
                .iter()
                .map(|br| SnapshotBranch {
                    from_bus: self.buses[br.from].id,
                    to_bus: self.buses[br.to].id,
                    resistance: br.resistance,
                    reactance: br.reactance,
                    charging: br.charging,
                })
                .collect(),
            susceptance: flat,
            regularization: self.regularization,
        }
    }

    pub fn from_snapshot(snap: GridSnapshot) -> Result<Self> {
        let n = snap.buses.len();
        if snap.n_buses != n || snap.susceptance.len() != n * n {
            return Err(Error::Validation(format!(
                "snapshot declares {} buses, has {} bus records and {} matrix entries",
                snap.n_buses,
                n,
                snap.susceptance.len()
            )));
        }
        let records = snap
            .branches
            .iter()
            .map(|b| BranchRecord {
                from_bus: b.from_bus,
                to_bus: b.to_bus,
                resistance: b.resistance,
                reactance: b.reactance,
                charging: b.charging,
            })
            .collect();
        let mut model = GridModel::assemble(snap.base_mva, snap.buses, records)?;
        let b = Mat::from_row_slice(n, n, &snap.susceptance);
        for i in 0..n {
            for j in (i + 1)..n {
                if (b[(i, j)] - b[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Validation(format!(
                        "snapshot susceptance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        model.susceptance = b;
        model.regularization = snap.regularization;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_snapshot())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_snapshot(serde_json::from_str(text)?)
    }
}
