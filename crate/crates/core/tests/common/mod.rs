//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the solver code paths it is used to check: Y-bus
//! assembly, Woodbury covariance, regression matrices, set-cover and placement
//! optima are all rebuilt from the raw model data.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pmu_core::{
    random_grid, EstimationProblem, EstimationSettings, GridModel, Network, RunReport, SyntheticSpec,
};

pub type Mat = DMatrix<f64>;

pub const NOISE_R: f64 = 0.01;
pub const NOISE_RHO: f64 = 0.02;

/// Random connected network with `n` buses and its estimation problem.
pub fn toy(n: usize, extra: usize, seed: u64) -> (GridModel, EstimationProblem) {
    let grid = random_grid(&SyntheticSpec::new(n, extra, seed)).unwrap();
    let problem = EstimationProblem::from_grid(&grid, 0.01, NOISE_R, NOISE_RHO).unwrap();
    (grid, problem)
}

pub fn toy_settings() -> EstimationSettings {
    EstimationSettings {
        injection_scale: Some(0.01),
        voltage_noise: NOISE_R,
        branch_noise: NOISE_RHO,
    }
}

/// Same network as [`toy`], wrapped for the placement drivers.
pub fn toy_network(n: usize, extra: usize, seed: u64) -> (GridModel, Network) {
    let grid = random_grid(&SyntheticSpec::new(n, extra, seed)).unwrap();
    let net = Network::from_grid(&grid, &toy_settings()).unwrap();
    (grid, net)
}

/// Penalized-run records split at every change of the surrogate objective
/// (a vertex pull or a new μ); `F_μ` must fall strictly inside each piece.
pub fn descent_violations(report: &RunReport) -> Vec<(usize, f64, f64)> {
    let mut bad = Vec::new();
    let mut prev: Option<f64> = None;
    for (i, it) in report.iterations.iter().enumerate() {
        let resets = matches!(it.step.as_str(), "start" | "vertex pull" | "μ escalation");
        if let (Some(p), false) = (prev, resets) {
            if it.objective >= p || it.objective.is_nan() {
                bad.push((i, p, it.objective));
            }
        }
        prev = Some(it.objective);
    }
    bad
}

/// `Im(Y_bus)` assembled as `Aᵀ diag(b_series) A + charging + shunts` from the
/// branch-bus incidence, separately from the library's per-branch stamping.
pub fn ybus_imag(grid: &GridModel) -> Mat {
    let n = grid.n_buses();
    let branches = grid.branches();
    let mut a = Mat::zeros(branches.len(), n);
    let mut b_series = DVector::zeros(branches.len());
    let mut diag = DVector::zeros(n);
    for (i, br) in branches.iter().enumerate() {
        a[(i, br.from)] = 1.0;
        a[(i, br.to)] = -1.0;
        // y = 1/(r + jx) = (r − jx)/(r² + x²)
        b_series[i] = -br.reactance / (br.resistance.powi(2) + br.reactance.powi(2));
        diag[br.from] += br.charging / 2.0;
        diag[br.to] += br.charging / 2.0;
    }
    for (k, bus) in grid.buses().iter().enumerate() {
        diag[k] += bus.bs / grid.base_mva();
    }
    a.transpose() * Mat::from_diagonal(&b_series) * &a + Mat::from_diagonal(&diag)
}

/// `H_k` from its definition: `e_k`, then `e_k − e_m` for each neighbor `m`
/// in increasing order.
pub fn regression(grid: &GridModel, k: usize) -> Mat {
    let n = grid.n_buses();
    let mut nb: Vec<usize> = grid.neighbors(k).to_vec();
    nb.sort_unstable();
    nb.dedup();
    let mut h = Mat::zeros(nb.len() + 1, n);
    h[(0, k)] = 1.0;
    for (i, &m) in nb.iter().enumerate() {
        h[(i + 1, k)] = 1.0;
        h[(i + 1, m)] = -1.0;
    }
    h
}

/// Prior covariance `B⁻¹ Σ_P B⁻ᵀ` by direct inversion.
pub fn prior_covariance(problem: &EstimationProblem, b: &Mat) -> Mat {
    let b_inv = b.clone().try_inverse().unwrap();
    let sigma = Mat::from_diagonal(problem.prior.injection_variance());
    &b_inv * sigma * b_inv.transpose()
}

/// Error covariance in gain (Woodbury) form,
/// `ℛ_θ − ℛ_θH̄ᵀ(H̄ℛ_θH̄ᵀ + ℛ_w)⁻¹H̄ℛ_θ`, with `ℛ_w` block `k` scaled by
/// `1/x_k` so fractional placements are covered too.
pub fn woodbury_covariance(grid: &GridModel, r_theta: &Mat, x: &[f64]) -> Mat {
    let n = grid.n_buses();
    let active: Vec<usize> = (0..n).filter(|&k| x[k] > 0.0).collect();
    if active.is_empty() {
        return r_theta.clone();
    }
    let blocks: Vec<Mat> = active.iter().map(|&k| regression(grid, k)).collect();
    let m: usize = blocks.iter().map(|h| h.nrows()).sum();
    let mut h_bar = Mat::zeros(m, n);
    let mut r_w = Mat::zeros(m, m);
    let mut row = 0;
    for (h, &k) in blocks.iter().zip(&active) {
        for i in 0..h.nrows() {
            h_bar.set_row(row, &h.row(i));
            let var = if i == 0 { NOISE_R } else { NOISE_RHO };
            r_w[(row, row)] = var / x[k];
            row += 1;
        }
    }
    let s = &h_bar * r_theta * h_bar.transpose() + r_w;
    let s_inv = s.try_inverse().unwrap();
    r_theta - r_theta * h_bar.transpose() * s_inv * &h_bar * r_theta
}

/// All `s`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, s: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, s: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == s {
            out.push(cur.clone());
            return;
        }
        for k in start..n {
            if n - k < s - cur.len() {
                break;
            }
            cur.push(k);
            rec(k + 1, n, s, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, s, &mut Vec::new(), &mut out);
    out
}

pub fn indicator(n: usize, support: &[usize]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for &k in support {
        x[k] = 1.0;
    }
    x
}

/// `Trace((M0 + Σ_{k∈support} H_kᵀR⁻¹H_k)⁻¹)` with everything rebuilt from
/// the grid: the independent MSE of a binary placement.
pub fn mse_from_scratch(grid: &GridModel, problem: &EstimationProblem, support: &[usize]) -> f64 {
    let mut j = problem.prior.information().clone();
    for &k in support {
        let h = regression(grid, k);
        let mut w = Mat::zeros(h.nrows(), h.nrows());
        w[(0, 0)] = 1.0 / NOISE_R;
        for i in 1..h.nrows() {
            w[(i, i)] = 1.0 / NOISE_RHO;
        }
        j += h.transpose() * w * &h;
    }
    j.try_inverse().unwrap().trace()
}

pub fn log_det_from_scratch(grid: &GridModel, problem: &EstimationProblem, support: &[usize]) -> f64 {
    let mut j = problem.prior.information().clone();
    for &k in support {
        let h = regression(grid, k);
        let mut w = Mat::zeros(h.nrows(), h.nrows());
        w[(0, 0)] = 1.0 / NOISE_R;
        for i in 1..h.nrows() {
            w[(i, i)] = 1.0 / NOISE_RHO;
        }
        j += h.transpose() * w * &h;
    }
    j.determinant().ln()
}

/// `(best value, best support)` of `f` over all `s`-subsets.
pub fn exhaustive_min<F: Fn(&[usize]) -> f64>(n: usize, s: usize, f: F) -> (f64, Vec<usize>) {
    subsets(n, s)
        .into_iter()
        .map(|sub| (f(&sub), sub))
        .fold((f64::INFINITY, Vec::new()), |a, b| if b.0 < a.0 { b } else { a })
}

/// Smallest set of columns hitting every row, by enumeration over sizes.
pub fn brute_force_cover(n_cols: usize, rows: &[Vec<usize>]) -> usize {
    for s in 0..=n_cols {
        for sub in subsets(n_cols, s) {
            if rows.iter().all(|r| r.iter().any(|c| sub.contains(c))) {
                return s;
            }
        }
    }
    usize::MAX
}

/// Closed neighborhoods of a network: the rows of complete observability.
pub fn closed_neighborhoods(grid: &GridModel) -> Vec<Vec<usize>> {
    (0..grid.n_buses())
        .map(|k| {
            let mut r = grid.neighbors(k).to_vec();
            r.push(k);
            r.sort_unstable();
            r.dedup();
            r
        })
        .collect()
}
