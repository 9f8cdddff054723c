//! Gaussian state prior, PMU measurement model and the estimation metrics.
//!
//! The state is the vector of bus voltage angles `θ`. With injections
//! `P ~ N(u_p, Σ_P)` and the DC model `P = Bθ`, the prior is
//! `θ ~ N(B⁻¹u_p, B⁻¹Σ_P B⁻ᵀ)`. A PMU at bus `k` observes `θ_k` and the angle
//! differences to every neighbour. For a (possibly fractional) selection `x`
//! the posterior information matrix is
//!
//! ```text
//! J(x) = BᵀΣ_P⁻¹B + Σ_k x_k G_k,   G_k = H_kᵀ R_k⁻¹ H_k
//! ```
//!
//! and the error covariance is `J(x)⁻¹`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridModel;
use crate::linalg::{cholesky, log_det_spd, spd_inverse, symmetrize, Mat, PsdTerms, Vector};

/// Injection variance as a fraction of the mean injection.
pub const VARIANCE_FRACTION: f64 = 0.1;
/// Added to the variance of buses whose mean injection is not positive.
pub const VARIANCE_FLOOR: f64 = 1e-4;
/// Default PMU voltage-angle noise variance.
pub const DEFAULT_VOLTAGE_NOISE: f64 = 0.01;
/// Default PMU branch-angle noise variance.
pub const DEFAULT_BRANCH_NOISE: f64 = 0.02;
/// Entries within this distance of 0 or 1 count as binary.
pub const BINARY_TOL: f64 = 1e-9;

/// Mean and (diagonal) variance of per-unit bus injections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl InjectionStats {
    /// Case injections times `scale`, with variance `0.1·u_p(k)`; buses with a
    /// non-positive mean get `0.1·|u_p(k)| + 1e-4`.
    pub fn from_grid(grid: &GridModel, scale: f64) -> Self {
        let mean = grid.injections(scale);
        let variance = mean
            .iter()
            .map(|&u| {
                if u > 0.0 {
                    VARIANCE_FRACTION * u
                } else {
                    VARIANCE_FRACTION * u.abs() + VARIANCE_FLOOR
                }
            })
            .collect();
        InjectionStats { mean, variance }
    }
}

#[derive(Clone, Debug)]
pub struct StatePrior {
    mean: Vector,
    covariance: Mat,
    information: Mat,
    b_inverse: Mat,
    injection_mean: Vector,
    injection_var: Vector,
}

impl StatePrior {
    pub fn from_grid(grid: &GridModel, stats: &InjectionStats) -> Result<Self> {
        Self::new(grid.susceptance(), &stats.mean, &stats.variance)
    }

    /// Prior from an explicit susceptance matrix and injection statistics.
    pub fn new(b: &Mat, injection_mean: &[f64], injection_var: &[f64]) -> Result<Self> {
        let n = b.nrows();
        if b.ncols() != n || injection_mean.len() != n || injection_var.len() != n {
            return Err(Error::Contract(format!(
                "prior dimensions disagree: B is {}x{}, u_p has {}, Σ_P has {}",
                b.nrows(),
                b.ncols(),
                injection_mean.len(),
                injection_var.len()
            )));
        }
        if let Some(k) = injection_var.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Validation(format!(
                "injection variance at bus index {k} must be positive, got {}",
                injection_var[k]
            )));
        }
        let b_inverse = b
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("susceptance matrix is singular".into()))?;
        let u = Vector::from_column_slice(injection_mean);
        let var = Vector::from_column_slice(injection_var);

        let mean = &b_inverse * &u;
        let scaled = Mat::from_fn(n, n, |i, j| b_inverse[(i, j)] * var[j]);
        let mut covariance = &scaled * b_inverse.transpose();
        symmetrize(&mut covariance);
        let weighted = Mat::from_fn(n, n, |i, j| b[(i, j)] / var[i]);
        let mut information = b.transpose() * weighted;
        symmetrize(&mut information);
        cholesky(&information, "prior information BᵀΣ_P⁻¹B")?;

        Ok(StatePrior {
            mean,
            covariance,
            information,
            b_inverse,
            injection_mean: u,
            injection_var: var,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    /// `ℛ_θ = B⁻¹Σ_P B⁻ᵀ`
    pub fn covariance(&self) -> &Mat {
        &self.covariance
    }

    /// `BᵀΣ_P⁻¹B`, formed directly rather than by inverting the covariance.
    pub fn information(&self) -> &Mat {
        &self.information
    }

    pub fn b_inverse(&self) -> &Mat {
        &self.b_inverse
    }

    pub fn injection_mean(&self) -> &Vector {
        &self.injection_mean
    }

    pub fn injection_variance(&self) -> &Vector {
        &self.injection_var
    }
}

/// Measurement rows of a PMU installed at one bus.
#[derive(Clone, Debug)]
pub struct BusMeasurement {
    pub bus: usize,
    /// Neighbours in increasing index order; row `i + 1` of `H_k` measures
    /// `θ_k − θ_{neighbors[i]}`.
    pub neighbors: Vec<usize>,
    /// Diagonal of `R_{w_k}`.
    pub noise: Vec<f64>,
    /// `{k} ∪ N(k)`, sorted.
    support: Vec<usize>,
    /// `G_k` restricted to `support × support`.
    block: Mat,
}

impl BusMeasurement {
    pub fn rows(&self) -> usize {
        self.neighbors.len() + 1
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Dense `M_k × N` regression matrix.
    pub fn regression(&self, n: usize) -> Mat {
        let mut h = Mat::zeros(self.rows(), n);
        h[(0, self.bus)] = 1.0;
        for (i, &m) in self.neighbors.iter().enumerate() {
            h[(i + 1, self.bus)] = 1.0;
            h[(i + 1, m)] = -1.0;
        }
        h
    }

    /// Dense `N × M_k` factor `U_k = H_kᵀ R_k^{-1/2}`, so `G_k = U_k U_kᵀ`.
    pub fn whitened_factor(&self, n: usize) -> Mat {
        let mut u = self.regression(n).transpose();
        for (j, &var) in self.noise.iter().enumerate() {
            let s = 1.0 / var.sqrt();
            u.column_mut(j).scale_mut(s);
        }
        u
    }
}

#[derive(Clone, Debug)]
pub struct MeasurementModel {
    n: usize,
    buses: Vec<BusMeasurement>,
    voltage_noise: f64,
    branch_noise: f64,
}

impl MeasurementModel {
    /// `r`: voltage-angle noise variance, `rho`: branch noise variance.
    pub fn from_grid(grid: &GridModel, r: f64, rho: f64) -> Result<Self> {
        let neighbors: Vec<Vec<usize>> = (0..grid.n_buses())
            .map(|k| grid.neighbors(k).to_vec())
            .collect();
        Self::from_adjacency(&neighbors, r, rho)
    }

    pub fn from_adjacency(neighbors: &[Vec<usize>], r: f64, rho: f64) -> Result<Self> {
        if !(r > 0.0 && rho > 0.0 && r.is_finite() && rho.is_finite()) {
            return Err(Error::Validation(format!(
                "noise variances must be positive, got r={r}, rho={rho}"
            )));
        }
        let n = neighbors.len();
        let buses = neighbors
            .iter()
            .enumerate()
            .map(|(k, nbrs)| {
                let mut nbrs = nbrs.clone();
                nbrs.sort_unstable();
                nbrs.dedup();
                let mut noise = vec![rho; nbrs.len() + 1];
                noise[0] = r;
                let mut support = nbrs.clone();
                support.push(k);
                support.sort_unstable();
                let meas = BusMeasurement {
                    bus: k,
                    neighbors: nbrs,
                    noise,
                    support,
                    block: Mat::zeros(0, 0),
                };
                let g = precision_dense(&meas, n);
                let block = Mat::from_fn(meas.support.len(), meas.support.len(), |a, b| {
                    g[(meas.support[a], meas.support[b])]
                });
                BusMeasurement { block, ..meas }
            })
            .collect();
        Ok(MeasurementModel {
            n,
            buses,
            voltage_noise: r,
            branch_noise: rho,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bus(&self, k: usize) -> &BusMeasurement {
        &self.buses[k]
    }

    pub fn buses(&self) -> &[BusMeasurement] {
        &self.buses
    }

    pub fn voltage_noise(&self) -> f64 {
        self.voltage_noise
    }

    pub fn branch_noise(&self) -> f64 {
        self.branch_noise
    }

    /// Dense `G_k = H_kᵀR_k⁻¹H_k`.
    pub fn precision_term(&self, k: usize) -> Mat {
        let mut g = Mat::zeros(self.n, self.n);
        self.add_scaled(k, 1.0, &mut g);
        g
    }

    /// `Σ_k G_k`
    pub fn total_precision(&self) -> Mat {
        let mut g = Mat::zeros(self.n, self.n);
        for k in 0..self.n {
            self.add_scaled(k, 1.0, &mut g);
        }
        g
    }
}

fn precision_dense(meas: &BusMeasurement, n: usize) -> Mat {
    let h = meas.regression(n);
    let rinv = Mat::from_diagonal(&Vector::from_iterator(
        meas.noise.len(),
        meas.noise.iter().map(|v| 1.0 / v),
    ));
    h.transpose() * rinv * h
}

impl PsdTerms for MeasurementModel {
    fn dim(&self) -> usize {
        self.n
    }

    fn n_terms(&self) -> usize {
        self.n
    }

    fn add_scaled(&self, k: usize, weight: f64, target: &mut Mat) {
        let bus = &self.buses[k];
        for (a, &i) in bus.support.iter().enumerate() {
            for (b, &j) in bus.support.iter().enumerate() {
                target[(i, j)] += weight * bus.block[(a, b)];
            }
        }
    }

    fn trace_with(&self, k: usize, m: &Mat) -> f64 {
        let bus = &self.buses[k];
        let mut acc = 0.0;
        for (a, &i) in bus.support.iter().enumerate() {
            for (b, &j) in bus.support.iter().enumerate() {
                acc += m[(j, i)] * bus.block[(a, b)];
            }
        }
        acc
    }
}

/// Selection vector over buses together with its budget `S`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    x: Vec<f64>,
    budget: usize,
}

impl Placement {
    pub fn from_support(n: usize, support: &[usize]) -> Result<Self> {
        let mut x = vec![0.0; n];
        for &k in support {
            if k >= n {
                return Err(Error::Contract(format!("bus index {k} out of range 0..{n}")));
            }
            if x[k] == 1.0 {
                return Err(Error::Contract(format!("bus index {k} selected twice")));
            }
            x[k] = 1.0;
        }
        Ok(Placement {
            x,
            budget: support.len(),
        })
    }

    /// A point of the relaxed polytope `{x ∈ [0,1]^N, Σx = S}`.
    pub fn fractional(x: Vec<f64>, budget: usize) -> Result<Self> {
        check_unit_box(&x)?;
        let sum: f64 = x.iter().sum();
        if (sum - budget as f64).abs() > 1e-9 {
            return Err(Error::Contract(format!(
                "placement sums to {sum}, budget is {budget}"
            )));
        }
        Ok(Placement { x, budget })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.x
            .iter()
            .all(|&v| v.abs() <= BINARY_TOL || (v - 1.0).abs() <= BINARY_TOL)
    }

    /// Indices with `x_k > 0.5`, increasing.
    pub fn support(&self) -> Vec<usize> {
        self.x
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.5)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn indicator(&self) -> Vec<u8> {
        self.x.iter().map(|&v| u8::from(v > 0.5)).collect()
    }
}

pub(crate) fn check_unit_box(x: &[f64]) -> Result<()> {
    if let Some(k) = x
        .iter()
        .position(|&v| !(-1e-12..=1.0 + 1e-12).contains(&v) || !v.is_finite())
    {
        return Err(Error::Contract(format!(
            "selection entry {k} = {} outside [0, 1]",
            x[k]
        )));
    }
    Ok(())
}

/// Prior and measurement model together: everything needed to score a
/// placement.
#[derive(Clone, Debug)]
pub struct EstimationProblem {
    pub prior: StatePrior,
    pub meas: MeasurementModel,
}

/// Both objectives at one placement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub f_e: f64,
    pub f_mi: f64,
}

impl EstimationProblem {
    pub fn new(prior: StatePrior, meas: MeasurementModel) -> Result<Self> {
        if prior.dim() != meas.dim() {
            return Err(Error::Contract(format!(
                "prior has dimension {}, measurement model {}",
                prior.dim(),
                meas.dim()
            )));
        }
        Ok(EstimationProblem { prior, meas })
    }

    /// Prior from case injections and the given noise variances.
    pub fn from_grid(grid: &GridModel, injection_scale: f64, r: f64, rho: f64) -> Result<Self> {
        let stats = InjectionStats::from_grid(grid, injection_scale);
        let prior = StatePrior::from_grid(grid, &stats)?;
        let meas = MeasurementModel::from_grid(grid, r, rho)?;
        Self::new(prior, meas)
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Contract(format!(
                "selection has {} entries, network has {} buses",
                x.len(),
                self.dim()
            )));
        }
        check_unit_box(x)
    }

    /// `J(x) = BᵀΣ_P⁻¹B + Σ x_k G_k`
    pub fn information(&self, x: &[f64]) -> Result<Mat> {
        self.check_len(x)?;
        let mut j = self.prior.information().clone();
        for (k, &w) in x.iter().enumerate() {
            if w != 0.0 {
                self.meas.add_scaled(k, w, &mut j);
            }
        }
        Ok(j)
    }

    /// `ℛ_e(x) = J(x)⁻¹`
    pub fn error_covariance(&self, x: &[f64]) -> Result<Mat> {
        spd_inverse(&self.information(x)?, "information matrix")
    }

    /// Mean squared error `Trace(ℛ_e(x))`.
    pub fn f_e(&self, x: &[f64]) -> Result<f64> {
        Ok(self.error_covariance(x)?.trace())
    }

    /// `−ln|ℛ_e(x)| = ln|J(x)|`, from the Cholesky factor of `J`.
    pub fn f_mi(&self, x: &[f64]) -> Result<f64> {
        log_det_spd(&self.information(x)?, "information matrix")
    }

    pub fn metrics(&self, x: &[f64]) -> Result<Metrics> {
        let j = self.information(x)?;
        let chol = cholesky(&j, "information matrix")?;
        let f_mi = crate::linalg::log_det_from_factor(chol.l_dirty());
        Ok(Metrics {
            f_e: chol.inverse().trace(),
            f_mi,
        })
    }

    /// `∂f_e/∂x_k = −Trace(ℛ_e² G_k)`
    pub fn grad_f_e(&self, x: &[f64]) -> Result<Vec<f64>> {
        let re = self.error_covariance(x)?;
        let re2 = &re * &re;
        Ok((0..self.dim())
            .map(|k| -self.meas.trace_with(k, &re2))
            .collect())
    }

    /// `∂f_MI/∂x_k = Trace(ℛ_e G_k)`
    pub fn grad_f_mi(&self, x: &[f64]) -> Result<Vec<f64>> {
        let re = self.error_covariance(x)?;
        Ok((0..self.dim()).map(|k| self.meas.trace_with(k, &re)).collect())
    }

    /// `(f_MI(x) − f_MI(0)) / (f_MI(1) − f_MI(0))`
    pub fn normalized_mi(&self, x: &[f64]) -> Result<f64> {
        let n = self.dim();
        let lo = self.f_mi(&vec![0.0; n])?;
        let hi = self.f_mi(&vec![1.0; n])?;
        Ok((self.f_mi(x)? - lo) / (hi - lo))
    }

    /// Mutual information in bits: `(f_MI(x) − f_MI(0)) / (2 ln 2)`.
    pub fn mutual_information_bits(&self, x: &[f64]) -> Result<f64> {
        let lo = self.f_mi(&vec![0.0; self.dim()])?;
        Ok((self.f_mi(x)? - lo) / (2.0 * std::f64::consts::LN_2))
    }

    /// Gaussian conditional-mean estimator for a binary placement.
    pub fn estimator(&self, placement: &Placement) -> Result<LinearEstimator> {
        LinearEstimator::new(self, placement)
    }

    /// MMSE estimate of `θ` from the stacked measurement vector `z`.
    pub fn mmse_estimate(&self, placement: &Placement, z: &[f64]) -> Result<Vector> {
        self.estimator(placement)?.estimate(z)
    }
}

/// `θ̂ = θ̄ + ℛ_θH̄ᵀ(H̄ℛ_θH̄ᵀ + ℛ_w)⁻¹(z − H̄θ̄)`, with the gain precomputed.
///
/// Measurements are stacked by increasing bus index; within a bus the voltage
/// row comes first, then branch rows by increasing neighbour index.
#[derive(Clone, Debug)]
pub struct LinearEstimator {
    support: Vec<usize>,
    stacked: Mat,
    noise: Vector,
    gain: Mat,
    prior_mean: Vector,
}

impl LinearEstimator {
    fn new(problem: &EstimationProblem, placement: &Placement) -> Result<Self> {
        let n = problem.dim();
        if placement.len() != n {
            return Err(Error::Contract(format!(
                "placement has {} entries, network has {n} buses",
                placement.len()
            )));
        }
        if !placement.is_binary() {
            return Err(Error::Contract("estimator requires a binary placement".into()));
        }
        let support = placement.support();
        let rows: usize = support.iter().map(|&k| problem.meas.bus(k).rows()).sum();
        let mut stacked = Mat::zeros(rows, n);
        let mut noise = Vector::zeros(rows);
        let mut offset = 0;
        for &k in &support {
            let bus = problem.meas.bus(k);
            let h = bus.regression(n);
            stacked.rows_mut(offset, bus.rows()).copy_from(&h);
            for (i, &v) in bus.noise.iter().enumerate() {
                noise[offset + i] = v;
            }
            offset += bus.rows();
        }
        let prior_cov = problem.prior.covariance();
        let cross = prior_cov * stacked.transpose();
        let mut innov = &stacked * &cross;
        for i in 0..rows {
            innov[(i, i)] += noise[i];
        }
        let gain = if rows == 0 {
            Mat::zeros(n, 0)
        } else {
            let chol = cholesky(&innov, "innovation covariance")?;
            chol.solve(&cross.transpose()).transpose()
        };
        Ok(LinearEstimator {
            support,
            stacked,
            noise,
            gain,
            prior_mean: problem.prior.mean().clone(),
        })
    }

    pub fn measurement_dim(&self) -> usize {
        self.stacked.nrows()
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Stacked regression matrix `H̄(x)`.
    pub fn stacked_regression(&self) -> &Mat {
        &self.stacked
    }

    pub fn estimate(&self, z: &[f64]) -> Result<Vector> {
        if z.len() != self.measurement_dim() {
            return Err(Error::Contract(format!(
                "measurement vector has {} entries, placement produces {}",
                z.len(),
                self.measurement_dim()
            )));
        }
        let z = Vector::from_column_slice(z);
        let innovation = z - &self.stacked * &self.prior_mean;
        Ok(&self.prior_mean + &self.gain * innovation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub empirical_mse: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Empirical `E‖θ − θ̂‖²` from `n_samples` simulated injections and PMU noise.
///
/// Sample `i` draws from its own ChaCha stream `i` under `seed`, so the result
/// does not depend on how the work is split across threads.
pub fn monte_carlo_mse(
    problem: &EstimationProblem,
    placement: &Placement,
    n_samples: usize,
    seed: u64,
) -> Result<MonteCarloResult> {
    if n_samples < 100 {
        return Err(Error::Contract(format!(
            "Monte-Carlo needs at least 100 samples, got {n_samples}"
        )));
    }
    let est = problem.estimator(placement)?;
    let n = problem.dim();
    let m = est.measurement_dim();
    let b_inv = problem.prior.b_inverse();
    let u = problem.prior.injection_mean();
    let sd_p: Vec<f64> = problem.prior.injection_variance().iter().map(|v| v.sqrt()).collect();
    let sd_w: Vec<f64> = est.noise.iter().map(|v| v.sqrt()).collect();

    let errors: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let p = Vector::from_fn(n, |k, _| {
                let xi: f64 = StandardNormal.sample(&mut rng);
                u[k] + sd_p[k] * xi
            });
            let theta = b_inv * p;
            let mut z = &est.stacked * &theta;
            for r in 0..m {
                let xi: f64 = StandardNormal.sample(&mut rng);
                z[r] += sd_w[r] * xi;
            }
            let innovation = z - &est.stacked * &est.prior_mean;
            let theta_hat = &est.prior_mean + &est.gain * innovation;
            (theta - theta_hat).norm_squared()
        })
        .collect();

    let count = n_samples as f64;
    let mean = errors.iter().sum::<f64>() / count;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (count - 1.0);
    Ok(MonteCarloResult {
        empirical_mse: mean,
        std_error: (var / count).sqrt(),
        n_samples,
        seed,
    })
}
