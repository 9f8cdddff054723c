//! Shifted reciprocal surrogates of the two placement objectives.
//!
//! With `A_ε = BᵀΣ_P⁻¹B − ε ΣG_k ≻ 0` the information matrix becomes
//! `J(x) = A_ε + Σ (x_k + ε) G_k`, which has the `Φ(y)` form of
//! [`bounds`](super::bounds) with `y = x + ε > 0` on the whole unit box.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use super::bounds::{log_det_minorizer, trace_inverse_majorizer, BoundDirection, ReciprocalBound};
use crate::error::{Error, Result};
use crate::estimation::EstimationProblem;
use crate::linalg::{cholesky, symmetrize, Mat};

#[derive(Clone, Debug)]
pub struct EpsilonShift {
    pub epsilon: f64,
    /// Supremum of admissible shifts: `1/λ_max` of the pencil
    /// `(ΣG_k, BᵀΣ_P⁻¹B)`; infinite when there are no measurements.
    pub epsilon_sup: f64,
    /// `A_ε`
    pub shifted: Mat,
}

/// Shift for an information matrix `base ≻ 0` and measurement total `total ⪰ 0`.
///
/// Returns half the supremum, verified by a Cholesky factorization of
/// `base − ε·total`.
pub fn select_epsilon(base: &Mat, total: &Mat) -> Result<EpsilonShift> {
    if total.amax() == 0.0 {
        return Ok(EpsilonShift {
            epsilon: 1.0,
            epsilon_sup: f64::INFINITY,
            shifted: base.clone(),
        });
    }
    let chol = cholesky(base, "prior information")?;
    let l = chol.l();
    // C = L⁻¹ total L⁻ᵀ
    let mut tmp = total.clone();
    if !l.solve_lower_triangular_mut(&mut tmp) {
        return Err(Error::Numerical("prior information factor is singular".into()));
    }
    let mut c = tmp.transpose();
    if !l.solve_lower_triangular_mut(&mut c) {
        return Err(Error::Numerical("prior information factor is singular".into()));
    }
    symmetrize(&mut c);
    let lambda_max = SymmetricEigen::new(c).eigenvalues.max();
    if !(lambda_max > 0.0) {
        return Ok(EpsilonShift {
            epsilon: 1.0,
            epsilon_sup: f64::INFINITY,
            shifted: base.clone(),
        });
    }
    let epsilon_sup = 1.0 / lambda_max;
    let mut epsilon = 0.5 * epsilon_sup;
    for _ in 0..20 {
        let shifted = base - total * epsilon;
        if cholesky(&shifted, "shifted information").is_ok() {
            return Ok(EpsilonShift {
                epsilon,
                epsilon_sup,
                shifted,
            });
        }
        epsilon *= 0.5;
    }
    Err(Error::Numerical("no admissible shift found".into()))
}

pub fn epsilon_select(problem: &EstimationProblem) -> Result<EpsilonShift> {
    select_epsilon(problem.prior.information(), &problem.meas.total_precision())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    /// Upper bound of the MSE `f_e`.
    MseUpper,
    /// Lower bound of the log-det information `f_MI`.
    MiLower,
}

/// `constant ± Σ per_bus_k / (x_k + ε)`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateCoeffs {
    pub kind: SurrogateKind,
    pub constant: f64,
    pub per_bus: Vec<f64>,
    pub epsilon: f64,
    pub expansion_point: Vec<f64>,
}

impl SurrogateCoeffs {
    fn from_bound(kind: SurrogateKind, bound: ReciprocalBound, epsilon: f64, x_bar: &[f64]) -> Self {
        SurrogateCoeffs {
            kind,
            constant: bound.constant,
            per_bus: bound.coeffs,
            epsilon,
            expansion_point: x_bar.to_vec(),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let tail: f64 = self
            .per_bus
            .iter()
            .zip(x)
            .map(|(c, v)| c / (v + self.epsilon))
            .sum();
        match self.kind {
            SurrogateKind::MseUpper => self.constant + tail,
            SurrogateKind::MiLower => self.constant - tail,
        }
    }

    pub fn direction(&self) -> BoundDirection {
        match self.kind {
            SurrogateKind::MseUpper => BoundDirection::Upper,
            SurrogateKind::MiLower => BoundDirection::Lower,
        }
    }
}

fn shifted_point(x_bar: &[f64], epsilon: f64) -> Vec<f64> {
    x_bar.iter().map(|v| v + epsilon).collect()
}

pub fn mse_surrogate(
    problem: &EstimationProblem,
    shift: &EpsilonShift,
    x_bar: &[f64],
) -> Result<SurrogateCoeffs> {
    let y = shifted_point(x_bar, shift.epsilon);
    let bound = trace_inverse_majorizer(&shift.shifted, &problem.meas, &y)?;
    Ok(SurrogateCoeffs::from_bound(SurrogateKind::MseUpper, bound, shift.epsilon, x_bar))
}

pub fn mi_surrogate(
    problem: &EstimationProblem,
    shift: &EpsilonShift,
    x_bar: &[f64],
) -> Result<SurrogateCoeffs> {
    let y = shifted_point(x_bar, shift.epsilon);
    let bound = log_det_minorizer(&shift.shifted, &problem.meas, &y)?;
    Ok(SurrogateCoeffs::from_bound(SurrogateKind::MiLower, bound, shift.epsilon, x_bar))
}
