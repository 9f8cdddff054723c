//! The convex step of the penalized iterations:
//!
//! ```text
//! min  Σ c_k / (x_k + ε) + μ / ℓ(x)
//! s.t. Σx = S,  0 ≤ x ≤ 1,  M x ≥ 1 (observability rows),  ℓ(x) ≥ τ
//! ```
//!
//! where `ℓ` is the affine minorant of the penalty's `g` at the current point.

use serde::{Deserialize, Serialize};

use super::barrier::{
    minimize, strictly_feasible_point, BarrierOptions, ConvexObjective, LinearConstraints,
    NewtonRecord,
};
use super::penalty::AffineMinorant;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::observability::ObservabilityConstraint;

/// Trust threshold relative to the budget: `τ = 1e-6·S`.
pub const TRUST_FRACTION: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct SubproblemSpec<'a> {
    /// `c_k ≥ 0`
    pub coeffs: &'a [f64],
    pub epsilon: f64,
    pub mu: f64,
    /// Absent when `μ = 0`.
    pub minorant: Option<&'a AffineMinorant>,
    pub constraint: &'a ObservabilityConstraint,
    /// Covering rows use right-hand side `1 − relaxation`.
    pub relaxation: f64,
    pub budget: f64,
}

impl SubproblemSpec<'_> {
    pub fn trust_threshold(&self) -> f64 {
        TRUST_FRACTION * self.budget
    }

    pub fn feasible_set(&self) -> LinearConstraints {
        let n = self.coeffs.len();
        let mut cons = LinearConstraints::new(n);
        cons.push_unit_box();
        for row in self.constraint.sparse_rows() {
            let neg = row.into_iter().map(|(j, a)| (j, -a)).collect();
            cons.push_le(neg, -(1.0 - self.relaxation));
        }
        if self.mu > 0.0 {
            if let Some(lin) = self.minorant {
                let neg = lin
                    .slopes
                    .iter()
                    .enumerate()
                    .filter(|(_, &s)| s != 0.0)
                    .map(|(j, &s)| (j, -s))
                    .collect();
                cons.push_le(neg, lin.constant - self.trust_threshold());
            }
        }
        cons.push_eq(vec![1.0; n], self.budget);
        cons
    }

    fn objective(&self) -> ReciprocalPenalty<'_> {
        ReciprocalPenalty {
            coeffs: self.coeffs,
            epsilon: self.epsilon,
            mu: if self.minorant.is_some() { self.mu } else { 0.0 },
            minorant: self.minorant,
        }
    }

    /// The subproblem objective at `x`.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.objective().value(x)
    }
}

struct ReciprocalPenalty<'a> {
    coeffs: &'a [f64],
    epsilon: f64,
    mu: f64,
    minorant: Option<&'a AffineMinorant>,
}

impl ReciprocalPenalty<'_> {
    fn level(&self, x: &[f64]) -> Option<f64> {
        self.minorant.filter(|_| self.mu > 0.0).map(|l| l.eval(x))
    }
}

impl ConvexObjective for ReciprocalPenalty<'_> {
    fn dim(&self) -> usize {
        self.coeffs.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut v = 0.0;
        for (c, xi) in self.coeffs.iter().zip(x) {
            let y = xi + self.epsilon;
            if y <= 0.0 {
                return f64::INFINITY;
            }
            v += c / y;
        }
        if let Some(l) = self.level(x) {
            if l <= 0.0 {
                return f64::INFINITY;
            }
            v += self.mu / l;
        }
        v
    }

    fn gradient(&self, x: &[f64]) -> Vector {
        let mut g = Vector::from_fn(x.len(), |k, _| {
            let y = x[k] + self.epsilon;
            -self.coeffs[k] / (y * y)
        });
        if let (Some(l), Some(lin)) = (self.level(x), self.minorant) {
            let w = -self.mu / (l * l);
            for (k, s) in lin.slopes.iter().enumerate() {
                g[k] += w * s;
            }
        }
        g
    }

    fn hessian(&self, x: &[f64]) -> Mat {
        let n = x.len();
        let mut h = Mat::zeros(n, n);
        for k in 0..n {
            let y = x[k] + self.epsilon;
            h[(k, k)] = 2.0 * self.coeffs[k] / (y * y * y);
        }
        if let (Some(l), Some(lin)) = (self.level(x), self.minorant) {
            let w = 2.0 * self.mu / (l * l * l);
            for i in 0..n {
                let si = lin.slopes[i];
                if si == 0.0 {
                    continue;
                }
                for j in 0..n {
                    h[(i, j)] += w * si * lin.slopes[j];
                }
            }
        }
        h
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NewtonTraceRow {
    pub stage: usize,
    pub t: f64,
    pub decrement: f64,
    pub step: f64,
    pub objective: f64,
}

impl From<&NewtonRecord> for NewtonTraceRow {
    fn from(r: &NewtonRecord) -> Self {
        NewtonTraceRow {
            stage: r.stage,
            t: r.t,
            decrement: r.decrement,
            step: r.step,
            objective: r.objective,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubproblemSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub newton_steps: usize,
    pub converged: bool,
    /// `ℓ(x) ≥ τ` holds with (near) equality at the solution.
    pub trust_active: bool,
    pub trace: Vec<NewtonTraceRow>,
}

/// Solves the subproblem from `start`, which must satisfy `Σx = S`. If it is
/// not strictly inside the other constraints, a phase-1 search is run first.
pub fn solve_subproblem(spec: &SubproblemSpec<'_>, start: &[f64]) -> Result<SubproblemSolution> {
    let n = spec.coeffs.len();
    if start.len() != n || spec.constraint.n_buses() != n {
        return Err(Error::Contract("subproblem dimensions disagree".into()));
    }
    if spec.coeffs.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
        return Err(Error::Contract("subproblem coefficients must be nonnegative".into()));
    }
    if !(spec.epsilon > 0.0) {
        return Err(Error::Contract("shift ε must be positive".into()));
    }
    let cons = spec.feasible_set();
    let x0 = if cons.slacks(start).iter().all(|&s| s > 0.0) {
        start.to_vec()
    } else {
        strictly_feasible_point(&cons, start)?.0
    };
    let obj = spec.objective();
    let result = minimize(&obj, &cons, &x0, &BarrierOptions::default())?;
    let trust_active = obj
        .level(&result.x)
        .is_some_and(|l| l <= spec.trust_threshold() * (1.0 + 1e-3) + 1e-12);
    Ok(SubproblemSolution {
        objective: result.value,
        kkt_residual: result.kkt_residual,
        newton_steps: result.newton_steps,
        converged: result.converged,
        trust_active,
        trace: result.trace.iter().map(NewtonTraceRow::from).collect(),
        x: result.x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observability::ConstraintKind;
    use nalgebra::DMatrix;

    fn no_rows(n: usize) -> ObservabilityConstraint {
        ObservabilityConstraint::from_matrix(ConstraintKind::None, DMatrix::zeros(0, n))
    }

    #[test]
    fn equal_weights_spread_evenly() {
        let n = 6;
        let c = vec![1.0; n];
        let lin = AffineMinorant {
            constant: 0.0,
            slopes: vec![1.0; n],
        };
        let none = no_rows(n);
        let spec = SubproblemSpec {
            coeffs: &c,
            epsilon: 0.1,
            mu: 1.0,
            minorant: Some(&lin),
            constraint: &none,
            relaxation: 0.0,
            budget: 2.0,
        };
        let sol = solve_subproblem(&spec, &[2.0 / 6.0; 6]).unwrap();
        for v in &sol.x {
            assert!((v - 1.0 / 3.0).abs() < 1e-8);
        }
        assert!(!sol.trust_active);
    }

    #[test]
    fn two_bus_interior_optimum() {
        // Stationarity 1/(x₁+½)² = 4/(x₂+½)² on x₁ + x₂ = 1 gives x = (1/6, 5/6).
        let c = [1.0, 4.0];
        let none = no_rows(2);
        let spec = SubproblemSpec {
            coeffs: &c,
            epsilon: 0.5,
            mu: 0.0,
            minorant: None,
            constraint: &none,
            relaxation: 0.0,
            budget: 1.0,
        };
        let sol = solve_subproblem(&spec, &[0.5, 0.5]).unwrap();
        assert!(sol.kkt_residual <= 1e-7, "{}", sol.kkt_residual);
        // Scan oracle over x₁ ∈ [0, 1].
        let (best_x1, best) = (0..=60_000)
            .map(|i| {
                let x1 = i as f64 / 60_000.0;
                (x1, 1.0 / (x1 + 0.5) + 4.0 / (1.5 - x1))
            })
            .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        assert!((sol.x[0] - best_x1).abs() < 1e-4, "{:?}", sol.x);
        assert!((sol.objective - best).abs() < 1e-9);
        assert!((sol.x[0] - 1.0 / 6.0).abs() < 1e-7);
    }

    #[test]
    fn boundary_optimum_with_steep_weights() {
        // c = (1, 16): the interior stationary point x₁ = −1/10 is outside the
        // box, so the optimum sits at x = (0, 1).
        let c = [1.0, 16.0];
        let none = no_rows(2);
        let spec = SubproblemSpec {
            coeffs: &c,
            epsilon: 0.5,
            mu: 0.0,
            minorant: None,
            constraint: &none,
            relaxation: 0.0,
            budget: 1.0,
        };
        let sol = solve_subproblem(&spec, &[0.5, 0.5]).unwrap();
        assert!(sol.x[0] < 1e-7 && (sol.x[1] - 1.0).abs() < 1e-7, "{:?}", sol.x);
        assert!(sol.kkt_residual <= 1e-7, "{}", sol.kkt_residual);
    }
}
