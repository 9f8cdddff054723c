//! Binary-forcing penalty `g̃(x) = 1/g(x) − 1/S` with `g(x) = Σ x_k^L`.
//!
//! On `{x ∈ [0,1]^N, Σx = S}` and for `L > 1`, `g ≤ S` with equality exactly at
//! binary points, so `g̃ ≥ 0` vanishes exactly on the vertices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EXPONENT: f64 = 1.5;

pub fn check_exponent(exponent: f64) -> Result<()> {
    if !(exponent > 1.0 && exponent <= 2.0) {
        return Err(Error::Config(format!(
            "penalty exponent must lie in (1, 2], got {exponent}"
        )));
    }
    Ok(())
}

/// `Σ x_k^L`
pub fn g_value(x: &[f64], exponent: f64) -> f64 {
    x.iter().map(|&v| v.max(0.0).powf(exponent)).sum()
}

/// `1/g(x) − 1/S`
pub fn g_tilde(x: &[f64], exponent: f64, budget: f64) -> f64 {
    1.0 / g_value(x, exponent) - 1.0 / budget
}

/// `∂g/∂x_k = L x_k^{L−1}`, zero at `x_k = 0`.
pub fn g_gradient(x: &[f64], exponent: f64) -> Vec<f64> {
    x.iter()
        .map(|&v| exponent * v.max(0.0).powf(exponent - 1.0))
        .collect()
}

/// `c0 + Σ s_k x_k`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineMinorant {
    pub constant: f64,
    pub slopes: Vec<f64>,
}

impl AffineMinorant {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.slopes.iter().zip(x).map(|(s, v)| s * v).sum::<f64>()
    }
}

/// Tangent of the convex `g` at `x̄`:
/// `−(L−1)Σx̄_k^L + L Σ x̄_k^{L−1} x_k`, a global minorant of `g` on `x ≥ 0`.
pub fn linearize(x_bar: &[f64], exponent: f64) -> AffineMinorant {
    AffineMinorant {
        constant: -(exponent - 1.0) * g_value(x_bar, exponent),
        slopes: g_gradient(x_bar, exponent),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyState {
    pub exponent: f64,
    pub mu: f64,
    pub g_value: f64,
    pub g_tilde: f64,
    pub linearization: AffineMinorant,
}

impl PenaltyState {
    pub fn at(x: &[f64], exponent: f64, mu: f64, budget: f64) -> Self {
        let g = g_value(x, exponent);
        PenaltyState {
            exponent,
            mu,
            g_value: g,
            g_tilde: 1.0 / g - 1.0 / budget,
            linearization: linearize(x, exponent),
        }
    }
}

/// Penalty weight that puts `μ·g̃(x0)` on the scale of `|f(x0)|`, snapped to
/// the nearest power of ten.
pub fn auto_mu(objective_at_start: f64, g_tilde_at_start: f64) -> f64 {
    let raw = objective_at_start.abs() / g_tilde_at_start.max(1e-12);
    if !(raw > 0.0) || !raw.is_finite() {
        return 1.0;
    }
    10f64.powf(raw.log10().round())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_points_attain_the_budget() {
        let x = [1.0, 0.0, 1.0, 1.0, 0.0];
        assert_eq!(g_value(&x, 1.5), 3.0);
        assert_eq!(g_tilde(&x, 1.5, 3.0), 0.0);
        let lin = linearize(&x, 1.5);
        assert!((lin.eval(&x) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn snapping_to_powers_of_ten() {
        assert_eq!(auto_mu(0.03, 0.1), 0.1);
        assert_eq!(auto_mu(5.0, 0.1), 100.0);
        assert_eq!(auto_mu(0.0, 0.1), 1.0);
    }

    #[test]
    fn exponent_range() {
        assert!(check_exponent(1.5).is_ok());
        assert!(check_exponent(2.0).is_ok());
        assert!(check_exponent(1.0).is_err());
        assert!(check_exponent(2.5).is_err());
    }
}
