//! Reciprocal-form bounds for `Φ(y) = A₀ + Σ y_k A_k` with `A₀ ≻ 0`, `A_k ⪰ 0`
//! and `y > 0`.
//!
//! Writing `t_k = 1/y_k`, `Trace(Φ⁻¹)` is concave and `ln|Φ|` is convex in `t`,
//! so their tangents at `t̄` give, with `P = Φ(ȳ)⁻¹`:
//!
//! ```text
//! Trace(Φ(y)⁻¹) ≤ Trace(P A₀ P) + Σ ȳ_k² Trace(P A_k P) / y_k
//! ln|Φ(y)|      ≥ ln|Φ(ȳ)| + Σ ȳ_k Trace(P A_k) − Σ ȳ_k² Trace(P A_k) / y_k
//! ```
//!
//! Both are tight at `y = ȳ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, log_det_from_factor, symmetrize, trace_product, Mat, PsdTerms};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundDirection {
    /// `c₀ + Σ c_k / y_k`
    Upper,
    /// `c₀ − Σ c_k / y_k`
    Lower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReciprocalBound {
    pub direction: BoundDirection,
    pub constant: f64,
    pub coeffs: Vec<f64>,
}

impl ReciprocalBound {
    pub fn eval(&self, y: &[f64]) -> f64 {
        let tail: f64 = self.coeffs.iter().zip(y).map(|(c, v)| c / v).sum();
        match self.direction {
            BoundDirection::Upper => self.constant + tail,
            BoundDirection::Lower => self.constant - tail,
        }
    }
}

fn check_point<T: PsdTerms + ?Sized>(terms: &T, y: &[f64]) -> Result<()> {
    if y.len() != terms.n_terms() {
        return Err(Error::Contract(format!(
            "expansion point has {} entries, {} terms",
            y.len(),
            terms.n_terms()
        )));
    }
    if let Some(k) = y.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Contract(format!(
            "expansion point must be positive, entry {k} is {}",
            y[k]
        )));
    }
    Ok(())
}

/// `Φ(y)`
pub fn assemble<T: PsdTerms + ?Sized>(a0: &Mat, terms: &T, y: &[f64]) -> Mat {
    let mut phi = a0.clone();
    for (k, &w) in y.iter().enumerate() {
        terms.add_scaled(k, w, &mut phi);
    }
    phi
}

/// Majorizer of `Trace(Φ(y)⁻¹)` touching at `y_bar`.
pub fn trace_inverse_majorizer<T: PsdTerms + ?Sized>(
    a0: &Mat,
    terms: &T,
    y_bar: &[f64],
) -> Result<ReciprocalBound> {
    check_point(terms, y_bar)?;
    let phi = assemble(a0, terms, y_bar);
    let mut p = cholesky(&phi, "Φ at the expansion point")?.inverse();
    symmetrize(&mut p);
    let p2 = &p * &p;
    Ok(ReciprocalBound {
        direction: BoundDirection::Upper,
        constant: trace_product(&p2, a0),
        coeffs: y_bar
            .iter()
            .enumerate()
            .map(|(k, &y)| y * y * terms.trace_with(k, &p2))
            .collect(),
    })
}

/// Minorizer of `ln|Φ(y)|` touching at `y_bar`.
pub fn log_det_minorizer<T: PsdTerms + ?Sized>(
    a0: &Mat,
    terms: &T,
    y_bar: &[f64],
) -> Result<ReciprocalBound> {
    check_point(terms, y_bar)?;
    let phi = assemble(a0, terms, y_bar);
    let chol = cholesky(&phi, "Φ at the expansion point")?;
    let log_det = log_det_from_factor(chol.l_dirty());
    let mut p = chol.inverse();
    symmetrize(&mut p);
    let traces: Vec<f64> = (0..y_bar.len()).map(|k| terms.trace_with(k, &p)).collect();
    Ok(ReciprocalBound {
        direction: BoundDirection::Lower,
        constant: log_det + y_bar.iter().zip(&traces).map(|(y, t)| y * t).sum::<f64>(),
        coeffs: y_bar.iter().zip(&traces).map(|(y, t)| y * y * t).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{log_det_spd, spd_inverse};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_case_by_hand() {
        // Φ(y) = 1 + y, ȳ = 1: Trace bound 1/4 + (1/4)/y, log bound ln2 + ½ − ½/y.
        let a0 = Mat::from_element(1, 1, 1.0);
        let terms = vec![Mat::from_element(1, 1, 1.0)];
        let up = trace_inverse_majorizer(&a0, terms.as_slice(), &[1.0]).unwrap();
        assert!((up.constant - 0.25).abs() < 1e-15);
        assert!((up.coeffs[0] - 0.25).abs() < 1e-15);
        let lo = log_det_minorizer(&a0, terms.as_slice(), &[1.0]).unwrap();
        assert!((lo.constant - (2f64.ln() + 0.5)).abs() < 1e-15);
        assert!((lo.coeffs[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bounds_hold_on_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let n = rng.random_range(2..6);
            let k = rng.random_range(1..5);
            let b = Mat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let a0 = &b * b.transpose() + Mat::identity(n, n) * 0.1;
            let terms: Vec<Mat> = (0..k)
                .map(|_| {
                    let u = Mat::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
                    &u * u.transpose()
                })
                .collect();
            let yb: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..2.0)).collect();
            let y: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..2.0)).collect();
            let up = trace_inverse_majorizer(&a0, terms.as_slice(), &yb).unwrap();
            let lo = log_det_minorizer(&a0, terms.as_slice(), &yb).unwrap();
            let phi = assemble(&a0, terms.as_slice(), &y);
            let tr = spd_inverse(&phi, "phi").unwrap().trace();
            let ld = log_det_spd(&phi, "phi").unwrap();
            assert!(up.eval(&y) >= tr - 1e-9 * tr.abs().max(1.0));
            assert!(lo.eval(&y) <= ld + 1e-9 * ld.abs().max(1.0));
        }
    }
}
