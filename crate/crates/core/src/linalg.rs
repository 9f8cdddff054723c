//! Dense linear algebra helpers shared by the estimation and optimization code.
//!
//! Everything here works on `nalgebra` dynamic matrices. SPD systems are always
//! handled through Cholesky factors; log-determinants come from the factor
//! diagonal, never from an explicit inverse.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Cholesky factorization that reports failure as a numerical error.
pub fn cholesky(m: &Mat, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone())
        .ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))
}

/// Inverse of an SPD matrix via its Cholesky factor, symmetrized.
pub fn spd_inverse(m: &Mat, what: &str) -> Result<Mat> {
    let mut inv = cholesky(m, what)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// `ln |M|` for SPD `M`, as twice the sum of the log Cholesky diagonal.
pub fn log_det_spd(m: &Mat, what: &str) -> Result<f64> {
    let chol = cholesky(m, what)?;
    Ok(log_det_from_factor(chol.l_dirty()))
}

pub fn log_det_from_factor(l: &Mat) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

pub fn symmetrize(m: &mut Mat) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// `Trace(A B)` without forming the product.
pub fn trace_product(a: &Mat, b: &Mat) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Lower Cholesky factor with the strict upper triangle zeroed.
pub fn lower_factor(m: &Mat, what: &str) -> Result<Mat> {
    Ok(cholesky(m, what)?.l())
}

/// In-place rank-one update: on return `L Lᵀ` equals the old `L Lᵀ + v vᵀ`.
///
/// `v` is clobbered. Only the lower triangle of `l` is read or written.
pub fn chol_update(l: &mut Mat, v: &mut [f64]) {
    let n = l.nrows();
    debug_assert_eq!(v.len(), n);
    for k in 0..n {
        let lkk = l[(k, k)];
        let vk = v[k];
        if vk == 0.0 {
            continue;
        }
        let r = lkk.hypot(vk);
        let c = r / lkk;
        let s = vk / lkk;
        l[(k, k)] = r;
        for i in (k + 1)..n {
            let lik = (l[(i, k)] + s * v[i]) / c;
            l[(i, k)] = lik;
            v[i] = c * v[i] - s * lik;
        }
    }
}

/// In-place rank-one downdate: on return `L Lᵀ` equals the old `L Lᵀ - v vᵀ`.
///
/// Fails if the downdated matrix is not positive definite; `l` is then left in
/// an unspecified state.
pub fn chol_downdate(l: &mut Mat, v: &mut [f64]) -> Result<()> {
    let n = l.nrows();
    debug_assert_eq!(v.len(), n);
    for k in 0..n {
        let lkk = l[(k, k)];
        let vk = v[k];
        if vk == 0.0 {
            continue;
        }
        let r2 = (lkk - vk) * (lkk + vk);
        if r2 <= 0.0 {
            return Err(Error::Numerical(
                "Cholesky downdate lost positive definiteness".into(),
            ));
        }
        let r = r2.sqrt();
        let c = r / lkk;
        let s = vk / lkk;
        l[(k, k)] = r;
        for i in (k + 1)..n {
            let lik = (l[(i, k)] - s * v[i]) / c;
            l[(i, k)] = lik;
            v[i] = c * v[i] - s * lik;
        }
    }
    Ok(())
}

/// `(L Lᵀ)⁻¹` from a lower factor.
pub fn inverse_from_factor(l: &Mat) -> Mat {
    let n = l.nrows();
    let mut linv = Mat::identity(n, n);
    // The factor is lower triangular; the solve leaves the upper part zero.
    let ok = l.solve_lower_triangular_mut(&mut linv);
    debug_assert!(ok);
    let mut inv = linv.transpose() * &linv;
    symmetrize(&mut inv);
    inv
}

/// Smallest and largest singular values.
pub fn singular_extremes(m: &Mat) -> (f64, f64) {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    (min, max)
}

/// A family of PSD matrices `A_1 .. A_K` of a common dimension, accessed
/// through the two operations the bounds need.
pub trait PsdTerms {
    fn dim(&self) -> usize;
    fn n_terms(&self) -> usize;
    /// `target += weight * A_k`
    fn add_scaled(&self, k: usize, weight: f64, target: &mut Mat);
    /// `Trace(M A_k)`
    fn trace_with(&self, k: usize, m: &Mat) -> f64;
}

impl PsdTerms for [Mat] {
    fn dim(&self) -> usize {
        self.first().map_or(0, |m| m.nrows())
    }

    fn n_terms(&self) -> usize {
        self.len()
    }

    fn add_scaled(&self, k: usize, weight: f64, target: &mut Mat) {
        *target += &self[k] * weight;
    }

    fn trace_with(&self, k: usize, m: &Mat) -> f64 {
        trace_product(m, &self[k])
    }
}
