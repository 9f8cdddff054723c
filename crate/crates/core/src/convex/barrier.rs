//! Log-barrier interior-point method for smooth convex objectives over
//! polyhedra `{x : Gx ≤ h, Ax = b}`.
//!
//! `G` is stored as sparse rows, `A` as a handful of dense rows. Each centering
//! step solves the equality-constrained Newton system by eliminating the
//! equality multipliers through a Cholesky factor of the (Jacobi-scaled)
//! Hessian. The objective is normalized by its magnitude at the start point so
//! that tolerances are relative.

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

/// Smooth convex objective with analytic derivatives.
pub trait ConvexObjective {
    fn dim(&self) -> usize;
    /// `+∞` outside the domain.
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vector;
    fn hessian(&self, x: &[f64]) -> Mat;
}

/// `Gx ≤ h`, `Ax = b`.
#[derive(Clone, Debug, Default)]
pub struct LinearConstraints {
    pub n: usize,
    pub ineq_rows: Vec<Vec<(usize, f64)>>,
    pub ineq_rhs: Vec<f64>,
    pub eq_rows: Vec<Vec<f64>>,
    pub eq_rhs: Vec<f64>,
}

impl LinearConstraints {
    pub fn new(n: usize) -> Self {
        LinearConstraints {
            n,
            ..Default::default()
        }
    }

    pub fn push_le(&mut self, row: Vec<(usize, f64)>, rhs: f64) {
        self.ineq_rows.push(row);
        self.ineq_rhs.push(rhs);
    }

    pub fn push_eq(&mut self, row: Vec<f64>, rhs: f64) {
        debug_assert_eq!(row.len(), self.n);
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
    }

    /// `0 ≤ x ≤ 1`
    pub fn push_unit_box(&mut self) {
        for k in 0..self.n {
            self.push_le(vec![(k, -1.0)], 0.0);
            self.push_le(vec![(k, 1.0)], 1.0);
        }
    }

    pub fn n_ineq(&self) -> usize {
        self.ineq_rows.len()
    }

    fn row_dot(row: &[(usize, f64)], x: &[f64]) -> f64 {
        row.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// `h − Gx`
    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        self.ineq_rows
            .iter()
            .zip(&self.ineq_rhs)
            .map(|(row, &h)| h - Self::row_dot(row, x))
            .collect()
    }

    pub fn eq_residual(&self, x: &[f64]) -> f64 {
        self.eq_rows
            .iter()
            .zip(&self.eq_rhs)
            .map(|(row, &b)| (row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BarrierOptions {
    pub t0: f64,
    pub growth: f64,
    /// Stop once `m / t` falls below this (in normalized objective units).
    pub gap_tol: f64,
    /// Half the squared Newton decrement at which a centering stage ends.
    pub newton_tol: f64,
    pub max_newton_per_stage: usize,
    pub max_stages: usize,
    pub armijo: f64,
    pub backtrack: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions {
            t0: 1.0,
            growth: 10.0,
            gap_tol: 1e-10,
            newton_tol: 1e-12,
            max_newton_per_stage: 200,
            max_stages: 40,
            armijo: 0.01,
            backtrack: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonRecord {
    pub stage: usize,
    pub t: f64,
    /// `λ²/2`
    pub decrement: f64,
    pub step: f64,
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct BarrierResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Multipliers of `Gx ≤ h` in the original objective units.
    pub ineq_multipliers: Vec<f64>,
    pub eq_multipliers: Vec<f64>,
    /// Max of relative stationarity and per-row complementarity.
    pub kkt_residual: f64,
    pub duality_gap: f64,
    pub newton_steps: usize,
    pub converged: bool,
    pub trace: Vec<NewtonRecord>,
}

struct Zero(usize);

impl ConvexObjective for Zero {
    fn dim(&self) -> usize {
        self.0
    }
    fn value(&self, _: &[f64]) -> f64 {
        0.0
    }
    fn gradient(&self, _: &[f64]) -> Vector {
        Vector::zeros(self.0)
    }
    fn hessian(&self, _: &[f64]) -> Mat {
        Mat::zeros(self.0, self.0)
    }
}

/// Objective divided by a fixed positive scale.
struct Scaled<'a, F: ConvexObjective + ?Sized> {
    inner: &'a F,
    scale: f64,
}

impl<F: ConvexObjective + ?Sized> ConvexObjective for Scaled<'_, F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x) / self.scale
    }
    fn gradient(&self, x: &[f64]) -> Vector {
        self.inner.gradient(x) / self.scale
    }
    fn hessian(&self, x: &[f64]) -> Mat {
        self.inner.hessian(x) / self.scale
    }
}

struct Centering {
    steps: usize,
    converged: bool,
    eq_mult: Vec<f64>,
}

/// Minimizes `t·f(x) − Σ ln(h − Gx)` over `Ax = b` starting from a strictly
/// feasible `x`, in place.
fn center<F: ConvexObjective + ?Sized>(
    f: &F,
    t: f64,
    cons: &LinearConstraints,
    x: &mut Vec<f64>,
    opts: &BarrierOptions,
    stage: usize,
    trace: &mut Vec<NewtonRecord>,
) -> Result<Centering> {
    let n = cons.n;
    let p = cons.eq_rows.len();
    let psi = |x: &[f64]| -> f64 {
        let mut v = t * f.value(x);
        for s in cons.slacks(x) {
            if s <= 0.0 {
                return f64::INFINITY;
            }
            v -= s.ln();
        }
        v
    };

    let mut steps = 0;
    let mut eq_mult = vec![0.0; p];
    let mut current = psi(x);
    if !current.is_finite() {
        return Err(Error::Numerical("barrier start point is not strictly feasible".into()));
    }
    loop {
        let slacks = cons.slacks(x);
        let mut grad = f.gradient(x) * t;
        let mut hess = f.hessian(x) * t;
        for (row, &s) in cons.ineq_rows.iter().zip(&slacks) {
            let inv = 1.0 / s;
            let inv2 = inv * inv;
            for &(i, a) in row {
                grad[i] += a * inv;
                for &(j, b) in row {
                    hess[(i, j)] += a * b * inv2;
                }
            }
        }

        // Jacobi scaling keeps the factorization accurate when barrier terms
        // for nearly active rows dwarf the rest.
        let max_diag = (0..n).map(|i| hess[(i, i)]).fold(0.0, f64::max).max(1e-300);
        let d: Vec<f64> = (0..n)
            .map(|i| 1.0 / hess[(i, i)].max(1e-14 * max_diag).sqrt())
            .collect();
        let mut hs = Mat::from_fn(n, n, |i, j| hess[(i, j)] * d[i] * d[j]);
        for i in 0..n {
            hs[(i, i)] += 1e-14;
        }
        let chol = nalgebra::Cholesky::new(hs)
            .ok_or_else(|| Error::Numerical("barrier Hessian is not positive definite".into()))?;
        let gs = Vector::from_fn(n, |i, _| grad[i] * d[i]);
        let hinv_g = chol.solve(&gs);
        let dx_scaled = if p == 0 {
            -hinv_g
        } else {
            let a = Mat::from_fn(p, n, |r, j| cons.eq_rows[r][j] * d[j]);
            let hinv_at = chol.solve(&a.transpose());
            let schur = &a * &hinv_at;
            let rhs = -(&a * &hinv_g);
            let nu = schur
                .clone()
                .cholesky()
                .map(|c| c.solve(&rhs))
                .or_else(|| schur.lu().solve(&rhs))
                .ok_or_else(|| Error::Numerical("equality constraints are degenerate".into()))?;
            eq_mult = nu.iter().cloned().collect();
            -(hinv_g + hinv_at * nu)
        };
        let dx: Vec<f64> = (0..n).map(|i| dx_scaled[i] * d[i]).collect();
        let slope: f64 = grad.iter().zip(&dx).map(|(g, v)| g * v).sum();
        let decrement = -0.5 * slope;
        if decrement <= opts.newton_tol || steps >= opts.max_newton_per_stage {
            return Ok(Centering {
                steps,
                converged: decrement <= opts.newton_tol,
                eq_mult,
            });
        }

        let mut step: f64 = 1.0;
        for (row, &s) in cons.ineq_rows.iter().zip(&slacks) {
            let rate = LinearConstraints::row_dot(row, &dx);
            if rate > 0.0 {
                step = step.min(0.99 * s / rate);
            }
        }
        let trial = |step: f64| -> Vec<f64> { x.iter().zip(&dx).map(|(a, b)| a + step * b).collect() };
        let mut candidate = trial(step);
        let mut value = psi(&candidate);
        // At large t the barrier value carries rounding noise far above the
        // decrease a converging Newton step can show; allow for it.
        let noise = 1e-13 * (t * f.value(x).abs() + slacks.iter().map(|s| s.ln().abs()).sum::<f64>()).max(1.0);
        while !(value.is_finite() && value <= current + opts.armijo * step * slope + noise) {
            step *= opts.backtrack;
            if step < 1e-16 {
                // No progress possible at working precision.
                return Ok(Centering {
                    steps,
                    converged: decrement <= 1e3 * opts.newton_tol,
                    eq_mult,
                });
            }
            candidate = trial(step);
            value = psi(&candidate);
        }
        *x = candidate;
        current = value;
        steps += 1;
        trace.push(NewtonRecord {
            stage,
            t,
            decrement,
            step,
            objective: f.value(x),
        });
    }
}

/// Minimizes `f` over the polyhedron from a strictly feasible start point.
pub fn minimize<F: ConvexObjective + ?Sized>(
    f: &F,
    cons: &LinearConstraints,
    x0: &[f64],
    opts: &BarrierOptions,
) -> Result<BarrierResult> {
    let n = cons.n;
    if x0.len() != n || f.dim() != n {
        return Err(Error::Contract("barrier dimensions disagree".into()));
    }
    if cons.slacks(x0).iter().any(|&s| s <= 0.0) {
        return Err(Error::Contract("barrier start point is not strictly feasible".into()));
    }
    let f0 = f.value(x0);
    if !f0.is_finite() {
        return Err(Error::Contract("objective is not finite at the start point".into()));
    }
    let scale = f0.abs().max(1e-12);
    let g = Scaled { inner: f, scale };
    let m = cons.n_ineq() as f64;

    let mut x = x0.to_vec();
    let mut t = opts.t0;
    let mut trace = Vec::new();
    let mut newton_steps = 0;
    let mut converged = false;
    let mut eq_mult = vec![0.0; cons.eq_rows.len()];
    for stage in 0..opts.max_stages {
        let c = center(&g, t, cons, &mut x, opts, stage, &mut trace)?;
        newton_steps += c.steps;
        eq_mult = c.eq_mult;
        if m / t <= opts.gap_tol || m == 0.0 {
            converged = c.converged;
            break;
        }
        t *= opts.growth;
    }

    let slacks = cons.slacks(&x);
    let estimate: Vec<f64> = slacks.iter().map(|&s| scale / (t * s)).collect();
    let (ineq_multipliers, eq_multipliers, kkt_residual) = match refit_multipliers(f, cons, &x, &slacks) {
        Some(fit) => fit,
        None => {
            let eq: Vec<f64> = eq_mult.iter().map(|&v| v * scale / t).collect();
            let r = kkt_residual(f, cons, &x, &estimate, &eq, &slacks);
            (estimate, eq, r)
        }
    };
    Ok(BarrierResult {
        value: f.value(&x),
        x,
        ineq_multipliers,
        eq_multipliers,
        kkt_residual,
        duality_gap: m / t * scale,
        newton_steps,
        converged,
        trace,
    })
}

/// Slack below which a row counts as active when refitting multipliers.
const ACTIVE_SLACK: f64 = 1e-6;

/// Least-squares multipliers on the active rows. Far along the central path
/// the barrier estimate `1/(t·s)` loses accuracy to cancellation; refitting on
/// the active set gives the multipliers the returned point actually admits.
fn refit_multipliers<F: ConvexObjective + ?Sized>(
    f: &F,
    cons: &LinearConstraints,
    x: &[f64],
    slacks: &[f64],
) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let n = cons.n;
    let mut active: Vec<usize> = (0..slacks.len()).filter(|&i| slacks[i] < ACTIVE_SLACK).collect();
    let p = cons.eq_rows.len();
    let grad = f.gradient(x);
    let mut lambda = vec![0.0; slacks.len()];
    let mut nu = vec![0.0; p];
    // Rows whose fitted multiplier comes out negative are released one at a
    // time, most negative first.
    loop {
        let cols = active.len() + p;
        lambda.iter_mut().for_each(|l| *l = 0.0);
        if cols == 0 {
            break;
        }
        let mut m = Mat::zeros(n, cols);
        for (c, &i) in active.iter().enumerate() {
            for &(j, a) in &cons.ineq_rows[i] {
                m[(j, c)] += a;
            }
        }
        for r in 0..p {
            for j in 0..n {
                m[(j, active.len() + r)] = cons.eq_rows[r][j];
            }
        }
        let z = m.svd(true, true).solve(&(-&grad), 1e-12).ok()?;
        for (c, &i) in active.iter().enumerate() {
            lambda[i] = z[c];
        }
        for r in 0..p {
            nu[r] = z[active.len() + r];
        }
        let worst = (0..active.len())
            .filter(|&c| z[c] < 0.0)
            .min_by(|&a, &b| z[a].partial_cmp(&z[b]).unwrap());
        match worst {
            Some(c) => {
                active.remove(c);
            }
            None => break,
        }
    }
    let res = kkt_residual(f, cons, x, &lambda, &nu, slacks);
    Some((lambda, nu, res))
}

/// Relative KKT residual of `(x, λ, ν)`: stationarity, dual feasibility and
/// complementarity.
pub fn kkt_residual<F: ConvexObjective + ?Sized>(
    f: &F,
    cons: &LinearConstraints,
    x: &[f64],
    lambda: &[f64],
    nu: &[f64],
    slacks: &[f64],
) -> f64 {
    let mut r = f.gradient(x);
    let scale = r.amax().max(1.0);
    for (row, &l) in cons.ineq_rows.iter().zip(lambda) {
        for &(j, a) in row {
            r[j] += a * l;
        }
    }
    for (row, &v) in cons.eq_rows.iter().zip(nu) {
        for (j, a) in row.iter().enumerate() {
            r[j] += a * v;
        }
    }
    let dual = lambda.iter().map(|&l| (-l).max(0.0)).fold(0.0, f64::max);
    let complementarity = lambda
        .iter()
        .zip(slacks)
        .map(|(l, s)| (l * s).abs())
        .fold(0.0, f64::max);
    let fscale = f.value(x).abs().max(1.0);
    (r.amax() / scale)
        .max(dual / scale)
        .max(complementarity / fscale)
}

/// A point with `Gx < h` strictly and `Ax = b`, and the margin it achieves.
///
/// Maximizes the uniform slack `s` in `Gx + s ≤ h` (capped at 1) from a start
/// point that satisfies the equalities. Fails with [`Error::Infeasible`] when
/// the best margin is not positive.
pub fn strictly_feasible_point(cons: &LinearConstraints, x_eq: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = cons.n;
    if cons.eq_residual(x_eq) > 1e-9 {
        return Err(Error::Contract("phase-1 start violates the equality constraints".into()));
    }
    let slacks = cons.slacks(x_eq);
    let min_slack = slacks.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_slack > 0.0 {
        return Ok((x_eq.to_vec(), min_slack));
    }
    let mut ext = LinearConstraints::new(n + 1);
    for (row, &h) in cons.ineq_rows.iter().zip(&cons.ineq_rhs) {
        let mut r = row.clone();
        r.push((n, 1.0));
        ext.push_le(r, h);
    }
    ext.push_le(vec![(n, 1.0)], 1.0);
    for (row, &b) in cons.eq_rows.iter().zip(&cons.eq_rhs) {
        let mut r = row.clone();
        r.push(0.0);
        ext.push_eq(r, b);
    }
    let mut start = x_eq.to_vec();
    start.push(min_slack - 1.0);

    struct Margin(usize);
    impl ConvexObjective for Margin {
        fn dim(&self) -> usize {
            self.0 + 1
        }
        fn value(&self, x: &[f64]) -> f64 {
            -x[self.0]
        }
        fn gradient(&self, _: &[f64]) -> Vector {
            let mut g = Vector::zeros(self.0 + 1);
            g[self.0] = -1.0;
            g
        }
        fn hessian(&self, _: &[f64]) -> Mat {
            Mat::zeros(self.0 + 1, self.0 + 1)
        }
    }

    let opts = BarrierOptions {
        gap_tol: 1e-9,
        newton_tol: 1e-10,
        ..BarrierOptions::default()
    };
    let f = Margin(n);
    let mut x = start;
    let m = ext.n_ineq() as f64;
    let mut t = 1.0;
    let mut trace = Vec::new();
    for stage in 0..opts.max_stages {
        center(&f, t, &ext, &mut x, &opts, stage, &mut trace)?;
        // A comfortable margin is all that is needed.
        if x[n] >= 1e-3 || m / t <= opts.gap_tol {
            break;
        }
        t *= opts.growth;
    }
    let margin = x[n];
    if margin <= 1e-10 {
        return Err(Error::Infeasible(format!(
            "constraint set has no strict interior (best margin {margin:.3e})"
        )));
    }
    x.truncate(n);
    Ok((x, margin))
}

/// Analytic center of `{Gx ≤ h, Ax = b}` from a strictly feasible point.
pub fn analytic_center(cons: &LinearConstraints, x_feasible: &[f64]) -> Result<Vec<f64>> {
    let mut x = x_feasible.to_vec();
    let opts = BarrierOptions {
        newton_tol: 1e-10,
        ..BarrierOptions::default()
    };
    center(&Zero(cons.n), 0.0, cons, &mut x, &opts, 0, &mut Vec::new())?;
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `Σ c_k (x_k − a_k)²`
    struct Quadratic {
        c: Vec<f64>,
        a: Vec<f64>,
    }

    impl ConvexObjective for Quadratic {
        fn dim(&self) -> usize {
            self.c.len()
        }
        fn value(&self, x: &[f64]) -> f64 {
            self.c.iter().zip(&self.a).zip(x).map(|((c, a), v)| c * (v - a).powi(2)).sum()
        }
        fn gradient(&self, x: &[f64]) -> Vector {
            Vector::from_fn(self.c.len(), |i, _| 2.0 * self.c[i] * (x[i] - self.a[i]))
        }
        fn hessian(&self, _: &[f64]) -> Mat {
            Mat::from_diagonal(&Vector::from_fn(self.c.len(), |i, _| 2.0 * self.c[i]))
        }
    }

    #[test]
    fn projection_onto_capped_simplex() {
        // Project (0.9, 0.8, -0.5) onto {Σx = 1, 0 ≤ x ≤ 1}: (0.55, 0.45, 0).
        let f = Quadratic {
            c: vec![1.0; 3],
            a: vec![0.9, 0.8, -0.5],
        };
        let mut cons = LinearConstraints::new(3);
        cons.push_unit_box();
        cons.push_eq(vec![1.0; 3], 1.0);
        let r = minimize(&f, &cons, &[1.0 / 3.0; 3], &BarrierOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 0.55).abs() < 1e-7, "{:?}", r.x);
        assert!((r.x[1] - 0.45).abs() < 1e-7);
        assert!(r.x[2].abs() < 1e-7);
        assert!(r.kkt_residual < 1e-7, "{}", r.kkt_residual);
    }

    #[test]
    fn phase_one_finds_interior_or_reports_none() {
        let mut cons = LinearConstraints::new(2);
        cons.push_unit_box();
        cons.push_le(vec![(0, -1.0)], -0.7); // x0 ≥ 0.7
        cons.push_eq(vec![1.0, 1.0], 1.0);
        let (x, margin) = strictly_feasible_point(&cons, &[0.5, 0.5]).unwrap();
        assert!(margin > 0.0);
        assert!(cons.slacks(&x).iter().all(|&s| s > 0.0));
        assert!(cons.eq_residual(&x) < 1e-9);

        let mut tight = LinearConstraints::new(2);
        tight.push_unit_box();
        tight.push_le(vec![(0, -1.0)], -1.0); // x0 ≥ 1 leaves only a vertex
        tight.push_eq(vec![1.0, 1.0], 1.0);
        assert!(matches!(
            strictly_feasible_point(&tight, &[0.5, 0.5]),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn analytic_center_of_a_box_slice() {
        let mut cons = LinearConstraints::new(3);
        cons.push_unit_box();
        cons.push_eq(vec![1.0; 3], 1.0);
        let x = analytic_center(&cons, &[0.5, 0.3, 0.2]).unwrap();
        for v in &x {
            assert!((v - 1.0 / 3.0).abs() < 1e-8);
        }
    }
}
