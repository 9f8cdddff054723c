//! Incremental objective evaluation for swap moves.
//!
//! With `J = BᵀΣ_P⁻¹B + Σ_{k∈J(x)} U_k U_kᵀ` (`U_k = H_kᵀR_k^{-1/2}`) and
//! `P = J⁻¹`, swapping bus `i` out for bus `j` changes `J` by `W D Wᵀ` with
//! `W = [U_j, U_i]`, `D = diag(I, −I)`. Both objectives then follow from a
//! small capacitance matrix:
//!
//! ```text
//! Trace(J'⁻¹) = Trace(P) − Trace((D + WᵀPW)⁻¹ WᵀP²W)
//! ln|J'|      = ln|J| + ln|I + D WᵀPW|
//! ```
//!
//! `V_k = P U_k` and the diagonal blocks are cached per committed state, so a
//! swap costs `O(N·M_i·M_j)`. Committing a move updates the Cholesky factor of
//! `J` with one rank-one update or downdate per measurement row.

use crate::error::{Error, Result};
use crate::estimation::EstimationProblem;
use crate::linalg::{chol_downdate, chol_update, inverse_from_factor, lower_factor, Mat};

/// Objective over binary placements, to be minimized, with cheap evaluation of
/// single-bus additions and swaps around the current selection.
pub trait SwapObjective: Sync {
    fn n(&self) -> usize;
    fn reset(&mut self, support: &[usize]) -> Result<()>;
    fn support(&self) -> Vec<usize>;
    fn current(&self) -> f64;
    /// Objective after replacing selected `out` by unselected `inn`.
    fn eval_swap(&self, out: usize, inn: usize) -> Result<f64>;
    /// Objective after adding unselected `k`.
    fn eval_add(&self, k: usize) -> Result<f64>;
    fn apply_swap(&mut self, out: usize, inn: usize) -> Result<()>;
    fn apply_add(&mut self, k: usize) -> Result<()>;
}

/// Re-factor from scratch after this many committed moves.
const REFRESH_EVERY: usize = 25;

#[derive(Clone, Debug)]
struct LowRankState {
    n: usize,
    base: Mat,
    factors: Vec<Mat>,
    rows: Vec<Vec<usize>>,
    selected: Vec<bool>,
    chol: Mat,
    p: Mat,
    v: Vec<Mat>,
    /// `U_kᵀ V_k`
    uv: Vec<Mat>,
    /// `V_kᵀ V_k`, only kept for the trace objective.
    vv: Vec<Mat>,
    keep_vv: bool,
    trace_p: f64,
    log_det: f64,
    commits: usize,
}

impl LowRankState {
    fn new(problem: &EstimationProblem, keep_vv: bool) -> Result<Self> {
        let n = problem.dim();
        let factors: Vec<Mat> = (0..n)
            .map(|k| problem.meas.bus(k).whitened_factor(n))
            .collect();
        let rows = (0..n).map(|k| problem.meas.bus(k).support().to_vec()).collect();
        let mut s = LowRankState {
            n,
            base: problem.prior.information().clone(),
            factors,
            rows,
            selected: vec![false; n],
            chol: Mat::zeros(0, 0),
            p: Mat::zeros(0, 0),
            v: Vec::new(),
            uv: Vec::new(),
            vv: Vec::new(),
            keep_vv,
            trace_p: 0.0,
            log_det: 0.0,
            commits: 0,
        };
        s.refactor()?;
        Ok(s)
    }

    fn refactor(&mut self) -> Result<()> {
        let mut j = self.base.clone();
        for k in 0..self.n {
            if self.selected[k] {
                let u = &self.factors[k];
                j += u * u.transpose();
            }
        }
        self.chol = lower_factor(&j, "information matrix")?;
        self.commits = 0;
        self.refresh();
        Ok(())
    }

    /// Recomputes `P` and the per-bus caches from the current factor.
    fn refresh(&mut self) {
        self.p = inverse_from_factor(&self.chol);
        self.trace_p = self.p.trace();
        self.log_det = 2.0 * (0..self.n).map(|i| self.chol[(i, i)].ln()).sum::<f64>();
        let p = &self.p;
        self.v = (0..self.n)
            .map(|k| {
                let u = &self.factors[k];
                let mut out = Mat::zeros(self.n, u.ncols());
                for &r in &self.rows[k] {
                    for c in 0..u.ncols() {
                        let w = u[(r, c)];
                        if w != 0.0 {
                            out.column_mut(c).axpy(w, &p.column(r), 1.0);
                        }
                    }
                }
                out
            })
            .collect();
        self.uv = (0..self.n).map(|k| self.utv(k, k)).collect();
        if self.keep_vv {
            self.vv = self.v.iter().map(|v| v.transpose() * v).collect();
        }
    }

    /// `U_aᵀ V_b`, using the row sparsity of `U_a`.
    fn utv(&self, a: usize, b: usize) -> Mat {
        let u = &self.factors[a];
        let v = &self.v[b];
        let mut out = Mat::zeros(u.ncols(), v.ncols());
        for &r in &self.rows[a] {
            for i in 0..u.ncols() {
                let w = u[(r, i)];
                if w == 0.0 {
                    continue;
                }
                for j in 0..v.ncols() {
                    out[(i, j)] += w * v[(r, j)];
                }
            }
        }
        out
    }

    fn set_support(&mut self, support: &[usize]) -> Result<()> {
        self.selected = vec![false; self.n];
        for &k in support {
            if k >= self.n || self.selected[k] {
                return Err(Error::Contract(format!("invalid support entry {k}")));
            }
            self.selected[k] = true;
        }
        self.refactor()
    }

    fn support(&self) -> Vec<usize> {
        (0..self.n).filter(|&k| self.selected[k]).collect()
    }

    /// `(C, blocks sizes)` with `C = WᵀPW` for `W = [U_in, U_out]`.
    fn swap_gram(&self, out: usize, inn: usize) -> (Mat, usize, usize) {
        let mi = self.factors[inn].ncols();
        let mo = self.factors[out].ncols();
        let cross = self.utv(inn, out);
        let mut c = Mat::zeros(mi + mo, mi + mo);
        c.view_mut((0, 0), (mi, mi)).copy_from(&self.uv[inn]);
        c.view_mut((mi, mi), (mo, mo)).copy_from(&self.uv[out]);
        c.view_mut((0, mi), (mi, mo)).copy_from(&cross);
        c.view_mut((mi, 0), (mo, mi)).copy_from(&cross.transpose());
        (c, mi, mo)
    }

    fn check_swap(&self, out: usize, inn: usize) -> Result<()> {
        if out >= self.n || inn >= self.n || !self.selected[out] || self.selected[inn] {
            return Err(Error::Contract(format!(
                "swap ({out} out, {inn} in) does not match the current selection"
            )));
        }
        Ok(())
    }

    fn check_add(&self, k: usize) -> Result<()> {
        if k >= self.n || self.selected[k] {
            return Err(Error::Contract(format!("bus {k} cannot be added")));
        }
        Ok(())
    }

    fn trace_after_swap(&self, out: usize, inn: usize) -> Result<f64> {
        let (c, mi, mo) = self.swap_gram(out, inn);
        let mut k = c;
        for d in 0..mi {
            k[(d, d)] += 1.0;
        }
        for d in mi..mi + mo {
            k[(d, d)] -= 1.0;
        }
        let vio = self.v[inn].transpose() * &self.v[out];
        let mut g = Mat::zeros(mi + mo, mi + mo);
        g.view_mut((0, 0), (mi, mi)).copy_from(&self.vv[inn]);
        g.view_mut((mi, mi), (mo, mo)).copy_from(&self.vv[out]);
        g.view_mut((0, mi), (mi, mo)).copy_from(&vio);
        g.view_mut((mi, 0), (mo, mi)).copy_from(&vio.transpose());
        let sol = k
            .lu()
            .solve(&g)
            .ok_or_else(|| Error::Numerical("swap capacitance matrix is singular".into()))?;
        Ok(self.trace_p - sol.trace())
    }

    fn log_det_after_swap(&self, out: usize, inn: usize) -> Result<f64> {
        let (c, mi, _) = self.swap_gram(out, inn);
        let dim = c.nrows();
        let mut m = Mat::identity(dim, dim);
        for r in 0..dim {
            let sign = if r < mi { 1.0 } else { -1.0 };
            for col in 0..dim {
                m[(r, col)] += sign * c[(r, col)];
            }
        }
        let det = m.determinant();
        if !(det > 0.0) {
            return Err(Error::Numerical(format!(
                "swap ({out} out, {inn} in) gives a non-positive determinant ratio {det}"
            )));
        }
        Ok(self.log_det + det.ln())
    }

    fn trace_after_add(&self, k: usize) -> Result<f64> {
        let m = self.factors[k].ncols();
        let cap = &self.uv[k] + Mat::identity(m, m);
        let sol = cap
            .cholesky()
            .ok_or_else(|| Error::Numerical("addition capacitance is not positive definite".into()))?
            .solve(&self.vv[k]);
        Ok(self.trace_p - sol.trace())
    }

    fn log_det_after_add(&self, k: usize) -> Result<f64> {
        let m = self.factors[k].ncols();
        let cap = &self.uv[k] + Mat::identity(m, m);
        let chol = cap
            .cholesky()
            .ok_or_else(|| Error::Numerical("addition capacitance is not positive definite".into()))?;
        let l = chol.l_dirty();
        Ok(self.log_det + 2.0 * (0..m).map(|i| l[(i, i)].ln()).sum::<f64>())
    }

    fn commit(&mut self, out: Option<usize>, inn: usize) -> Result<()> {
        // Updates first so the intermediate matrix stays positive definite.
        let u = self.factors[inn].clone();
        for c in 0..u.ncols() {
            let mut col: Vec<f64> = u.column(c).iter().cloned().collect();
            chol_update(&mut self.chol, &mut col);
        }
        self.selected[inn] = true;
        if let Some(o) = out {
            let u = self.factors[o].clone();
            for c in 0..u.ncols() {
                let mut col: Vec<f64> = u.column(c).iter().cloned().collect();
                if chol_downdate(&mut self.chol, &mut col).is_err() {
                    self.selected[o] = false;
                    return self.refactor();
                }
            }
            self.selected[o] = false;
        }
        self.commits += 1;
        if self.commits >= REFRESH_EVERY {
            return self.refactor();
        }
        self.refresh();
        Ok(())
    }
}

/// `Trace(J⁻¹)` over binary placements.
#[derive(Clone, Debug)]
pub struct TraceSwap {
    state: LowRankState,
}

impl TraceSwap {
    pub fn new(problem: &EstimationProblem) -> Result<Self> {
        Ok(TraceSwap {
            state: LowRankState::new(problem, true)?,
        })
    }
}

impl SwapObjective for TraceSwap {
    fn n(&self) -> usize {
        self.state.n
    }
    fn reset(&mut self, support: &[usize]) -> Result<()> {
        self.state.set_support(support)
    }
    fn support(&self) -> Vec<usize> {
        self.state.support()
    }
    fn current(&self) -> f64 {
        self.state.trace_p
    }
    fn eval_swap(&self, out: usize, inn: usize) -> Result<f64> {
        self.state.check_swap(out, inn)?;
        self.state.trace_after_swap(out, inn)
    }
    fn eval_add(&self, k: usize) -> Result<f64> {
        self.state.check_add(k)?;
        self.state.trace_after_add(k)
    }
    fn apply_swap(&mut self, out: usize, inn: usize) -> Result<()> {
        self.state.check_swap(out, inn)?;
        self.state.commit(Some(out), inn)
    }
    fn apply_add(&mut self, k: usize) -> Result<()> {
        self.state.check_add(k)?;
        self.state.commit(None, k)
    }
}

/// `−ln|J|` over binary placements (minimizing it maximizes `f_MI`).
#[derive(Clone, Debug)]
pub struct LogDetSwap {
    state: LowRankState,
}

impl LogDetSwap {
    pub fn new(problem: &EstimationProblem) -> Result<Self> {
        Ok(LogDetSwap {
            state: LowRankState::new(problem, false)?,
        })
    }
}

impl SwapObjective for LogDetSwap {
    fn n(&self) -> usize {
        self.state.n
    }
    fn reset(&mut self, support: &[usize]) -> Result<()> {
        self.state.set_support(support)
    }
    fn support(&self) -> Vec<usize> {
        self.state.support()
    }
    fn current(&self) -> f64 {
        -self.state.log_det
    }
    fn eval_swap(&self, out: usize, inn: usize) -> Result<f64> {
        self.state.check_swap(out, inn)?;
        Ok(-self.state.log_det_after_swap(out, inn)?)
    }
    fn eval_add(&self, k: usize) -> Result<f64> {
        self.state.check_add(k)?;
        Ok(-self.state.log_det_after_add(k)?)
    }
    fn apply_swap(&mut self, out: usize, inn: usize) -> Result<()> {
        self.state.check_swap(out, inn)?;
        self.state.commit(Some(out), inn)
    }
    fn apply_add(&mut self, k: usize) -> Result<()> {
        self.state.check_add(k)?;
        self.state.commit(None, k)
    }
}

/// `cᵀx`
#[derive(Clone, Debug)]
pub struct LinearSwap {
    costs: Vec<f64>,
    selected: Vec<bool>,
    value: f64,
}

impl LinearSwap {
    pub fn new(costs: Vec<f64>) -> Self {
        let n = costs.len();
        LinearSwap {
            costs,
            selected: vec![false; n],
            value: 0.0,
        }
    }
}

impl SwapObjective for LinearSwap {
    fn n(&self) -> usize {
        self.costs.len()
    }
    fn reset(&mut self, support: &[usize]) -> Result<()> {
        self.selected = vec![false; self.costs.len()];
        self.value = 0.0;
        for &k in support {
            if k >= self.costs.len() || self.selected[k] {
                return Err(Error::Contract(format!("invalid support entry {k}")));
            }
            self.selected[k] = true;
            self.value += self.costs[k];
        }
        Ok(())
    }
    fn support(&self) -> Vec<usize> {
        (0..self.costs.len()).filter(|&k| self.selected[k]).collect()
    }
    fn current(&self) -> f64 {
        self.value
    }
    fn eval_swap(&self, out: usize, inn: usize) -> Result<f64> {
        Ok(self.value - self.costs[out] + self.costs[inn])
    }
    fn eval_add(&self, k: usize) -> Result<f64> {
        Ok(self.value + self.costs[k])
    }
    fn apply_swap(&mut self, out: usize, inn: usize) -> Result<()> {
        self.selected[out] = false;
        self.selected[inn] = true;
        self.value += self.costs[inn] - self.costs[out];
        Ok(())
    }
    fn apply_add(&mut self, k: usize) -> Result<()> {
        self.selected[k] = true;
        self.value += self.costs[k];
        Ok(())
    }
}
