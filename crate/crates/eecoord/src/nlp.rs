//! Smooth nonlinear programming backends: limited-memory BFGS for
//! unconstrained minimization, a log-barrier method for inequality
//! constrained problems, and an augmented-Lagrangian wrapper for linear
//! equality constraints. These are the inner solvers behind the local
//! subproblems, the auxiliary proximal-feasibility problem, and the
//! centralized reference solves.

use crate::consensus::SparseMat;
use crate::error::{Error, Result};

/// A smooth objective with inequality constraints h(x) <= 0.
///
/// `constraint_rows` reports each constraint's value together with the sparse
/// gradient of that constraint, so callers can form J^T v products without
/// materializing the Jacobian.
pub trait Problem: Sync {
    fn dim(&self) -> usize;
    fn n_con(&self) -> usize;
    /// Objective value and gradient (minimization form).
    fn objective(&self, x: &[f64]) -> (f64, Vec<f64>);
    /// Constraint values and sparse gradient rows, h_i(x) and nabla h_i(x).
    fn constraint_rows(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<(usize, f64)>>);
    /// Exact Hessian of f(x) + kappa^T h(x), if the problem supplies one.
    fn lagrangian_hessian(&self, _x: &[f64], _kappa: &[f64]) -> Option<nalgebra::DMatrix<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOpts {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub memory: usize,
}

impl Default for LbfgsOpts {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-10,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iters: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, &v| m.max(v.abs()))
}

/// Minimize a smooth function with L-BFGS and Armijo backtracking.
///
/// `f` returns None when asked to evaluate outside its domain (e.g. a barrier
/// at an infeasible point); the line search then backs off.
pub fn lbfgs<F>(mut f: F, x0: &[f64], opts: &LbfgsOpts) -> LbfgsResult
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = match f(&x) {
        Some(v) => v,
        None => {
            return LbfgsResult {
                x,
                value: f64::INFINITY,
                grad_norm: f64::INFINITY,
                iters: 0,
                converged: false,
            }
        }
    };
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut iters = 0;
    let mut converged = false;
    while iters < opts.max_iters {
        let gnorm = inf_norm(&g);
        if gnorm <= opts.grad_tol {
            converged = true;
            break;
        }
        // two-loop recursion
        let mut q = g.clone();
        let m = s_hist.len();
        let mut alphas = vec![0.0; m];
        for i in (0..m).rev() {
            let a = rho_hist[i] * dot(&s_hist[i], &q);
            alphas[i] = a;
            for (qj, yj) in q.iter_mut().zip(&y_hist[i]) {
                *qj -= a * yj;
            }
        }
        if m > 0 {
            let last = m - 1;
            let gamma = dot(&s_hist[last], &y_hist[last]) / dot(&y_hist[last], &y_hist[last]);
            if gamma.is_finite() && gamma > 0.0 {
                for qj in q.iter_mut() {
                    *qj *= gamma;
                }
            }
        }
        for i in 0..m {
            let b = rho_hist[i] * dot(&y_hist[i], &q);
            for (qj, sj) in q.iter_mut().zip(&s_hist[i]) {
                *qj += (alphas[i] - b) * sj;
            }
        }
        let mut d: Vec<f64> = q.iter().map(|&v| -v).collect();
        let mut dg = dot(&d, &g);
        if !(dg < 0.0) || !dg.is_finite() {
            // fall back to steepest descent
            d = g.iter().map(|&v| -v).collect();
            dg = -dot(&g, &g);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }
        // weak-Wolfe line search (bisection bracketing) with domain guard
        let mut lo = 0.0;
        let mut hi = f64::INFINITY;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            match f(&xt) {
                Some((ft, gt)) if ft.is_finite() => {
                    if ft > fx + 1e-4 * step * dg {
                        hi = step; // Armijo failed: too long
                    } else if dot(&gt, &d) < 0.9 * dg {
                        lo = step; // curvature failed: too short
                        accepted = Some((xt, ft, gt));
                    } else {
                        accepted = Some((xt, ft, gt));
                        break;
                    }
                }
                _ => hi = step, // left the domain: too long
            }
            step = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * step
            };
        }
        let Some((xt, ft, gt)) = accepted else {
            break; // no progress possible at machine precision
        };
        let s: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-14 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            rho_hist.push(1.0 / sy);
            s_hist.push(s);
            y_hist.push(yv);
        }
        x = xt;
        fx = ft;
        g = gt;
        iters += 1;
    }
    if inf_norm(&g) <= opts.grad_tol {
        converged = true;
    }
    let _ = n;
    LbfgsResult {
        x,
        value: fx,
        grad_norm: inf_norm(&g),
        iters,
        converged,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierOpts {
    pub mu_init: f64,
    pub mu_final: f64,
    pub mu_factor: f64,
    pub inner: LbfgsOpts,
}

impl Default for BarrierOpts {
    fn default() -> Self {
        Self {
            mu_init: 1e-1,
            mu_final: 1e-9,
            mu_factor: 0.1,
            inner: LbfgsOpts {
                max_iters: 400,
                grad_tol: 1e-9,
                memory: 10,
            },
        }
    }
}

/// Extra smooth terms added on top of a `Problem` objective: a linear term,
/// a proximal quadratic, and a quadratic penalty on linear equalities.
#[derive(Default)]
pub struct ExtraTerms<'a> {
    /// c^T x
    pub linear: Option<&'a [f64]>,
    /// (rho/2) ||x - center||^2
    pub prox: Option<(&'a [f64], f64)>,
    /// lambda^T (E x - rhs_share) + (c/2) ||E x - rhs_share||^2
    pub equality: Option<EqualityTerm<'a>>,
}

pub struct EqualityTerm<'a> {
    pub mat: &'a SparseMat,
    pub rhs: Vec<f64>,
    pub lambda: Vec<f64>,
    pub penalty: f64,
}

fn eval_smooth(problem: &dyn Problem, extra: &ExtraTerms, x: &[f64]) -> (f64, Vec<f64>) {
    let (mut v, mut g) = problem.objective(x);
    if let Some(c) = extra.linear {
        v += dot(c, x);
        for (gi, ci) in g.iter_mut().zip(c) {
            *gi += ci;
        }
    }
    if let Some((center, rho)) = extra.prox {
        for i in 0..x.len() {
            let d = x[i] - center[i];
            v += 0.5 * rho * d * d;
            g[i] += rho * d;
        }
    }
    if let Some(eq) = &extra.equality {
        let mut r = eq.mat.apply(x);
        for (ri, bi) in r.iter_mut().zip(&eq.rhs) {
            *ri -= bi;
        }
        let mut w = eq.lambda.clone();
        for (wi, ri) in w.iter_mut().zip(&r) {
            v += *wi * ri + 0.5 * eq.penalty * ri * ri;
            *wi += eq.penalty * ri;
        }
        let gt = eq.mat.apply_transpose(&w);
        for (gi, ti) in g.iter_mut().zip(&gt) {
            *gi += ti;
        }
    }
    (v, g)
}

#[derive(Debug, Clone)]
pub struct BarrierResult {
    pub x: Vec<f64>,
    /// Inequality multipliers kappa_i = mu / (-h_i) at the final barrier stage.
    pub kappa: Vec<f64>,
    pub value: f64,
    pub converged: bool,
}

/// Find a strictly feasible point for h(x) < 0 by minimizing the squared
/// hinge of the shifted constraints.
pub fn phase_one(problem: &dyn Problem, x0: &[f64], margin: f64) -> Result<Vec<f64>> {
    let (h, rows0) = problem.constraint_rows(x0);
    if h.iter().all(|&v| v < 0.0) {
        return Ok(x0.to_vec());
    }
    // normalize each row by its gradient norm so tiny-scale constraints
    // still produce a usable descent signal, and repair toward a shifted
    // target well below zero so a stalled solve still ends strictly inside
    let wts: Vec<f64> = rows0
        .iter()
        .map(|r| {
            let n: f64 = r.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            1.0 / n.clamp(1e-10, 1e10)
        })
        .collect();
    let shift = margin.max(1e-6);
    let obj = |x: &[f64]| {
        let (h, rows) = problem.constraint_rows(x);
        let mut v = 0.0;
        let mut g = vec![0.0; x.len()];
        for (i, &hi) in h.iter().enumerate() {
            let excess = hi * wts[i] + shift;
            if excess > 0.0 {
                v += excess * excess;
                for &(c, gv) in &rows[i] {
                    g[c] += 2.0 * excess * wts[i] * gv;
                }
            }
        }
        Some((v, g))
    };
    let res = lbfgs(
        obj,
        x0,
        &LbfgsOpts {
            max_iters: 2000,
            grad_tol: 1e-14,
            memory: 10,
        },
    );
    let (h, _) = problem.constraint_rows(&res.x);
    if h.iter().all(|&v| v < 0.0) {
        Ok(res.x)
    } else {
        Err(Error::Infeasible(format!(
            "no strictly feasible point found; worst residual {:.3e}",
            h.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        )))
    }
}

/// Log-barrier interior-point solve of
///   min f(x) + extra(x)  s.t.  h(x) <= 0.
/// Returns a KKT point and the barrier estimates of the inequality duals.
pub fn solve_barrier(
    problem: &dyn Problem,
    extra: &ExtraTerms,
    x0: &[f64],
    opts: &BarrierOpts,
) -> Result<BarrierResult> {
    let mut x = phase_one(problem, x0, 1e-10)?;
    if problem.n_con() == 0 {
        let res = lbfgs(
            |x| Some(eval_smooth(problem, extra, x)),
            &x,
            &opts.inner,
        );
        return Ok(BarrierResult {
            x: res.x,
            kappa: vec![],
            value: res.value,
            converged: res.converged,
        });
    }
    let mut mu = opts.mu_init;
    let mut converged;
    loop {
        let barrier = |x: &[f64]| {
            let (mut v, mut g) = eval_smooth(problem, extra, x);
            let (h, rows) = problem.constraint_rows(x);
            for (i, &hi) in h.iter().enumerate() {
                if hi >= 0.0 {
                    return None;
                }
                v -= mu * (-hi).ln();
                let w = mu / (-hi);
                for &(c, gv) in &rows[i] {
                    g[c] += w * gv;
                }
            }
            Some((v, g))
        };
        let mut inner = opts.inner;
        inner.grad_tol = opts.inner.grad_tol.max(0.01 * mu);
        let res = lbfgs(barrier, &x, &inner);
        x = res.x;
        converged = res.grad_norm <= inner.grad_tol * 100.0;
        if mu <= opts.mu_final {
            break;
        }
        mu = (mu * opts.mu_factor).max(opts.mu_final);
    }
    let (h, _) = problem.constraint_rows(&x);
    let kappa: Vec<f64> = h.iter().map(|&hi| mu / (-hi).max(1e-300)).collect();
    let (value, _) = eval_smooth(problem, extra, &x);
    Ok(BarrierResult {
        x,
        kappa,
        value,
        converged,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct EqualityOpts {
    pub tol: f64,
    pub max_outer: usize,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub barrier: BarrierOpts,
}

impl Default for EqualityOpts {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_outer: 40,
            penalty_init: 10.0,
            penalty_growth: 4.0,
            barrier: BarrierOpts::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EqualityResult {
    pub x: Vec<f64>,
    pub kappa: Vec<f64>,
    /// Multipliers of the equality constraints E x = rhs.
    pub lambda: Vec<f64>,
    pub value: f64,
    pub residual: f64,
}

/// Diagonal change of variables x = D z. Mixed physical scales (precoder
/// entries, SINR auxiliaries, interference terms) otherwise wreck the
/// conditioning of the first-order inner solvers.
pub struct ScaledProblem<'a> {
    pub inner: &'a dyn Problem,
    pub scale: Vec<f64>,
}

impl ScaledProblem<'_> {
    pub fn to_inner(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.scale).map(|(v, s)| v * s).collect()
    }
    pub fn from_inner(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.scale).map(|(v, s)| v / s).collect()
    }
}

impl Problem for ScaledProblem<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn n_con(&self) -> usize {
        self.inner.n_con()
    }
    fn objective(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let (v, g) = self.inner.objective(&self.to_inner(z));
        (v, g.iter().zip(&self.scale).map(|(gi, s)| gi * s).collect())
    }
    fn constraint_rows(&self, z: &[f64]) -> (Vec<f64>, Vec<Vec<(usize, f64)>>) {
        let (h, rows) = self.inner.constraint_rows(&self.to_inner(z));
        let rows = rows
            .into_iter()
            .map(|row| row.into_iter().map(|(c, v)| (c, v * self.scale[c])).collect())
            .collect();
        (h, rows)
    }
    fn lagrangian_hessian(&self, z: &[f64], kappa: &[f64]) -> Option<nalgebra::DMatrix<f64>> {
        let mut hess = self.inner.lagrangian_hessian(&self.to_inner(z), kappa)?;
        let n = hess.nrows();
        for i in 0..n {
            for j in 0..n {
                hess[(i, j)] *= self.scale[i] * self.scale[j];
            }
        }
        Some(hess)
    }
}

/// Coupling matrix in the scaled variables: (E D) z = E x.
pub fn scale_coupling(eq: &SparseMat, scale: &[f64]) -> SparseMat {
    SparseMat {
        n_rows: eq.n_rows,
        n_cols: eq.n_cols,
        triplets: eq
            .triplets
            .iter()
            .map(|&(r, c, v)| (r, c, v * scale[c]))
            .collect(),
    }
}

/// Exact elimination of E x = rhs when every row owns a pivot column: a
/// column with a nonzero coefficient that appears in no other row. The
/// consensus couplings always have this shape (each row holds one agent's
/// interference-sum variable with coefficient -1).
struct Elimination {
    /// per equality row: (pivot column, pivot coefficient)
    pivots: Vec<(usize, f64)>,
    /// free (non-pivot) columns in increasing order
    free: Vec<usize>,
    /// col -> Some(free index) for free columns, None for pivots
    free_index: Vec<Option<usize>>,
    /// col -> Some(row) for pivot columns
    pivot_row: Vec<Option<usize>>,
    /// per row: the non-pivot entries (col, coeff)
    row_rest: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
}

impl Elimination {
    fn build(eq: &SparseMat, rhs: &[f64]) -> Option<Self> {
        let m = eq.n_rows;
        let dim = eq.n_cols;
        let mut col_rows: Vec<Vec<(usize, f64)>> = vec![vec![]; dim];
        let mut rows: Vec<Vec<(usize, f64)>> = vec![vec![]; m];
        for &(r, c, v) in &eq.triplets {
            if v != 0.0 {
                col_rows[c].push((r, v));
                rows[r].push((c, v));
            }
        }
        let mut pivots = vec![(usize::MAX, 0.0); m];
        let mut pivot_row = vec![None; dim];
        for r in 0..m {
            let pick = rows[r]
                .iter()
                .find(|&&(c, _)| col_rows[c].len() == 1 && pivot_row[c].is_none())?;
            pivots[r] = *pick;
            pivot_row[pick.0] = Some(r);
        }
        let mut free = Vec::with_capacity(dim - m);
        let mut free_index = vec![None; dim];
        for c in 0..dim {
            if pivot_row[c].is_none() {
                free_index[c] = Some(free.len());
                free.push(c);
            }
        }
        let row_rest = (0..m)
            .map(|r| {
                rows[r]
                    .iter()
                    .filter(|&&(c, _)| c != pivots[r].0)
                    .copied()
                    .collect()
            })
            .collect();
        Some(Self {
            pivots,
            free,
            free_index,
            pivot_row,
            row_rest,
            rhs: rhs.to_vec(),
        })
    }

    fn expand(&self, z: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.free_index.len()];
        for (i, &c) in self.free.iter().enumerate() {
            y[c] = z[i];
        }
        for (r, &(pc, pv)) in self.pivots.iter().enumerate() {
            let rest: f64 = self.row_rest[r].iter().map(|&(c, v)| v * y[c]).sum();
            y[pc] = (self.rhs[r] - rest) / pv;
        }
        y
    }

    fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&c| x[c]).collect()
    }

    /// Chain a full-space gradient through the elimination: pivot components
    /// redistribute onto the free variables of their row.
    fn reduce_grad(&self, g: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.free.iter().map(|&c| g[c]).collect();
        for (r, &(pc, pv)) in self.pivots.iter().enumerate() {
            let gp = g[pc];
            if gp != 0.0 {
                for &(c, v) in &self.row_rest[r] {
                    if let Some(i) = self.free_index[c] {
                        out[i] -= gp * v / pv;
                    }
                }
            }
        }
        out
    }

    /// Same chaining for a sparse gradient row.
    fn reduce_row(&self, row: &[(usize, f64)]) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for &(c, v) in row {
            if let Some(i) = self.free_index[c] {
                out.push((i, v));
            } else {
                let r = self.pivot_row[c].unwrap();
                let pv = self.pivots[r].1;
                for &(fc, fv) in &self.row_rest[r] {
                    if let Some(i) = self.free_index[fc] {
                        out.push((i, -v * fv / pv));
                    }
                }
            }
        }
        out.sort_by_key(|&(i, _)| i);
        out.dedup_by(|a, b| {
            if a.0 == b.0 {
                b.1 += a.1;
                true
            } else {
                false
            }
        });
        out
    }
}

struct ReducedProblem<'a> {
    inner: &'a dyn Problem,
    extra: &'a ExtraTerms<'a>,
    elim: &'a Elimination,
}

impl Problem for ReducedProblem<'_> {
    fn dim(&self) -> usize {
        self.elim.free.len()
    }
    fn n_con(&self) -> usize {
        self.inner.n_con()
    }
    fn objective(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let y = self.elim.expand(z);
        let (v, g) = eval_smooth(self.inner, self.extra, &y);
        (v, self.elim.reduce_grad(&g))
    }
    fn constraint_rows(&self, z: &[f64]) -> (Vec<f64>, Vec<Vec<(usize, f64)>>) {
        let y = self.elim.expand(z);
        let (h, rows) = self.inner.constraint_rows(&y);
        let rows = rows.iter().map(|r| self.elim.reduce_row(r)).collect();
        (h, rows)
    }
}

/// Equality-constrained solve of
///   min f(x) + extra(x)  s.t.  h(x) <= 0,  E x = rhs.
/// When every equality row owns an exclusive pivot column the equalities are
/// eliminated exactly and a single barrier solve runs in the reduced space;
/// otherwise an augmented-Lagrangian loop handles them. Declares
/// infeasibility when the equality residual stops improving while the
/// penalty weight saturates.
pub fn solve_with_equalities(
    problem: &dyn Problem,
    extra_linear: Option<&[f64]>,
    prox: Option<(&[f64], f64)>,
    eq: &SparseMat,
    rhs: &[f64],
    x0: &[f64],
    opts: &EqualityOpts,
) -> Result<EqualityResult> {
    if eq.n_rows > 0 {
        if let Some(elim) = Elimination::build(eq, rhs) {
            return solve_reduced(problem, extra_linear, prox, &elim, x0, opts);
        }
    }
    let mut lambda = vec![0.0; eq.n_rows];
    let mut penalty = opts.penalty_init;
    let mut x = x0.to_vec();
    let mut prev_res = f64::INFINITY;
    let mut bopts = opts.barrier;
    for outer in 0..opts.max_outer {
        let extra = ExtraTerms {
            linear: extra_linear,
            prox,
            equality: Some(EqualityTerm {
                mat: eq,
                rhs: rhs.to_vec(),
                lambda: lambda.clone(),
                penalty,
            }),
        };
        let res = solve_barrier(problem, &extra, &x, &bopts)?;
        // later rounds start near the solution: skip most of the mu descent
        if outer == 0 {
            bopts.mu_init = (opts.barrier.mu_final * 100.0).min(opts.barrier.mu_init);
        }
        x = res.x;
        let mut r = eq.apply(&x);
        for (ri, bi) in r.iter_mut().zip(rhs) {
            *ri -= bi;
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (li, ri) in lambda.iter_mut().zip(&r) {
            *li += penalty * ri;
        }
        // a stalled residual that is already tiny is accuracy saturation of
        // the inner solves, not infeasibility
        let stalled = penalty > 1e14 && outer > 5;
        let saturated_ok = stalled && rnorm <= (100.0 * opts.tol).max(1e-7) && rnorm <= 1e-6;
        if rnorm <= opts.tol || saturated_ok {
            let (value, _) = eval_smooth(
                problem,
                &ExtraTerms {
                    linear: extra_linear,
                    prox,
                    equality: None,
                },
                &x,
            );
            return Ok(EqualityResult {
                x,
                kappa: res.kappa,
                lambda,
                value,
                residual: rnorm,
            });
        }
        if stalled {
            return Err(Error::Infeasible(format!(
                "equality residual {rnorm:.3e} stalled at penalty {penalty:.1e}"
            )));
        }
        if rnorm > 0.25 * prev_res {
            penalty *= opts.penalty_growth;
        }
        prev_res = rnorm;
    }
    Err(Error::Infeasible(format!(
        "equality residual {prev_res:.3e} after {} outer rounds",
        opts.max_outer
    )))
}

/// Barrier solve in the elimination-reduced space, then recover the equality
/// multipliers from stationarity in the pivot directions:
///   lambda_r = -(grad_y L)[pivot_r] / pivot_coeff_r.
fn solve_reduced(
    problem: &dyn Problem,
    extra_linear: Option<&[f64]>,
    prox: Option<(&[f64], f64)>,
    elim: &Elimination,
    x0: &[f64],
    opts: &EqualityOpts,
) -> Result<EqualityResult> {
    let extra = ExtraTerms {
        linear: extra_linear,
        prox,
        equality: None,
    };
    let reduced = ReducedProblem {
        inner: problem,
        extra: &extra,
        elim,
    };
    let z0 = elim.restrict(x0);
    let res = solve_barrier(&reduced, &ExtraTerms::default(), &z0, &opts.barrier)?;
    let x = elim.expand(&res.x);
    let (value, g) = eval_smooth(problem, &extra, &x);
    let (_, rows) = problem.constraint_rows(&x);
    let mut lag = g;
    for (i, &k) in res.kappa.iter().enumerate() {
        if k != 0.0 {
            for &(c, v) in &rows[i] {
                lag[c] += k * v;
            }
        }
    }
    let lambda = elim
        .pivots
        .iter()
        .map(|&(pc, pv)| -lag[pc] / pv)
        .collect();
    Ok(EqualityResult {
        x,
        kappa: res.kappa,
        lambda,
        value,
        residual: 0.0,
    })
}

/// A problem with zero constraints built from a closure (tests and toys).
pub struct SmoothProblem<F> {
    pub dim: usize,
    pub f: F,
}

impl<F> Problem for SmoothProblem<F>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>) + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn n_con(&self) -> usize {
        0
    }
    fn objective(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.f)(x)
    }
    fn constraint_rows(&self, _x: &[f64]) -> (Vec<f64>, Vec<Vec<(usize, f64)>>) {
        (vec![], vec![])
    }
}
