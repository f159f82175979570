//! The coordination quadratic program and its ingredients: active-constraint
//! Jacobians, gradient modification for inexact Jacobians, damped Hessian
//! approximations, and the coupled QP solved at the coordinator via a Schur
//! complement over the coupling multiplier.

use crate::consensus::SparseMat;
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Curvature model of one agent's local Lagrangian.
#[derive(Debug, Clone)]
pub enum Gamma {
    Dense(DMatrix<f64>),
    Diagonal(DVector<f64>),
}

impl Gamma {
    pub fn dim(&self) -> usize {
        match self {
            Gamma::Dense(m) => m.nrows(),
            Gamma::Diagonal(d) => d.len(),
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        match self {
            Gamma::Dense(m) => m.clone().symmetric_eigen().eigenvalues.min(),
            Gamma::Diagonal(d) => d.min(),
        }
    }
}

/// Enforce positive definiteness by flooring eigenvalues at `floor` (dense:
/// symmetric eigendecomposition; diagonal: elementwise clamp).
pub fn damp_spd(gamma: Gamma, floor: f64) -> Gamma {
    match gamma {
        Gamma::Diagonal(d) => Gamma::Diagonal(d.map(|v| v.max(floor))),
        Gamma::Dense(m) => {
            let sym = 0.5 * (&m + m.transpose());
            let eig = sym.clone().symmetric_eigen();
            if eig.eigenvalues.min() >= floor {
                return Gamma::Dense(sym);
            }
            let vals = eig.eigenvalues.map(|v| v.max(floor));
            let q = eig.eigenvectors;
            Gamma::Dense(&q * DMatrix::from_diagonal(&vals) * q.transpose())
        }
    }
}

/// Diagonal quasi-secant curvature estimate built from successive gradient
/// differences of the local Lagrangian (first-order information only).
#[derive(Debug, Clone, Default)]
pub struct QuasiSecant {
    prev: Option<(Vec<f64>, Vec<f64>)>,
    scale: Option<f64>,
}

impl QuasiSecant {
    /// Record (x, grad L(x)) and return the current scaled-identity estimate.
    /// `floor` keeps the model positive definite; `cap` bounds the step-size
    /// distortion from outlier secant pairs.
    pub fn update(&mut self, x: &[f64], grad: &[f64], floor: f64, cap: f64) -> Gamma {
        let n = x.len();
        if let Some((px, pg)) = &self.prev {
            let mut sy = 0.0;
            let mut ss = 0.0;
            for i in 0..n {
                let s = x[i] - px[i];
                let y = grad[i] - pg[i];
                sy += s * y;
                ss += s * s;
            }
            if ss > 1e-300 && sy.is_finite() {
                let bb = (sy / ss).clamp(floor, cap);
                self.scale = Some(match self.scale {
                    // mild smoothing keeps the QP step sizes stable
                    Some(prev) => 0.5 * prev + 0.5 * bb,
                    None => bb,
                });
            }
        }
        self.prev = Some((x.to_vec(), grad.to_vec()));
        let c = self.scale.unwrap_or(1.0).clamp(floor, cap);
        Gamma::Diagonal(DVector::from_element(n, c))
    }
}

/// Rows of the constraint Jacobian for constraints active at tolerance
/// `tol_active` (|h_i| <= tol, closed comparison); inactive rows are zero.
pub fn active_jacobian(
    h: &[f64],
    rows: &[Vec<(usize, f64)>],
    dim: usize,
    tol_active: f64,
) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(h.len(), dim);
    for (i, &hi) in h.iter().enumerate() {
        if hi.abs() <= tol_active {
            for &(j, v) in &rows[i] {
                c[(i, j)] = v;
            }
        }
    }
    c
}

/// g_b = grad(-U_b) + (C_exact - C_approx)^T kappa. With exact Jacobians the
/// correction vanishes and g is just the objective gradient.
pub fn modified_gradient(
    obj_grad: &[f64],
    kappa: &[f64],
    c_exact: &DMatrix<f64>,
    c_approx: &DMatrix<f64>,
) -> Vec<f64> {
    let mut g = obj_grad.to_vec();
    for i in 0..kappa.len() {
        if kappa[i] == 0.0 {
            continue;
        }
        for j in 0..g.len() {
            g[j] += (c_exact[(i, j)] - c_approx[(i, j)]) * kappa[i];
        }
    }
    g
}

/// Per-agent equality-constrained quadratic solve
///   delta(v) = argmin (1/2) d^T Gamma d + v^T d  s.t.  C d = 0,
/// prefactored so the coordinator can apply it to many right-hand sides.
pub struct AgentQp {
    gamma: Gamma,
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    /// nonzero rows of the active Jacobian
    c: DMatrix<f64>,
    /// Cholesky of C Gamma^{-1} C^T
    small: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl AgentQp {
    pub fn new(gamma: Gamma, c_active: &DMatrix<f64>) -> Result<Self> {
        let n = gamma.dim();
        let nonzero: Vec<usize> = (0..c_active.nrows())
            .filter(|&i| (0..n).any(|j| c_active[(i, j)] != 0.0))
            .collect();
        let c = DMatrix::from_fn(nonzero.len(), n, |i, j| c_active[(nonzero[i], j)]);
        let chol = match &gamma {
            Gamma::Dense(m) => Some(m.clone().cholesky().ok_or_else(|| {
                Error::Solver("curvature model not positive definite; damping failed".into())
            })?),
            Gamma::Diagonal(d) => {
                if d.min() <= 0.0 {
                    return Err(Error::Solver(
                        "diagonal curvature model not positive definite".into(),
                    ));
                }
                None
            }
        };
        let small = if c.nrows() > 0 {
            let mut cginv_ct = DMatrix::zeros(c.nrows(), c.nrows());
            let ginv_ct = {
                let mut m = c.transpose();
                match (&gamma, &chol) {
                    (Gamma::Diagonal(d), _) => {
                        for j in 0..m.ncols() {
                            for i in 0..n {
                                m[(i, j)] /= d[i];
                            }
                        }
                        m
                    }
                    (_, Some(ch)) => {
                        for j in 0..m.ncols() {
                            let col = ch.solve(&m.column(j).into_owned());
                            m.set_column(j, &col);
                        }
                        m
                    }
                    _ => unreachable!(),
                }
            };
            cginv_ct.gemm(1.0, &c, &ginv_ct, 0.0);
            // tiny regularization guards duplicated active rows
            for i in 0..cginv_ct.nrows() {
                cginv_ct[(i, i)] += 1e-12;
            }
            Some(cginv_ct.cholesky().ok_or_else(|| {
                Error::Solver("active-constraint block singular in coordination QP".into())
            })?)
        } else {
            None
        };
        Ok(Self {
            gamma,
            chol,
            c,
            small,
        })
    }

    fn gamma_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        match (&self.gamma, &self.chol) {
            (Gamma::Diagonal(d), _) => v.component_div(d),
            (_, Some(ch)) => ch.solve(v),
            _ => unreachable!(),
        }
    }

    /// argmin (1/2) d^T Gamma d + v^T d  s.t.  C d = 0.
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(v);
        let gi_v = self.gamma_solve(&v);
        let mut d = -&gi_v;
        if let Some(small) = &self.small {
            let cv = &self.c * &gi_v;
            let eta = small.solve(&cv);
            let corr = self.gamma_solve(&(self.c.transpose() * eta));
            d += corr;
        }
        d.as_slice().to_vec()
    }

    pub fn n_active(&self) -> usize {
        self.c.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub deltas: Vec<Vec<f64>>,
    pub lambda_next: Vec<f64>,
    pub slack: Vec<f64>,
    /// max KKT residual of the returned solution (diagnostic)
    pub kkt_residual: f64,
}

/// Solve the coupled coordination QP
///   min sum_b (1/2) d_b^T Gamma_b d_b + g_b^T d_b + lambda^T s + (rho2/2)||s||^2
///   s.t. sum_b E_b (l_b + d_b) = rhs + s,   C_b d_b = 0
/// by eliminating d_b and s, leaving a dense system in the coupling
/// multiplier mu; returns lambda_next = mu. `rho2 = inf` pins s = 0.
pub fn solve_coordination_qp(
    agents: &[AgentQp],
    gs: &[Vec<f64>],
    l_hats: &[Vec<f64>],
    couplings: &[SparseMat],
    rhs: &[f64],
    lambda: &[f64],
    rho2: f64,
) -> Result<QpSolution> {
    let n_agents = agents.len();
    let m = rhs.len();
    if m == 0 {
        let deltas: Vec<Vec<f64>> = (0..n_agents).map(|b| agents[b].solve(&gs[b])).collect();
        let kkt = qp_kkt_residual(agents, gs, &deltas, couplings, &[], rho2, lambda, &[]);
        return Ok(QpSolution {
            deltas,
            lambda_next: vec![],
            slack: vec![],
            kkt_residual: kkt,
        });
    }
    // residual r = sum_b E_b l_hat_b - rhs
    let mut r = vec![0.0; m];
    for b in 0..n_agents {
        for (ri, ci) in r.iter_mut().zip(couplings[b].apply(&l_hats[b])) {
            *ri += ci;
        }
    }
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri -= bi;
    }
    // M = sum_b E_b S_b E_b^T + I/rho2,  q = r - sum_b E_b S_b g_b + lambda/rho2
    let mut mmat = DMatrix::zeros(m, m);
    let mut q = DVector::from_column_slice(&r);
    for b in 0..n_agents {
        let dim = couplings[b].n_cols;
        for row in 0..m {
            let mut e_row = vec![0.0; dim];
            let mut any = false;
            for &(rr, cc, v) in &couplings[b].triplets {
                if rr == row {
                    e_row[cc] = v;
                    any = true;
                }
            }
            if !any {
                continue;
            }
            // S_b applied to E_b^T e_row; note solve() returns -S v, so negate
            let s_col = agents[b].solve(&e_row);
            for row2 in 0..m {
                let mut acc = 0.0;
                for &(rr, cc, v) in &couplings[b].triplets {
                    if rr == row2 {
                        acc += v * s_col[cc];
                    }
                }
                mmat[(row2, row)] -= acc;
            }
        }
        let sg = agents[b].solve(&gs[b]); // = -S_b g_b
        for (qi, ci) in q.iter_mut().zip(couplings[b].apply(&sg)) {
            *qi += ci;
        }
    }
    if rho2.is_finite() {
        for i in 0..m {
            mmat[(i, i)] += 1.0 / rho2;
            q[i] += lambda[i] / rho2;
        }
    }
    let mmat: DMatrix<f64> = 0.5 * (mmat.transpose() + &mmat);
    let mu = mmat
        .clone()
        .lu()
        .solve(&q)
        .ok_or_else(|| Error::Solver("coordination QP Schur system singular".into()))?;
    let slack: Vec<f64> = if rho2.is_finite() {
        (0..m).map(|i| (mu[i] - lambda[i]) / rho2).collect()
    } else {
        vec![0.0; m]
    };
    let mut deltas = Vec::with_capacity(n_agents);
    for b in 0..n_agents {
        let mut v = gs[b].clone();
        let et_mu = couplings[b].apply_transpose(mu.as_slice());
        for (vi, ei) in v.iter_mut().zip(&et_mu) {
            *vi += ei;
        }
        deltas.push(agents[b].solve(&v));
    }
    let kkt = qp_kkt_residual(
        agents,
        gs,
        &deltas,
        couplings,
        &r,
        rho2,
        lambda,
        mu.as_slice(),
    );
    Ok(QpSolution {
        deltas,
        lambda_next: mu.as_slice().to_vec(),
        slack,
        kkt_residual: kkt,
    })
}

#[allow(clippy::too_many_arguments)]
fn qp_kkt_residual(
    agents: &[AgentQp],
    gs: &[Vec<f64>],
    deltas: &[Vec<f64>],
    couplings: &[SparseMat],
    r: &[f64],
    rho2: f64,
    lambda: &[f64],
    mu: &[f64],
) -> f64 {
    let mut worst: f64 = 0.0;
    let m = mu.len();
    for b in 0..agents.len() {
        let d = DVector::from_column_slice(&deltas[b]);
        let mut stat = match &agents[b].gamma {
            Gamma::Dense(g) => g * &d,
            Gamma::Diagonal(dg) => d.component_mul(dg),
        };
        for (si, gi) in stat.iter_mut().zip(&gs[b]) {
            *si += gi;
        }
        if m > 0 {
            for (si, ei) in stat.iter_mut().zip(couplings[b].apply_transpose(mu)) {
                *si += ei;
            }
        }
        // project stationarity onto the null space of the active rows
        if agents[b].n_active() > 0 {
            let c = &agents[b].c;
            let cct = c * c.transpose()
                + DMatrix::identity(c.nrows(), c.nrows()).scale(1e-12);
            if let Some(ch) = cct.cholesky() {
                let eta = ch.solve(&(c * &stat));
                stat -= c.transpose() * eta;
            }
            let cd = c * &d;
            worst = worst.max(cd.amax());
        }
        worst = worst.max(stat.amax());
    }
    if m > 0 {
        // primal coupling: r + sum E_b d_b = s = (mu - lambda)/rho2
        let mut prim = r.to_vec();
        for b in 0..agents.len() {
            for (pi, ci) in prim.iter_mut().zip(couplings[b].apply(&deltas[b])) {
                *pi += ci;
            }
        }
        for i in 0..m {
            let s = if rho2.is_finite() {
                (mu[i] - lambda[i]) / rho2
            } else {
                0.0
            };
            worst = worst.max((prim[i] - s).abs());
        }
    }
    worst
}
