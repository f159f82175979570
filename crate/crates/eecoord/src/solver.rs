//! Decentralized augmented-multiplier solver with a central coordination QP.
//!
//! Each iteration: (1) every agent solves a proximal augmented-Lagrangian
//! subproblem in parallel, (2) a termination test on step size and coupling
//! residual, (3) the coordinator solves a coupled QP over correction steps
//! and a slack, (4) a penalty-based step tuning rule picks between the full
//! QP-corrected iterate, the subproblem solutions alone, or a centralized
//! proximal-feasibility fallback whose infeasibility certifies the instance
//! infeasible.

use crate::consensus::SparseMat;
use crate::error::{Error, Result};
use crate::nlp::{
    solve_barrier, solve_with_equalities, BarrierOpts, EqualityOpts, ExtraTerms, Problem,
};
use crate::qp::{
    active_jacobian, damp_spd, solve_coordination_qp, AgentQp, Gamma, QuasiSecant,
};
use rayon::prelude::*;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMode {
    Exact,
    QuasiSecant,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// proximal weight of the local subproblems
    pub rho: f64,
    /// slack penalty of the coordination QP (grows per schedule)
    pub rho2: f64,
    /// termination tolerance on both squared-norm tests
    pub epsilon: f64,
    pub max_iters: usize,
    /// hinge weight in the penalty function
    pub kappa_l: f64,
    /// coupling-residual weight in the penalty function and decrease target
    pub lambda_l: f64,
    /// sufficient-decrease fraction
    pub gamma: f64,
    pub hessian_mode: HessianMode,
    /// |h_i| <= tol counts as active (closed comparison)
    pub tol_active: f64,
    pub barrier: BarrierOpts,
    /// rho2 <- max(rho2, c / coupling residual)
    pub rho2_schedule_c: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rho: 10.0,
            rho2: 100.0,
            epsilon: 1e-6,
            max_iters: 200,
            kappa_l: 1e4,
            lambda_l: 1e4,
            gamma: 1e-3,
            hessian_mode: HessianMode::QuasiSecant,
            tol_active: 1e-6,
            barrier: BarrierOpts::default(),
            rho2_schedule_c: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DualState {
    /// multipliers of the coupling equalities
    pub lambda: Vec<f64>,
    /// per-agent inequality multipliers
    pub kappas: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    FullQp,
    LocalOnly,
    Auxiliary,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Branch::FullQp => write!(f, "full_qp"),
            Branch::LocalOnly => write!(f, "local_only"),
            Branch::Auxiliary => write!(f, "auxiliary"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iter: usize,
    pub utility: f64,
    pub penalty: f64,
    pub cons_residual: f64,
    pub step_norm: f64,
    pub branch: Branch,
    pub qp_kkt_residual: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SolverTrace {
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<Vec<f64>>,
    pub duals: DualState,
    pub iterations: usize,
    pub terminated: bool,
    pub cons_residual: f64,
    pub step_norm_sq: f64,
}

/// Solve one agent's augmented-Lagrangian subproblem
///   min f_b(y) + lambda^T E_b y + (rho/2)||y - x_prev||^2  s.t. h_b(y) <= 0
/// returning the solution and its inequality multipliers.
pub fn solve_local_subproblem(
    agent: &dyn Problem,
    coupling: &SparseMat,
    x_prev: &[f64],
    lambda: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let linear = if lambda.is_empty() {
        vec![0.0; agent.dim()]
    } else {
        coupling.apply_transpose(lambda)
    };
    let extra = ExtraTerms {
        linear: Some(&linear),
        prox: Some((x_prev, opts.rho)),
        equality: None,
    };
    let res = solve_barrier(agent, &extra, x_prev, &opts.barrier)?;
    Ok((res.x, res.kappa))
}

/// Termination per the step-size and coupling-residual tests:
///   rho * ||l_hat - l_prev||^2 <= eps  AND  ||sum_b E_b l_hat_b - rhs||^2 <= eps
/// with closed comparisons.
pub fn check_termination(
    l_hats: &[Vec<f64>],
    l_prevs: &[Vec<f64>],
    couplings: &[SparseMat],
    rhs: &[f64],
    opts: &SolverOptions,
) -> bool {
    let step_sq: f64 = l_hats
        .iter()
        .zip(l_prevs)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        .sum();
    opts.rho * step_sq <= opts.epsilon && coupling_residual_sq(l_hats, couplings, rhs) <= opts.epsilon
}

fn coupling_residual(x: &[Vec<f64>], couplings: &[SparseMat], rhs: &[f64]) -> Vec<f64> {
    let mut r: Vec<f64> = rhs.iter().map(|v| -v).collect();
    for (xb, eb) in x.iter().zip(couplings) {
        for (ri, ci) in r.iter_mut().zip(eb.apply(xb)) {
            *ri += ci;
        }
    }
    r
}

fn coupling_residual_sq(x: &[Vec<f64>], couplings: &[SparseMat], rhs: &[f64]) -> f64 {
    coupling_residual(x, couplings, rhs)
        .iter()
        .map(|v| v * v)
        .sum()
}

/// Merit function: sum_b f_b + kappa_L * hinge(h) + lambda_L * ||coupling residual||_1.
pub fn penalty(
    agents: &[&dyn Problem],
    x: &[Vec<f64>],
    couplings: &[SparseMat],
    rhs: &[f64],
    opts: &SolverOptions,
) -> f64 {
    let mut p = 0.0;
    for (b, agent) in agents.iter().enumerate() {
        let (f, _) = agent.objective(&x[b]);
        p += f;
        let (h, _) = agent.constraint_rows(&x[b]);
        p += opts.kappa_l * h.iter().map(|&v| v.max(0.0)).sum::<f64>();
    }
    p += opts.lambda_l
        * coupling_residual(x, couplings, rhs)
            .iter()
            .map(|v| v.abs())
            .sum::<f64>();
    p
}

/// l_next = l_hat + alpha * delta, componentwise over agents.
pub fn update_iterates(l_hats: &[Vec<f64>], deltas: &[Vec<f64>], alpha: f64) -> Vec<Vec<f64>> {
    l_hats
        .iter()
        .zip(deltas)
        .map(|(l, d)| l.iter().zip(d).map(|(a, b)| a + alpha * b).collect())
        .collect()
}

/// Sufficient-decrease target: gamma * (sum_b (rho/2)||l_hat - x||^2
/// + lambda_L * ||coupling residual at l_hat||_1).
pub fn decrease_target(
    l_hats: &[Vec<f64>],
    x_prev: &[Vec<f64>],
    couplings: &[SparseMat],
    rhs: &[f64],
    opts: &SolverOptions,
) -> f64 {
    let prox: f64 = l_hats
        .iter()
        .zip(x_prev)
        .map(|(a, b)| {
            0.5 * opts.rho * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
        })
        .sum();
    let l1: f64 = coupling_residual(l_hats, couplings, rhs)
        .iter()
        .map(|v| v.abs())
        .sum();
    opts.gamma * (prox + opts.lambda_l * l1)
}

/// Solve the centralized proximal-feasibility problem
///   min sum_b f_b(y_b) + (rho/2)||y_b - x_b||^2
///   s.t. h_b(y_b) <= 0, sum_b E_b y_b = rhs
/// exactly; its infeasibility certifies the original problem infeasible.
pub fn solve_auxiliary(
    agents: &[&dyn Problem],
    x: &[Vec<f64>],
    couplings: &[SparseMat],
    rhs: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let composite = CompositeProblem::new(agents);
    let eq = composite.stack_couplings(couplings);
    let x0 = composite.concat(x);
    let mut eq_opts = EqualityOpts {
        // keep lambda_l * ||r||_1 well below the typical penalty decrease
        tol: (0.01 * opts.epsilon / opts.lambda_l).max(1e-9),
        barrier: opts.barrier,
        ..Default::default()
    };
    // the prox center is already interior and near-optimal; a long barrier
    // continuation from a large mu walks away from it and loses quality
    eq_opts.barrier.mu_init = (opts.barrier.mu_final * 100.0).min(opts.barrier.mu_init);
    let res = solve_with_equalities(
        &composite,
        None,
        Some((&x0, opts.rho)),
        &eq,
        rhs,
        &x0,
        &eq_opts,
    )?;
    Ok((composite.split(&res.x), res.lambda))
}

/// Solve the coupled problem monolithically (reference/oracle path):
///   min sum_b f_b(y_b)  s.t.  h_b(y_b) <= 0,  sum_b E_b y_b = rhs.
pub fn solve_centralized(
    agents: &[&dyn Problem],
    x0: &[Vec<f64>],
    couplings: &[SparseMat],
    rhs: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let composite = CompositeProblem::new(agents);
    let eq = composite.stack_couplings(couplings);
    let flat0 = composite.concat(x0);
    let eq_opts = EqualityOpts {
        tol: 1e-9,
        barrier: opts.barrier,
        ..Default::default()
    };
    let res = solve_with_equalities(&composite, None, None, &eq, rhs, &flat0, &eq_opts)?;
    Ok((composite.split(&res.x), res.lambda))
}

/// Block problem over the concatenation of several agents' variables.
pub struct CompositeProblem<'a> {
    agents: &'a [&'a dyn Problem],
    offsets: Vec<usize>,
    total_dim: usize,
    total_con: usize,
}

impl<'a> CompositeProblem<'a> {
    pub fn new(agents: &'a [&'a dyn Problem]) -> Self {
        let mut offsets = Vec::with_capacity(agents.len());
        let mut total_dim = 0;
        let mut total_con = 0;
        for a in agents {
            offsets.push(total_dim);
            total_dim += a.dim();
            total_con += a.n_con();
        }
        Self {
            agents,
            offsets,
            total_dim,
            total_con,
        }
    }

    pub fn concat(&self, x: &[Vec<f64>]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_dim);
        for xb in x {
            out.extend_from_slice(xb);
        }
        out
    }

    pub fn split(&self, flat: &[f64]) -> Vec<Vec<f64>> {
        self.agents
            .iter()
            .enumerate()
            .map(|(b, a)| flat[self.offsets[b]..self.offsets[b] + a.dim()].to_vec())
            .collect()
    }

    pub fn stack_couplings(&self, couplings: &[SparseMat]) -> SparseMat {
        let n_rows = couplings.first().map_or(0, |c| c.n_rows);
        let mut out = SparseMat {
            n_rows,
            n_cols: self.total_dim,
            triplets: vec![],
        };
        for (b, c) in couplings.iter().enumerate() {
            for &(r, col, v) in &c.triplets {
                out.triplets.push((r, col + self.offsets[b], v));
            }
        }
        out
    }
}

impl Problem for CompositeProblem<'_> {
    fn dim(&self) -> usize {
        self.total_dim
    }
    fn n_con(&self) -> usize {
        self.total_con
    }
    fn objective(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut v = 0.0;
        let mut g = vec![0.0; self.total_dim];
        for (b, a) in self.agents.iter().enumerate() {
            let off = self.offsets[b];
            let (vb, gb) = a.objective(&x[off..off + a.dim()]);
            v += vb;
            g[off..off + a.dim()].copy_from_slice(&gb);
        }
        (v, g)
    }
    fn constraint_rows(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<(usize, f64)>>) {
        let mut h = Vec::with_capacity(self.total_con);
        let mut rows = Vec::with_capacity(self.total_con);
        for (b, a) in self.agents.iter().enumerate() {
            let off = self.offsets[b];
            let (hb, rb) = a.constraint_rows(&x[off..off + a.dim()]);
            h.extend(hb);
            rows.extend(
                rb.into_iter()
                    .map(|row| row.into_iter().map(|(c, v)| (c + off, v)).collect()),
            );
        }
        (h, rows)
    }
}

/// Run the decentralized solver from the given initial iterates.
pub fn run(
    agents: &[&dyn Problem],
    couplings: &[SparseMat],
    rhs: &[f64],
    x0: Vec<Vec<f64>>,
    opts: &SolverOptions,
) -> Result<(Solution, SolverTrace)> {
    let n_agents = agents.len();
    if couplings.len() != n_agents || x0.len() != n_agents {
        return Err(Error::DimensionMismatch(
            "agents, couplings and initial iterates must align".into(),
        ));
    }
    let mut x = x0;
    let mut lambda = vec![0.0; rhs.len()];
    let mut kappas: Vec<Vec<f64>> = agents.iter().map(|a| vec![0.0; a.n_con()]).collect();
    let mut trace = SolverTrace::default();
    let mut rho2 = opts.rho2;
    let mut quasi: Vec<QuasiSecant> = (0..n_agents).map(|_| QuasiSecant::default()).collect();
    let start = Instant::now();
    let mut terminated = false;
    let mut iter = 0;
    let mut local_opts = *opts;
    while iter < opts.max_iters {
        // step 1: parallel local subproblems
        let locals: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..n_agents)
            .into_par_iter()
            .map(|b| solve_local_subproblem(agents[b], &couplings[b], &x[b], &lambda, &local_opts))
            .collect();
        // after the first pass the iterates stay near-optimal: start later
        // barrier solves close to the final mu
        local_opts.barrier.mu_init = (opts.barrier.mu_final * 100.0).min(opts.barrier.mu_init);
        let mut l_hats = Vec::with_capacity(n_agents);
        for (b, res) in locals.into_iter().enumerate() {
            let (l_hat, kappa) = res?;
            kappas[b] = kappa;
            l_hats.push(l_hat);
        }
        // step 2: termination
        let step_sq: f64 = l_hats
            .iter()
            .zip(&x)
            .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>())
            .sum();
        let cons_sq = coupling_residual_sq(&l_hats, couplings, rhs);
        if opts.rho * step_sq <= opts.epsilon && cons_sq <= opts.epsilon {
            x = l_hats;
            terminated = true;
            trace.rows.push(TraceRow {
                iter,
                utility: -total_objective(agents, &x),
                penalty: penalty(agents, &x, couplings, rhs, opts),
                cons_residual: cons_sq.sqrt(),
                step_norm: opts.rho * step_sq,
                branch: Branch::LocalOnly,
                qp_kkt_residual: 0.0,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
            break;
        }
        // step 3: coordination QP
        rho2 = rho2.max(opts.rho2_schedule_c / cons_sq.sqrt().max(1e-300));
        let mut qp_agents = Vec::with_capacity(n_agents);
        let mut gs = Vec::with_capacity(n_agents);
        for b in 0..n_agents {
            let (h, rows) = agents[b].constraint_rows(&l_hats[b]);
            let c_active = active_jacobian(&h, &rows, agents[b].dim(), opts.tol_active);
            let (_, mut grad) = agents[b].objective(&l_hats[b]);
            let gamma = match opts.hessian_mode {
                HessianMode::Exact => match agents[b].lagrangian_hessian(&l_hats[b], &kappas[b]) {
                    Some(hess) => damp_spd(Gamma::Dense(hess), 1e-8),
                    None => {
                        return Err(Error::Solver(
                            "exact Hessian mode requires the problem to supply one".into(),
                        ))
                    }
                },
                HessianMode::QuasiSecant => {
                    // curvature of the local Lagrangian from first-order info
                    let mut lag_grad = grad.clone();
                    for (i, &k) in kappas[b].iter().enumerate() {
                        if k != 0.0 {
                            for &(c, v) in &rows[i] {
                                lag_grad[c] += k * v;
                            }
                        }
                    }
                    let g = quasi[b].update(&l_hats[b], &lag_grad, opts.rho * 1e-2, 1e12);
                    damp_spd(g, 1e-8)
                }
            };
            qp_agents.push(AgentQp::new(gamma, &c_active)?);
            // with exact Jacobian rows the gradient correction vanishes
            grad.shrink_to_fit();
            gs.push(grad);
        }
        let qp = solve_coordination_qp(&qp_agents, &gs, &l_hats, couplings, rhs, &lambda, rho2)?;
        // step 4: penalty-based step tuning
        let p_prev = penalty(agents, &x, couplings, rhs, opts);
        let target = decrease_target(&l_hats, &x, couplings, rhs, opts);
        let full = update_iterates(&l_hats, &qp.deltas, 1.0);
        let p_full = penalty(agents, &full, couplings, rhs, opts);
        let branch;
        if p_prev - p_full >= target {
            x = full;
            lambda = if qp.lambda_next.is_empty() {
                lambda
            } else {
                qp.lambda_next.clone()
            };
            branch = Branch::FullQp;
        } else {
            let p_local = penalty(agents, &l_hats, couplings, rhs, opts);
            if p_prev - p_local >= target {
                x = l_hats.clone();
                branch = Branch::LocalOnly;
            } else {
                let (y_star, lam) = solve_auxiliary(agents, &x, couplings, rhs, opts)?;
                x = y_star;
                lambda = lam;
                branch = Branch::Auxiliary;
            }
        }
        trace.rows.push(TraceRow {
            iter,
            utility: -total_objective(agents, &x),
            penalty: penalty(agents, &x, couplings, rhs, opts),
            cons_residual: cons_sq.sqrt(),
            step_norm: opts.rho * step_sq,
            branch,
            qp_kkt_residual: qp.kkt_residual,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        iter += 1;
    }
    let cons = coupling_residual_sq(&x, couplings, rhs).sqrt();
    let step_norm_sq = trace.rows.last().map_or(0.0, |r| r.step_norm);
    Ok((
        Solution {
            x,
            duals: DualState { lambda, kappas },
            iterations: iter,
            terminated,
            cons_residual: cons,
            step_norm_sq,
        },
        trace,
    ))
}

fn total_objective(agents: &[&dyn Problem], x: &[Vec<f64>]) -> f64 {
    agents
        .iter()
        .zip(x)
        .map(|(a, xb)| a.objective(xb).0)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::SmoothProblem;

    fn quad_agent(center: f64) -> SmoothProblem<impl Fn(&[f64]) -> (f64, Vec<f64>) + Sync> {
        SmoothProblem {
            dim: 1,
            f: move |x: &[f64]| ((x[0] - center).powi(2), vec![2.0 * (x[0] - center)]),
        }
    }

    fn scalar_coupling() -> SparseMat {
        SparseMat {
            n_rows: 1,
            n_cols: 1,
            triplets: vec![(0, 0, 1.0)],
        }
    }

    #[test]
    fn local_subproblem_proximal_identity() {
        // f = 0, lambda = 0 -> minimizer of the prox term is x_prev
        let zero = SmoothProblem {
            dim: 2,
            f: |_: &[f64]| (0.0, vec![0.0, 0.0]),
        };
        let e = SparseMat {
            n_rows: 0,
            n_cols: 2,
            triplets: vec![],
        };
        let opts = SolverOptions::default();
        let (l, _) = solve_local_subproblem(&zero, &e, &[1.5, -2.0], &[], &opts).unwrap();
        assert!((l[0] - 1.5).abs() < 1e-8 && (l[1] + 2.0).abs() < 1e-8);
    }

    #[test]
    fn local_subproblem_scalar_prox() {
        // min (y-1)^2 + (rho/2) y^2, rho = 2 -> y = 0.5
        let agent = quad_agent(1.0);
        let opts = SolverOptions {
            rho: 2.0,
            ..Default::default()
        };
        let (l, _) =
            solve_local_subproblem(&agent, &scalar_coupling(), &[0.0], &[0.0], &opts).unwrap();
        assert!((l[0] - 0.5).abs() < 1e-8, "{}", l[0]);
    }

    #[test]
    fn local_subproblem_active_bound() {
        // same with y <= 0.3 -> y = 0.3, kappa > 0
        struct Capped;
        impl Problem for Capped {
            fn dim(&self) -> usize {
                1
            }
            fn n_con(&self) -> usize {
                1
            }
            fn objective(&self, x: &[f64]) -> (f64, Vec<f64>) {
                ((x[0] - 1.0).powi(2), vec![2.0 * (x[0] - 1.0)])
            }
            fn constraint_rows(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<(usize, f64)>>) {
                (vec![x[0] - 0.3], vec![vec![(0, 1.0)]])
            }
        }
        let opts = SolverOptions {
            rho: 2.0,
            ..Default::default()
        };
        let (l, kappa) =
            solve_local_subproblem(&Capped, &scalar_coupling(), &[0.0], &[0.0], &opts).unwrap();
        assert!((l[0] - 0.3).abs() < 1e-5, "{}", l[0]);
        assert!(kappa[0] > 0.1, "kappa = {}", kappa[0]);
    }

    #[test]
    fn termination_cases() {
        let opts = SolverOptions {
            epsilon: 1e-6,
            rho: 1.0,
            ..Default::default()
        };
        let couplings = vec![scalar_coupling(), scalar_coupling()];
        let x = vec![vec![1.0], vec![-1.0]];
        // l_hat == l_prev and zero residual -> true
        assert!(check_termination(&x, &x, &couplings, &[0.0], &opts));
        // consensus residual^2 = 2 eps -> false
        let eps = opts.epsilon;
        let y = vec![vec![(2.0 * eps).sqrt()], vec![0.0]];
        assert!(!check_termination(&y, &y, &couplings, &[0.0], &opts));
        // boundary: both tests exactly at eps -> true (closed comparison)
        let z_prev = vec![vec![0.0], vec![0.0]];
        let z_hat = vec![vec![eps.sqrt()], vec![0.0]];
        // step^2 = eps, residual^2 = eps
        assert!(check_termination(&z_hat, &z_prev, &couplings, &[0.0], &opts));
    }

    #[test]
    fn penalty_arithmetic() {
        struct OneCon;
        impl Problem for OneCon {
            fn dim(&self) -> usize {
                1
            }
            fn n_con(&self) -> usize {
                1
            }
            fn objective(&self, x: &[f64]) -> (f64, Vec<f64>) {
                (x[0], vec![1.0])
            }
            fn constraint_rows(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<(usize, f64)>>) {
                (vec![x[0] - 1.0], vec![vec![(0, 1.0)]])
            }
        }
        let opts = SolverOptions::default();
        let agents: Vec<&dyn Problem> = vec![&OneCon];
        let couplings = vec![SparseMat {
            n_rows: 0,
            n_cols: 1,
            triplets: vec![],
        }];
        // feasible: P = f
        let p = penalty(&agents, &[vec![0.5]], &couplings, &[], &opts);
        assert!((p - 0.5).abs() < 1e-12);
        // violate h by 2 -> + 2 kappa_L
        let p2 = penalty(&agents, &[vec![3.0]], &couplings, &[], &opts);
        assert!((p2 - (3.0 + 2.0 * opts.kappa_l)).abs() < 1e-9);
    }

    #[test]
    fn update_iterates_arithmetic() {
        let l = vec![vec![1.0, 2.0]];
        let d = vec![vec![0.5, -1.0]];
        assert_eq!(update_iterates(&l, &d, 0.0), l);
        assert_eq!(update_iterates(&l, &d, 1.0), vec![vec![1.5, 1.0]]);
        let zero = vec![vec![0.0, 0.0]];
        assert_eq!(update_iterates(&l, &zero, 1.0), l);
    }

    #[test]
    fn auxiliary_projection_toy() {
        // f = 0, no h, coupling x1 + x2 = 0 from x = (1,1) -> y = (0,0)
        let a1 = SmoothProblem {
            dim: 1,
            f: |_: &[f64]| (0.0, vec![0.0]),
        };
        let a2 = SmoothProblem {
            dim: 1,
            f: |_: &[f64]| (0.0, vec![0.0]),
        };
        let agents: Vec<&dyn Problem> = vec![&a1, &a2];
        let couplings = vec![scalar_coupling(), scalar_coupling()];
        let opts = SolverOptions::default();
        let (y, _) = solve_auxiliary(
            &agents,
            &[vec![1.0], vec![1.0]],
            &couplings,
            &[0.0],
            &opts,
        )
        .unwrap();
        assert!(y[0][0].abs() < 1e-6 && y[1][0].abs() < 1e-6, "{y:?}");
    }

    #[test]
    fn convex_consensus_toy_exact_hessian() {
        // min (x1-1)^2 + (x2-2)^2 s.t. x1 + x2 = 0 -> (-0.5, 0.5), lambda = 3
        struct Quad(f64);
        impl Problem for Quad {
            fn dim(&self) -> usize {
                1
            }
            fn n_con(&self) -> usize {
                0
            }
            fn objective(&self, x: &[f64]) -> (f64, Vec<f64>) {
                ((x[0] - self.0).powi(2), vec![2.0 * (x[0] - self.0)])
            }
            fn constraint_rows(&self, _: &[f64]) -> (Vec<f64>, Vec<Vec<(usize, f64)>>) {
                (vec![], vec![])
            }
            fn lagrangian_hessian(
                &self,
                _x: &[f64],
                _k: &[f64],
            ) -> Option<nalgebra::DMatrix<f64>> {
                Some(nalgebra::DMatrix::from_element(1, 1, 2.0))
            }
        }
        let a1 = Quad(1.0);
        let a2 = Quad(2.0);
        let agents: Vec<&dyn Problem> = vec![&a1, &a2];
        let couplings = vec![scalar_coupling(), scalar_coupling()];
        let opts = SolverOptions {
            epsilon: 1e-14,
            hessian_mode: HessianMode::Exact,
            max_iters: 20,
            ..Default::default()
        };
        let (sol, trace) = run(&agents, &couplings, &[0.0], vec![vec![0.0], vec![0.0]], &opts)
            .unwrap();
        assert!(sol.terminated, "did not terminate: {trace:?}");
        assert!((sol.x[0][0] + 0.5).abs() < 1e-6, "{:?}", sol.x);
        assert!((sol.x[1][0] - 0.5).abs() < 1e-6, "{:?}", sol.x);
        assert!((sol.duals.lambda[0] - 3.0).abs() < 1e-6, "{:?}", sol.duals.lambda);
        // penalty nonincreasing along the trace
        for w in trace.rows.windows(2) {
            assert!(w[1].penalty <= w[0].penalty + 1e-9);
        }
    }

    #[test]
    fn convex_toy_quasi_secant_also_converges() {
        struct Quad(f64);
        impl Problem for Quad {
            fn dim(&self) -> usize {
                1
            }
            fn n_con(&self) -> usize {
                0
            }
            fn objective(&self, x: &[f64]) -> (f64, Vec<f64>) {
                ((x[0] - self.0).powi(2), vec![2.0 * (x[0] - self.0)])
            }
            fn constraint_rows(&self, _: &[f64]) -> (Vec<f64>, Vec<Vec<(usize, f64)>>) {
                (vec![], vec![])
            }
        }
        let a1 = Quad(1.0);
        let a2 = Quad(2.0);
        let agents: Vec<&dyn Problem> = vec![&a1, &a2];
        let couplings = vec![scalar_coupling(), scalar_coupling()];
        let opts = SolverOptions {
            epsilon: 1e-12,
            max_iters: 100,
            ..Default::default()
        };
        let (sol, _) = run(&agents, &couplings, &[0.0], vec![vec![2.0], vec![-3.0]], &opts)
            .unwrap();
        assert!(sol.terminated);
        assert!((sol.x[0][0] + 0.5).abs() < 1e-4, "{:?}", sol.x);
        assert!((sol.x[1][0] - 0.5).abs() < 1e-4, "{:?}", sol.x);
    }
}
