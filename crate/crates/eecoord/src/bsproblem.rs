//! The per-BS design problem in transformed, all-inequality form.
//!
//! Variables (flat layout from `state`): precoder w, EE bound rho, power
//! variable P_hat, per-user interference-plus-noise bounds t, rate lower
//! bounds xi, rate upper bounds r_ub, SINR auxiliaries s, local interference
//! copies nu, and gate parameters phi = (log alpha, beta) per antenna.
//!
//! All quantities here are in normalized internal units: channels divided by
//! the square root of the noise power (so noise = 1) and rates in bit/s/Hz.
//! The scenario layer converts to and from physical units.
//!
//! Gate-dependent expectations (signal, interference, transmit power) are
//! Monte-Carlo averages over fixed per-run uniform draws, so gradients flow
//! through the gate reparameterization with common random numbers.

use crate::error::{Error, Result};
use crate::gates::{gate_from_uniform, gate_from_uniform_grad, on_probability, on_probability_grad, GateParams};
use crate::nlp::Problem;
use crate::state::StateLayout;
use num_complex::Complex64;
use std::io::Write;

/// Box constraints keeping gate parameters in a numerically sane range.
#[derive(Debug, Clone, Copy)]
pub struct GateBox {
    pub log_alpha: (f64, f64),
    pub beta: (f64, f64),
}

impl Default for GateBox {
    fn default() -> Self {
        Self {
            log_alpha: (-8.0, 8.0),
            beta: (0.2, 3.0),
        }
    }
}

/// One base station's local problem: maximize weight * rho subject to the
/// transformed constraint system h(l) <= 0.
#[derive(Debug, Clone)]
pub struct BsAgent {
    pub layout: StateLayout,
    /// utility weight c_b
    pub weight: f64,
    /// normalized channels to every global user, chan[k][n]
    pub chan: Vec<Vec<Complex64>>,
    /// global user indices served by this BS (chan row order of own users)
    pub own: Vec<usize>,
    /// remaining global users, fixing the caused-ICI block order
    pub others: Vec<usize>,
    /// transmit power cap, watts
    pub p_max_tx: f64,
    /// per-user rate floor, bit/s/Hz
    pub rate_floor: f64,
    /// backhaul cap on the sum of rate upper bounds, bit/s/Hz
    pub backhaul: f64,
    pub theta: f64,
    pub p_ant: f64,
    pub p_fixed: f64,
    /// signal-processing watts per bit/s/Hz
    pub p_sp: f64,
    pub stretch: (f64, f64),
    /// fixed uniforms for gate sampling, uniforms[sample][antenna]
    pub uniforms: Vec<Vec<f64>>,
    pub gate_box: GateBox,
}

struct McEval {
    /// gate values zeta[s][n] and their (dlog_alpha, dbeta) derivatives
    zeta: Vec<Vec<f64>>,
    dza: Vec<Vec<f64>>,
    dzb: Vec<Vec<f64>>,
    /// inner products a[s][k_global][j] = h_k^H (zeta_s o w_j)
    a: Vec<Vec<Vec<Complex64>>>,
    /// precoder w[j][n]
    w: Vec<Vec<Complex64>>,
    /// MC signal power per own user
    sig: Vec<f64>,
    /// MC intra-cell interference per own user
    intra: Vec<f64>,
    /// MC caused ICI per out-of-cell user (others order)
    caused: Vec<f64>,
    /// MC gated transmit power
    ptx: f64,
    /// expected active antenna count and per-antenna gradients
    ea: f64,
    ea_grad: Vec<(f64, f64)>,
}

impl BsAgent {
    pub fn k_own(&self) -> usize {
        self.layout.k_own
    }
    pub fn k_other(&self) -> usize {
        self.layout.k_total - self.layout.k_own
    }
    pub fn n_ant(&self) -> usize {
        self.layout.n_ant
    }
    pub fn n_samples(&self) -> usize {
        self.uniforms.len()
    }

    fn gate_params(&self, x: &[f64], n: usize) -> GateParams {
        GateParams {
            log_alpha: x[self.layout.phi_log_alpha(n)],
            beta: x[self.layout.phi_beta(n)],
            eta0: self.stretch.0,
            eta1: self.stretch.1,
        }
    }

    fn mc_eval(&self, x: &[f64]) -> McEval {
        let lay = &self.layout;
        let n_ant = lay.n_ant;
        let k = lay.k_own;
        let k_tot = lay.k_total;
        let s_count = self.uniforms.len();
        let w: Vec<Vec<Complex64>> = (0..k)
            .map(|j| {
                (0..n_ant)
                    .map(|n| Complex64::new(x[lay.w_re(j, n)], x[lay.w_im(j, n)]))
                    .collect()
            })
            .collect();
        let mut zeta = vec![vec![0.0; n_ant]; s_count];
        let mut dza = vec![vec![0.0; n_ant]; s_count];
        let mut dzb = vec![vec![0.0; n_ant]; s_count];
        let mut ea = 0.0;
        let mut ea_grad = Vec::with_capacity(n_ant);
        for n in 0..n_ant {
            let phi = self.gate_params(x, n);
            // clamp beta for the MC samples only: the box constraints keep the
            // iterates interior, but the barrier line search may probe outside
            let phi = GateParams {
                beta: phi.beta.max(1e-3),
                ..phi
            };
            for s in 0..s_count {
                let u = self.uniforms[s][n];
                zeta[s][n] = gate_from_uniform(u, &phi);
                let (ga, gb) = gate_from_uniform_grad(u, &phi);
                dza[s][n] = ga;
                dzb[s][n] = gb;
            }
            ea += on_probability(&phi);
            ea_grad.push(on_probability_grad(&phi));
        }
        let mut a = vec![vec![vec![Complex64::new(0.0, 0.0); k]; k_tot]; s_count];
        for s in 0..s_count {
            for kv in 0..k_tot {
                let h = &self.chan[kv];
                for j in 0..k {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for n in 0..n_ant {
                        acc += h[n].conj() * zeta[s][n] * w[j][n];
                    }
                    a[s][kv][j] = acc;
                }
            }
        }
        let inv_s = 1.0 / s_count as f64;
        let mut sig = vec![0.0; k];
        let mut intra = vec![0.0; k];
        for (jk, &kg) in self.own.iter().enumerate() {
            for s in 0..s_count {
                for j in 0..k {
                    let p = a[s][kg][j].norm_sqr();
                    if j == jk {
                        sig[jk] += p;
                    } else {
                        intra[jk] += p;
                    }
                }
            }
            sig[jk] *= inv_s;
            intra[jk] *= inv_s;
        }
        let mut caused = vec![0.0; self.others.len()];
        for (jo, &kg) in self.others.iter().enumerate() {
            for s in 0..s_count {
                for j in 0..k {
                    caused[jo] += a[s][kg][j].norm_sqr();
                }
            }
            caused[jo] *= inv_s;
        }
        let mut ptx = 0.0;
        for s in 0..s_count {
            for j in 0..k {
                for n in 0..n_ant {
                    ptx += zeta[s][n] * zeta[s][n] * w[j][n].norm_sqr();
                }
            }
        }
        ptx *= inv_s;
        McEval {
            zeta,
            dza,
            dzb,
            a,
            w,
            sig,
            intra,
            caused,
            ptx,
            ea,
            ea_grad,
        }
    }

    /// Add the gradient of (1/S) sum_s |a[s][kv][j]|^2 * weight into `row`.
    fn add_pair_grad(&self, row: &mut [f64], mc: &McEval, kv: usize, j: usize, weight: f64) {
        let lay = &self.layout;
        let inv_s = weight / self.uniforms.len() as f64;
        let h = &self.chan[kv];
        for s in 0..self.uniforms.len() {
            let ac = mc.a[s][kv][j].conj();
            for n in 0..lay.n_ant {
                let hz = h[n].conj() * mc.zeta[s][n];
                let c = ac * hz;
                row[lay.w_re(j, n)] += inv_s * 2.0 * c.re;
                row[lay.w_im(j, n)] -= inv_s * 2.0 * c.im;
                if mc.dza[s][n] != 0.0 || mc.dzb[s][n] != 0.0 {
                    let dval = 2.0 * (ac * h[n].conj() * mc.w[j][n]).re;
                    row[lay.phi_log_alpha(n)] += inv_s * dval * mc.dza[s][n];
                    row[lay.phi_beta(n)] += inv_s * dval * mc.dzb[s][n];
                }
            }
        }
    }

    /// Add the gradient of the MC transmit power * weight into `row`.
    fn add_ptx_grad(&self, row: &mut [f64], mc: &McEval, weight: f64) {
        let lay = &self.layout;
        let inv_s = weight / self.uniforms.len() as f64;
        for s in 0..self.uniforms.len() {
            for n in 0..lay.n_ant {
                let z = mc.zeta[s][n];
                let mut wnorm = 0.0;
                for j in 0..lay.k_own {
                    let wv = mc.w[j][n];
                    wnorm += wv.norm_sqr();
                    row[lay.w_re(j, n)] += inv_s * 2.0 * z * z * wv.re;
                    row[lay.w_im(j, n)] += inv_s * 2.0 * z * z * wv.im;
                }
                if mc.dza[s][n] != 0.0 || mc.dzb[s][n] != 0.0 {
                    row[lay.phi_log_alpha(n)] += inv_s * 2.0 * z * wnorm * mc.dza[s][n];
                    row[lay.phi_beta(n)] += inv_s * 2.0 * z * wnorm * mc.dzb[s][n];
                }
            }
        }
    }

    /// Names of the constraint rows, in order.
    pub fn constraint_names(&self) -> Vec<String> {
        let k = self.k_own();
        let mut names = vec!["ee_bound".to_string()];
        for fam in ["rate_lb", "rate_ub", "sinr", "interference"] {
            for j in 0..k {
                names.push(format!("{fam}_{j}"));
            }
        }
        for j in 0..self.k_other() {
            names.push(format!("caused_ici_{j}"));
        }
        names.push("backhaul".to_string());
        names.push("power_def".to_string());
        names.push("power_cap".to_string());
        for j in 0..k {
            names.push(format!("rate_floor_{j}"));
        }
        for j in 0..k {
            names.push(format!("t_min_{j}"));
        }
        for j in 0..k {
            names.push(format!("s_nonneg_{j}"));
        }
        for i in 0..self.layout.k_total {
            names.push(format!("nu_nonneg_{i}"));
        }
        names.push("rho_nonneg".to_string());
        for n in 0..self.n_ant() {
            names.push(format!("log_alpha_lo_{n}"));
            names.push(format!("log_alpha_hi_{n}"));
            names.push(format!("beta_lo_{n}"));
            names.push(format!("beta_hi_{n}"));
        }
        names
    }

    /// Write named constraint residuals at `x` as CSV (debug aid).
    pub fn dump_constraints_csv<W: Write>(&self, x: &[f64], out: &mut W) -> Result<()> {
        let (h, _) = self.constraint_rows(x);
        let names = self.constraint_names();
        writeln!(out, "constraint,residual").map_err(Error::from)?;
        for (name, v) in names.iter().zip(&h) {
            writeln!(out, "{name},{v}").map_err(Error::from)?;
        }
        Ok(())
    }
}

impl Problem for BsAgent {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn n_con(&self) -> usize {
        let k = self.k_own();
        1 + 4 * k + self.k_other() + 3 + 2 * k + k + self.layout.k_total + 1 + 4 * self.n_ant()
    }

    fn objective(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut g = vec![0.0; self.dim()];
        g[self.layout.rho()] = -self.weight;
        (-self.weight * x[self.layout.rho()], g)
    }

    fn constraint_rows(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<(usize, f64)>>) {
        let lay = &self.layout;
        let k = lay.k_own;
        let dim = self.dim();
        let mc = self.mc_eval(x);
        let ln2 = std::f64::consts::LN_2;
        let mut h = Vec::with_capacity(self.n_con());
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(self.n_con());
        let mut dense = vec![0.0; dim];
        let push_dense = |h: &mut Vec<f64>, rows: &mut Vec<Vec<(usize, f64)>>, val: f64, dense: &mut Vec<f64>| {
            h.push(val);
            rows.push(
                dense
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| (i, *v))
                    .collect(),
            );
            dense.iter_mut().for_each(|v| *v = 0.0);
        };
        let rho = x[lay.rho()];
        let p_hat = x[lay.p_hat()];
        // ee_bound: rho * P_hat - sum xi <= 0
        {
            let xi_sum: f64 = (0..k).map(|j| x[lay.xi(j)]).sum();
            dense[lay.rho()] = p_hat;
            dense[lay.p_hat()] = rho;
            for j in 0..k {
                dense[lay.xi(j)] = -1.0;
            }
            push_dense(&mut h, &mut rows, rho * p_hat - xi_sum, &mut dense);
        }
        // rate_lb: xi - log2(1 + s) <= 0
        for j in 0..k {
            let s = x[lay.s(j)];
            dense[lay.xi(j)] = 1.0;
            dense[lay.s(j)] = -1.0 / ((1.0 + s) * ln2);
            push_dense(&mut h, &mut rows, x[lay.xi(j)] - (1.0 + s).log2(), &mut dense);
        }
        // rate_ub: log2(1 + s) - r_ub <= 0
        for j in 0..k {
            let s = x[lay.s(j)];
            dense[lay.s(j)] = 1.0 / ((1.0 + s) * ln2);
            dense[lay.r_ub(j)] = -1.0;
            push_dense(&mut h, &mut rows, (1.0 + s).log2() - x[lay.r_ub(j)], &mut dense);
        }
        // sinr (product form): s * t - Signal <= 0
        for j in 0..k {
            let s = x[lay.s(j)];
            let t = x[lay.t(j)];
            dense[lay.s(j)] = t;
            dense[lay.t(j)] = s;
            self.add_pair_grad(&mut dense, &mc, self.own[j], j, -1.0);
            push_dense(&mut h, &mut rows, s * t - mc.sig[j], &mut dense);
        }
        // interference bound: Intra + nu_sum + 1 - t <= 0 (noise = 1 internal)
        for j in 0..k {
            dense[lay.t(j)] = -1.0;
            dense[lay.nu_sum(j)] = 1.0;
            for jj in 0..k {
                if jj != j {
                    self.add_pair_grad(&mut dense, &mc, self.own[j], jj, 1.0);
                }
            }
            push_dense(
                &mut h,
                &mut rows,
                mc.intra[j] + x[lay.nu_sum(j)] + 1.0 - x[lay.t(j)],
                &mut dense,
            );
        }
        // caused ICI: Caused_j - nu_caused_j <= 0
        for (jo, _) in self.others.iter().enumerate() {
            dense[lay.nu_caused(jo)] = -1.0;
            for j in 0..k {
                self.add_pair_grad(&mut dense, &mc, self.others[jo], j, 1.0);
            }
            push_dense(
                &mut h,
                &mut rows,
                mc.caused[jo] - x[lay.nu_caused(jo)],
                &mut dense,
            );
        }
        // backhaul: sum r_ub - C <= 0
        {
            let mut sum = 0.0;
            for j in 0..k {
                dense[lay.r_ub(j)] = 1.0;
                sum += x[lay.r_ub(j)];
            }
            push_dense(&mut h, &mut rows, sum - self.backhaul, &mut dense);
        }
        // power_def: theta (Ptx + Ea * p_ant) + p_fixed + p_sp * sum r_ub - P_hat <= 0
        {
            self.add_ptx_grad(&mut dense, &mc, self.theta);
            for (n, &(ga, gb)) in mc.ea_grad.iter().enumerate() {
                dense[lay.phi_log_alpha(n)] += self.theta * self.p_ant * ga;
                dense[lay.phi_beta(n)] += self.theta * self.p_ant * gb;
            }
            let mut rub_sum = 0.0;
            for j in 0..k {
                dense[lay.r_ub(j)] += self.p_sp;
                rub_sum += x[lay.r_ub(j)];
            }
            dense[lay.p_hat()] = -1.0;
            let val = self.theta * (mc.ptx + mc.ea * self.p_ant) + self.p_fixed
                + self.p_sp * rub_sum
                - p_hat;
            push_dense(&mut h, &mut rows, val, &mut dense);
        }
        // power_cap: Ptx - p_max <= 0
        {
            self.add_ptx_grad(&mut dense, &mc, 1.0);
            push_dense(&mut h, &mut rows, mc.ptx - self.p_max_tx, &mut dense);
        }
        // rate floors: r_floor - xi <= 0
        for j in 0..k {
            dense[lay.xi(j)] = -1.0;
            push_dense(&mut h, &mut rows, self.rate_floor - x[lay.xi(j)], &mut dense);
        }
        // t >= noise: 1 - t <= 0
        for j in 0..k {
            dense[lay.t(j)] = -1.0;
            push_dense(&mut h, &mut rows, 1.0 - x[lay.t(j)], &mut dense);
        }
        // s >= 0
        for j in 0..k {
            dense[lay.s(j)] = -1.0;
            push_dense(&mut h, &mut rows, -x[lay.s(j)], &mut dense);
        }
        // nu >= 0
        for i in 0..lay.k_total {
            dense[lay.nu(i)] = -1.0;
            push_dense(&mut h, &mut rows, -x[lay.nu(i)], &mut dense);
        }
        // rho >= 0
        {
            dense[lay.rho()] = -1.0;
            push_dense(&mut h, &mut rows, -rho, &mut dense);
        }
        // gate boxes
        for n in 0..lay.n_ant {
            let la = x[lay.phi_log_alpha(n)];
            let be = x[lay.phi_beta(n)];
            dense[lay.phi_log_alpha(n)] = -1.0;
            push_dense(&mut h, &mut rows, self.gate_box.log_alpha.0 - la, &mut dense);
            dense[lay.phi_log_alpha(n)] = 1.0;
            push_dense(&mut h, &mut rows, la - self.gate_box.log_alpha.1, &mut dense);
            dense[lay.phi_beta(n)] = -1.0;
            push_dense(&mut h, &mut rows, self.gate_box.beta.0 - be, &mut dense);
            dense[lay.phi_beta(n)] = 1.0;
            push_dense(&mut h, &mut rows, be - self.gate_box.beta.1, &mut dense);
        }
        debug_assert_eq!(h.len(), self.n_con());
        (h, rows)
    }
}

/// Build a strictly feasible starting state from a precoder whose transmit
/// power is below the cap. `nu_sum` supplies the received-ICI values (e.g.
/// from a consistent global warm start); `phi0` the initial gate parameters.
pub fn feasible_start(
    agent: &BsAgent,
    precoder: &[Vec<Complex64>],
    nu_sum_init: &[f64],
    phi0: (f64, f64),
    slack: f64,
) -> Result<Vec<f64>> {
    let lay = &agent.layout;
    let k = lay.k_own;
    let mut x = vec![0.0; lay.dim()];
    for n in 0..lay.n_ant {
        x[lay.phi_log_alpha(n)] = phi0.0;
        x[lay.phi_beta(n)] = phi0.1;
    }
    for j in 0..k {
        for n in 0..lay.n_ant {
            x[lay.w_re(j, n)] = precoder[j][n].re;
            x[lay.w_im(j, n)] = precoder[j][n].im;
        }
    }
    // scale the precoder down if its gated power is at or above the cap
    let mc = agent.mc_eval(&x);
    let mut scale = 1.0;
    if mc.ptx >= agent.p_max_tx * (1.0 - slack) {
        scale = (agent.p_max_tx * (1.0 - slack) / mc.ptx).sqrt();
        for j in 0..k {
            for n in 0..lay.n_ant {
                x[lay.w_re(j, n)] *= scale;
                x[lay.w_im(j, n)] *= scale;
            }
        }
    }
    let mc = agent.mc_eval(&x);
    let _ = scale;
    for (jo, &c) in mc.caused.iter().enumerate() {
        x[lay.nu_caused(jo)] = c * (1.0 + slack) + slack;
    }
    let mut xi_sum = 0.0;
    let mut rub_sum = 0.0;
    for j in 0..k {
        let nu_sum = nu_sum_init.get(j).copied().unwrap_or(0.0).max(0.0) + slack;
        x[lay.nu_sum(j)] = nu_sum;
        let t = (mc.intra[j] + nu_sum + 1.0) * (1.0 + slack) + slack;
        x[lay.t(j)] = t;
        let s = (mc.sig[j] / t * (1.0 - slack)).max(0.0) + 0.0;
        let s = if s <= 0.0 { slack } else { s };
        x[lay.s(j)] = s;
        let rate = (1.0 + s).log2();
        let xi = rate * (1.0 - slack);
        if xi <= agent.rate_floor {
            return Err(Error::Infeasible(format!(
                "warm start cannot satisfy rate floor for user {j}: achievable {rate:.4} b/s/Hz vs floor {:.4}",
                agent.rate_floor
            )));
        }
        x[lay.xi(j)] = xi;
        xi_sum += xi;
        let r_ub = rate * (1.0 + slack) + slack;
        x[lay.r_ub(j)] = r_ub;
        rub_sum += r_ub;
    }
    if rub_sum >= agent.backhaul {
        return Err(Error::Infeasible(
            "warm start exceeds the backhaul cap".into(),
        ));
    }
    let power = agent.theta * (mc.ptx + mc.ea * agent.p_ant) + agent.p_fixed + agent.p_sp * rub_sum;
    x[lay.p_hat()] = power * (1.0 + slack) + slack;
    x[lay.rho()] = (xi_sum / x[lay.p_hat()]) * (1.0 - slack);
    Ok(x)
}

/// Deterministic per-(BS, purpose) uniforms for the gate Monte-Carlo draws.
pub fn gate_uniforms(seed: u64, b: usize, n_ant: usize, samples: usize) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (0x9e3779b97f4a7c15u64.wrapping_mul(b as u64 + 1)));
    (0..samples)
        .map(|_| {
            (0..n_ant)
                .map(|_| loop {
                    let u: f64 = rng.gen();
                    if u > 1e-12 && u < 1.0 - 1e-12 {
                        break u;
                    }
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::DEFAULT_STRETCH;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_agent(n_ant: usize, k_own: usize, k_total: usize, samples: usize, seed: u64) -> BsAgent {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chan: Vec<Vec<Complex64>> = (0..k_total)
            .map(|_| {
                (0..n_ant)
                    .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        BsAgent {
            layout: StateLayout {
                n_ant,
                k_own,
                k_total,
            },
            weight: 1.0,
            chan,
            own: (0..k_own).collect(),
            others: (k_own..k_total).collect(),
            p_max_tx: 10.0,
            rate_floor: 0.1,
            backhaul: 100.0,
            theta: 1.2,
            p_ant: 0.5,
            p_fixed: 5.0,
            p_sp: 0.01,
            stretch: DEFAULT_STRETCH,
            uniforms: gate_uniforms(seed, 0, n_ant, samples),
            gate_box: GateBox::default(),
        }
    }

    fn random_point(agent: &BsAgent, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let lay = &agent.layout;
        let mut x: Vec<f64> = (0..lay.dim()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        // keep the state in ranges where the constraints are smooth
        x[lay.rho()] = rng.gen_range(0.1..1.0);
        x[lay.p_hat()] = rng.gen_range(1.0..10.0);
        for j in 0..lay.k_own {
            x[lay.t(j)] = rng.gen_range(1.1..3.0);
            x[lay.s(j)] = rng.gen_range(0.1..2.0);
            x[lay.xi(j)] = rng.gen_range(0.1..1.0);
            x[lay.r_ub(j)] = rng.gen_range(0.5..2.0);
        }
        for n in 0..lay.n_ant {
            x[lay.phi_log_alpha(n)] = rng.gen_range(-1.5..1.5);
            x[lay.phi_beta(n)] = rng.gen_range(0.4..1.2);
        }
        x
    }

    /// true when some gate sample sits within `margin` of a clamp kink,
    /// where the sampled-gate derivative is one-sided
    fn near_kink(agent: &BsAgent, x: &[f64], margin: f64) -> bool {
        let lay = &agent.layout;
        for n in 0..lay.n_ant {
            let phi = GateParams {
                log_alpha: x[lay.phi_log_alpha(n)],
                beta: x[lay.phi_beta(n)],
                eta0: agent.stretch.0,
                eta1: agent.stretch.1,
            };
            for u_row in &agent.uniforms {
                let z = (crate::gates::gate_from_uniform(u_row[n], &phi) - 0.0).abs();
                let raw = {
                    let l = (u_row[n] / (1.0 - u_row[n])).ln();
                    let sg = 1.0 / (1.0 + (-(l + phi.log_alpha) / phi.beta).exp());
                    phi.eta0 + (phi.eta1 - phi.eta0) * sg
                };
                if (raw - 0.0).abs() < margin || (raw - 1.0).abs() < margin {
                    return true;
                }
                let _ = z;
            }
        }
        false
    }

    #[test]
    fn constraint_count_matches_names() {
        let agent = toy_agent(3, 2, 4, 4, 1);
        assert_eq!(agent.constraint_names().len(), agent.n_con());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_point(&agent, &mut rng);
        let (h, rows) = agent.constraint_rows(&x);
        assert_eq!(h.len(), agent.n_con());
        assert_eq!(rows.len(), agent.n_con());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let agent = toy_agent(2, 1, 2, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut checked = 0;
        while checked < 30 {
            let x = random_point(&agent, &mut rng);
            if near_kink(&agent, &x, 1e-3) {
                continue;
            }
            let (h0, rows) = agent.constraint_rows(&x);
            let dim = agent.dim();
            let eps = 1e-6;
            for d in 0..dim {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[d] += eps;
                xm[d] -= eps;
                if near_kink(&agent, &xp, 1e-9) || near_kink(&agent, &xm, 1e-9) {
                    continue;
                }
                let (hp, _) = agent.constraint_rows(&xp);
                let (hm, _) = agent.constraint_rows(&xm);
                for i in 0..h0.len() {
                    let fd = (hp[i] - hm[i]) / (2.0 * eps);
                    let an = rows[i]
                        .iter()
                        .find(|(c, _)| *c == d)
                        .map(|(_, v)| *v)
                        .unwrap_or(0.0);
                    let scale = an.abs().max(fd.abs()).max(1.0);
                    assert!(
                        (an - fd).abs() / scale < 1e-5,
                        "constraint {} ({}), dim {}: analytic {} vs fd {}",
                        i,
                        agent.constraint_names()[i],
                        d,
                        an,
                        fd
                    );
                }
            }
            checked += 1;
        }
    }

    #[test]
    fn hand_built_feasible_point_is_strictly_interior() {
        // 1 BS / 1 user toy with slack on every constraint
        let mut agent = toy_agent(2, 1, 1, 4, 5);
        agent.others = vec![];
        agent.chan = vec![vec![Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.5)]];
        let w0 = vec![vec![Complex64::new(0.5, 0.0), Complex64::new(0.2, 0.1)]];
        let x = feasible_start(&agent, &w0, &[], (1.0, 0.66), 0.1).unwrap();
        let (h, _) = agent.constraint_rows(&x);
        for (name, v) in agent.constraint_names().iter().zip(&h) {
            assert!(*v < 0.0, "{name} not strictly feasible: {v}");
        }
    }

    #[test]
    fn power_cap_violation_residual_convention() {
        // gates pinned fully on: samples clamp to exactly 1, so the MC
        // transmit power equals ||w||^2 and exceeding the cap by 1 W gives +1
        let mut agent = toy_agent(1, 1, 1, 2, 6);
        agent.others = vec![];
        agent.chan = vec![vec![Complex64::new(1.0, 0.0)]];
        agent.uniforms = vec![vec![0.9], vec![0.8]];
        agent.p_max_tx = 3.0;
        let lay = agent.layout;
        let mut x = vec![0.0; lay.dim()];
        x[lay.phi_log_alpha(0)] = 8.0; // deep in the always-on regime
        x[lay.phi_beta(0)] = 0.2;
        x[lay.w_re(0, 0)] = 2.0; // ||w||^2 = 4 = p_max + 1
        x[lay.t(0)] = 2.0;
        let (h, _) = agent.constraint_rows(&x);
        let names = agent.constraint_names();
        let idx = names.iter().position(|n| n == "power_cap").unwrap();
        assert!((h[idx] - 1.0).abs() < 1e-12, "power cap residual {}", h[idx]);
    }

    #[test]
    fn objective_is_weighted_rho() {
        let agent = toy_agent(2, 1, 2, 4, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_point(&agent, &mut rng);
        let (v, g) = agent.objective(&x);
        assert!((v + agent.weight * x[agent.layout.rho()]).abs() < 1e-15);
        assert_eq!(g[agent.layout.rho()], -agent.weight);
        assert_eq!(g.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn feasible_start_scales_down_over_budget_precoders() {
        let mut agent = toy_agent(2, 1, 1, 8, 9);
        agent.others = vec![];
        agent.chan = vec![vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]];
        agent.p_max_tx = 0.5;
        let w0 = vec![vec![Complex64::new(3.0, 0.0), Complex64::new(0.0, 3.0)]];
        let x = feasible_start(&agent, &w0, &[], (1.0, 0.66), 0.05).unwrap();
        let (h, _) = agent.constraint_rows(&x);
        let idx = agent
            .constraint_names()
            .iter()
            .position(|n| n == "power_cap")
            .unwrap();
        assert!(h[idx] < 0.0);
    }

    #[test]
    fn constraint_dump_has_one_row_per_constraint() {
        let agent = toy_agent(2, 1, 2, 2, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_point(&agent, &mut rng);
        let mut buf = Vec::new();
        agent.dump_constraints_csv(&x, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), agent.n_con() + 1);
        assert!(text.starts_with("constraint,residual"));
    }

    #[test]
    fn gate_uniforms_are_deterministic_and_open_interval() {
        let a = gate_uniforms(99, 2, 4, 8);
        let b = gate_uniforms(99, 2, 4, 8);
        assert_eq!(a, b);
        let c = gate_uniforms(99, 3, 4, 8);
        assert_ne!(a, c);
        for row in &a {
            for &u in row {
                assert!(u > 0.0 && u < 1.0);
            }
        }
    }
}
