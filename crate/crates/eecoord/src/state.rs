//! Per-BS local optimization state and its flat-vector packing.
//!
//! The packed layout, per BS: precoder (re/im interleaved, user-major), the
//! EE lower bound rho, the power variable p_hat, per-user interference bounds
//! t, rate lower auxiliaries xi, rate upper auxiliaries r_ub, SINR auxiliaries
//! s, the local interference vector nu (own-user ICI sums first, then the
//! caused-ICI block), and per-antenna gate parameters (log alpha, beta).

use crate::error::{Error, Result};
use crate::gates::GateParams;
use num_complex::Complex64;

/// Dimensions fixing the packed layout of one BS's state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    /// Antennas at this BS.
    pub n_ant: usize,
    /// Users served by this BS.
    pub k_own: usize,
    /// Users in the whole cluster; |nu| = k_total.
    pub k_total: usize,
}

impl StateLayout {
    pub fn dim(&self) -> usize {
        2 * self.n_ant * self.k_own + 2 + 4 * self.k_own + self.k_total + 2 * self.n_ant
    }

    pub fn w_re(&self, user: usize, ant: usize) -> usize {
        2 * (user * self.n_ant + ant)
    }
    pub fn w_im(&self, user: usize, ant: usize) -> usize {
        self.w_re(user, ant) + 1
    }
    pub fn rho(&self) -> usize {
        2 * self.n_ant * self.k_own
    }
    pub fn p_hat(&self) -> usize {
        self.rho() + 1
    }
    pub fn t(&self, k: usize) -> usize {
        self.p_hat() + 1 + k
    }
    pub fn xi(&self, k: usize) -> usize {
        self.t(0) + self.k_own + k
    }
    pub fn r_ub(&self, k: usize) -> usize {
        self.xi(0) + self.k_own + k
    }
    pub fn s(&self, k: usize) -> usize {
        self.r_ub(0) + self.k_own + k
    }
    /// nu section start; first `k_own` entries are the per-own-user ICI sums,
    /// the remaining `k_total - k_own` entries the caused-ICI block.
    pub fn nu(&self, i: usize) -> usize {
        self.s(0) + self.k_own + i
    }
    pub fn nu_sum(&self, k: usize) -> usize {
        self.nu(k)
    }
    pub fn nu_caused(&self, j: usize) -> usize {
        self.nu(self.k_own + j)
    }
    pub fn phi_log_alpha(&self, ant: usize) -> usize {
        self.nu(0) + self.k_total + 2 * ant
    }
    pub fn phi_beta(&self, ant: usize) -> usize {
        self.phi_log_alpha(ant) + 1
    }
}

/// Structured view of one BS's optimization variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalState {
    pub layout: StateLayout,
    /// w[user][antenna], unconstrained precoder weights.
    pub w: Vec<Vec<Complex64>>,
    pub rho: f64,
    pub p_hat: f64,
    pub t: Vec<f64>,
    pub xi: Vec<f64>,
    pub r_ub: Vec<f64>,
    pub s: Vec<f64>,
    pub nu: Vec<f64>,
    /// (log alpha, beta) per antenna.
    pub phi: Vec<(f64, f64)>,
}

impl LocalState {
    pub fn zeros(layout: StateLayout) -> Self {
        Self {
            layout,
            w: vec![vec![Complex64::new(0.0, 0.0); layout.n_ant]; layout.k_own],
            rho: 0.0,
            p_hat: 0.0,
            t: vec![0.0; layout.k_own],
            xi: vec![0.0; layout.k_own],
            r_ub: vec![0.0; layout.k_own],
            s: vec![0.0; layout.k_own],
            nu: vec![0.0; layout.k_total],
            phi: vec![(0.0, 0.0); layout.n_ant],
        }
    }

    pub fn pack(&self) -> Vec<f64> {
        let l = &self.layout;
        let mut v = vec![0.0; l.dim()];
        for (j, col) in self.w.iter().enumerate() {
            for (a, c) in col.iter().enumerate() {
                v[l.w_re(j, a)] = c.re;
                v[l.w_im(j, a)] = c.im;
            }
        }
        v[l.rho()] = self.rho;
        v[l.p_hat()] = self.p_hat;
        for k in 0..l.k_own {
            v[l.t(k)] = self.t[k];
            v[l.xi(k)] = self.xi[k];
            v[l.r_ub(k)] = self.r_ub[k];
            v[l.s(k)] = self.s[k];
        }
        for i in 0..l.k_total {
            v[l.nu(i)] = self.nu[i];
        }
        for a in 0..l.n_ant {
            v[l.phi_log_alpha(a)] = self.phi[a].0;
            v[l.phi_beta(a)] = self.phi[a].1;
        }
        v
    }

    pub fn unpack(layout: StateLayout, v: &[f64]) -> Result<Self> {
        if v.len() != layout.dim() {
            return Err(Error::DimensionMismatch(format!(
                "flat vector length {} vs layout dim {}",
                v.len(),
                layout.dim()
            )));
        }
        let l = &layout;
        let mut st = LocalState::zeros(layout);
        for j in 0..l.k_own {
            for a in 0..l.n_ant {
                st.w[j][a] = Complex64::new(v[l.w_re(j, a)], v[l.w_im(j, a)]);
            }
        }
        st.rho = v[l.rho()];
        st.p_hat = v[l.p_hat()];
        for k in 0..l.k_own {
            st.t[k] = v[l.t(k)];
            st.xi[k] = v[l.xi(k)];
            st.r_ub[k] = v[l.r_ub(k)];
            st.s[k] = v[l.s(k)];
        }
        for i in 0..l.k_total {
            st.nu[i] = v[l.nu(i)];
        }
        for a in 0..l.n_ant {
            st.phi[a] = (v[l.phi_log_alpha(a)], v[l.phi_beta(a)]);
        }
        Ok(st)
    }

    pub fn gate_params(&self, stretch: (f64, f64)) -> Vec<GateParams> {
        self.phi
            .iter()
            .map(|&(la, b)| GateParams {
                log_alpha: la,
                beta: b,
                eta0: stretch.0,
                eta1: stretch.1,
            })
            .collect()
    }
}
