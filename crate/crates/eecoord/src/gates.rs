//! Hard-concrete antenna gates.
//!
//! Each antenna carries a stretched-and-clamped concrete ("hard concrete")
//! switch variable in [0,1] that takes the exact values 0 and 1 with positive
//! probability. The distribution parameters are optimized instead of the
//! discrete on/off decision, which keeps the objective differentiable.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rand::Rng;

/// Parameters of one gate: scale alpha (stored as log alpha), temperature
/// beta, and the stretch interval [eta0, eta1] around [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateParams {
    pub log_alpha: f64,
    pub beta: f64,
    pub eta0: f64,
    pub eta1: f64,
}

/// Default stretch interval.
pub const DEFAULT_STRETCH: (f64, f64) = (-0.2, 1.1);

impl GateParams {
    pub fn new(alpha: f64, beta: f64, eta0: f64, eta1: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::InvalidArgument("gate alpha, beta must be positive".into()));
        }
        if !(eta0 < 0.0 && 1.0 < eta1) {
            return Err(Error::InvalidArgument(
                "stretch interval must satisfy eta0 < 0 < 1 < eta1".into(),
            ));
        }
        Ok(Self {
            log_alpha: alpha.ln(),
            beta,
            eta0,
            eta1,
        })
    }

    pub fn from_log_alpha(log_alpha: f64, beta: f64) -> Self {
        Self {
            log_alpha,
            beta,
            eta0: DEFAULT_STRETCH.0,
            eta1: DEFAULT_STRETCH.1,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }
}

/// One GateParams per (BS, antenna).
#[derive(Debug, Clone)]
pub struct GateBank {
    pub params: Vec<Vec<GateParams>>,
}

impl GateBank {
    pub fn uniform(antenna_counts: &[usize], phi: GateParams) -> Self {
        Self {
            params: antenna_counts.iter().map(|&n| vec![phi; n]).collect(),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(u: f64) -> f64 {
    (u / (1.0 - u)).ln()
}

/// Map a uniform draw through the inverse CDF, stretch, and clamp.
///
/// Used directly for common-random-number sampling inside the solver.
pub fn gate_from_uniform(u: f64, phi: &GateParams) -> f64 {
    let x = sigmoid((logit(u) + phi.log_alpha) / phi.beta);
    let eta = phi.eta0 + (phi.eta1 - phi.eta0) * x;
    eta.clamp(0.0, 1.0)
}

/// Derivatives of the gate value w.r.t. (log alpha, beta) for a fixed
/// uniform draw. Zero when the sample is clamped.
pub fn gate_from_uniform_grad(u: f64, phi: &GateParams) -> (f64, f64) {
    let z = (logit(u) + phi.log_alpha) / phi.beta;
    let x = sigmoid(z);
    let eta = phi.eta0 + (phi.eta1 - phi.eta0) * x;
    if !(0.0..=1.0).contains(&eta) {
        return (0.0, 0.0);
    }
    let dx = x * (1.0 - x);
    let scale = phi.eta1 - phi.eta0;
    (scale * dx / phi.beta, scale * dx * (-z / phi.beta))
}

/// Draw one gate sample in [0,1]; exact 0s and 1s occur with positive
/// probability.
pub fn sample_gate<R: Rng>(phi: &GateParams, rng: &mut R) -> f64 {
    // open-interval uniform to keep logit finite
    let u = loop {
        let u: f64 = rng.gen();
        if u > 0.0 && u < 1.0 {
            break u;
        }
    };
    gate_from_uniform(u, phi)
}

/// CDF of the clamped gate variable at x.
pub fn gate_cdf(x: f64, phi: &GateParams) -> f64 {
    let u = (x - phi.eta0) / (phi.eta1 - phi.eta0);
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    sigmoid(phi.beta * logit(u) - phi.log_alpha)
}

/// P(gate > 0) = 1 - Q(0; phi) for one antenna.
pub fn on_probability(phi: &GateParams) -> f64 {
    1.0 - gate_cdf(0.0, phi)
}

/// Expected number of active antennas at BS b.
pub fn expected_active(bank: &GateBank, b: usize) -> f64 {
    bank.params[b].iter().map(on_probability).sum()
}

/// Analytic gradient of the per-antenna on-probability w.r.t.
/// (log alpha, beta). Returns one pair per antenna of BS b.
pub fn grad_expected_active(bank: &GateBank, b: usize) -> Vec<(f64, f64)> {
    bank.params[b].iter().map(on_probability_grad).collect()
}

/// d(1 - Q(0)) / d(log alpha, beta) for one gate.
pub fn on_probability_grad(phi: &GateParams) -> (f64, f64) {
    let u0 = (0.0 - phi.eta0) / (phi.eta1 - phi.eta0);
    if u0 <= 0.0 || u0 >= 1.0 {
        return (0.0, 0.0);
    }
    let z = phi.beta * logit(u0) - phi.log_alpha;
    let q = sigmoid(z);
    let dq = q * (1.0 - q);
    // d(1-Q)/dlog_alpha = dq ; d(1-Q)/dbeta = -dq * logit(u0)
    (dq, -dq * logit(u0))
}

/// Elementwise product of an unconstrained precoder column with a sampled
/// per-antenna gate vector.
pub fn apply_gates(w_hat: &[Complex64], gates: &[f64]) -> Result<Vec<Complex64>> {
    if w_hat.len() != gates.len() {
        return Err(Error::DimensionMismatch(format!(
            "precoder len {} vs gate len {}",
            w_hat.len(),
            gates.len()
        )));
    }
    Ok(w_hat.iter().zip(gates).map(|(w, &g)| w * g).collect())
}

/// Monte-Carlo mean of a function of the sampled gate vector over S draws,
/// plus the standard error of the mean.
pub fn expected_objective_mc<R, F>(
    f: F,
    params: &[GateParams],
    samples: usize,
    rng: &mut R,
) -> (f64, f64)
where
    R: Rng,
    F: Fn(&[f64]) -> f64,
{
    assert!(samples >= 1);
    let mut vals = Vec::with_capacity(samples);
    let mut gates = vec![0.0; params.len()];
    for _ in 0..samples {
        for (g, phi) in gates.iter_mut().zip(params) {
            *g = sample_gate(phi, rng);
        }
        vals.push(f(&gates));
    }
    let n = samples as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let se = if samples > 1 { (var / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, se)
}
