//! Large-scale and small-scale channel generation.
//!
//! Path loss follows the urban-macro style law `-139.5 - 35 log10(d)` dB with
//! log-normal shadowing; small-scale fading is i.i.d. Rayleigh, so each
//! channel vector is complex Gaussian with per-entry variance `beta`.

use crate::error::Result;
use crate::geometry::{wrap_distance, Topology, UserLayout};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::io::Write;

/// Distances below this are clamped before the path-loss law is applied.
pub const D_MIN_M: f64 = 10.0;

/// Linear power gains beta[b][k] for every BS-user pair.
#[derive(Debug, Clone)]
pub struct LargeScaleGains {
    pub beta: Vec<Vec<f64>>,
}

/// One coherence block of small-scale fading: h[b][k] has length N_b.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: Vec<Vec<Vec<Complex64>>>,
}

impl ChannelRealization {
    pub fn n_bs(&self) -> usize {
        self.h.len()
    }
}

/// Deterministic path loss in dB at distance `d` meters.
///
/// Distances below [`D_MIN_M`] are clamped; the clamp event is logged.
pub fn pathloss_db(d: f64) -> f64 {
    let d = if d < D_MIN_M {
        log::debug!("pathloss distance {d:.3} m below d_min, clamped to {D_MIN_M} m");
        D_MIN_M
    } else {
        d
    };
    -139.5 - 35.0 * d.log10()
}

/// Draw large-scale gains with log-normal shadowing of the given std in dB.
pub fn draw_large_scale<R: Rng>(
    topology: &Topology,
    layout: &UserLayout,
    shadow_sigma_db: f64,
    rng: &mut R,
) -> LargeScaleGains {
    assert!(shadow_sigma_db >= 0.0);
    let span = topology.span_m;
    let mut beta = Vec::with_capacity(topology.n_cells());
    for bp in &topology.bs_positions {
        let mut row = Vec::with_capacity(layout.n_users());
        for up in &layout.positions {
            let d = wrap_distance(*bp, *up, span);
            let shadow: f64 = {
                let z: f64 = StandardNormal.sample(rng);
                z * shadow_sigma_db
            };
            row.push(10f64.powf((pathloss_db(d) + shadow) / 10.0));
        }
        beta.push(row);
    }
    LargeScaleGains { beta }
}

/// Draw one Rayleigh fading realization; h_{b,k} ~ CN(0, beta_{b,k} I).
pub fn draw_channel<R: Rng>(
    gains: &LargeScaleGains,
    antenna_counts: &[usize],
    rng: &mut R,
) -> ChannelRealization {
    assert_eq!(gains.beta.len(), antenna_counts.len());
    let mut h = Vec::with_capacity(gains.beta.len());
    for (b, row) in gains.beta.iter().enumerate() {
        let n = antenna_counts[b];
        assert!(n >= 1);
        let mut per_user = Vec::with_capacity(row.len());
        for &beta in row {
            let sd = (beta / 2.0).sqrt();
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                v.push(Complex64::new(re * sd, im * sd));
            }
            per_user.push(v);
        }
        h.push(per_user);
    }
    ChannelRealization { h }
}

/// Dump positions and gains as CSV: b, k, x, y, d_m, beta_linear.
pub fn dump_gains_csv<W: Write>(
    topology: &Topology,
    layout: &UserLayout,
    gains: &LargeScaleGains,
    out: &mut W,
) -> Result<()> {
    writeln!(out, "b,k,x,y,d_m,beta_linear")?;
    for (b, bp) in topology.bs_positions.iter().enumerate() {
        for (k, up) in layout.positions.iter().enumerate() {
            let d = wrap_distance(*bp, *up, topology.span_m);
            writeln!(
                out,
                "{b},{k},{:.6},{:.6},{:.6},{:e}",
                up[0], up[1], d, gains.beta[b][k]
            )?;
        }
    }
    Ok(())
}
