//! Interference, SINR, rate, power, and the weighted energy-efficiency utility.
//!
//! All quantities here are in physical units: watts, Hz, bits/s, bits/joule.
//! Gains stay linear; dB conversions happen only at the configuration boundary.

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::geometry::UserLayout;
use num_complex::Complex64;
use std::io::Write;

/// Per-BS hardware power model constants.
#[derive(Debug, Clone)]
pub struct PowerModel {
    /// Hardware efficiency factor scaling the radio terms, >= 1.
    pub theta: f64,
    /// Overhead watts per active antenna.
    pub p_ant_w: f64,
    /// Constant power floor in watts.
    pub p_fixed_w: f64,
    /// Signal-processing watts per (bit/s).
    pub p_sp_unit_w: f64,
    /// Hard cap on total BS power, watts.
    pub p_max_w: f64,
    /// Receiver noise power in watts over the whole band.
    pub noise_w: f64,
    pub bandwidth_hz: f64,
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        if self.theta < 1.0
            || self.p_ant_w < 0.0
            || self.p_fixed_w <= 0.0
            || self.p_sp_unit_w < 0.0
            || self.noise_w <= 0.0
            || self.bandwidth_hz <= 0.0
        {
            return Err(Error::Config("power model constants out of range".into()));
        }
        if self.p_max_w <= self.p_fixed_w {
            return Err(Error::Config("p_max must exceed p_fixed".into()));
        }
        Ok(())
    }
}

/// QoS limits and utility weights.
#[derive(Debug, Clone)]
pub struct RateLimits {
    /// Per-user rate floor, bits/s.
    pub r_min_user: f64,
    /// Per-BS backhaul cap, bits/s.
    pub r_max_bs: f64,
    /// Per-BS utility weights c_b.
    pub weights: Vec<f64>,
}

/// Per-BS precoding matrices; `w[b][j]` is the length-N_b vector for the
/// j-th served user of BS b (in `UserLayout::users_of(b)` order).
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    pub w: Vec<Vec<Vec<Complex64>>>,
}

/// Evaluated link and power metrics for one precoder set.
#[derive(Debug, Clone)]
pub struct Metrics {
    /// sinr[b][j] for the j-th served user of BS b.
    pub sinr: Vec<Vec<f64>>,
    /// rate[b][j] in bits/s.
    pub rate: Vec<Vec<f64>>,
    /// Total power per BS, watts.
    pub power: Vec<f64>,
    /// ee[b] = sum_j rate[b][j] / power[b], bits/joule.
    pub ee: Vec<f64>,
    pub utility: f64,
    /// True when some BS exceeds its hard power cap (soft diagnostic here).
    pub cap_violated: bool,
}

fn dot_h_w(h: &[Complex64], w: &[Complex64]) -> Complex64 {
    h.iter().zip(w).map(|(hi, wi)| hi.conj() * wi).sum()
}

/// Total interference power at user `k` (global index, homed at BS `b`):
/// intra-cell from other served users plus inter-cell from all other BSs.
pub fn interference(
    channels: &ChannelRealization,
    precoders: &PrecoderSet,
    layout: &UserLayout,
    b: usize,
    k: usize,
) -> Result<f64> {
    let own_users = layout.users_of(b);
    let j_self = own_users
        .iter()
        .position(|&u| u == k)
        .ok_or_else(|| Error::InvalidArgument(format!("user {k} not homed at BS {b}")))?;
    let mut acc = 0.0;
    // intra-cell
    let h_own = &channels.h[b][k];
    for (j, w) in precoders.w[b].iter().enumerate() {
        if j == j_self {
            continue;
        }
        if w.len() != h_own.len() {
            return Err(Error::DimensionMismatch(format!(
                "precoder len {} vs channel len {} at BS {b}",
                w.len(),
                h_own.len()
            )));
        }
        acc += dot_h_w(h_own, w).norm_sqr();
    }
    // inter-cell
    for bp in 0..channels.n_bs() {
        if bp == b {
            continue;
        }
        let h_cross = &channels.h[bp][k];
        for w in &precoders.w[bp] {
            if w.len() != h_cross.len() {
                return Err(Error::DimensionMismatch(format!(
                    "precoder len {} vs channel len {} at BS {bp}",
                    w.len(),
                    h_cross.len()
                )));
            }
            acc += dot_h_w(h_cross, w).norm_sqr();
        }
    }
    Ok(acc)
}

/// SINR for user `k` served by BS `b`.
pub fn sinr(
    channels: &ChannelRealization,
    precoders: &PrecoderSet,
    layout: &UserLayout,
    noise_w: f64,
    b: usize,
    k: usize,
) -> Result<f64> {
    assert!(noise_w > 0.0);
    let own_users = layout.users_of(b);
    let j = own_users
        .iter()
        .position(|&u| u == k)
        .ok_or_else(|| Error::InvalidArgument(format!("user {k} not homed at BS {b}")))?;
    let sig = dot_h_w(&channels.h[b][k], &precoders.w[b][j]).norm_sqr();
    let intf = interference(channels, precoders, layout, b, k)?;
    Ok(sig / (intf + noise_w))
}

/// Shannon rate in bits/s.
pub fn user_rate(sinr: f64, bandwidth_hz: f64) -> f64 {
    assert!(sinr >= 0.0);
    bandwidth_hz * (1.0 + sinr).log2()
}

/// Total BS power per the dynamic + hardware + signal-processing split.
pub fn bs_power(
    precoder_b: &[Vec<Complex64>],
    n_active: f64,
    rates_b: &[f64],
    model: &PowerModel,
) -> f64 {
    let tx: f64 = precoder_b
        .iter()
        .map(|w| w.iter().map(|c| c.norm_sqr()).sum::<f64>())
        .sum();
    let sp: f64 = rates_b.iter().sum::<f64>() * model.p_sp_unit_w;
    model.theta * (tx + n_active * model.p_ant_w) + model.p_fixed_w + sp
}

/// Weighted sum of per-BS energy efficiencies; also exposes per-BS terms.
pub fn system_utility(ee: &[f64], weights: &[f64]) -> f64 {
    assert_eq!(ee.len(), weights.len());
    assert!(weights.iter().all(|&c| c >= 0.0));
    ee.iter().zip(weights).map(|(e, c)| e * c).sum()
}

/// Evaluate the full metrics set for one precoder configuration.
///
/// `n_active[b]` is the (possibly fractional, expected) active antenna count.
pub fn evaluate(
    channels: &ChannelRealization,
    precoders: &PrecoderSet,
    layout: &UserLayout,
    n_active: &[f64],
    model: &PowerModel,
    weights: &[f64],
) -> Result<Metrics> {
    let n_bs = channels.n_bs();
    let mut sinr_m = Vec::with_capacity(n_bs);
    let mut rate_m = Vec::with_capacity(n_bs);
    let mut power = Vec::with_capacity(n_bs);
    let mut ee = Vec::with_capacity(n_bs);
    let mut cap_violated = false;
    for b in 0..n_bs {
        let users = layout.users_of(b);
        let mut srow = Vec::with_capacity(users.len());
        let mut rrow = Vec::with_capacity(users.len());
        for &k in &users {
            let s = sinr(channels, precoders, layout, model.noise_w, b, k)?;
            srow.push(s);
            rrow.push(user_rate(s, model.bandwidth_hz));
        }
        let p = bs_power(&precoders.w[b], n_active[b], &rrow, model);
        if p > model.p_max_w {
            cap_violated = true;
        }
        ee.push(rrow.iter().sum::<f64>() / p);
        sinr_m.push(srow);
        rate_m.push(rrow);
        power.push(p);
    }
    let utility = system_utility(&ee, weights);
    Ok(Metrics {
        sinr: sinr_m,
        rate: rate_m,
        power,
        ee,
        utility,
        cap_violated,
    })
}

/// Serialize metrics rows as CSV: iteration, b, k, sinr, rate, power, ee, utility.
pub fn dump_metrics_csv<W: Write>(
    iteration: usize,
    metrics: &Metrics,
    layout: &UserLayout,
    out: &mut W,
) -> Result<()> {
    writeln!(out, "iteration,b,k,sinr,rate,power,ee,utility")?;
    for b in 0..metrics.power.len() {
        for (j, &k) in layout.users_of(b).iter().enumerate() {
            writeln!(
                out,
                "{iteration},{b},{k},{:e},{:e},{:e},{:e},{:e}",
                metrics.sinr[b][j],
                metrics.rate[b][j],
                metrics.power[b],
                metrics.ee[b],
                metrics.utility
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn one_bs_layout(n_users: usize) -> UserLayout {
        UserLayout {
            assignments: vec![0; n_users],
            positions: vec![[0.0, 0.0]; n_users],
            min_user_sep_m: 0.0,
            min_bs_sep_m: 0.0,
        }
    }

    #[test]
    fn no_interferers_means_zero() {
        let channels = ChannelRealization {
            h: vec![vec![vec![c(1.0, 0.0), c(0.5, 0.0)]]],
        };
        let precoders = PrecoderSet {
            w: vec![vec![vec![c(1.0, 0.0), c(0.0, 0.0)]]],
        };
        let layout = one_bs_layout(1);
        let i = interference(&channels, &precoders, &layout, 0, 0).unwrap();
        assert_eq!(i, 0.0);
    }

    #[test]
    fn orthogonal_zf_geometry_has_zero_interference() {
        let channels = ChannelRealization {
            h: vec![vec![
                vec![c(1.0, 0.0), c(0.0, 0.0)],
                vec![c(0.0, 0.0), c(1.0, 0.0)],
            ]],
        };
        let precoders = PrecoderSet {
            w: vec![vec![
                vec![c(1.0, 0.0), c(0.0, 0.0)],
                vec![c(0.0, 0.0), c(1.0, 0.0)],
            ]],
        };
        let layout = one_bs_layout(2);
        let i0 = interference(&channels, &precoders, &layout, 0, 0).unwrap();
        assert_eq!(i0, 0.0);
    }

    #[test]
    fn cross_cell_scalar_interference() {
        // 2 BSs, 1 user each, single antenna. Cross channel g = 1, cross precoder 0.5.
        let channels = ChannelRealization {
            h: vec![
                vec![vec![c(1.0, 0.0)], vec![c(0.3, 0.0)]],
                vec![vec![c(1.0, 0.0)], vec![c(1.0, 0.0)]],
            ],
        };
        let precoders = PrecoderSet {
            w: vec![vec![vec![c(1.0, 0.0)]], vec![vec![c(0.5, 0.0)]]],
        };
        let layout = UserLayout {
            assignments: vec![0, 1],
            positions: vec![[0.0, 0.0]; 2],
            min_user_sep_m: 0.0,
            min_bs_sep_m: 0.0,
        };
        let i = interference(&channels, &precoders, &layout, 0, 0).unwrap();
        assert!((i - 0.25).abs() < 1e-15);
    }

    #[test]
    fn interference_rejects_dimension_mismatch() {
        let channels = ChannelRealization {
            h: vec![vec![vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]]],
        };
        let precoders = PrecoderSet {
            w: vec![vec![vec![c(1.0, 0.0)], vec![c(1.0, 0.0)]]],
        };
        let layout = one_bs_layout(2);
        assert!(interference(&channels, &precoders, &layout, 0, 0).is_err());
    }

    #[test]
    fn sinr_simple_cases() {
        let channels = ChannelRealization {
            h: vec![vec![vec![c(1.0, 0.0), c(0.0, 0.0)]]],
        };
        let precoders = PrecoderSet {
            w: vec![vec![vec![c(1.0, 0.0), c(0.0, 0.0)]]],
        };
        let layout = one_bs_layout(1);
        let s = sinr(&channels, &precoders, &layout, 1.0, 0, 0).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sinr_matches_naive_expansion_on_random_instance() {
        // Oracle: direct triple-loop expansion of Eq. 3a/3b.
        let n_bs = 3;
        let k_per = 2;
        let n_ant = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draw = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Complex64> {
            (0..n)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    c(re, im)
                })
                .collect()
        };
        let n_users = n_bs * k_per;
        let mut h = Vec::new();
        for _ in 0..n_bs {
            let mut per_user = Vec::new();
            for _ in 0..n_users {
                per_user.push(draw(n_ant, &mut rng));
            }
            h.push(per_user);
        }
        let mut w = Vec::new();
        for _ in 0..n_bs {
            let mut cols = Vec::new();
            for _ in 0..k_per {
                cols.push(draw(n_ant, &mut rng));
            }
            w.push(cols);
        }
        let channels = ChannelRealization { h: h.clone() };
        let precoders = PrecoderSet { w: w.clone() };
        let layout = UserLayout {
            assignments: (0..n_users).map(|k| k / k_per).collect(),
            positions: vec![[0.0, 0.0]; n_users],
            min_user_sep_m: 0.0,
            min_bs_sep_m: 0.0,
        };
        let noise = 0.7;
        for b in 0..n_bs {
            for (j, &k) in layout.users_of(b).iter().enumerate() {
                // naive oracle
                let mut intf = 0.0;
                for bp in 0..n_bs {
                    for (jp, wv) in w[bp].iter().enumerate() {
                        if bp == b && jp == j {
                            continue;
                        }
                        intf += dot_h_w(&h[bp][k], wv).norm_sqr();
                    }
                }
                let sig = dot_h_w(&h[b][k], &w[b][j]).norm_sqr();
                let expect = sig / (intf + noise);
                let got = sinr(&channels, &precoders, &layout, noise, b, k).unwrap();
                assert!((got - expect).abs() <= 1e-12 * expect.max(1.0));
            }
        }
    }

    #[test]
    fn sinr_scale_invariant_when_noise_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let draw = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Complex64> {
            (0..n)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    c(re, im)
                })
                .collect()
        };
        let h = vec![vec![draw(4, &mut rng), draw(4, &mut rng)]];
        let w: Vec<Vec<Complex64>> = vec![draw(4, &mut rng), draw(4, &mut rng)];
        let channels = ChannelRealization { h };
        let layout = one_bs_layout(2);
        let p1 = PrecoderSet { w: vec![w.clone()] };
        let scaled: Vec<Vec<Complex64>> = w
            .iter()
            .map(|col| col.iter().map(|x| x * 3.0).collect())
            .collect();
        let p2 = PrecoderSet { w: vec![scaled] };
        let noise = 1e-20;
        let s1 = sinr(&channels, &p1, &layout, noise, 0, 0).unwrap();
        let s2 = sinr(&channels, &p2, &layout, noise, 0, 0).unwrap();
        assert!((s1 - s2).abs() / s1 < 1e-9);
    }

    #[test]
    fn rate_reference_values() {
        assert_eq!(user_rate(0.0, 1e7), 0.0);
        assert!((user_rate(1.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((user_rate(3.0, 1e7) - 2e7).abs() < 1e-6);
    }

    fn model(theta: f64) -> PowerModel {
        PowerModel {
            theta,
            p_ant_w: 1.0,
            p_fixed_w: 5.0,
            p_sp_unit_w: 0.0,
            p_max_w: 100.0,
            noise_w: 1.0,
            bandwidth_hz: 1.0,
        }
    }

    #[test]
    fn bs_power_arithmetic() {
        // theta=1, sum ||w||^2 = 10, n_active=2, p_ant=1, p_fixed=5, rates=0 -> 17 W
        let w = vec![vec![c(10f64.sqrt(), 0.0)]];
        let p = bs_power(&w, 2.0, &[0.0], &model(1.0));
        assert!((p - 17.0).abs() < 1e-12);
        // all-zero precoder, n_active=0 -> p_fixed
        let p0 = bs_power(&[vec![c(0.0, 0.0)]], 0.0, &[0.0], &model(1.0));
        assert!((p0 - 5.0).abs() < 1e-15);
        // theta=2 doubles radio terms only: (10+2)*2+5 = 29
        let p2 = bs_power(&w, 2.0, &[0.0], &model(2.0));
        assert!((p2 - 29.0).abs() < 1e-12);
    }

    #[test]
    fn utility_weighting() {
        // one BS: rate sum 17 bits/s over 17 W -> 1 bit/J
        assert!((system_utility(&[1.0], &[1.0]) - 1.0).abs() < 1e-15);
        // weight zero ignores BS 1
        assert!((system_utility(&[5.0, 2.0], &[0.0, 1.0]) - 2.0).abs() < 1e-15);
        // doubling all weights doubles utility
        let u1 = system_utility(&[1.5, 2.5], &[1.0, 2.0]);
        let u2 = system_utility(&[1.5, 2.5], &[2.0, 4.0]);
        assert!((u2 - 2.0 * u1).abs() < 1e-15);
    }
}
