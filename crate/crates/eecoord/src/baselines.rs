//! Reference schemes: zero-forcing with equal per-user power, Dinkelbach
//! ratio programming over fixed ZF directions, and a direct consensus-ADMM
//! run kept as a divergence illustration on nonconvex instances.

use crate::consensus::SparseMat;
use crate::error::{Error, Result};
use crate::metrics::Metrics;
use crate::nlp::{solve_barrier, BarrierOpts, ExtraTerms, Problem};
use crate::scenario::Scenario;
use nalgebra::DMatrix;
use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub scheme: String,
    pub precoders: Vec<Vec<Vec<Complex64>>>,
    pub metrics: Metrics,
    /// iterative trace: (iteration, value) pairs; ratio q for Dinkelbach,
    /// coupling residual for ADMM
    pub trace: Vec<(usize, f64)>,
}

/// Zero-forcing precoder W = H^H (H H^H)^{-1}, columns rescaled to equal
/// per-user power summing to `total_power`. Falls back to a regularized
/// inverse with a warning when H is rank deficient.
pub fn zf_precoder(h_rows: &[Vec<Complex64>], total_power: f64) -> Result<Vec<Vec<Complex64>>> {
    let k = h_rows.len();
    if k == 0 {
        return Err(Error::InvalidArgument("ZF needs at least one user".into()));
    }
    let n = h_rows[0].len();
    if n < k {
        return Err(Error::InvalidArgument(format!(
            "ZF needs at least as many antennas as users ({n} < {k})"
        )));
    }
    // reception model is h_k^H w_j, so the effective matrix has conjugated rows
    let h = DMatrix::from_fn(k, n, |i, j| h_rows[i][j].conj());
    let hh = &h * h.adjoint();
    let inv = match hh.clone().try_inverse() {
        Some(inv) => inv,
        None => {
            log::warn!("ZF channel matrix rank deficient; using regularized inverse");
            let trace_re: f64 = (0..k).map(|i| hh[(i, i)].re).sum();
            let reg = (trace_re / k as f64).max(f64::MIN_POSITIVE) * 1e-10;
            (hh + DMatrix::identity(k, k).scale(reg))
                .try_inverse()
                .ok_or_else(|| Error::Solver("regularized ZF inverse failed".into()))?
        }
    };
    let w = h.adjoint() * inv; // n x k, column j serves user j
    let per_user = total_power / k as f64;
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let col = w.column(j);
        let norm2: f64 = col.iter().map(|c| c.norm_sqr()).sum();
        let scale = if norm2 > 0.0 {
            (per_user / norm2).sqrt()
        } else {
            0.0
        };
        out.push(col.iter().map(|c| c * scale).collect());
    }
    Ok(out)
}

/// Generic Dinkelbach iteration for max numerator/denominator: the inner
/// solver maximizes N(x) - q D(x) at fixed q, and q is updated to the
/// achieved ratio. Returns (final x, q trace).
pub fn dinkelbach<X, F>(
    mut solve_inner: F,
    q0: f64,
    tol: f64,
    max_iters: usize,
) -> (X, Vec<f64>)
where
    F: FnMut(f64) -> (X, f64, f64),
{
    let mut q = q0;
    let mut trace = Vec::with_capacity(max_iters);
    let mut last = None;
    for _ in 0..max_iters {
        let (x, numer, denom) = solve_inner(q);
        trace.push(q);
        let gap = numer - q * denom;
        let q_next = numer / denom;
        last = Some(x);
        q = q_next;
        if gap.abs() <= tol {
            trace.push(q);
            break;
        }
    }
    (last.expect("max_iters must be >= 1"), trace)
}

/// ZF with equal power on all antennas, no gating.
pub fn zf_baseline(scenario: &Scenario) -> Result<BaselineResult> {
    let precoders = scenario.zf_precoders(scenario.params.p_budget_w())?;
    let metrics = scenario.evaluate_physical(&precoders, None)?;
    Ok(BaselineResult {
        scheme: "zf".into(),
        precoders,
        metrics,
        trace: vec![],
    })
}

/// Dinkelbach ratio programming on the system EE with fixed per-BS ZF
/// directions; the inner problem optimizes only per-user powers by projected
/// gradient under the transmit budget.
pub fn dinkelbach_ee(scenario: &Scenario, tol: f64, max_iters: usize) -> Result<BaselineResult> {
    let n_bs = scenario.idx.n_bs();
    let bw = scenario.params.bandwidth_hz;
    // unit-norm ZF directions per BS
    let mut dirs: Vec<Vec<Vec<Complex64>>> = Vec::with_capacity(n_bs);
    for b in 0..n_bs {
        let w = scenario.zf_precoders_bs(b, 1.0)?;
        dirs.push(
            w.into_iter()
                .map(|col| {
                    let norm: f64 = col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                    col.into_iter().map(|c| c / norm).collect()
                })
                .collect(),
        );
    }
    // cross-gain coefficients g[b][k_global][j] = |h_{b,k}^H v_{b,j}|^2 / noise
    let noise = scenario.params.noise_w();
    let k_tot = scenario.idx.k_total();
    let mut gain = vec![vec![vec![0.0; 0]; k_tot]; n_bs];
    for b in 0..n_bs {
        for k in 0..k_tot {
            gain[b][k] = dirs[b]
                .iter()
                .map(|v| {
                    scenario.channels.h[b][k]
                        .iter()
                        .zip(v)
                        .map(|(hi, wi)| hi.conj() * wi)
                        .sum::<Complex64>()
                        .norm_sqr()
                        / noise
                })
                .collect();
        }
    }
    let p_budget = scenario.params.p_budget_w();
    let n_ants: Vec<f64> = (0..n_bs).map(|_| scenario.params.n_ant as f64).collect();
    let weights = scenario.weights.clone();
    let theta = scenario.params.theta;
    let p_fixed = scenario.params.p_fixed_w;
    let p_ant = scenario.params.p_ant_w;
    let p_sp = scenario.params.p_sp_unit_w;
    // rates/powers as functions of the flat power vector p[b*K + j]
    let k_per: Vec<usize> = (0..n_bs).map(|b| scenario.idx.users_of[b].len()).collect();
    let offs: Vec<usize> = k_per
        .iter()
        .scan(0usize, |acc, &k| {
            let o = *acc;
            *acc += k;
            Some(o)
        })
        .collect();
    let rates_powers = |p: &[f64]| -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rates = Vec::with_capacity(n_bs);
        for b in 0..n_bs {
            let mut row = Vec::with_capacity(k_per[b]);
            for (jl, &kg) in scenario.idx.users_of[b].iter().enumerate() {
                let sig = p[offs[b] + jl] * gain[b][kg][jl];
                let mut inter = 0.0;
                for bb in 0..n_bs {
                    for jj in 0..k_per[bb] {
                        if bb == b && jj == jl {
                            continue;
                        }
                        inter += p[offs[bb] + jj] * gain[bb][kg][jj];
                    }
                }
                row.push(bw * (1.0 + sig / (1.0 + inter)).log2());
            }
            rates.push(row);
        }
        let powers: Vec<f64> = (0..n_bs)
            .map(|b| {
                let tx: f64 = (0..k_per[b]).map(|j| p[offs[b] + j]).sum();
                theta * (tx + n_ants[b] * p_ant)
                    + p_fixed
                    + p_sp * rates[b].iter().sum::<f64>()
            })
            .collect();
        (rates, powers)
    };
    let ratio = |p: &[f64]| -> (f64, f64) {
        let (rates, powers) = rates_powers(p);
        let numer: f64 = (0..n_bs)
            .map(|b| weights[b] * rates[b].iter().sum::<f64>() / powers[b])
            .sum();
        // single-ratio Dinkelbach on aggregate throughput / aggregate power,
        // reported alongside the weighted utility
        let r: f64 = rates.iter().flatten().sum();
        let pw: f64 = powers.iter().sum();
        let _ = numer;
        (r, pw)
    };
    let project = |p: &mut [f64]| {
        for b in 0..n_bs {
            let seg = &mut p[offs[b]..offs[b] + k_per[b]];
            for v in seg.iter_mut() {
                *v = v.max(0.0);
            }
            let sum: f64 = seg.iter().sum();
            if sum > p_budget {
                let scale = p_budget / sum;
                for v in seg.iter_mut() {
                    *v *= scale;
                }
            }
        }
    };
    let total_k: usize = k_per.iter().sum();
    let p0 = vec![p_budget / total_k as f64 * k_per[0] as f64 / k_per[0] as f64; total_k];
    // warm-start each inner solve from the previous optimum: the inner
    // objective N - q D is exactly zero there, and accepting only strict
    // improvements makes the ratio sequence nondecreasing even with an
    // inexact inner solver
    let mut p_warm = p0;
    let inner = |q: f64| -> (Vec<f64>, f64, f64) {
        // projected gradient ascent on N(p) - q D(p), FD gradients: the
        // dimension is tiny (one power per user)
        let obj = |p: &[f64]| {
            let (r, pw) = ratio(p);
            r - q * pw
        };
        let mut p = p_warm.clone();
        let mut step = p_budget / 4.0;
        let mut best = obj(&p);
        for _ in 0..400 {
            let mut g = vec![0.0; p.len()];
            let eps = (p_budget * 1e-7).max(1e-12);
            for i in 0..p.len() {
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp[i] += eps;
                pm[i] = (pm[i] - eps).max(0.0);
                g[i] = (obj(&pp) - obj(&pm)) / (pp[i] - pm[i]);
            }
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gnorm < 1e-12 {
                break;
            }
            let mut improved = false;
            for _ in 0..30 {
                let mut cand: Vec<f64> = p
                    .iter()
                    .zip(&g)
                    .map(|(pi, gi)| pi + step * gi / gnorm)
                    .collect();
                project(&mut cand);
                let v = obj(&cand);
                if v > best + 1e-15 {
                    p = cand;
                    best = v;
                    improved = true;
                    step *= 1.3;
                    break;
                }
                step *= 0.5;
            }
            if !improved && step < p_budget * 1e-12 {
                break;
            }
        }
        let (r, pw) = ratio(&p);
        p_warm = p.clone();
        (p, r, pw)
    };
    let (p_star, q_trace) = dinkelbach(inner, 0.0, tol, max_iters);
    // assemble precoders from directions and powers
    let precoders: Vec<Vec<Vec<Complex64>>> = (0..n_bs)
        .map(|b| {
            (0..k_per[b])
                .map(|j| {
                    let s = p_star[offs[b] + j].max(0.0).sqrt();
                    dirs[b][j].iter().map(|c| c * s).collect()
                })
                .collect()
        })
        .collect();
    let metrics = scenario.evaluate_physical(&precoders, None)?;
    Ok(BaselineResult {
        scheme: "dinkelbach".into(),
        precoders,
        metrics,
        trace: q_trace.iter().enumerate().map(|(i, &q)| (i, q)).collect(),
    })
}

/// Direct scaled-form ADMM on the consensus split, without any
/// convexification: the exchange reformulation of sum_b E_b x_b = rhs with
/// parallel agent updates. Divergence on nonconvex instances is an expected
/// outcome and is reported through the residual trace, not raised.
pub fn admm_direct(
    agents: &[&dyn Problem],
    couplings: &[SparseMat],
    rhs: &[f64],
    x0: Vec<Vec<f64>>,
    rho: f64,
    iters: usize,
    barrier: &BarrierOpts,
) -> Result<(Vec<Vec<f64>>, Vec<(usize, f64)>)> {
    let n_agents = agents.len();
    let m = rhs.len();
    let mut x = x0;
    let mut u = vec![0.0; m];
    let mut trace = Vec::with_capacity(iters);
    for it in 0..iters {
        let shares: Vec<Vec<f64>> = (0..n_agents)
            .map(|b| couplings[b].apply(&x[b]))
            .collect();
        let rbar: Vec<f64> = (0..m)
            .map(|i| {
                (shares.iter().map(|s| s[i]).sum::<f64>() - rhs[i]) / n_agents as f64
            })
            .collect();
        // parallel x-updates toward own share minus the averaged residual
        let mut next = Vec::with_capacity(n_agents);
        for b in 0..n_agents {
            let target: Vec<f64> = (0..m).map(|i| shares[b][i] - rbar[i] - u[i]).collect();
            let extra = ExtraTerms {
                linear: None,
                prox: None,
                equality: Some(crate::nlp::EqualityTerm {
                    mat: &couplings[b],
                    rhs: target,
                    lambda: vec![0.0; m],
                    penalty: rho,
                }),
            };
            let res = solve_barrier(agents[b], &extra, &x[b], barrier)?;
            next.push(res.x);
        }
        x = next;
        let mut r = vec![0.0; m];
        for b in 0..n_agents {
            for (ri, ci) in r.iter_mut().zip(couplings[b].apply(&x[b])) {
                *ri += ci;
            }
        }
        for i in 0..m {
            r[i] -= rhs[i];
            u[i] += r[i] / n_agents as f64;
        }
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        trace.push((it, rnorm));
    }
    Ok((x, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::SmoothProblem;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zf_identity_channel_gives_scaled_identity() {
        let h = vec![
            vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        ];
        let w = zf_precoder(&h, 2.0).unwrap();
        // each user gets power 1 along its own antenna
        assert!((w[0][0].norm() - 1.0).abs() < 1e-12);
        assert!(w[0][1].norm() < 1e-12);
        assert!((w[1][1].norm() - 1.0).abs() < 1e-12);
        assert!(w[1][0].norm() < 1e-12);
    }

    #[test]
    fn zf_nulls_cross_terms_on_random_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let k = 3;
            let n = 6;
            let h: Vec<Vec<Complex64>> = (0..k)
                .map(|_| {
                    (0..n)
                        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                        .collect()
                })
                .collect();
            let w = zf_precoder(&h, 5.0).unwrap();
            let hnorm: f64 = h
                .iter()
                .flatten()
                .map(|c| c.norm_sqr())
                .sum::<f64>()
                .sqrt();
            let mut total = 0.0;
            for i in 0..k {
                let pw: f64 = w[i].iter().map(|c| c.norm_sqr()).sum();
                total += pw;
                // equal per-user power
                assert!((pw - 5.0 / 3.0).abs() < 1e-9);
                for kk in 0..k {
                    if kk == i {
                        continue;
                    }
                    let cross: Complex64 =
                        h[kk].iter().zip(&w[i]).map(|(hv, wv)| hv.conj() * wv).sum();
                    assert!(cross.norm() < 1e-10 * hnorm, "cross {}", cross.norm());
                }
            }
            assert!((total - 5.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zf_single_user_is_matched_filter_direction() {
        let h = vec![vec![Complex64::new(1.0, 1.0), Complex64::new(2.0, -1.0)]];
        let w = zf_precoder(&h, 4.0).unwrap();
        // w parallel to h
        let c0 = w[0][0] / h[0][0];
        let c1 = w[0][1] / h[0][1];
        assert!((c0 - c1).norm() < 1e-12);
        let pw: f64 = w[0].iter().map(|c| c.norm_sqr()).sum();
        assert!((pw - 4.0).abs() < 1e-12);
    }

    #[test]
    fn dinkelbach_fixed_ratio_converges_immediately() {
        // no free variables: numerator 6, denominator 3 -> q = 2 in one step
        let (_, trace) = dinkelbach(|_q| ((), 6.0, 3.0), 0.0, 1e-12, 50);
        assert!((trace.last().unwrap() - 2.0).abs() < 1e-12);
        assert!(trace.len() <= 3);
    }

    #[test]
    fn dinkelbach_scalar_toy_matches_golden_section() {
        // max log(1+p) / (p + c) over p in [0, 10], c = 0.5
        let c = 0.5;
        let f = |p: f64| (1.0 + p).ln() / (p + c);
        // golden-section oracle
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        let phi = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let m1 = hi - phi * (hi - lo);
            let m2 = lo + phi * (hi - lo);
            if f(m1) > f(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let p_gold = 0.5 * (lo + hi);
        // Dinkelbach with the closed-form inner argmax of log(1+p) - q(p+c)
        let (p_star, trace) = dinkelbach(
            |q| {
                let p = (1.0 / q - 1.0).clamp(0.0, 10.0);
                ((1.0 + p).ln().max(0.0), (1.0 + p).ln(), p + c)
            },
            f(1.0) / 1.0,
            1e-12,
            100,
        );
        let _ = p_star;
        let q_final = *trace.last().unwrap();
        assert!(
            (q_final - f(p_gold)).abs() < 1e-6,
            "q {} vs golden {}",
            q_final,
            f(p_gold)
        );
        // monotone nondecreasing q sequence
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn zf_baseline_on_small_scenario_reports_positive_ee() {
        let sc = crate::scenario::Scenario::generate(
            crate::scenario::ScenarioParams {
                n_cells: 2,
                users_per_cell: 2,
                n_ant: 4,
                mc_samples: 4,
                ..Default::default()
            },
            11,
        )
        .unwrap();
        let res = zf_baseline(&sc).unwrap();
        assert!(res.metrics.ee.iter().all(|&e| e > 0.0));
        assert!(!res.metrics.cap_violated);
        // full budget spent
        for b in 0..2 {
            let p: f64 = res.precoders[b].iter().flatten().map(|c| c.norm_sqr()).sum();
            assert!((p - sc.params.p_budget_w()).abs() < 1e-9);
        }
    }

    #[test]
    fn dinkelbach_ee_improves_on_equal_power_and_q_is_monotone() {
        let sc = crate::scenario::Scenario::generate(
            crate::scenario::ScenarioParams {
                n_cells: 2,
                users_per_cell: 2,
                n_ant: 4,
                mc_samples: 4,
                ..Default::default()
            },
            11,
        )
        .unwrap();
        let zf = zf_baseline(&sc).unwrap();
        let dk = dinkelbach_ee(&sc, 1e-6, 30).unwrap();
        for w in dk.trace.windows(2) {
            assert!(
                w[1].1 >= w[0].1 - 1e-12 * w[0].1.abs().max(1.0),
                "q not monotone: {:?}",
                dk.trace
            );
        }
        let agg = |m: &Metrics| {
            m.rate.iter().flatten().sum::<f64>() / m.power.iter().sum::<f64>()
        };
        assert!(
            agg(&dk.metrics) >= agg(&zf.metrics) * (1.0 - 1e-9),
            "dinkelbach {} vs zf {}",
            agg(&dk.metrics),
            agg(&zf.metrics)
        );
    }

    #[test]
    fn admm_zero_iterations_returns_initialization() {
        let a = SmoothProblem {
            dim: 1,
            f: |x: &[f64]| ((x[0] - 1.0).powi(2), vec![2.0 * (x[0] - 1.0)]),
        };
        let agents: Vec<&dyn Problem> = vec![&a];
        let couplings = vec![SparseMat {
            n_rows: 1,
            n_cols: 1,
            triplets: vec![(0, 0, 1.0)],
        }];
        let (x, trace) = admm_direct(
            &agents,
            &couplings,
            &[0.0],
            vec![vec![7.0]],
            1.0,
            0,
            &BarrierOpts::default(),
        )
        .unwrap();
        assert_eq!(x, vec![vec![7.0]]);
        assert!(trace.is_empty());
    }

    #[test]
    fn admm_converges_on_convex_consensus_toy() {
        // min (x1-1)^2 + (x2-2)^2 s.t. x1 + x2 = 0 -> (-0.5, 0.5)
        let a1 = SmoothProblem {
            dim: 1,
            f: |x: &[f64]| ((x[0] - 1.0).powi(2), vec![2.0 * (x[0] - 1.0)]),
        };
        let a2 = SmoothProblem {
            dim: 1,
            f: |x: &[f64]| ((x[0] - 2.0).powi(2), vec![2.0 * (x[0] - 2.0)]),
        };
        let agents: Vec<&dyn Problem> = vec![&a1, &a2];
        let couplings: Vec<SparseMat> = (0..2)
            .map(|_| SparseMat {
                n_rows: 1,
                n_cols: 1,
                triplets: vec![(0, 0, 1.0)],
            })
            .collect();
        let (x, trace) = admm_direct(
            &agents,
            &couplings,
            &[0.0],
            vec![vec![0.0], vec![0.0]],
            4.0,
            300,
            &BarrierOpts::default(),
        )
        .unwrap();
        assert!(trace.last().unwrap().1 < 1e-5, "residual {:?}", trace.last());
        assert!((x[0][0] + 0.5).abs() < 1e-3, "{x:?}");
        assert!((x[1][0] - 0.5).abs() < 1e-3, "{x:?}");
    }
}
