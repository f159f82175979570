//! Full problem instances: geometry, channels, power model, per-BS agents in
//! normalized internal units, warm starts, and end-to-end proposed-method runs.

use crate::baselines::zf_precoder;
use crate::bsproblem::{feasible_start, gate_uniforms, BsAgent, GateBox};
use crate::channel::{draw_channel, draw_large_scale, ChannelRealization, LargeScaleGains};
use crate::consensus::{
    assemble_global_ici, build_consensus_map, compute_ici_caused, ClusterIndex, ConsensusMap,
};
use crate::error::{Error, Result};
use crate::gates::{on_probability, GateParams, DEFAULT_STRETCH};
use crate::geometry::{build_grid_topology, drop_users, Topology, UserLayout};
use crate::metrics::{self, Metrics, PowerModel, PrecoderSet};
use crate::nlp::{scale_coupling, Problem, ScaledProblem};
use crate::solver::{self, Solution, SolverOptions, SolverTrace};
use crate::state::StateLayout;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub fn dbm_to_w(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

/// All physical constants of an instance. Rates and powers here are in
/// physical units (bit/s, watts); conversion to the solver's normalized
/// internal units (noise power 1, rates in bit/s/Hz) happens in `agents`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioParams {
    pub n_cells: usize,
    pub cell_side_m: f64,
    pub users_per_cell: usize,
    pub n_ant: usize,
    pub min_user_sep_m: f64,
    pub min_bs_sep_m: f64,
    pub bandwidth_hz: f64,
    /// total noise power over the bandwidth, dBm
    pub noise_dbm: f64,
    /// per-BS transmit power budget, dBm
    pub p_budget_dbm: f64,
    pub shadow_sigma_db: f64,
    pub theta: f64,
    pub p_ant_w: f64,
    pub p_fixed_w: f64,
    /// signal-processing watts per bit/s
    pub p_sp_unit_w: f64,
    /// per-BS backhaul cap on the sum of rate upper bounds, bit/s
    pub backhaul_bps: f64,
    /// per-user rate floor, bit/s
    pub rate_floor_bps: f64,
    /// per-BS utility weights c_b; empty means all ones
    pub weights: Vec<f64>,
    /// gate Monte-Carlo sample count used inside the solver
    pub mc_samples: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n_cells: 4,
            cell_side_m: 200.0,
            users_per_cell: 8,
            n_ant: 64,
            min_user_sep_m: 1.0,
            min_bs_sep_m: 10.0,
            bandwidth_hz: 10e6,
            noise_dbm: -120.0,
            p_budget_dbm: 40.0,
            shadow_sigma_db: 8.0,
            theta: 1.2,
            p_ant_w: 0.4,
            p_fixed_w: 10.0,
            p_sp_unit_w: 1e-9,
            backhaul_bps: 1e9,
            rate_floor_bps: 0.0,
            weights: vec![],
            mc_samples: 32,
        }
    }
}

impl ScenarioParams {
    pub fn noise_w(&self) -> f64 {
        dbm_to_w(self.noise_dbm)
    }
    pub fn p_budget_w(&self) -> f64 {
        dbm_to_w(self.p_budget_dbm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells == 0 || self.users_per_cell == 0 || self.n_ant == 0 {
            return Err(Error::Config(
                "cells, users per cell and antennas must be positive".into(),
            ));
        }
        if self.n_ant < self.users_per_cell {
            return Err(Error::Config(format!(
                "need at least as many antennas as users per cell ({} < {})",
                self.n_ant, self.users_per_cell
            )));
        }
        if self.bandwidth_hz <= 0.0 {
            return Err(Error::Config("bandwidth must be positive".into()));
        }
        if self.cell_side_m <= 0.0 {
            return Err(Error::Config("cell side must be positive".into()));
        }
        if !self.weights.is_empty() && self.weights.len() != self.n_cells {
            return Err(Error::Config(format!(
                "got {} weights for {} cells",
                self.weights.len(),
                self.n_cells
            )));
        }
        if self.weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::Config("weights must be positive".into()));
        }
        if self.rate_floor_bps < 0.0 || self.backhaul_bps <= 0.0 {
            return Err(Error::Config("invalid rate limits".into()));
        }
        if self.rate_floor_bps * self.users_per_cell as f64 > self.backhaul_bps {
            return Err(Error::Config(
                "rate floors exceed the backhaul cap, no feasible rate vector exists".into(),
            ));
        }
        if self.mc_samples == 0 {
            return Err(Error::Config("mc_samples must be positive".into()));
        }
        let pm = self.power_model();
        pm.validate()?;
        Ok(())
    }

    pub fn power_model(&self) -> PowerModel {
        // total-power diagnostic cap: everything on, transmit budget maxed,
        // backhaul-limited signal processing
        let p_max_w = self.theta * (self.p_budget_w() + self.n_ant as f64 * self.p_ant_w)
            + self.p_fixed_w
            + self.p_sp_unit_w * self.backhaul_bps;
        PowerModel {
            theta: self.theta,
            p_ant_w: self.p_ant_w,
            p_fixed_w: self.p_fixed_w,
            p_sp_unit_w: self.p_sp_unit_w,
            p_max_w,
            noise_w: self.noise_w(),
            bandwidth_hz: self.bandwidth_hz,
        }
    }
}

/// A generated instance: everything drawn from the seed, plus the consensus
/// structure and the deterministic objective rescaling.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: ScenarioParams,
    pub seed: u64,
    pub topology: Topology,
    pub users: UserLayout,
    pub gains: LargeScaleGains,
    pub channels: ChannelRealization,
    /// channels divided by sqrt(noise power): unit noise internally
    pub norm: ChannelRealization,
    pub idx: ClusterIndex,
    pub map: ConsensusMap,
    /// physical utility weights c_b (defaulted to ones)
    pub weights: Vec<f64>,
    /// deterministic rescaling applied to the internal objective so warm-start
    /// utilities are O(1); identical across BSs, so argmaxes are unchanged
    pub utility_scale: f64,
}

fn substream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

impl Scenario {
    pub fn generate(params: ScenarioParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let topology = build_grid_topology(params.n_cells, params.cell_side_m)?;
        let users = drop_users(
            &topology,
            params.users_per_cell,
            params.min_user_sep_m,
            params.min_bs_sep_m,
            &mut substream(seed, 1),
        )?;
        let gains = draw_large_scale(
            &topology,
            &users,
            params.shadow_sigma_db,
            &mut substream(seed, 2),
        );
        let counts = vec![params.n_ant; params.n_cells];
        let channels = draw_channel(&gains, &counts, &mut substream(seed, 3));
        let inv_sqrt_noise = 1.0 / params.noise_w().sqrt();
        let norm = ChannelRealization {
            h: channels
                .h
                .iter()
                .map(|bs| {
                    bs.iter()
                        .map(|row| row.iter().map(|c| c * inv_sqrt_noise).collect())
                        .collect()
                })
                .collect(),
        };
        let idx = ClusterIndex::new(users.assignments.clone(), params.n_cells, &counts);
        let map = build_consensus_map(&idx);
        let weights = if params.weights.is_empty() {
            vec![1.0; params.n_cells]
        } else {
            params.weights.clone()
        };
        let mut sc = Self {
            params,
            seed,
            topology,
            users,
            gains,
            channels,
            norm,
            idx,
            map,
            weights,
            utility_scale: 1.0,
        };
        sc.utility_scale = sc.compute_utility_scale()?;
        Ok(sc)
    }

    /// Internal warm-start EE of the ZF reference, used to rescale the
    /// objective: scale = 1 / max_b rho_b so the leading agent starts at
    /// weighted utility ~1. Falls back to 1 if ZF produces no rate.
    fn compute_utility_scale(&self) -> Result<f64> {
        let precoders = self.zf_precoders(0.8 * self.params.p_budget_w())?;
        let m = self.evaluate_physical(&precoders, None)?;
        let bw = self.params.bandwidth_hz;
        let max_rho = (0..self.idx.n_bs())
            .map(|b| m.rate[b].iter().sum::<f64>() / bw / m.power[b])
            .fold(0.0f64, f64::max);
        Ok(if max_rho > 0.0 { 1.0 / max_rho } else { 1.0 })
    }

    /// ZF precoder for one BS over its own users' physical channels.
    pub fn zf_precoders_bs(&self, b: usize, total_power: f64) -> Result<Vec<Vec<Complex64>>> {
        let rows: Vec<Vec<Complex64>> = self.idx.users_of[b]
            .iter()
            .map(|&k| self.channels.h[b][k].clone())
            .collect();
        zf_precoder(&rows, total_power)
    }

    pub fn zf_precoders(&self, total_power: f64) -> Result<Vec<Vec<Vec<Complex64>>>> {
        (0..self.idx.n_bs())
            .map(|b| self.zf_precoders_bs(b, total_power))
            .collect()
    }

    /// Full-budget equal-power ZF restricted to each BS's active antenna
    /// set, embedded back into full-length precoders (zeros where off).
    pub fn refit_masked_zf(&self, masks: &[Vec<bool>]) -> Result<Vec<Vec<Vec<Complex64>>>> {
        let budget = self.params.p_budget_w();
        (0..self.idx.n_bs())
            .map(|b| {
                let active: Vec<usize> = (0..self.params.n_ant)
                    .filter(|&n| masks[b][n])
                    .collect();
                let rows: Vec<Vec<Complex64>> = self.idx.users_of[b]
                    .iter()
                    .map(|&k| active.iter().map(|&n| self.channels.h[b][k][n]).collect())
                    .collect();
                let small = zf_precoder(&rows, budget)?;
                Ok(small
                    .into_iter()
                    .map(|wj| {
                        let mut full = vec![Complex64::new(0.0, 0.0); self.params.n_ant];
                        for (i, &n) in active.iter().enumerate() {
                            full[n] = wj[i];
                        }
                        full
                    })
                    .collect())
            })
            .collect()
    }

    /// Build the per-BS agents in internal units: channels at unit noise,
    /// rates in bit/s/Hz, and the objective rescaled by `utility_scale`.
    pub fn agents(&self, mc_samples: usize) -> Vec<BsAgent> {
        let p = &self.params;
        let bw = p.bandwidth_hz;
        (0..self.idx.n_bs())
            .map(|b| BsAgent {
                layout: self.idx.layouts[b],
                weight: self.weights[b] * self.utility_scale,
                chan: self.norm.h[b].clone(),
                own: self.idx.users_of[b].clone(),
                others: self.idx.others_of[b].clone(),
                p_max_tx: p.p_budget_w(),
                rate_floor: p.rate_floor_bps / bw,
                backhaul: p.backhaul_bps / bw,
                theta: p.theta,
                p_ant: p.p_ant_w,
                p_fixed: p.p_fixed_w,
                p_sp: p.p_sp_unit_w * bw,
                stretch: DEFAULT_STRETCH,
                uniforms: gate_uniforms(self.seed, b, p.n_ant, mc_samples),
                gate_box: GateBox::default(),
            })
            .collect()
    }

    /// Strictly feasible initial states: full-budget ZF (the near-on gates
    /// shave the expected transmit power below the cap; `feasible_start`
    /// rescales if not), received interference initialized from the ungated
    /// ZF caused-ICI exchange, and gates initialized near-on.
    pub fn warm_start(&self, agents: &[BsAgent]) -> Result<Vec<Vec<f64>>> {
        let precoders = self.zf_precoders(self.params.p_budget_w())?;
        self.start_from_precoders(agents, &precoders)
    }

    /// Packed feasible state built around arbitrary per-BS precoders, with
    /// interference terms padded so the consensus rows cancel exactly.
    pub fn start_from_precoders(
        &self,
        agents: &[BsAgent],
        precoders: &[Vec<Vec<Complex64>>],
    ) -> Result<Vec<Vec<f64>>> {
        let slices: Vec<Vec<f64>> = (0..agents.len())
            .map(|b| compute_ici_caused(&self.norm, &precoders[b], b, &self.idx))
            .collect();
        let iota = assemble_global_ici(&slices, &self.idx);
        let phi0 = (2.0, 0.5);
        let slack = 1e-3;
        agents
            .iter()
            .enumerate()
            .map(|(b, agent)| {
                // match the slack the other BSs put on their caused-ICI
                // entries so the consensus rows cancel exactly at the start
                let nu: Vec<f64> = self.idx.users_of[b]
                    .iter()
                    .map(|&k| {
                        let padded: f64 = (0..self.idx.n_bs())
                            .filter(|&bp| bp != b)
                            .map(|bp| {
                                iota.iota[self.idx.iota_index(bp, k)] * (1.0 + slack) + slack
                            })
                            .sum();
                        padded - slack
                    })
                    .collect();
                feasible_start(agent, &precoders[b], &nu, phi0, slack)
            })
            .collect()
    }

    /// Hard on/off decision per antenna: keep antennas whose gate is on with
    /// probability above one half.
    pub fn hard_mask(&self, x_b: &[f64], layout: &StateLayout) -> Vec<bool> {
        (0..layout.n_ant)
            .map(|n| {
                let phi = GateParams {
                    log_alpha: x_b[layout.phi_log_alpha(n)],
                    beta: x_b[layout.phi_beta(n)],
                    eta0: DEFAULT_STRETCH.0,
                    eta1: DEFAULT_STRETCH.1,
                };
                on_probability(&phi) > 0.5
            })
            .collect()
    }

    pub fn extract_precoders(&self, x: &[Vec<f64>]) -> Vec<Vec<Vec<Complex64>>> {
        (0..self.idx.n_bs())
            .map(|b| {
                let lay = &self.idx.layouts[b];
                (0..lay.k_own)
                    .map(|j| {
                        (0..lay.n_ant)
                            .map(|n| Complex64::new(x[b][lay.w_re(j, n)], x[b][lay.w_im(j, n)]))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// Physical-unit metrics for a precoder set, with an optional hard
    /// antenna mask (masked antennas transmit nothing and draw no circuit
    /// power).
    pub fn evaluate_physical(
        &self,
        precoders: &[Vec<Vec<Complex64>>],
        mask: Option<&[Vec<bool>]>,
    ) -> Result<Metrics> {
        let n_bs = self.idx.n_bs();
        let mut w = precoders.to_vec();
        let mut n_active = vec![self.params.n_ant as f64; n_bs];
        if let Some(masks) = mask {
            for b in 0..n_bs {
                n_active[b] = masks[b].iter().filter(|&&m| m).count() as f64;
                for col in w[b].iter_mut() {
                    for (n, v) in col.iter_mut().enumerate() {
                        if !masks[b][n] {
                            *v = Complex64::new(0.0, 0.0);
                        }
                    }
                }
            }
        }
        metrics::evaluate(
            &self.channels,
            &PrecoderSet { w },
            &self.users,
            &n_active,
            &self.params.power_model(),
            &self.weights,
        )
    }
}

/// Outcome of the proposed distributed method on one instance.
#[derive(Debug, Clone)]
pub struct ProposedResult {
    pub solution: Solution,
    pub trace: SolverTrace,
    /// hard antenna mask per BS after thresholding the gates
    pub masks: Vec<Vec<bool>>,
    /// metrics of the masked precoders in physical units
    pub metrics: Metrics,
}

/// End-to-end proposed run: build agents, warm start, solve, threshold the
/// gates and re-evaluate the masked precoders in physical units.
pub fn run_proposed(scenario: &Scenario, opts: &SolverOptions) -> Result<ProposedResult> {
    let agents = scenario.agents(scenario.params.mc_samples);
    let x0 = scenario.warm_start(&agents)?;
    run_proposed_from(scenario, opts, &agents, x0)
}

/// Like `run_proposed` but from a caller-supplied packed start.
pub fn run_proposed_from(
    scenario: &Scenario,
    opts: &SolverOptions,
    agents: &[BsAgent],
    x0: Vec<Vec<f64>>,
) -> Result<ProposedResult> {
    // diagonal scaling by warm-start magnitudes: the state mixes precoder
    // entries, SINR auxiliaries and interference terms spanning many decades
    let scaled: Vec<ScaledProblem> = agents
        .iter()
        .zip(&x0)
        .map(|(a, x)| ScaledProblem {
            inner: a as &dyn Problem,
            scale: x.iter().map(|v| v.abs().clamp(1e-2, 1e6)).collect(),
        })
        .collect();
    let couplings: Vec<_> = scenario
        .map
        .couplings
        .iter()
        .zip(&scaled)
        .map(|(e, s)| scale_coupling(e, &s.scale))
        .collect();
    let z0: Vec<Vec<f64>> = scaled.iter().zip(&x0).map(|(s, x)| s.from_inner(x)).collect();
    let refs: Vec<&dyn Problem> = scaled.iter().map(|s| s as &dyn Problem).collect();
    let (mut solution, trace) = solver::run(&refs, &couplings, &scenario.map.rhs, z0, opts)?;
    for (s, z) in scaled.iter().zip(solution.x.iter_mut()) {
        *z = s.to_inner(z);
    }
    let masks: Vec<Vec<bool>> = (0..agents.len())
        .map(|b| scenario.hard_mask(&solution.x[b], &scenario.idx.layouts[b]))
        .collect();
    let precoders = scenario.extract_precoders(&solution.x);
    let mut metrics = scenario.evaluate_physical(&precoders, Some(&masks))?;
    // thresholding the gates perturbs the continuous solution; refitting the
    // precoders on the chosen antenna set recovers most of that loss
    if let Ok(refit) = scenario.refit_masked_zf(&masks) {
        if let Ok(m) = scenario.evaluate_physical(&refit, Some(&masks)) {
            let floor_ok = m
                .rate
                .iter()
                .flatten()
                .all(|&r| r >= scenario.params.rate_floor_bps * (1.0 - 1e-9));
            if floor_ok && m.utility > metrics.utility {
                metrics = m;
            }
        }
    }
    Ok(ProposedResult {
        solution,
        trace,
        masks,
        metrics,
    })
}
