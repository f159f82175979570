//! Experiment harness: sweep execution over (parameter value x seed) with a
//! fixed-size worker pool, per-run rows, seed aggregates and plot-ready
//! output files. Output is byte-stable for a given config and seed set,
//! independent of the worker count.

use crate::baselines::{self, BaselineResult};
use crate::config::{effective_toml, parse_config, ExperimentConfig};
use crate::error::{Error, Result};
use crate::metrics::Metrics;
use crate::nlp::{scale_coupling, Problem, ScaledProblem};
use crate::scenario::{run_proposed, Scenario};
use crate::solver::SolverOptions;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Debug, Clone)]
pub struct RunRow {
    /// sweep point label, e.g. "p_budget_dbm=38" or "K=8,N=32"
    pub label: String,
    /// numeric axis value for plotting (grid sweeps use N_b / K)
    pub value: f64,
    pub k_users: usize,
    pub n_ant: usize,
    pub seed: u64,
    pub scheme: String,
    pub utility: f64,
    /// system energy efficiency: total rate over total power, bits/J
    pub ee_bits_per_joule: f64,
    pub sum_rate_bps: f64,
    pub total_power_w: f64,
    pub min_rate_bps: f64,
    /// total active antennas across all BSs
    pub active_antennas: usize,
    pub iterations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AggRow {
    pub label: String,
    pub value: f64,
    pub scheme: String,
    pub n_ok: usize,
    pub n_failed: usize,
    pub utility_mean: f64,
    pub utility_std: f64,
    pub ee_mean: f64,
    pub ee_std: f64,
    pub power_mean: f64,
    pub power_std: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResults {
    pub rows: Vec<RunRow>,
}

fn system_ee(m: &Metrics) -> (f64, f64, f64, f64) {
    let sum_rate: f64 = m.rate.iter().flatten().sum();
    let total_power: f64 = m.power.iter().sum();
    let min_rate = m
        .rate
        .iter()
        .flatten()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    (sum_rate / total_power, sum_rate, total_power, min_rate)
}

fn row_from_metrics(
    label: &str,
    value: f64,
    scenario: &Scenario,
    seed: u64,
    scheme: &str,
    m: &Metrics,
    active: usize,
    iterations: usize,
) -> RunRow {
    let (ee, sum_rate, power, min_rate) = system_ee(m);
    RunRow {
        label: label.to_string(),
        value,
        k_users: scenario.params.users_per_cell,
        n_ant: scenario.params.n_ant,
        seed,
        scheme: scheme.to_string(),
        utility: m.utility,
        ee_bits_per_joule: ee,
        sum_rate_bps: sum_rate,
        total_power_w: power,
        min_rate_bps: min_rate,
        active_antennas: active,
        iterations,
        error: None,
    }
}

fn failed_row(label: &str, value: f64, seed: u64, scheme: &str, err: &Error) -> RunRow {
    RunRow {
        label: label.to_string(),
        value,
        k_users: 0,
        n_ant: 0,
        seed,
        scheme: scheme.to_string(),
        utility: f64::NAN,
        ee_bits_per_joule: f64::NAN,
        sum_rate_bps: f64::NAN,
        total_power_w: f64::NAN,
        min_rate_bps: f64::NAN,
        active_antennas: 0,
        iterations: 0,
        error: Some(format!("{err}")),
    }
}

/// Direct consensus ADMM on the same scaled per-BS problems the proposed
/// solver uses; naive on this nonconvex problem by construction.
pub fn run_admm(scenario: &Scenario, opts: &SolverOptions) -> Result<BaselineResult> {
    let agents = scenario.agents(scenario.params.mc_samples);
    let x0 = scenario.warm_start(&agents)?;
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
    let (mut x, trace) = baselines::admm_direct(
        &refs,
        &couplings,
        &scenario.map.rhs,
        z0,
        opts.rho,
        opts.max_iters,
        &opts.barrier,
    )?;
    for (s, z) in scaled.iter().zip(x.iter_mut()) {
        *z = s.to_inner(z);
    }
    let masks: Vec<Vec<bool>> = (0..agents.len())
        .map(|b| scenario.hard_mask(&x[b], &scenario.idx.layouts[b]))
        .collect();
    let precoders = scenario.extract_precoders(&x);
    let metrics = scenario.evaluate_physical(&precoders, Some(&masks))?;
    Ok(BaselineResult {
        scheme: "admm".into(),
        precoders,
        metrics,
        trace,
    })
}

/// One sweep point of the experiment: (label, numeric value, full config).
pub struct SweepPoint {
    pub label: String,
    pub value: f64,
    pub config: ExperimentConfig,
}

/// Expand the sweep block into concrete configs. With no sweep parameter
/// there is a single "base" point.
pub fn sweep_points(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    let base = effective_toml(cfg)?;
    if cfg.sweep.parameter.is_empty() {
        return Ok(vec![SweepPoint {
            label: "base".into(),
            value: 0.0,
            config: cfg.clone(),
        }]);
    }
    if cfg.sweep.parameter == "users_x_antennas" {
        let mut points = Vec::new();
        for &k in &cfg.sweep.users_values {
            for &n in &cfg.sweep.antenna_values {
                if n < k {
                    continue; // fewer antennas than users: no ZF, skip cell
                }
                let c = parse_config(
                    &base,
                    &[
                        format!("scenario.users_per_cell={k}"),
                        format!("scenario.n_ant={n}"),
                    ],
                )?;
                points.push(SweepPoint {
                    label: format!("K={k},N={n}"),
                    value: n as f64 / k as f64,
                    config: c,
                });
            }
        }
        return Ok(points);
    }
    if cfg.sweep.values.is_empty() {
        return Err(Error::Config("sweep.values must not be empty".into()));
    }
    let mut points = Vec::new();
    for &v in &cfg.sweep.values {
        let c = parse_config(&base, &[format!("{}={}", cfg.sweep.parameter, v)])?;
        points.push(SweepPoint {
            label: format!("{}={}", cfg.sweep.parameter, v),
            value: v,
            config: c,
        });
    }
    Ok(points)
}

/// All schemes to run for one (point, seed) pair, proposed first.
fn run_point(point: &SweepPoint, seed: u64) -> Vec<RunRow> {
    let cfg = &point.config;
    let label = &point.label;
    let value = point.value;
    let scenario = match Scenario::generate(cfg.scenario.clone(), seed) {
        Ok(s) => s,
        Err(e) => {
            let mut rows = vec![failed_row(label, value, seed, "proposed", &e)];
            for b in &cfg.baselines {
                rows.push(failed_row(label, value, seed, b, &e));
            }
            return rows;
        }
    };
    let opts = match cfg.solver.to_options() {
        Ok(o) => o,
        Err(e) => return vec![failed_row(label, value, seed, "proposed", &e)],
    };
    let mut rows = Vec::new();
    match run_proposed(&scenario, &opts) {
        Ok(r) => {
            let active: usize = r.masks.iter().flatten().filter(|&&m| m).count();
            rows.push(row_from_metrics(
                label,
                value,
                &scenario,
                seed,
                "proposed",
                &r.metrics,
                active,
                r.solution.iterations,
            ));
        }
        Err(e) => rows.push(failed_row(label, value, seed, "proposed", &e)),
    }
    let all_on = scenario.params.n_cells * scenario.params.n_ant;
    for b in &cfg.baselines {
        let result = match b.as_str() {
            "zf" => baselines::zf_baseline(&scenario),
            "dinkelbach" => baselines::dinkelbach_ee(&scenario, 1e-6, 50),
            "admm" => run_admm(&scenario, &opts),
            other => Err(Error::Config(format!("unknown baseline '{other}'"))),
        };
        match result {
            Ok(r) => rows.push(row_from_metrics(
                label,
                value,
                &scenario,
                seed,
                &r.scheme,
                &r.metrics,
                all_on,
                r.trace.len(),
            )),
            Err(e) => rows.push(failed_row(label, value, seed, b, &e)),
        }
    }
    rows
}

/// Run every (point x seed) job on a pool of `cfg.workers` threads. A single
/// collector orders results by job index, so the output is identical for any
/// worker count.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResults> {
    let points = sweep_points(cfg)?;
    let jobs: Vec<(usize, u64)> = points
        .iter()
        .enumerate()
        .flat_map(|(i, _)| cfg.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let slots: Vec<Mutex<Vec<RunRow>>> = jobs.iter().map(|_| Mutex::new(Vec::new())).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..cfg.workers.max(1) {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::SeqCst);
                if j >= jobs.len() {
                    break;
                }
                let (pi, seed) = jobs[j];
                let rows = run_point(&points[pi], seed);
                *slots[j].lock().unwrap() = rows;
            });
        }
    });
    let mut rows = Vec::new();
    for slot in slots {
        rows.extend(slot.into_inner().unwrap());
    }
    Ok(SweepResults { rows })
}

fn mean_std(vals: &[f64]) -> (f64, f64) {
    if vals.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if vals.len() < 2 {
        return (mean, 0.0);
    }
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregate rows over seeds per (sweep point, scheme), preserving first
/// appearance order. Failed runs count in `n_failed` and are excluded from
/// the statistics.
pub fn aggregate(rows: &[RunRow]) -> Vec<AggRow> {
    let mut order: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r.label.clone(), r.scheme.clone());
        if !order.contains(&key) {
            order.push(key);
        }
    }
    order
        .into_iter()
        .map(|(label, scheme)| {
            let group: Vec<&RunRow> = rows
                .iter()
                .filter(|r| r.label == label && r.scheme == scheme)
                .collect();
            let ok: Vec<&&RunRow> = group.iter().filter(|r| r.error.is_none()).collect();
            let (utility_mean, utility_std) =
                mean_std(&ok.iter().map(|r| r.utility).collect::<Vec<_>>());
            let (ee_mean, ee_std) =
                mean_std(&ok.iter().map(|r| r.ee_bits_per_joule).collect::<Vec<_>>());
            let (power_mean, power_std) =
                mean_std(&ok.iter().map(|r| r.total_power_w).collect::<Vec<_>>());
            AggRow {
                value: group[0].value,
                label,
                scheme,
                n_ok: ok.len(),
                n_failed: group.len() - ok.len(),
                utility_mean,
                utility_std,
                ee_mean,
                ee_std,
                power_mean,
                power_std,
            }
        })
        .collect()
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.12e}")
    }
}

pub fn runs_csv(rows: &[RunRow]) -> String {
    let mut s = String::from(
        "label,value,k_users,n_ant,seed,scheme,utility,ee_bits_per_joule,\
         sum_rate_bps,total_power_w,min_rate_bps,active_antennas,iterations,error\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.label,
            fmt(r.value),
            r.k_users,
            r.n_ant,
            r.seed,
            r.scheme,
            fmt(r.utility),
            fmt(r.ee_bits_per_joule),
            fmt(r.sum_rate_bps),
            fmt(r.total_power_w),
            fmt(r.min_rate_bps),
            r.active_antennas,
            r.iterations,
            r.error.as_deref().unwrap_or("").replace(',', ";"),
        );
    }
    s
}

pub fn aggregate_csv(aggs: &[AggRow]) -> String {
    let mut s = String::from(
        "label,value,scheme,n_ok,n_failed,utility_mean,utility_std,\
         ee_mean,ee_std,power_mean,power_std\n",
    );
    for a in aggs {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            a.label,
            fmt(a.value),
            a.scheme,
            a.n_ok,
            a.n_failed,
            fmt(a.utility_mean),
            fmt(a.utility_std),
            fmt(a.ee_mean),
            fmt(a.ee_std),
            fmt(a.power_mean),
            fmt(a.power_std),
        );
    }
    s
}

/// Gnuplot-friendly table: one row per sweep value, a (mean, std) column
/// pair per scheme, in first-appearance order.
pub fn plot_dat(aggs: &[AggRow], metric: &str) -> String {
    let mut schemes: Vec<&str> = Vec::new();
    for a in aggs {
        if !schemes.contains(&a.scheme.as_str()) {
            schemes.push(&a.scheme);
        }
    }
    let mut labels: Vec<&str> = Vec::new();
    for a in aggs {
        if !labels.contains(&a.label.as_str()) {
            labels.push(&a.label);
        }
    }
    let mut s = String::from("# value");
    for sc in &schemes {
        let _ = write!(s, " {sc}_{metric}_mean {sc}_{metric}_std");
    }
    s.push('\n');
    for label in labels {
        let first = aggs.iter().find(|a| a.label == label).unwrap();
        let _ = write!(s, "{}", fmt(first.value));
        for sc in &schemes {
            match aggs.iter().find(|a| a.label == label && &a.scheme == sc) {
                Some(a) => {
                    let (m, d) = match metric {
                        "utility" => (a.utility_mean, a.utility_std),
                        "power" => (a.power_mean, a.power_std),
                        _ => (a.ee_mean, a.ee_std),
                    };
                    let _ = write!(s, " {} {}", fmt(m), fmt(d));
                }
                None => s.push_str(" nan nan"),
            }
        }
        s.push('\n');
    }
    s
}

/// Write runs.csv, aggregate.csv and one .dat per plotted metric.
pub fn emit_plotdata(results: &SweepResults, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let aggs = aggregate(&results.rows);
    std::fs::write(dir.join("runs.csv"), runs_csv(&results.rows))?;
    std::fs::write(dir.join("aggregate.csv"), aggregate_csv(&aggs))?;
    for metric in ["ee", "utility", "power"] {
        std::fs::write(
            dir.join(format!("{metric}.dat")),
            plot_dat(&aggs, metric),
        )?;
    }
    Ok(())
}
