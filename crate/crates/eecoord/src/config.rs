//! Experiment configuration: TOML schema with strict key checking, dotted
//! path overrides, and mapping onto scenario and solver options.

use crate::error::{Error, Result};
use crate::nlp::{BarrierOpts, LbfgsOpts};
use crate::scenario::ScenarioParams;
use crate::solver::{HessianMode, SolverOptions};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub rho: f64,
    pub rho2: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub kappa_l: f64,
    pub lambda_l: f64,
    pub gamma: f64,
    /// "exact" or "quasi_secant"
    pub hessian_mode: String,
    pub tol_active: f64,
    pub rho2_schedule_c: f64,
    pub barrier_mu_init: f64,
    pub barrier_mu_final: f64,
    pub inner_max_iters: usize,
    pub inner_grad_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            rho: o.rho,
            rho2: o.rho2,
            epsilon: o.epsilon,
            max_iters: o.max_iters,
            kappa_l: o.kappa_l,
            lambda_l: o.lambda_l,
            gamma: o.gamma,
            hessian_mode: "quasi_secant".into(),
            tol_active: o.tol_active,
            rho2_schedule_c: o.rho2_schedule_c,
            barrier_mu_init: o.barrier.mu_init,
            barrier_mu_final: o.barrier.mu_final,
            inner_max_iters: o.barrier.inner.max_iters,
            inner_grad_tol: o.barrier.inner.grad_tol,
        }
    }
}

impl SolverConfig {
    pub fn to_options(&self) -> Result<SolverOptions> {
        let hessian_mode = match self.hessian_mode.as_str() {
            "exact" => HessianMode::Exact,
            "quasi_secant" => HessianMode::QuasiSecant,
            other => {
                return Err(Error::Config(format!(
                    "unknown hessian_mode '{other}'; expected 'exact' or 'quasi_secant'"
                )))
            }
        };
        if self.epsilon <= 0.0 || self.rho <= 0.0 || self.rho2 <= 0.0 || self.gamma <= 0.0 {
            return Err(Error::Config(
                "rho, rho2, epsilon and gamma must be positive".into(),
            ));
        }
        if self.barrier_mu_final <= 0.0 || self.barrier_mu_init < self.barrier_mu_final {
            return Err(Error::Config(
                "barrier schedule needs mu_init >= mu_final > 0".into(),
            ));
        }
        Ok(SolverOptions {
            rho: self.rho,
            rho2: self.rho2,
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            kappa_l: self.kappa_l,
            lambda_l: self.lambda_l,
            gamma: self.gamma,
            hessian_mode,
            tol_active: self.tol_active,
            rho2_schedule_c: self.rho2_schedule_c,
            barrier: BarrierOpts {
                mu_init: self.barrier_mu_init,
                mu_final: self.barrier_mu_final,
                inner: LbfgsOpts {
                    max_iters: self.inner_max_iters,
                    grad_tol: self.inner_grad_tol,
                    ..LbfgsOpts::default()
                },
                ..BarrierOpts::default()
            },
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// dotted config path of the swept key, e.g. "scenario.p_budget_dbm";
    /// the special value "users_x_antennas" sweeps the (K, N_b) grid
    pub parameter: String,
    pub values: Vec<f64>,
    /// grid sweep axes (users per cell, antennas per BS)
    pub users_values: Vec<usize>,
    pub antenna_values: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            parameter: String::new(),
            values: vec![],
            users_values: (20..=100).step_by(20).collect(),
            antenna_values: (50..=200).step_by(50).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioParams,
    pub solver: SolverConfig,
    pub sweep: SweepConfig,
    pub seeds: Vec<u64>,
    pub output_dir: String,
    /// baseline schemes to run alongside the proposed method
    pub baselines: Vec<String>,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioParams::default(),
            solver: SolverConfig::default(),
            sweep: SweepConfig::default(),
            seeds: (1..=10).collect(),
            output_dir: "out".into(),
            baselines: vec!["zf".into(), "dinkelbach".into()],
            workers: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.solver.to_options()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        for b in &self.baselines {
            if !matches!(b.as_str(), "zf" | "dinkelbach" | "admm") {
                return Err(Error::Config(format!(
                    "unknown baseline '{b}'; expected zf, dinkelbach or admm"
                )));
            }
        }
        if self.sweep.parameter == "users_x_antennas"
            && (self.sweep.users_values.is_empty() || self.sweep.antenna_values.is_empty())
        {
            return Err(Error::Config("grid sweep needs both axes non-empty".into()));
        }
        Ok(())
    }
}

/// Apply `key=value` overrides onto a parsed TOML tree; keys are dotted
/// paths, values are parsed as TOML literals (falling back to strings).
pub fn apply_overrides(doc: &mut toml::Value, overrides: &[String]) -> Result<()> {
    for ov in overrides {
        let (key, raw) = ov.split_once('=').ok_or_else(|| {
            Error::Config(format!("override '{ov}' is not of the form key=value"))
        })?;
        // wrap so bare literals parse as a TOML value; fall back to a string
        let parsed = format!("v = {raw}")
            .parse::<toml::Value>()
            .ok()
            .and_then(|mut t| t.as_table_mut().and_then(|t| t.remove("v")))
            .unwrap_or_else(|| toml::Value::String(raw.to_string()));
        let mut node = &mut *doc;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node.as_table_mut().ok_or_else(|| {
                Error::Config(format!("override path '{key}' crosses a non-table value"))
            })?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), parsed);
                break;
            }
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()));
        }
    }
    Ok(())
}

fn from_doc(doc: toml::Value) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = doc
        .try_into()
        .map_err(|e| Error::Config(format!("config schema violation: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Load, override, validate. The effective config (defaults filled in) can
/// be serialized back via `effective_toml`.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, overrides)
}

pub fn parse_config(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut doc: toml::Value = text
        .parse()
        .map_err(|e| Error::Config(format!("config parse error: {e}")))?;
    apply_overrides(&mut doc, overrides)?;
    from_doc(doc)
}

pub fn effective_toml(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string_pretty(cfg).map_err(|e| Error::Config(format!("config serialization: {e}")))
}
