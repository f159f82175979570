//! CLI for the coordinated energy-efficiency simulator.
//!
//! Exit codes: 0 success, 2 config error, 3 infeasible scenario,
//! 4 solver failure.

use clap::{Args, Parser, Subcommand};
use eecoord::config::{effective_toml, load_config, ExperimentConfig};
use eecoord::error::Error;
use eecoord::scenario::{run_proposed, Scenario};
use eecoord::sweep::{aggregate, aggregate_csv, emit_plotdata, run_sweep, SweepResults};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "eecoord", about = "coordinated energy-efficient precoding simulator")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct ConfigArgs {
    /// experiment config (TOML)
    #[arg(short, long)]
    config: PathBuf,
    /// dotted-path config overrides, e.g. --set scenario.n_ant=32
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Verb {
    /// Parse and validate a config, print the effective settings
    Validate(ConfigArgs),
    /// Solve the base scenario for every seed; write metrics and traces
    Run(ConfigArgs),
    /// Run the configured sweep and write plot data
    Sweep(ConfigArgs),
    /// Recompute and print aggregates from an existing runs.csv
    Report {
        /// output directory of a previous run or sweep
        #[arg(short, long)]
        dir: PathBuf,
    },
}

fn code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Infeasible(_) => 3,
        _ => 4,
    }
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig, Error> {
    load_config(&args.config, &args.overrides)
}

fn echo_config(cfg: &ExperimentConfig) -> Result<(), Error> {
    let dir = Path::new(&cfg.output_dir);
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("effective_config.toml"), effective_toml(cfg)?)?;
    Ok(())
}

fn cmd_validate(args: &ConfigArgs) -> Result<(), Error> {
    let cfg = load(args)?;
    print!("{}", effective_toml(&cfg)?);
    println!("# config ok");
    Ok(())
}

fn cmd_run(args: &ConfigArgs) -> Result<(), Error> {
    let cfg = load(args)?;
    echo_config(&cfg)?;
    let opts = cfg.solver.to_options()?;
    let dir = Path::new(&cfg.output_dir);
    let mut first_err: Option<Error> = None;
    for &seed in &cfg.seeds {
        let scenario = Scenario::generate(cfg.scenario.clone(), seed)?;
        match run_proposed(&scenario, &opts) {
            Ok(r) => {
                let mut trace = String::from(
                    "iter,utility,penalty,cons_residual,step_norm,branch,qp_kkt_residual,wall_ms\n",
                );
                for t in &r.trace.rows {
                    let _ = writeln!(
                        trace,
                        "{},{:.12e},{:.12e},{:.12e},{:.12e},{:?},{:.12e},{:.3}",
                        t.iter,
                        t.utility,
                        t.penalty,
                        t.cons_residual,
                        t.step_norm,
                        t.branch,
                        t.qp_kkt_residual,
                        t.wall_ms
                    );
                }
                std::fs::write(dir.join(format!("trace_seed{seed}.csv")), trace)?;
                let sum_rate: f64 = r.metrics.rate.iter().flatten().sum();
                let power: f64 = r.metrics.power.iter().sum();
                let active: usize = r.masks.iter().flatten().filter(|&&m| m).count();
                println!(
                    "seed {seed}: iters={} terminated={} utility={:.6e} ee={:.6e} bits/J \
                     power={:.3} W active_antennas={active}",
                    r.solution.iterations,
                    r.solution.terminated,
                    r.metrics.utility,
                    sum_rate / power,
                    power,
                );
            }
            Err(e) => {
                eprintln!("seed {seed}: {e}");
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn cmd_sweep(args: &ConfigArgs) -> Result<(), Error> {
    let cfg = load(args)?;
    echo_config(&cfg)?;
    let results = run_sweep(&cfg)?;
    let dir = Path::new(&cfg.output_dir);
    emit_plotdata(&results, dir)?;
    let aggs = aggregate(&results.rows);
    let failed: usize = aggs.iter().map(|a| a.n_failed).sum();
    println!(
        "{} runs ({} failed) over {} sweep points -> {}",
        results.rows.len(),
        failed,
        aggs.iter().map(|a| &a.label).collect::<std::collections::BTreeSet<_>>().len(),
        dir.display()
    );
    for a in &aggs {
        println!(
            "  {} {}: ee {:.6e} +- {:.2e} bits/J (n={})",
            a.label, a.scheme, a.ee_mean, a.ee_std, a.n_ok
        );
    }
    Ok(())
}

fn parse_runs_csv(text: &str) -> Result<SweepResults, Error> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Config(format!("runs.csv parse error: {e}")))?;
        let f = |i: usize| -> Result<f64, Error> {
            rec.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|e| Error::Config(format!("runs.csv field {i}: {e}")))
        };
        let err_field = rec.get(13).unwrap_or("");
        rows.push(eecoord::sweep::RunRow {
            label: rec.get(0).unwrap_or("").to_string(),
            value: f(1)?,
            k_users: f(2)? as usize,
            n_ant: f(3)? as usize,
            seed: f(4)? as u64,
            scheme: rec.get(5).unwrap_or("").to_string(),
            utility: f(6).unwrap_or(f64::NAN),
            ee_bits_per_joule: f(7).unwrap_or(f64::NAN),
            sum_rate_bps: f(8).unwrap_or(f64::NAN),
            total_power_w: f(9).unwrap_or(f64::NAN),
            min_rate_bps: f(10).unwrap_or(f64::NAN),
            active_antennas: f(11)? as usize,
            iterations: f(12)? as usize,
            error: if err_field.is_empty() {
                None
            } else {
                Some(err_field.to_string())
            },
        });
    }
    Ok(SweepResults { rows })
}

fn cmd_report(dir: &Path) -> Result<(), Error> {
    let text = std::fs::read_to_string(dir.join("runs.csv"))
        .map_err(|e| Error::Config(format!("cannot read {}/runs.csv: {e}", dir.display())))?;
    let results = parse_runs_csv(&text)?;
    let aggs = aggregate(&results.rows);
    print!("{}", aggregate_csv(&aggs));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.verb {
        Verb::Validate(a) => cmd_validate(a),
        Verb::Run(a) => cmd_run(a),
        Verb::Sweep(a) => cmd_sweep(a),
        Verb::Report { dir } => cmd_report(dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(code_for(&e))
        }
    }
}
