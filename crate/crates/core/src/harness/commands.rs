use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::oracle::{run_oracle, OracleReport, OracleSpec};
use super::sweep::{run_sweep, SweepReport, SweepSpec};
use super::{create_file, ensure_dir, write_text, HarnessError};
use crate::allocator::{solve_min_energy, AllocationResult, StopReason};
use crate::pipeline::{timeshare_for, PipelineConfig, PipelineResult};
use crate::scenario::{generate_channels, load_scenario, mw_to_dbm, ChannelSet, Scenario};
use crate::schemes::SchemeRegistry;
use crate::single_order::{best_single_order, SingleOrderSolution};
use crate::timeshare::write_timeshare_csv;
use crate::Result;

#[derive(Debug, Clone)]
pub struct AllocateReport {
    pub scenario: Scenario,
    pub allocation: AllocationResult,
    pub files: Vec<PathBuf>,
}

/// Solves the scenario and writes `allocation.csv`, `theta_trace.csv`,
/// `order.txt` and `summary.txt` into `out_dir`.
pub fn cmd_allocate(scenario_path: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<AllocateReport> {
    allocate_scenario(load_scenario(scenario_path)?, out_dir, cfg)
}

pub fn allocate_scenario(scenario: Scenario, out_dir: &Path, cfg: &PipelineConfig) -> Result<AllocateReport> {
    let ch = generate_channels(&scenario);
    let allocation = solve_min_energy(&ch, &scenario, &cfg.solver)?;
    let files = write_allocation_files(out_dir, &scenario, &allocation)?;
    Ok(AllocateReport { scenario, allocation, files })
}

fn write_allocation_files(out_dir: &Path, s: &Scenario, res: &AllocationResult) -> Result<Vec<PathBuf>, HarnessError> {
    let dir = ensure_dir(out_dir)?;
    let mut files = Vec::new();

    let path = dir.join("allocation.csv");
    let mut w = csv::Writer::from_writer(create_file(&path)?);
    w.write_record(["user", "subcarrier", "energy_mw", "rate"])?;
    for u in 0..res.alloc.num_users() {
        for n in 0..res.alloc.num_subcarriers() {
            w.write_record([
                (u + 1).to_string(),
                (n + 1).to_string(),
                res.alloc.energy(u, n).to_string(),
                s.bits_to_mbps(res.rates.get(u, n)).to_string(),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    files.push(path);

    let path = dir.join("theta_trace.csv");
    res.write_trace_csv(create_file(&path)?)?;
    files.push(path);

    let path = dir.join("order.txt");
    write_text(&path, &order_text(res))?;
    files.push(path);

    let path = dir.join("summary.txt");
    write_text(&path, &summary_text(s, res))?;
    files.push(path);
    Ok(files)
}

fn clusters_text(clusters: &[Vec<usize>]) -> String {
    clusters
        .iter()
        .map(|c| format!("{{{}}}", c.iter().map(|u| (u + 1).to_string()).collect::<Vec<_>>().join(",")))
        .collect::<Vec<_>>()
        .join(" ")
}

fn order_text(res: &AllocationResult) -> String {
    format!(
        "order: {}\nclusters: {}\nneeds_timeshare: {}\n",
        res.order.to_one_based_string(),
        clusters_text(&res.clusters),
        res.needs_timeshare
    )
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn summary_text(s: &Scenario, res: &AllocationResult) -> String {
    let mut t = String::new();
    let stop = match res.stop_reason {
        StopReason::ZeroTargets => "zero_targets",
        StopReason::RateTolerance => "rate_tolerance",
        StopReason::Radius => "radius",
    };
    let rates_mbps: Vec<f64> = res.rates.totals().iter().map(|&b| s.bits_to_mbps(b)).collect();
    let dbm: Vec<f64> = res.per_user_energy.iter().map(|&e| mw_to_dbm(e)).collect();
    let _ = writeln!(t, "weighted_energy_mw: {}", res.weighted_energy);
    let _ = writeln!(t, "total_energy_mw: {}", res.per_user_energy.iter().sum::<f64>());
    let _ = writeln!(t, "per_user_energy_mw: {}", list(&res.per_user_energy));
    let _ = writeln!(t, "per_user_power_dbm: {}", list(&dbm));
    let _ = writeln!(t, "rates_mbps: {}", list(&rates_mbps));
    let _ = writeln!(t, "targets_mbps: {}", list(&s.rate_targets_mbps));
    let _ = writeln!(t, "converged: {}", res.converged);
    let _ = writeln!(t, "stop_reason: {stop}");
    let _ = writeln!(t, "iterations: {}", res.iterations);
    let _ = writeln!(t, "theta_final: {}", list(&res.theta_final));
    let _ = writeln!(t, "theta_unit_mw_per_bit: {}", res.theta_unit_mw_per_bit);
    let _ = writeln!(t, "needs_timeshare: {}", res.needs_timeshare);
    t
}

#[derive(Debug, Clone)]
pub struct TimeshareReport {
    pub scenario: Scenario,
    pub pipeline: PipelineResult,
    /// Cheapest single-order point found for the same targets.
    pub single_order: Option<SingleOrderSolution>,
    pub files: Vec<PathBuf>,
}

/// Runs the allocation, then time-sharing; writes the allocation files plus
/// `timeshare.csv` (rates in Mbps) and `power_comparison.csv`.
pub fn cmd_timeshare(scenario_path: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<TimeshareReport> {
    timeshare_scenario(load_scenario(scenario_path)?, out_dir, cfg)
}

pub fn timeshare_scenario(scenario: Scenario, out_dir: &Path, cfg: &PipelineConfig) -> Result<TimeshareReport> {
    let ch = generate_channels(&scenario);
    let allocation = solve_min_energy(&ch, &scenario, &cfg.solver)?;
    let mut files = write_allocation_files(out_dir, &scenario, &allocation)?;
    let timeshare = timeshare_for(&ch, &allocation, cfg)?;
    let achieved = timeshare.solution.achieved.clone();
    let pipeline = PipelineResult { allocation, timeshare, achieved };

    let path = out_dir.join("timeshare.csv");
    write_timeshare_csv(
        create_file(&path)?,
        &pipeline.timeshare.problem,
        &pipeline.timeshare.solution,
        scenario.subcarrier_bandwidth_hz / 1e6,
    )
    .map_err(HarnessError::from)?;
    files.push(path);

    let single = single_order_reference(&ch, &pipeline, cfg)?;
    let path = out_dir.join("power_comparison.csv");
    write_power_comparison(&path, &pipeline, single.as_ref())?;
    files.push(path);
    Ok(TimeshareReport { scenario, pipeline, single_order: single, files })
}

fn single_order_reference(
    ch: &ChannelSet,
    p: &PipelineResult,
    cfg: &PipelineConfig,
) -> Result<Option<SingleOrderSolution>> {
    let a = &p.allocation;
    best_single_order(ch, &a.targets, &a.weights, &[&a.alloc, &a.inner_alloc], cfg.solver.inner.init_energy_mw)
}

fn write_power_comparison(
    path: &Path,
    p: &PipelineResult,
    single: Option<&SingleOrderSolution>,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(create_file(path)?);
    w.write_record([
        "user",
        "timeshare_energy_mw",
        "timeshare_power_dbm",
        "single_order_energy_mw",
        "single_order_power_dbm",
    ])?;
    let ts = &p.allocation.per_user_energy;
    let so = single.map(|s| s.alloc.per_user_energy());
    let cell = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| x.to_string());
    for u in 0..ts.len() {
        let s = so.as_ref().map(|v| v[u]);
        w.write_record([
            (u + 1).to_string(),
            ts[u].to_string(),
            mw_to_dbm(ts[u]).to_string(),
            cell(s),
            cell(s.map(mw_to_dbm)),
        ])?;
    }
    let ts_total: f64 = ts.iter().sum();
    let so_total = so.as_ref().map(|v| v.iter().sum::<f64>());
    w.write_record([
        "total".to_string(),
        ts_total.to_string(),
        mw_to_dbm(ts_total).to_string(),
        cell(so_total),
        cell(so_total.map(mw_to_dbm)),
    ])?;
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Name of the scheme every other one is compared with in `sweep_gaps.csv`.
pub const GAP_REFERENCE: &str = "proposed-ts";

/// Runs the sweep and writes `output_csv` plus a `_gaps` companion with the
/// relative gains of [`GAP_REFERENCE`] (when it was selected).
pub fn cmd_sweep(
    scenario_path: &Path,
    spec: &SweepSpec,
    output_csv: &Path,
    cfg: &PipelineConfig,
) -> Result<SweepReport> {
    sweep_scenario(&load_scenario(scenario_path)?, spec, output_csv, cfg)
}

pub fn sweep_scenario(
    scenario: &Scenario,
    spec: &SweepSpec,
    output_csv: &Path,
    cfg: &PipelineConfig,
) -> Result<SweepReport> {
    let registry = SchemeRegistry::with_defaults();
    let report = run_sweep(scenario, spec, &registry, cfg)?;
    if let Some(parent) = output_csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    report.write_csv(create_file(output_csv)?).map_err(HarnessError::from)?;
    if spec.schemes.iter().any(|s| s == GAP_REFERENCE) {
        report.write_gaps_csv(create_file(&gaps_path(output_csv))?, GAP_REFERENCE).map_err(HarnessError::from)?;
    }
    Ok(report)
}

/// `dir/sweep.csv` becomes `dir/sweep_gaps.csv`.
pub fn gaps_path(output_csv: &Path) -> PathBuf {
    let stem = output_csv.file_stem().map_or_else(|| "sweep".into(), |s| s.to_string_lossy().into_owned());
    output_csv.with_file_name(format!("{stem}_gaps.csv"))
}

/// Grid oracle on a scalar scenario; writes `oracle.txt` when `out_dir` is given.
pub fn cmd_oracle(
    scenario: &Scenario,
    spec: &OracleSpec,
    out_dir: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<OracleReport> {
    let ch = generate_channels(scenario);
    let report = run_oracle(&ch, &scenario.rate_targets_bits(), &scenario.energy_weights, spec, cfg)?;
    if let Some(dir) = out_dir {
        let dir = ensure_dir(dir)?;
        write_text(&dir.join("oracle.txt"), &report.to_text())?;
    }
    Ok(report)
}
