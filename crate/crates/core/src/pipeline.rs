//! Allocation followed by time-sharing: the full path from targets to an
//! operating point.

use crate::allocator::{solve_min_energy_targets, AllocationResult, SolverConfig};
use crate::scenario::ChannelSet;
use crate::timeshare::{
    enumerate_candidates, rate_vectors_for_orders, solve_timeshare, TargetMode, TimeShareConfig, TimeShareProblem,
    TimeShareSolution, TimeshareError, DEFAULT_ORDER_CAP,
};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub solver: SolverConfig,
    pub timeshare: TimeShareConfig,
    /// `None` means [`DEFAULT_ORDER_CAP`].
    pub order_cap: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TimeShareOutcome {
    /// Rates in bits per subcarrier use.
    pub problem: TimeShareProblem,
    pub solution: TimeShareSolution,
    /// Exact targets were out of reach within tolerance and the
    /// at-least mode was used instead.
    pub relaxed: bool,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub allocation: AllocationResult,
    pub timeshare: TimeShareOutcome,
    /// Time-averaged per-user rates, bits per subcarrier use.
    pub achieved: Vec<f64>,
}

impl PipelineResult {
    pub fn total_energy(&self) -> f64 {
        self.allocation.per_user_energy.iter().sum()
    }
}

/// Solves for the minimum-energy allocation, then picks time fractions over
/// the orders its multiplier ties allow.
pub fn allocate_with_timeshare(
    ch: &ChannelSet,
    targets: &[f64],
    weights: &[f64],
    cfg: &PipelineConfig,
) -> Result<PipelineResult> {
    let allocation = solve_min_energy_targets(ch, targets, weights, &cfg.solver)?;
    let timeshare = timeshare_for(ch, &allocation, cfg)?;
    let achieved = timeshare.solution.achieved.clone();
    Ok(PipelineResult { allocation, timeshare, achieved })
}

pub fn timeshare_for(ch: &ChannelSet, allocation: &AllocationResult, cfg: &PipelineConfig) -> Result<TimeShareOutcome> {
    let orders =
        enumerate_candidates(&allocation.order, &allocation.clusters, cfg.order_cap.unwrap_or(DEFAULT_ORDER_CAP))?;
    let rates = rate_vectors_for_orders(ch, &allocation.alloc, &orders, 1.0)?;
    let problem = TimeShareProblem::new(orders, rates, allocation.targets.clone())?;
    match solve_timeshare(&problem, &cfg.timeshare) {
        Ok(solution) => Ok(TimeShareOutcome { problem, solution, relaxed: false }),
        Err(TimeshareError::InfeasibleTargets { gap }) if cfg.timeshare.mode == TargetMode::Exact => {
            log::info!("exact time-share infeasible (residual {gap:.3e}); retrying with surplus allowed");
            let relaxed_cfg = TimeShareConfig { mode: TargetMode::AtLeast, ..cfg.timeshare.clone() };
            let solution = solve_timeshare(&problem, &relaxed_cfg)?;
            Ok(TimeShareOutcome { problem, solution, relaxed: true })
        }
        Err(e) => Err(e.into()),
    }
}
