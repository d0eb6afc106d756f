//! Weighted-sum energy minimization under per-user rate targets.
//!
//! The dual multipliers `theta` (one per rate constraint) are located with
//! the ellipsoid method; for each candidate `theta` the Lagrangian is
//! maximized independently on every subcarrier (see [`inner`]). The optimal
//! decoding order is `theta` sorted ascending. At convergence the last inner
//! solution is rescaled cluster by cluster so the targets hold.

mod ellipsoid;
mod inner;
mod order;
mod recovery;
mod scaling;

use std::io::Write;

use thiserror::Error;

pub use ellipsoid::Ellipsoid;
pub use inner::InnerConfig;
pub use order::extract_order;
pub use scaling::MIN_RELATIVE_WEIGHT;

use crate::numerics::{HermitianMatrix, NumericsError};
use crate::rate_region::{sic_rates, CovarianceAllocation, DecodingOrder, RateError, RateMatrix};
use crate::scenario::{ChannelSet, Scenario};
use inner::SubcarrierProblem;
use scaling::Normalized;

#[derive(Debug, Error)]
pub enum AllocError {
    #[error("user {} has a positive rate target but an all-zero channel", .user + 1)]
    Infeasible { user: usize },
    #[error("ellipsoid method hit its cap of {iterations} iterations with rate violation {violation:.3e}")]
    NonConvergence { iterations: usize, violation: f64 },
    #[error("inner solver did not converge on subcarrier {} (residual {residual:.3e})", .subcarrier + 1)]
    InnerNonConvergence { subcarrier: usize, residual: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Rate(#[from] RateError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Stop when every rate violation is below this, relative to
    /// `max(b_min_u, 1 bit)`.
    pub tol_rate: f64,
    /// Stop when the ellipsoid's largest semi-axis is below this, in units
    /// of the reference multiplier.
    pub tol_theta: f64,
    /// `None` means `500 * U^2`.
    pub max_iterations: Option<usize>,
    /// Initial ball radius, in units of the reference multiplier.
    pub ellipsoid_radius: f64,
    /// Relative gap below which two multipliers are considered tied.
    pub tie_tol: f64,
    pub inner: InnerConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_rate: 1e-4,
            tol_theta: 1e-6,
            max_iterations: None,
            ellipsoid_radius: 1e3,
            tie_tol: 1e-4,
            inner: InnerConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn iteration_cap(&self, num_users: usize) -> usize {
        self.max_iterations.unwrap_or(500 * num_users * num_users)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutKind {
    /// Cut along `-(b_min - b(theta))`.
    Objective,
    /// Center had a negative multiplier.
    Feasibility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ZeroTargets,
    RateTolerance,
    Radius,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Multipliers at the ellipsoid center, normalized units.
    pub theta: Vec<f64>,
    /// Norm of the cut normal (the subgradient for objective cuts), bits.
    pub subgrad_norm: f64,
    pub max_violation: f64,
    /// Lagrange dual value at `theta`, mW. `None` for feasibility cuts.
    pub dual_value_mw: Option<f64>,
    /// `ln det` of the ellipsoid shape before this iteration's cut.
    pub log_det_shape: f64,
    pub cut: CutKind,
}

/// Snapshot of the dual search when it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub theta: Vec<f64>,
    pub ellipsoid: Ellipsoid,
    pub iteration: usize,
}

#[derive(Debug, Clone)]
pub struct AllocationResult {
    /// Recovered allocation, mW.
    pub alloc: CovarianceAllocation,
    /// SIC rates of `alloc` under `order`, bits per subcarrier use.
    pub rates: RateMatrix,
    pub order: DecodingOrder,
    /// Tied users, in decoding order.
    pub clusters: Vec<Vec<usize>>,
    /// Final multipliers, normalized units (see `theta_unit_mw_per_bit`).
    pub theta_final: Vec<f64>,
    pub theta_unit_mw_per_bit: f64,
    pub per_user_energy: Vec<f64>,
    pub weighted_energy: f64,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub trace: Vec<TraceRecord>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
    /// Some cluster has several users and the canonical order alone misses a
    /// target; the time-share module has to pick orders.
    pub needs_timeshare: bool,
    /// Last inner solution before recovery, mW.
    pub inner_alloc: CovarianceAllocation,
    pub inner_rates: RateMatrix,
    pub cluster_scales: Vec<f64>,
    pub dual_state: DualState,
    pub inner_nonconverged: usize,
}

impl AllocationResult {
    /// Multipliers in mW per bit.
    pub fn theta_mw_per_bit(&self) -> Vec<f64> {
        self.theta_final.iter().map(|t| t * self.theta_unit_mw_per_bit).collect()
    }

    /// Whether per-user totals of `rates` meet every target within `tol`
    /// (relative to `max(b_min_u, 1)`).
    pub fn meets_targets(&self, totals: &[f64], tol: f64) -> bool {
        meets(totals, &self.targets, tol)
    }

    /// CSV with columns `iteration, theta_1..theta_U, subgrad_norm, cut`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let u = self.targets.len();
        let mut header = vec!["iteration".to_string()];
        header.extend((1..=u).map(|i| format!("theta_{i}")));
        header.push("subgrad_norm".into());
        header.push("cut".into());
        w.write_record(&header)?;
        for rec in &self.trace {
            let mut row = vec![rec.iteration.to_string()];
            row.extend(rec.theta.iter().map(|t| t.to_string()));
            row.push(rec.subgrad_norm.to_string());
            row.push(match rec.cut {
                CutKind::Objective => "objective".into(),
                CutKind::Feasibility => "feasibility".into(),
            });
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn meets(totals: &[f64], targets: &[f64], tol: f64) -> bool {
    totals.iter().zip(targets).all(|(&b, &t)| t - b <= tol * t.max(1.0))
}

/// Output of [`inner_max_weighted_rate`].
#[derive(Debug, Clone)]
pub struct InnerResult {
    /// Per-user covariances on the subcarrier, mW.
    pub covariances: Vec<HermitianMatrix>,
    pub rates: Vec<f64>,
    /// `sum theta_u b_u - sum w_u tr R_u`, mW.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximizes `sum theta_u b_u - sum w_u tr R_u` on subcarrier `n` with users
/// decoded in ascending-`theta` order. `theta` is in mW per bit.
pub fn inner_max_weighted_rate(
    ch: &ChannelSet,
    theta: &[f64],
    weights: &[f64],
    n: usize,
    cfg: &InnerConfig,
) -> Result<InnerResult, AllocError> {
    check_weights(ch, weights)?;
    if theta.len() != ch.num_users() || theta.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(AllocError::InvalidInput("theta must have one finite non-negative entry per user".into()));
    }
    if n >= ch.num_subcarriers() {
        return Err(AllocError::InvalidInput(format!("subcarrier {} out of range", n + 1)));
    }
    let norm = Normalized::new(ch, weights);
    let unit = norm.theta_unit();
    let theta_n: Vec<f64> = theta.iter().map(|t| t / unit).collect();
    let problem = SubcarrierProblem::new(&norm.h[n], &theta_n, &norm.weights, cfg.coef_threshold);
    let init = (0..ch.num_users())
        .map(|u| HermitianMatrix::scaled_identity(ch.user_antennas(u), cfg.init_energy_mw / norm.p0))
        .collect();
    let sol = problem.solve(init, cfg)?;
    let covariances: Vec<HermitianMatrix> = sol.covariances.iter().map(|m| m.scale(norm.p0)).collect();
    let objective = theta.iter().zip(&sol.rates).map(|(t, b)| t * b).sum::<f64>()
        - weights.iter().zip(&covariances).map(|(w, m)| w * m.trace()).sum::<f64>();
    Ok(InnerResult { covariances, rates: sol.rates, objective, iterations: sol.iterations, converged: sol.converged })
}

fn check_weights(ch: &ChannelSet, weights: &[f64]) -> Result<(), AllocError> {
    if weights.len() != ch.num_users() {
        return Err(AllocError::InvalidInput(format!("{} weights for {} users", weights.len(), ch.num_users())));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) || !weights.iter().any(|&w| w > 0.0) {
        return Err(AllocError::InvalidInput("weights must be finite, non-negative, and not all zero".into()));
    }
    Ok(())
}

struct LagrangianPoint {
    /// `cov[n][u]`, normalized units.
    cov: Vec<Vec<HermitianMatrix>>,
    /// `rates[n][u]`, bits.
    rates: Vec<Vec<f64>>,
    nonconverged: usize,
}

impl LagrangianPoint {
    fn totals(&self, u_count: usize) -> Vec<f64> {
        (0..u_count).map(|u| self.rates.iter().map(|r| r[u]).sum()).collect()
    }

    fn energies(&self, u_count: usize, p0: f64) -> Vec<f64> {
        (0..u_count).map(|u| p0 * self.cov.iter().map(|c| c[u].trace()).sum::<f64>()).collect()
    }
}

fn solve_lagrangian(
    norm: &Normalized,
    theta: &[f64],
    warm: &[Vec<HermitianMatrix>],
    cfg: &InnerConfig,
) -> Result<LagrangianPoint, AllocError> {
    let mut cov = Vec::with_capacity(norm.h.len());
    let mut rates = Vec::with_capacity(norm.h.len());
    let mut nonconverged = 0;
    for (n, h_n) in norm.h.iter().enumerate() {
        let problem = SubcarrierProblem::new(h_n, theta, &norm.weights, cfg.coef_threshold);
        let sol = problem.solve(warm[n].clone(), cfg)?;
        if !sol.converged {
            nonconverged += 1;
            log::debug!("inner solve on subcarrier {} stopped at residual {:.3e}", n + 1, sol.residual);
        }
        cov.push(sol.covariances);
        rates.push(sol.rates);
    }
    Ok(LagrangianPoint { cov, rates, nonconverged })
}

/// Minimum weighted energy meeting the scenario's targets.
pub fn solve_min_energy(ch: &ChannelSet, s: &Scenario, cfg: &SolverConfig) -> Result<AllocationResult, AllocError> {
    solve_min_energy_targets(ch, &s.rate_targets_bits(), &s.energy_weights, cfg)
}

/// As [`solve_min_energy`] with explicit targets (bits per use, summed over
/// subcarriers) and weights.
pub fn solve_min_energy_targets(
    ch: &ChannelSet,
    targets: &[f64],
    weights: &[f64],
    cfg: &SolverConfig,
) -> Result<AllocationResult, AllocError> {
    let u_count = ch.num_users();
    let n_count = ch.num_subcarriers();
    check_weights(ch, weights)?;
    if targets.len() != u_count || targets.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(AllocError::InvalidInput("targets must have one finite non-negative entry per user".into()));
    }
    for (u, &t) in targets.iter().enumerate() {
        if t > 0.0 && ch.aggregate_gain(u) == 0.0 {
            return Err(AllocError::Infeasible { user: u });
        }
    }

    let norm = Normalized::new(ch, weights);
    let theta_unit = norm.theta_unit();
    let theta_ref = norm.reference_theta(targets)?;
    let mut ell = Ellipsoid::ball(vec![1.0; u_count], cfg.ellipsoid_radius);

    if theta_ref == 0.0 {
        let zero = CovarianceAllocation::zeros(ch);
        let (order, clusters) = extract_order(&vec![0.0; u_count], cfg.tie_tol);
        return Ok(AllocationResult {
            rates: RateMatrix::zeros(u_count, n_count),
            inner_rates: RateMatrix::zeros(u_count, n_count),
            inner_alloc: zero.clone(),
            alloc: zero,
            order,
            clusters,
            theta_final: vec![0.0; u_count],
            theta_unit_mw_per_bit: theta_unit,
            per_user_energy: vec![0.0; u_count],
            weighted_energy: 0.0,
            converged: true,
            stop_reason: StopReason::ZeroTargets,
            iterations: 0,
            trace: Vec::new(),
            targets: targets.to_vec(),
            weights: weights.to_vec(),
            needs_timeshare: false,
            cluster_scales: Vec::new(),
            dual_state: DualState { theta: vec![0.0; u_count], ellipsoid: ell, iteration: 0 },
            inner_nonconverged: 0,
        });
    }

    let eps = cfg.inner.init_energy_mw / norm.p0;
    let mut warm: Vec<Vec<HermitianMatrix>> = (0..n_count)
        .map(|_| (0..u_count).map(|u| HermitianMatrix::scaled_identity(ch.user_antennas(u), eps)).collect())
        .collect();

    let scale: Vec<f64> = targets.iter().map(|t| t.max(1.0)).collect();
    let cap = cfg.iteration_cap(u_count);
    let mut trace = Vec::new();
    let mut stop = None;
    let mut last_violation = f64::INFINITY;
    let mut inner_nonconverged = 0;
    let mut last_point: Option<(Vec<f64>, LagrangianPoint)> = None;
    let mut iteration = 0;

    while iteration < cap {
        iteration += 1;
        let x = ell.center().to_vec();
        let log_det_shape = ell.log_det()?;

        if let Some(u) = x.iter().position(|&v| v < 0.0) {
            let mut a = vec![0.0; u_count];
            a[u] = -1.0;
            trace.push(TraceRecord {
                iteration,
                theta: x.iter().map(|v| v * theta_ref).collect(),
                subgrad_norm: 1.0,
                max_violation: f64::NAN,
                dual_value_mw: None,
                log_det_shape,
                cut: CutKind::Feasibility,
            });
            ell.cut(&a);
            continue;
        }

        let theta: Vec<f64> = x.iter().map(|v| v * theta_ref).collect();
        let point = solve_lagrangian(&norm, &theta, &warm, &cfg.inner)?;
        inner_nonconverged += point.nonconverged;
        warm.clone_from(&point.cov);
        let b = point.totals(u_count);
        let g: Vec<f64> = targets.iter().zip(&b).map(|(t, b)| t - b).collect();
        let violation = (0..u_count)
            .map(|u| {
                if g[u] > 0.0 {
                    g[u] / scale[u]
                } else if x[u] > cfg.tol_theta {
                    -g[u] / scale[u]
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        last_violation = violation;
        let energies = point.energies(u_count, norm.p0);
        let dual = energies.iter().zip(weights).map(|(e, w)| e * w).sum::<f64>()
            + theta.iter().zip(&g).map(|(t, g)| t * theta_unit * g).sum::<f64>();
        trace.push(TraceRecord {
            iteration,
            theta: theta.clone(),
            subgrad_norm: g.iter().map(|v| v * v).sum::<f64>().sqrt(),
            max_violation: violation,
            dual_value_mw: Some(dual),
            log_det_shape,
            cut: CutKind::Objective,
        });
        last_point = Some((theta, point));

        if violation <= cfg.tol_rate {
            stop = Some(StopReason::RateTolerance);
            break;
        }
        let a: Vec<f64> = g.iter().map(|v| -v).collect();
        if !ell.cut(&a) || ell.radius()? < cfg.tol_theta {
            stop = Some(StopReason::Radius);
            break;
        }
    }

    let Some(stop) = stop else {
        return Err(AllocError::NonConvergence { iterations: iteration, violation: last_violation });
    };

    let (theta_final, point, tie_tol) = match stop {
        StopReason::RateTolerance => {
            let (theta, point) = last_point.expect("rate stop follows an evaluation");
            (theta, point, cfg.tie_tol)
        }
        _ => {
            let x: Vec<f64> = ell.center().iter().map(|v| v.max(0.0)).collect();
            let theta: Vec<f64> = x.iter().map(|v| v * theta_ref).collect();
            let point = solve_lagrangian(&norm, &theta, &warm, &cfg.inner)?;
            inner_nonconverged += point.nonconverged;
            let x_max = x.iter().copied().fold(0.0, f64::max);
            let spread = if x_max > 0.0 { 2.0 * ell.radius()? / x_max } else { 0.0 };
            (theta, point, cfg.tie_tol.max(spread))
        }
    };

    let (order, clusters) = extract_order(&theta_final, tie_tol);
    let inner_alloc = CovarianceAllocation::new(
        (0..u_count).map(|u| (0..n_count).map(|n| point.cov[n][u].scale(norm.p0)).collect()).collect(),
    )?;
    let inner_rates =
        RateMatrix::from_rows((0..u_count).map(|u| (0..n_count).map(|n| point.rates[n][u]).collect()).collect());

    let rec = recovery::recover(ch, &inner_alloc, &clusters, targets, weights, cfg.inner.init_energy_mw)?;
    let Some(rec) = rec else {
        let user = targets.iter().position(|&t| t > 0.0).unwrap_or(0);
        return Err(AllocError::Infeasible { user });
    };
    let rates = sic_rates(ch, &rec.alloc, &order)?;
    let needs_timeshare = clusters.iter().any(|c| c.len() > 1) && !meets(&rates.totals(), targets, cfg.tol_rate);
    let per_user_energy = rec.alloc.per_user_energy();
    let weighted_energy = rec.alloc.weighted_energy(weights);

    Ok(AllocationResult {
        alloc: rec.alloc,
        rates,
        order,
        clusters,
        theta_final: theta_final.clone(),
        theta_unit_mw_per_bit: theta_unit,
        per_user_energy,
        weighted_energy,
        converged: true,
        stop_reason: stop,
        iterations: iteration,
        trace,
        targets: targets.to_vec(),
        weights: weights.to_vec(),
        needs_timeshare,
        inner_alloc,
        inner_rates,
        cluster_scales: rec.betas,
        dual_state: DualState { theta: theta_final, ellipsoid: ell, iteration },
        inner_nonconverged,
    })
}

/// Scales `shapes` cluster by cluster (clusters listed in decoding order,
/// last cluster decoded last) to the least energy meeting `targets`. Users
/// with a target but no energy in `shapes` start from `seed_energy_mw * I`.
/// Clusters with several users get one factor per member chosen for the
/// least `weights`-weighted energy. Returns the scaled allocation and one factor per cluster, or `None` when
/// some target cannot be reached by scaling.
pub fn rescale_to_targets(
    ch: &ChannelSet,
    shapes: &CovarianceAllocation,
    clusters: &[Vec<usize>],
    targets: &[f64],
    weights: &[f64],
    seed_energy_mw: f64,
) -> Result<Option<(CovarianceAllocation, Vec<f64>)>, AllocError> {
    if targets.len() != ch.num_users() {
        return Err(AllocError::InvalidInput(format!("{} targets for {} users", targets.len(), ch.num_users())));
    }
    check_weights(ch, weights)?;
    Ok(recovery::recover(ch, shapes, clusters, targets, weights, seed_energy_mw)?.map(|r| (r.alloc, r.betas)))
}
