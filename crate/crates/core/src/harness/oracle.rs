//! Brute-force energy oracle for tiny scalar instances.
//!
//! For every global decoding order, every per-user-per-subcarrier power is
//! put on a grid `{0, d, 2d, ...}` with `d = resolution * p_max`, except the
//! first-decoded user's power on the last subcarrier: nobody sees that user
//! as interference, so its least sufficient value has a closed form, which
//! is rounded up to the grid. `p_max` bounds every power of a
//! weighted-optimal point: it is the weighted energy of a simple feasible
//! point (equal split of each target over subcarriers, best order) divided
//! by the smallest weight.

use std::fmt::Write as _;

use super::HarnessError;
use crate::pipeline::{allocate_with_timeshare, PipelineConfig};
use crate::rate_region::{all_orders, DecodingOrder};
use crate::scenario::ChannelSet;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpec {
    /// Grid step as a fraction of `p_max`.
    pub resolution: f64,
    /// Largest number of grid evaluations (points times orders).
    pub budget: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { resolution: 1e-2, budget: 1e8 }
    }
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub instance: String,
    pub oracle_energy: f64,
    pub solver_energy: f64,
    /// `(solver - oracle) / oracle`.
    pub relative_gap: f64,
    pub orders_enumerated: usize,
    pub grid_points: u64,
    /// Grid step, mW.
    pub step_mw: f64,
    /// `sum_u w_u * N * step`: what rounding up to the grid can cost.
    pub slack: f64,
    /// Best grid energy per order, `INFINITY` if no grid point is feasible.
    pub per_order_energy: Vec<(DecodingOrder, f64)>,
    /// Orders whose best grid energy is within `slack` of the minimum.
    pub optimal_orders: Vec<DecodingOrder>,
    pub solver_order: DecodingOrder,
    pub solver_clusters: Vec<Vec<usize>>,
    /// Solver's (time-shared) rates meet the targets within the solver's
    /// rate tolerance.
    pub solver_meets_targets: bool,
}

impl OracleReport {
    pub fn to_text(&self) -> String {
        let mut t = String::new();
        let _ = writeln!(t, "instance: {}", self.instance);
        let _ = writeln!(t, "oracle_energy_mw: {}", self.oracle_energy);
        let _ = writeln!(t, "solver_energy_mw: {}", self.solver_energy);
        let _ = writeln!(t, "relative_gap: {}", self.relative_gap);
        let _ = writeln!(t, "grid_step_mw: {}", self.step_mw);
        let _ = writeln!(t, "grid_slack_mw: {}", self.slack);
        let _ = writeln!(t, "grid_points: {}", self.grid_points);
        let _ = writeln!(t, "orders_enumerated: {}", self.orders_enumerated);
        for (o, e) in &self.per_order_energy {
            let _ = writeln!(t, "order {}: {}", o.to_one_based_string(), e);
        }
        let opt: Vec<String> = self.optimal_orders.iter().map(|o| o.to_one_based_string()).collect();
        let _ = writeln!(t, "optimal_orders: {}", opt.join(" | "));
        let _ = writeln!(t, "solver_order: {}", self.solver_order.to_one_based_string());
        let _ = writeln!(t, "solver_meets_targets: {}", self.solver_meets_targets);
        t
    }
}

const MAX_USERS: usize = 3;
const MAX_SUBCARRIERS: usize = 2;

/// Grid oracle versus the solver on a scalar instance (`U <= 3`, `N <= 2`,
/// one antenna everywhere). Targets in bits per subcarrier use.
pub fn run_oracle(
    ch: &ChannelSet,
    targets: &[f64],
    weights: &[f64],
    spec: &OracleSpec,
    cfg: &PipelineConfig,
) -> Result<OracleReport> {
    let (u_count, n_count) = (ch.num_users(), ch.num_subcarriers());
    if u_count > MAX_USERS || n_count > MAX_SUBCARRIERS {
        return Err(HarnessError::InvalidSpec(format!(
            "oracle needs U <= {MAX_USERS} and N <= {MAX_SUBCARRIERS}, got U = {u_count}, N = {n_count}"
        ))
        .into());
    }
    if ch.ap_antennas() != 1 || (0..u_count).any(|u| ch.user_antennas(u) != 1) {
        return Err(HarnessError::InvalidSpec("oracle needs scalar channels".into()).into());
    }
    if !(spec.resolution > 0.0 && spec.resolution <= 1.0) {
        return Err(HarnessError::InvalidSpec("resolution must lie in (0, 1]".into()).into());
    }
    if targets.len() != u_count || weights.len() != u_count {
        return Err(HarnessError::InvalidSpec("one target and one weight per user".into()).into());
    }
    let w_min = weights.iter().copied().fold(f64::INFINITY, f64::min);
    if !(w_min > 0.0) {
        return Err(HarnessError::InvalidSpec("oracle needs positive weights".into()).into());
    }
    let sigma2 = ch.noise_power();
    // Received SNR per unit power.
    let g: Vec<Vec<f64>> =
        (0..u_count).map(|u| (0..n_count).map(|n| ch.h(u, n)[(0, 0)].norm_sqr() / sigma2).collect()).collect();
    for u in 0..u_count {
        if targets[u] > 0.0 && g[u].iter().all(|&x| x == 0.0) {
            return Err(HarnessError::InvalidSpec(format!("user {} has a target but no channel", u + 1)).into());
        }
    }

    let orders = all_orders(u_count);
    let reference = orders.iter().map(|o| equal_split_energy(&g, targets, weights, o)).fold(f64::INFINITY, f64::min);
    let p_max = reference / w_min;
    let levels = (1.0 / spec.resolution).ceil() as u64 + 1;
    let step = if p_max > 0.0 { p_max / (levels - 1) as f64 } else { 0.0 };
    let free_vars = (u_count * n_count - 1) as i32;
    let grid_points = (levels as f64).powi(free_vars);
    let evaluations = grid_points * orders.len() as f64;
    if evaluations > spec.budget {
        return Err(HarnessError::GridTooLarge { points: evaluations, budget: spec.budget }.into());
    }

    let mut per_order_energy = Vec::with_capacity(orders.len());
    for order in &orders {
        let e = if p_max > 0.0 { grid_search(&g, targets, weights, order, levels, step) } else { 0.0 };
        per_order_energy.push((order.clone(), e));
    }
    let oracle_energy = per_order_energy.iter().map(|(_, e)| *e).fold(f64::INFINITY, f64::min);
    let slack: f64 = weights.iter().map(|w| w * n_count as f64 * step).sum();
    let optimal_orders =
        per_order_energy.iter().filter(|(_, e)| *e <= oracle_energy + slack).map(|(o, _)| o.clone()).collect();

    let solved = allocate_with_timeshare(ch, targets, weights, cfg)?;
    let solver_energy = solved.allocation.weighted_energy;
    let solver_meets_targets = solved.allocation.meets_targets(&solved.achieved, cfg.solver.tol_rate);
    let relative_gap =
        if oracle_energy > 0.0 { (solver_energy - oracle_energy) / oracle_energy } else { solver_energy };
    let instance = format!(
        "U={u_count} N={n_count} targets_bits=[{}] weights=[{}]",
        targets.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(","),
        weights.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",")
    );
    Ok(OracleReport {
        instance,
        oracle_energy,
        solver_energy,
        relative_gap,
        orders_enumerated: orders.len(),
        grid_points: grid_points as u64,
        step_mw: step,
        slack,
        per_order_energy,
        optimal_orders,
        solver_order: solved.allocation.order.clone(),
        solver_clusters: solved.allocation.clusters.clone(),
        solver_meets_targets,
    })
}

/// Weighted energy of the equal-split point for `order`.
fn equal_split_energy(g: &[Vec<f64>], targets: &[f64], weights: &[f64], order: &DecodingOrder) -> f64 {
    let n_count = g[0].len();
    let mut total = 0.0;
    for n in 0..n_count {
        let mut interference = 0.0;
        for &u in order.users().iter().rev() {
            let b = targets[u] / n_count as f64;
            if b <= 0.0 {
                continue;
            }
            if g[u][n] == 0.0 {
                return f64::INFINITY;
            }
            let p = (b.exp2() - 1.0) * (1.0 + interference) / g[u][n];
            interference += g[u][n] * p;
            total += weights[u] * p;
        }
    }
    total
}

fn grid_search(g: &[Vec<f64>], targets: &[f64], weights: &[f64], order: &DecodingOrder, levels: u64, step: f64) -> f64 {
    let u_count = g.len();
    let n_count = g[0].len();
    let first = order.users()[0];
    let last_n = n_count - 1;
    let vars: Vec<(usize, usize)> = (0..u_count)
        .flat_map(|u| (0..n_count).map(move |n| (u, n)))
        .filter(|&(u, n)| !(u == first && n == last_n))
        .collect();
    let mut idx = vec![0u64; vars.len()];
    let mut p = vec![vec![0.0; n_count]; u_count];
    let mut best = f64::INFINITY;
    let users = order.users();

    loop {
        for (k, &(u, n)) in vars.iter().enumerate() {
            p[u][n] = idx[k] as f64 * step;
        }
        // Rates of everyone but the first-decoded user, who interferes with nobody.
        let mut ok = true;
        let mut first_bits = 0.0;
        let mut first_interference = 0.0;
        'check: for pos in (0..u_count).rev() {
            let u = users[pos];
            let mut bits = 0.0;
            for n in 0..n_count {
                let interference: f64 = users[pos + 1..].iter().map(|&v| g[v][n] * p[v][n]).sum();
                if pos == 0 {
                    if n == last_n {
                        first_interference = interference;
                    } else {
                        bits += (1.0 + g[u][n] * p[u][n] / (1.0 + interference)).log2();
                    }
                } else {
                    bits += (1.0 + g[u][n] * p[u][n] / (1.0 + interference)).log2();
                }
            }
            if pos == 0 {
                first_bits = bits;
            } else if bits < targets[u] {
                ok = false;
                break 'check;
            }
        }
        if ok {
            let need = targets[first] - first_bits;
            let last = if need <= 0.0 {
                Some(0.0)
            } else if g[first][last_n] > 0.0 {
                let exact = (need.exp2() - 1.0) * (1.0 + first_interference) / g[first][last_n];
                Some((exact / step).ceil() * step)
            } else {
                None
            };
            if let Some(last) = last {
                p[first][last_n] = last;
                let energy: f64 = (0..u_count).map(|u| weights[u] * p[u].iter().sum::<f64>()).sum();
                best = best.min(energy);
            }
        }
        // Odometer.
        let mut k = 0;
        loop {
            if k == idx.len() {
                return best;
            }
            idx[k] += 1;
            if idx[k] < levels {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}
