//! Time-sharing between SIC decoding orders.
//!
//! When multipliers tie, no single decoding order of the shared allocation
//! may reach every target. The candidates are the orders obtained by
//! permuting users inside each tied cluster; we look for time fractions
//! `t` (a probability vector) with `sum_i t_i s_i = b_min` that use as few
//! orders as possible. The support is minimized by sweeping the support
//! size and testing every subset of that size with a phase-1 LP.

mod lp;

use std::io::Write;

use thiserror::Error;

use crate::rate_region::{
    received_covariances, sic_rates_from_received, CovarianceAllocation, DecodingOrder, RateError,
};
use crate::scenario::ChannelSet;

pub const DEFAULT_ORDER_CAP: usize = 720;

#[derive(Debug, Error)]
pub enum TimeshareError {
    #[error("{count} candidate orders exceed the cap of {cap}")]
    CombinatorialExplosion { count: u128, cap: usize },
    #[error("targets lie outside the time-shared region (residual {gap:.6e} in rate units)")]
    InfeasibleTargets { gap: f64 },
    #[error("invalid time-share input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// Every order reachable by permuting users inside each cluster; cluster
/// blocks keep their positions. Lexicographic in `pi_inverse`.
pub fn enumerate_candidates(
    order: &DecodingOrder,
    clusters: &[Vec<usize>],
    cap: usize,
) -> Result<Vec<DecodingOrder>, TimeshareError> {
    let flat: Vec<usize> = clusters.iter().flatten().copied().collect();
    let mut sorted_flat = flat.clone();
    sorted_flat.sort_unstable();
    if sorted_flat != (0..order.len()).collect::<Vec<_>>() {
        return Err(TimeshareError::InvalidInput("clusters must partition the users".into()));
    }
    let mut pos = 0;
    for c in clusters {
        let mut block = order.users()[pos..pos + c.len()].to_vec();
        block.sort_unstable();
        let mut cs = c.clone();
        cs.sort_unstable();
        if block != cs {
            return Err(TimeshareError::InvalidInput("clusters must be contiguous blocks of the order".into()));
        }
        pos += c.len();
    }
    let count = clusters.iter().try_fold(1u128, |acc, c| acc.checked_mul(factorial(c.len())));
    match count {
        Some(c) if c <= cap as u128 => {}
        other => return Err(TimeshareError::CombinatorialExplosion { count: other.unwrap_or(u128::MAX), cap }),
    }

    let per_cluster: Vec<Vec<Vec<usize>>> = clusters
        .iter()
        .map(|c| {
            let mut s = c.clone();
            s.sort_unstable();
            permutations(&s)
        })
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; clusters.len()];
    loop {
        let pi: Vec<usize> = idx.iter().enumerate().flat_map(|(j, &i)| per_cluster[j][i].iter().copied()).collect();
        out.push(DecodingOrder::new(pi).expect("permutation"));
        // Odometer with the first cluster varying slowest.
        let mut j = clusters.len();
        loop {
            if j == 0 {
                return Ok(out);
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < per_cluster[j].len() {
                break;
            }
            idx[j] = 0;
        }
    }
}

fn factorial(k: usize) -> u128 {
    (1..=k as u128).product()
}

/// Lexicographic permutations of a sorted slice.
fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    let mut cur = items.to_vec();
    let mut out = vec![cur.clone()];
    loop {
        let Some(i) = (1..cur.len()).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..cur.len()).rev().find(|&j| cur[j] > cur[i - 1]).expect("successor");
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

/// Row `i` is the per-user total SIC rate under `orders[i]`, times
/// `bandwidth` (so bits/s when `bandwidth` is in Hz).
pub fn rate_vectors_for_orders(
    ch: &ChannelSet,
    alloc: &CovarianceAllocation,
    orders: &[DecodingOrder],
    bandwidth: f64,
) -> Result<Vec<Vec<f64>>, RateError> {
    let rx = received_covariances(ch, alloc)?;
    orders
        .iter()
        .map(|o| {
            if o.len() != ch.num_users() {
                return Err(RateError::DimensionMismatch(format!("order has {} users", o.len())));
            }
            Ok(sic_rates_from_received(ch.noise(), &rx, o)?.totals().iter().map(|b| b * bandwidth).collect())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeShareProblem {
    pub candidate_orders: Vec<DecodingOrder>,
    /// `rate_vectors[i][u]`: rate of user `u` under order `i`.
    pub rate_vectors: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl TimeShareProblem {
    pub fn new(
        candidate_orders: Vec<DecodingOrder>,
        rate_vectors: Vec<Vec<f64>>,
        targets: Vec<f64>,
    ) -> Result<Self, TimeshareError> {
        if candidate_orders.is_empty() || candidate_orders.len() != rate_vectors.len() {
            return Err(TimeshareError::InvalidInput("need one rate vector per candidate order, at least one".into()));
        }
        let u = targets.len();
        if rate_vectors.iter().any(|r| r.len() != u) || candidate_orders.iter().any(|o| o.len() != u) {
            return Err(TimeshareError::InvalidInput("rate vectors and orders must have one entry per user".into()));
        }
        if rate_vectors.iter().flatten().chain(&targets).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(TimeshareError::InvalidInput("rates and targets must be finite and non-negative".into()));
        }
        Ok(Self { candidate_orders, rate_vectors, targets })
    }

    pub fn num_orders(&self) -> usize {
        self.candidate_orders.len()
    }
}

/// How the averaged rates are compared with the targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMode {
    /// `sum_i t_i s_i = b_min`.
    Exact,
    /// `sum_i t_i s_i >= b_min`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeShareConfig {
    /// Residual tolerance relative to `max(b_min)`.
    pub tol: f64,
    pub mode: TargetMode,
    /// Maximum number of subset LPs in the support sweep.
    pub subset_budget: usize,
}

impl Default for TimeShareConfig {
    fn default() -> Self {
        Self { tol: 1e-6, mode: TargetMode::Exact, subset_budget: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeShareSolution {
    /// Time fraction per candidate order.
    pub weights: Vec<f64>,
    pub active: Vec<bool>,
    /// `sum_i weights_i * rate_vectors_i`.
    pub achieved: Vec<f64>,
    /// False when the subset budget ran out before minimality was shown;
    /// the support is then that of a basic LP solution (at most `U + 1`).
    pub support_proven_minimal: bool,
}

impl TimeShareSolution {
    pub fn support_size(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }
}

pub fn solve_timeshare(p: &TimeShareProblem, cfg: &TimeShareConfig) -> Result<TimeShareSolution, TimeshareError> {
    let num_ord = p.num_orders();
    let scale = p.targets.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);

    let all: Vec<usize> = (0..num_ord).collect();
    let full = match test_subset(p, &all, scale, cfg) {
        Ok(sol) => sol,
        Err(gap) => return Err(TimeshareError::InfeasibleTargets { gap }),
    };

    let max_k = num_ord.min(p.targets.len() + 1);
    let mut tested = 0usize;
    for k in 1..=max_k {
        let mut comb: Vec<usize> = (0..k).collect();
        loop {
            if tested >= cfg.subset_budget {
                log::warn!("time-share subset budget of {} exhausted at support size {k}", cfg.subset_budget);
                return Ok(TimeShareSolution { support_proven_minimal: false, ..full });
            }
            tested += 1;
            if let Ok(sol) = test_subset(p, &comb, scale, cfg) {
                return Ok(sol);
            }
            if !next_combination(&mut comb, num_ord) {
                break;
            }
        }
    }
    // A basic solution of the full LP has at most U + 1 active orders, so
    // the sweep above cannot miss; keep the full solution as a fallback.
    Ok(full)
}

fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    let Some(i) = (0..k).rev().find(|&i| comb[i] < n - k + i) else {
        return false;
    };
    comb[i] += 1;
    for j in i + 1..k {
        comb[j] = comb[j - 1] + 1;
    }
    true
}

/// LP feasibility on `subset`; `Err` carries the residual in rate units.
fn test_subset(
    p: &TimeShareProblem,
    subset: &[usize],
    scale: f64,
    cfg: &TimeShareConfig,
) -> Result<TimeShareSolution, f64> {
    let u_count = p.targets.len();
    let k = subset.len();
    let surplus = if cfg.mode == TargetMode::AtLeast { u_count } else { 0 };
    let mut a = Vec::with_capacity(u_count + 1);
    let mut b = Vec::with_capacity(u_count + 1);
    for u in 0..u_count {
        let mut row = vec![0.0; k + surplus];
        for (c, &i) in subset.iter().enumerate() {
            row[c] = p.rate_vectors[i][u] / scale;
        }
        if surplus > 0 {
            row[k + u] = -1.0;
        }
        a.push(row);
        b.push(p.targets[u] / scale);
    }
    let mut sum_row = vec![0.0; k + surplus];
    sum_row[..k].fill(1.0);
    a.push(sum_row);
    b.push(1.0);

    let res = lp::phase_one(&a, &b);
    if res.infeasibility > cfg.tol {
        return Err(res.infeasibility * scale);
    }
    let total: f64 = res.x[..k].iter().sum();
    if !(total > 0.0) {
        return Err(res.infeasibility * scale);
    }
    let mut weights = vec![0.0; p.num_orders()];
    let mut active = vec![false; p.num_orders()];
    for (c, &i) in subset.iter().enumerate() {
        weights[i] = res.x[c] / total;
        active[i] = weights[i] > 0.0;
    }
    let achieved: Vec<f64> =
        (0..u_count).map(|u| (0..p.num_orders()).map(|i| weights[i] * p.rate_vectors[i][u]).sum()).collect();
    let worst = achieved
        .iter()
        .zip(&p.targets)
        .map(|(x, t)| match cfg.mode {
            TargetMode::Exact => (x - t).abs(),
            TargetMode::AtLeast => (t - x).max(0.0),
        })
        .fold(0.0, f64::max);
    if worst > cfg.tol * scale {
        return Err(worst);
    }
    Ok(TimeShareSolution { weights, active, achieved, support_proven_minimal: true })
}

/// Writes the active orders as CSV: `order, fraction, rate_1..rate_U`, with
/// one-based user ids and rates multiplied by `rate_scale`.
pub fn write_timeshare_csv<W: Write>(
    out: W,
    p: &TimeShareProblem,
    sol: &TimeShareSolution,
    rate_scale: f64,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["order".to_string(), "fraction".to_string()];
    header.extend((1..=p.targets.len()).map(|u| format!("rate_{u}")));
    w.write_record(&header)?;
    for i in 0..p.num_orders() {
        if !sol.active[i] {
            continue;
        }
        let mut row = vec![p.candidate_orders[i].to_one_based_string(), format!("{:.6}", sol.weights[i])];
        row.extend(p.rate_vectors[i].iter().map(|r| format!("{:.6}", r * rate_scale)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orders(n: usize, u: usize) -> Vec<DecodingOrder> {
        crate::rate_region::all_orders(u).into_iter().take(n).collect()
    }

    #[test]
    fn singleton_clusters_give_input_order() {
        let o = DecodingOrder::new(vec![2, 0, 1]).unwrap();
        let c = enumerate_candidates(&o, &[vec![2], vec![0], vec![1]], 720).unwrap();
        assert_eq!(c, vec![o]);
    }

    #[test]
    fn full_cluster_gives_all_permutations() {
        let o = DecodingOrder::identity(3);
        let c = enumerate_candidates(&o, &[vec![0, 1, 2]], 720).unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!(c, crate::rate_region::all_orders(3));
    }

    #[test]
    fn fixed_block_keeps_position() {
        let o = DecodingOrder::identity(3);
        let c = enumerate_candidates(&o, &[vec![0, 1], vec![2]], 720).unwrap();
        let s: Vec<String> = c.iter().map(|o| o.to_one_based_string()).collect();
        assert_eq!(s, vec!["1 2 3", "2 1 3"]);
    }

    #[test]
    fn cap_is_enforced() {
        let o = DecodingOrder::identity(4);
        let err = enumerate_candidates(&o, &[vec![0, 1, 2, 3]], 10).unwrap_err();
        assert!(matches!(err, TimeshareError::CombinatorialExplosion { count: 24, cap: 10 }));
    }

    #[test]
    fn exact_single_order() {
        let p = TimeShareProblem::new(orders(2, 2), vec![vec![1.0, 2.0], vec![2.0, 1.0]], vec![1.0, 2.0]).unwrap();
        let s = solve_timeshare(&p, &TimeShareConfig::default()).unwrap();
        assert_eq!(s.weights, vec![1.0, 0.0]);
        assert_eq!(s.support_size(), 1);
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let p = TimeShareProblem::new(orders(2, 2), vec![vec![2.0, 1.0], vec![1.0, 2.0]], vec![1.5, 1.5]).unwrap();
        let s = solve_timeshare(&p, &TimeShareConfig::default()).unwrap();
        assert!((s.weights[0] - 0.5).abs() < 1e-12 && (s.weights[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn outside_region_is_reported() {
        let p = TimeShareProblem::new(orders(2, 2), vec![vec![2.0, 1.0], vec![1.0, 2.0]], vec![2.0, 2.0]).unwrap();
        let err = solve_timeshare(&p, &TimeShareConfig::default()).unwrap_err();
        match err {
            TimeshareError::InfeasibleTargets { gap } => assert!(gap > 0.5),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn at_least_mode_accepts_surplus() {
        let p = TimeShareProblem::new(orders(2, 2), vec![vec![2.0, 1.1], vec![1.1, 2.0]], vec![1.5, 1.5]).unwrap();
        assert!(solve_timeshare(&p, &TimeShareConfig::default()).is_err());
        let cfg = TimeShareConfig { mode: TargetMode::AtLeast, ..Default::default() };
        let s = solve_timeshare(&p, &cfg).unwrap();
        assert!(s.achieved.iter().all(|&a| a >= 1.5 - 1e-9));
    }

    #[test]
    fn combinations_in_lexicographic_order() {
        let mut c = vec![0, 1];
        let mut seen = vec![c.clone()];
        while next_combination(&mut c, 4) {
            seen.push(c.clone());
        }
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
    }
}
