//! Primal recovery: rescale the final inner solution so the rate targets
//! hold.
//!
//! Clusters are processed from the last decoded to the first. Cluster `j`
//! sees the noise plus the received covariances of every cluster decoded
//! after it, and all its members are scaled by one common factor `beta_j`,
//! the smallest value for which the cluster's targets lie in its own
//! sub-polymatroid. A singleton cluster therefore meets its target exactly.
//!
//! Tied multipliers leave the split of energy inside a cluster undetermined,
//! and the inner solve may hand one member almost nothing. A common factor
//! then has to grow until that member alone reaches its target. Clusters
//! with several users are therefore refined with one energy factor per
//! member: minimize the weighted energy subject to every subset constraint.
//! The objective is linear and the capacities are concave in the factors,
//! so a small ellipsoid run solves it.

use std::f64::consts::LN_2;

use super::ellipsoid::Ellipsoid;
use crate::numerics::HermitianMatrix;
use crate::rate_region::{CovarianceAllocation, RateError};
use crate::scenario::ChannelSet;

/// Doublings allowed when bracketing `beta` from above.
const MAX_DOUBLINGS: usize = 400;
/// Ellipsoid steps per squared cluster size in the per-member refinement.
const REFINE_STEPS_PER_DIM2: usize = 400;
/// Relative objective gap at which the refinement stops.
const REFINE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub(crate) struct Recovery {
    pub alloc: CovarianceAllocation,
    /// Scaling factor per cluster, in decoding order.
    pub betas: Vec<f64>,
}

/// `unit_energy` (mW per antenna) seeds the shape of users that need rate
/// but received no energy from the inner solve.
/// Refinement changes the interference seen by earlier clusters, so both
/// variants are computed and the cheaper one is kept.
pub(crate) fn recover(
    ch: &ChannelSet,
    alloc: &CovarianceAllocation,
    clusters: &[Vec<usize>],
    targets: &[f64],
    weights: &[f64],
    unit_energy: f64,
) -> Result<Option<Recovery>, RateError> {
    let plain = recover_with(ch, alloc, clusters, targets, weights, unit_energy, false)?;
    if clusters.iter().all(|c| c.len() < 2) {
        return Ok(plain);
    }
    let refined = recover_with(ch, alloc, clusters, targets, weights, unit_energy, true)?;
    Ok(match (plain, refined) {
        (Some(a), Some(b)) => {
            Some(if b.alloc.weighted_energy(weights) < a.alloc.weighted_energy(weights) { b } else { a })
        }
        (a, b) => a.or(b),
    })
}

fn recover_with(
    ch: &ChannelSet,
    alloc: &CovarianceAllocation,
    clusters: &[Vec<usize>],
    targets: &[f64],
    weights: &[f64],
    unit_energy: f64,
    refine: bool,
) -> Result<Option<Recovery>, RateError> {
    let n_count = ch.num_subcarriers();
    let mut alloc = alloc.clone();
    for (u, &t) in targets.iter().enumerate() {
        if t > 0.0 && alloc.per_user_energy()[u] <= 0.0 {
            for n in 0..n_count {
                alloc.set(u, n, HermitianMatrix::scaled_identity(ch.user_antennas(u), unit_energy));
            }
        }
    }

    let mut later: Vec<HermitianMatrix> = vec![ch.noise().clone(); n_count];
    let mut betas = vec![0.0; clusters.len()];
    for (j, cluster) in clusters.iter().enumerate().rev() {
        let rx: Vec<Vec<HermitianMatrix>> =
            (0..n_count).map(|n| cluster.iter().map(|&u| alloc.get(u, n).congruence(ch.h(u, n))).collect()).collect();
        let cluster_targets: Vec<f64> = cluster.iter().map(|&u| targets[u]).collect();
        let beta = if cluster_targets.iter().all(|&t| t <= 0.0) {
            0.0
        } else {
            match minimal_scale(&later, &rx, &cluster_targets)? {
                Some(b) => b,
                None => return Ok(None),
            }
        };
        betas[j] = beta;
        let mut factors = vec![beta; cluster.len()];
        if refine && cluster.len() > 1 && beta > 0.0 {
            let energies: Vec<f64> = cluster.iter().map(|&u| beta * alloc.per_user_energy()[u]).collect();
            let cw: Vec<f64> = cluster.iter().map(|&u| weights[u]).collect();
            let scaled: Vec<Vec<HermitianMatrix>> =
                rx.iter().map(|r| r.iter().map(|m| m.scale(beta)).collect()).collect();
            if let Some(f) = refine_cluster(&later, &scaled, &cluster_targets, &cw, &energies)? {
                factors = f.iter().map(|v| v * beta).collect();
            }
        }
        for (i, &u) in cluster.iter().enumerate() {
            alloc.scale_user(u, factors[i]);
        }
        for n in 0..n_count {
            for (i, m) in rx[n].iter().enumerate() {
                later[n].add_assign(&m.scale(factors[i]));
            }
        }
    }
    Ok(Some(Recovery { alloc, betas }))
}

/// Per-member factors `f` (relative to the feasible point `f = 1`) that
/// lower `sum_i w_i E_i f_i` while keeping every subset constraint. Works in
/// energies `p_i = E_i f_i`. Returns `None` when nothing better than the
/// start is found.
fn refine_cluster(
    noise: &[HermitianMatrix],
    rx: &[Vec<HermitianMatrix>],
    targets: &[f64],
    weights: &[f64],
    energies: &[f64],
) -> Result<Option<Vec<f64>>, RateError> {
    let k = targets.len();
    if energies.iter().any(|&e| !(e > 0.0)) || weights.iter().any(|&w| !(w > 0.0)) {
        return Ok(None);
    }
    // Received covariance per unit energy.
    let unit: Vec<Vec<HermitianMatrix>> =
        rx.iter().map(|r| r.iter().zip(energies).map(|(m, e)| m.scale(1.0 / e)).collect()).collect();
    let base: f64 = noise.iter().map(|m| m.log2_det()).sum::<Result<f64, _>>()?;
    let start_cost: f64 = weights.iter().zip(energies).map(|(w, e)| w * e).sum();

    // Most violated subset at p (slack = capacity - need) and its gradient.
    let worst = |p: &[f64]| -> Result<(f64, Vec<f64>), RateError> {
        let mut worst = (f64::INFINITY, vec![0.0; k]);
        for mask in 1u32..(1 << k) {
            let mut cap = -base;
            let mut grad = vec![0.0; k];
            for (n, un) in unit.iter().enumerate() {
                let mut acc = noise[n].clone();
                for i in (0..k).filter(|i| mask >> i & 1 == 1) {
                    acc.add_assign(&un[i].scale(p[i]));
                }
                cap += acc.log2_det()?;
                let inv = acc.inverse_pd()?;
                for i in (0..k).filter(|i| mask >> i & 1 == 1) {
                    grad[i] += inv.as_matrix().inner(un[i].as_matrix()) / LN_2;
                }
            }
            let need: f64 = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| targets[i]).sum();
            if cap - need < worst.0 {
                worst = (cap - need, grad);
            }
        }
        Ok(worst)
    };

    // Any better point has w_i p_i <= start_cost; the ball around the start
    // with this radius contains the box.
    let radius = (0..k).map(|i| (start_cost / weights[i]).powi(2)).sum::<f64>().sqrt();
    let mut ell = Ellipsoid::ball(energies.to_vec(), radius);
    let mut best = (start_cost, energies.to_vec());
    for _ in 0..REFINE_STEPS_PER_DIM2 * k * k {
        let p = ell.center().to_vec();
        let cut: Vec<f64> = if let Some(i) = (0..k).find(|&i| p[i] < 0.0) {
            (0..k).map(|j| if j == i { -1.0 } else { 0.0 }).collect()
        } else {
            let (slack, grad) = worst(&p)?;
            if slack >= 0.0 {
                let cost: f64 = weights.iter().zip(&p).map(|(w, v)| w * v).sum();
                if cost < best.0 {
                    best = (cost, p.clone());
                }
                weights.to_vec()
            } else {
                // Capacity is concave: the kept half is where it grows.
                grad.iter().map(|g| -g).collect()
            }
        };
        // A failed cut means the shape collapsed onto a face of optima.
        if !ell.cut(&cut) {
            break;
        }
        let spread = (0..k).map(|i| weights[i] * ell.shape()[i * k + i].sqrt()).sum::<f64>();
        if spread <= REFINE_TOL * best.0 {
            break;
        }
    }
    if best.0 >= start_cost * (1.0 - 1e-12) {
        return Ok(None);
    }
    // Shrink the best point uniformly until a constraint is tight.
    let scaled: Vec<Vec<HermitianMatrix>> =
        unit.iter().map(|un| un.iter().zip(&best.1).map(|(m, p)| m.scale(*p)).collect()).collect();
    let shrink = minimal_scale(noise, &scaled, targets)?.unwrap_or(1.0).min(1.0);
    Ok(Some(best.1.iter().zip(energies).map(|(p, e)| shrink * p / e).collect()))
}

/// Smallest `beta` with `sum_{u in S} t_u <= C_S(beta)` for every non-empty
/// subset `S` of the cluster. `None` if no finite scale works.
fn minimal_scale(
    noise: &[HermitianMatrix],
    rx: &[Vec<HermitianMatrix>],
    targets: &[f64],
) -> Result<Option<f64>, RateError> {
    let base: f64 = noise.iter().map(|m| m.log2_det()).sum::<Result<f64, _>>()?;
    let k = targets.len();
    let slack = |beta: f64| -> Result<f64, RateError> {
        let mut worst = f64::INFINITY;
        for mask in 1u32..(1 << k) {
            let mut cap = -base;
            for (n, rx_n) in rx.iter().enumerate() {
                let mut acc = noise[n].clone();
                for (i, m) in rx_n.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        acc.add_assign(&m.scale(beta));
                    }
                }
                cap += acc.log2_det()?;
            }
            let need: f64 = (0..k).filter(|i| mask >> i & 1 == 1).map(|i| targets[i]).sum();
            worst = worst.min(cap - need);
        }
        Ok(worst)
    };

    let mut hi = 1.0;
    let mut doublings = 0;
    while slack(hi)? < 0.0 {
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Ok(None);
        }
    }
    let mut lo = hi / 2.0;
    while slack(lo)? >= 0.0 {
        hi = lo;
        lo /= 2.0;
        if lo < f64::MIN_POSITIVE {
            return Ok(Some(hi));
        }
    }
    // Geometric bisection between an infeasible lo and a feasible hi.
    for _ in 0..200 {
        if hi - lo <= 1e-14 * hi {
            break;
        }
        let mid = (lo * hi).sqrt();
        if slack(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}
