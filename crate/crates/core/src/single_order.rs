//! Operating points that use one decoding order on every subcarrier, for
//! comparison with time-sharing.
//!
//! Two constructions, each feasible for the order it is built for:
//!
//! * greedy water-filling: from the last decoded user backwards, each user
//!   water-fills against noise plus the users decoded after it, to exactly
//!   its target;
//! * rescaling: given covariance shapes (for instance an optimal
//!   time-sharing allocation), each user's shape is scaled, last decoded
//!   first, to exactly its target.
//!
//! Neither is guaranteed to be the best single-order allocation (that
//! problem is not convex); the best of them is an upper bound on it.

use crate::allocator::rescale_to_targets;
use crate::numerics::{water_fill_rate, HermitianMatrix};
use crate::rate_region::{all_orders, sic_rates, CovarianceAllocation, DecodingOrder};
use crate::scenario::ChannelSet;
use crate::{Error, Result};

/// Largest user count for which every order is enumerated.
pub const MAX_ENUMERATED_USERS: usize = 8;

#[derive(Debug, Clone)]
pub struct SingleOrderSolution {
    pub order: DecodingOrder,
    pub alloc: CovarianceAllocation,
    pub weighted_energy: f64,
    /// Per-user totals under `order`, bits per subcarrier use.
    pub rates: Vec<f64>,
}

/// Greedy backward water-filling for `order`. `None` if a user with a
/// positive target has no usable channel.
pub fn greedy_waterfill(
    ch: &ChannelSet,
    order: &DecodingOrder,
    targets: &[f64],
) -> Result<Option<CovarianceAllocation>> {
    let n_count = ch.num_subcarriers();
    let mut alloc = CovarianceAllocation::zeros(ch);
    let mut noise: Vec<HermitianMatrix> = vec![ch.noise().clone(); n_count];
    for &u in order.users().iter().rev() {
        if targets[u] <= 0.0 {
            continue;
        }
        let modes = (0..n_count)
            .map(|n| noise[n].inverse_pd()?.adjoint_congruence(ch.h(u, n)).eigen())
            .collect::<Result<Vec<_>, _>>()?;
        let gains: Vec<f64> = modes.iter().flat_map(|e| e.values.iter().map(|g| g.max(0.0))).collect();
        let Some((_, powers)) = water_fill_rate(&gains, targets[u]) else {
            return Ok(None);
        };
        let mut offset = 0;
        for (n, e) in modes.iter().enumerate() {
            let k = e.values.len();
            let cov = e.reconstruct_with(&powers[offset..offset + k]);
            offset += k;
            noise[n].add_assign(&cov.congruence(ch.h(u, n)));
            alloc.set(u, n, cov);
        }
    }
    Ok(Some(alloc))
}

/// Per-user rescaling of `shapes` for `order`.
pub fn rescale_for_order(
    ch: &ChannelSet,
    shapes: &CovarianceAllocation,
    order: &DecodingOrder,
    targets: &[f64],
    seed_energy_mw: f64,
) -> Result<Option<CovarianceAllocation>> {
    let clusters: Vec<Vec<usize>> = order.users().iter().map(|&u| vec![u]).collect();
    // Singleton clusters: weights play no role.
    let weights = vec![1.0; ch.num_users()];
    Ok(rescale_to_targets(ch, shapes, &clusters, targets, &weights, seed_energy_mw)?.map(|(a, _)| a))
}

/// Cheapest single-order point over every order, using greedy water-filling
/// and rescaling of each entry of `shapes`.
pub fn best_single_order(
    ch: &ChannelSet,
    targets: &[f64],
    weights: &[f64],
    shapes: &[&CovarianceAllocation],
    seed_energy_mw: f64,
) -> Result<Option<SingleOrderSolution>> {
    let u_count = ch.num_users();
    if u_count > MAX_ENUMERATED_USERS {
        return Err(Error::Scheme(format!("order enumeration limited to {MAX_ENUMERATED_USERS} users")));
    }
    let mut best: Option<SingleOrderSolution> = None;
    for order in all_orders(u_count) {
        let mut candidates = Vec::new();
        if let Some(a) = greedy_waterfill(ch, &order, targets)? {
            candidates.push(a);
        }
        for s in shapes {
            if let Some(a) = rescale_for_order(ch, s, &order, targets, seed_energy_mw)? {
                candidates.push(a);
            }
        }
        for alloc in candidates {
            let weighted_energy = alloc.weighted_energy(weights);
            if best.as_ref().is_none_or(|b| weighted_energy < b.weighted_energy) {
                let rates = sic_rates(ch, &alloc, &order)?.totals();
                best = Some(SingleOrderSolution { order: order.clone(), alloc, weighted_energy, rates });
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::C64;

    fn scalar(gains: &[&[f64]], sigma2: f64) -> ChannelSet {
        let g: Vec<Vec<C64>> = gains.iter().map(|r| r.iter().map(|&v| C64::new(v, 0.0)).collect()).collect();
        ChannelSet::scalar(&g, sigma2).unwrap()
    }

    #[test]
    fn greedy_meets_targets_exactly() {
        let ch = scalar(&[&[1.0, 0.3], &[0.6, 0.9]], 0.5);
        let order = DecodingOrder::new(vec![1, 0]).unwrap();
        let alloc = greedy_waterfill(&ch, &order, &[2.0, 3.0]).unwrap().unwrap();
        let rates = sic_rates(&ch, &alloc, &order).unwrap().totals();
        assert!((rates[0] - 2.0).abs() < 1e-9 && (rates[1] - 3.0).abs() < 1e-9, "{rates:?}");
    }

    #[test]
    fn scalar_single_subcarrier_closed_form() {
        // Order (1, 2): user 2 decoded last needs p2 = 3, user 1 sees 1 + 3.
        let ch = scalar(&[&[1.0], &[1.0]], 1.0);
        let best = best_single_order(&ch, &[1.0, 2.0], &[1.0, 1.0], &[], 1e-6).unwrap().unwrap();
        // Orders: (1,2): p2 = 3, p1 = 4 -> 7; (2,1): p1 = 1, p2 = 3 * 2 = 6 -> 7.
        assert!((best.weighted_energy - 7.0).abs() < 1e-9);
    }
}
