//! Reference schemes: orthogonal access, single-order NOMA and per-subcarrier
//! order MC-NOMA.
//!
//! These are reconstructions with the simplest standard rules, not copies
//! of any published implementation:
//!
//! * **OMA**: users take turns (user 1, 2, ..., U, 1, ...) picking the free
//!   subcarrier with the largest channel gain for them. Each user that got
//!   at least one subcarrier receives an equal share of the energy, which it
//!   water-fills over the eigenmodes of its subcarriers.
//! * **NOMA (fixed order)**: every user gets the same energy, spread as a
//!   scaled identity over all subcarriers and antennas. One global SIC order:
//!   largest aggregate channel norm decoded first, ties by user index.
//! * **MC-NOMA (heuristic)**: the same allocation, with the order picked per
//!   subcarrier from that subcarrier's channel norms.

use std::fmt;

use crate::numerics::{water_fill, HermitianMatrix};
use crate::rate_region::{
    received_covariances, sic_rates, sic_rates_from_received, CovarianceAllocation, DecodingOrder, RateError,
    RateMatrix,
};
use crate::scenario::{ChannelSet, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    Oma,
    NomaFixed,
    McNomaHeuristic,
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Oma => "OMA",
            BaselineKind::NomaFixed => "NOMA_FIXED",
            BaselineKind::McNomaHeuristic => "MCNOMA_HEURISTIC",
        })
    }
}

#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub scheme: BaselineKind,
    pub alloc: CovarianceAllocation,
    /// Bits per subcarrier use.
    pub rates: RateMatrix,
    pub per_user_energy: Vec<f64>,
    /// Bits/s.
    pub sumrate: f64,
    /// SIC order per subcarrier; empty for OMA.
    pub orders: Vec<DecodingOrder>,
    /// OMA subcarrier owner; empty for the NOMA schemes.
    pub owners: Vec<usize>,
}

pub fn oma_allocate(ch: &ChannelSet, s: &Scenario, total_energy: f64) -> Result<BaselineResult, RateError> {
    oma_with_bandwidth(ch, s.subcarrier_bandwidth_hz, total_energy)
}

pub fn oma_with_bandwidth(ch: &ChannelSet, bandwidth: f64, total_energy: f64) -> Result<BaselineResult, RateError> {
    let (u_count, n_count) = (ch.num_users(), ch.num_subcarriers());
    let mut free: Vec<bool> = vec![true; n_count];
    let mut owners = vec![usize::MAX; n_count];
    let mut picks: Vec<Vec<usize>> = vec![Vec::new(); u_count];
    let mut u = 0;
    for _ in 0..n_count {
        let best = (0..n_count)
            .filter(|&n| free[n])
            .max_by(|&a, &b| {
                ch.h(u, a).frobenius_norm_sqr().total_cmp(&ch.h(u, b).frobenius_norm_sqr()).then(b.cmp(&a))
            })
            .expect("a free subcarrier remains");
        free[best] = false;
        owners[best] = u;
        picks[u].push(best);
        u = (u + 1) % u_count;
    }

    let served = picks.iter().filter(|p| !p.is_empty()).count();
    let share = total_energy / served as f64;
    let mut alloc = CovarianceAllocation::zeros(ch);
    let mut rates = RateMatrix::zeros(u_count, n_count);
    let sigma2 = ch.noise_power();
    for (u, subs) in picks.iter().enumerate() {
        if subs.is_empty() {
            continue;
        }
        let modes: Vec<_> = subs
            .iter()
            .map(|&n| ch.h(u, n).adjoint().matmul(ch.h(u, n)))
            .map(|g| HermitianMatrix::from_matrix(g.scale(1.0 / sigma2)).and_then(|m| m.eigen()))
            .collect::<Result<_, _>>()?;
        let gains: Vec<f64> =
            modes.iter().flat_map(|e: &crate::numerics::Eigen| e.values.iter().map(|v| v.max(0.0))).collect();
        let powers = water_fill(&gains, share);
        let mut offset = 0;
        for (e, &n) in modes.iter().zip(subs) {
            let k = e.values.len();
            let p = &powers[offset..offset + k];
            alloc.set(u, n, e.reconstruct_with(p));
            let bits: f64 = p.iter().zip(&gains[offset..offset + k]).map(|(p, g)| (1.0 + p * g).log2()).sum();
            rates.set(u, n, bits);
            offset += k;
        }
    }
    let per_user_energy = alloc.per_user_energy();
    Ok(BaselineResult {
        scheme: BaselineKind::Oma,
        sumrate: rates.sum() * bandwidth,
        alloc,
        rates,
        per_user_energy,
        orders: Vec::new(),
        owners,
    })
}

/// Equal energy per user, scaled identity over subcarriers and antennas.
pub fn uniform_allocation(ch: &ChannelSet, total_energy: f64) -> CovarianceAllocation {
    let (u_count, n_count) = (ch.num_users(), ch.num_subcarriers());
    let mut alloc = CovarianceAllocation::zeros(ch);
    for u in 0..u_count {
        let lx = ch.user_antennas(u);
        let per_entry = total_energy / (u_count * n_count * lx) as f64;
        for n in 0..n_count {
            alloc.set(u, n, HermitianMatrix::scaled_identity(lx, per_entry));
        }
    }
    alloc
}

/// Strongest (largest `strength`) decoded first, ties by user index.
fn strongest_first(strength: &[f64]) -> DecodingOrder {
    let mut idx: Vec<usize> = (0..strength.len()).collect();
    idx.sort_by(|&a, &b| strength[b].total_cmp(&strength[a]).then(a.cmp(&b)));
    DecodingOrder::new(idx).expect("permutation")
}

pub fn noma_fixed_order(ch: &ChannelSet, s: &Scenario, total_energy: f64) -> Result<BaselineResult, RateError> {
    noma_fixed_with_bandwidth(ch, s.subcarrier_bandwidth_hz, total_energy)
}

pub fn noma_fixed_with_bandwidth(
    ch: &ChannelSet,
    bandwidth: f64,
    total_energy: f64,
) -> Result<BaselineResult, RateError> {
    let alloc = uniform_allocation(ch, total_energy);
    let strength: Vec<f64> = (0..ch.num_users()).map(|u| ch.aggregate_gain(u)).collect();
    let order = strongest_first(&strength);
    let rates = sic_rates(ch, &alloc, &order)?;
    Ok(BaselineResult {
        scheme: BaselineKind::NomaFixed,
        sumrate: rates.sum() * bandwidth,
        per_user_energy: alloc.per_user_energy(),
        alloc,
        rates,
        orders: vec![order; ch.num_subcarriers()],
        owners: Vec::new(),
    })
}

pub fn mcnoma_heuristic(ch: &ChannelSet, s: &Scenario, total_energy: f64) -> Result<BaselineResult, RateError> {
    mcnoma_with_bandwidth(ch, s.subcarrier_bandwidth_hz, total_energy)
}

pub fn mcnoma_with_bandwidth(ch: &ChannelSet, bandwidth: f64, total_energy: f64) -> Result<BaselineResult, RateError> {
    let (u_count, n_count) = (ch.num_users(), ch.num_subcarriers());
    let alloc = uniform_allocation(ch, total_energy);
    let rx = received_covariances(ch, &alloc)?;
    let mut rates = RateMatrix::zeros(u_count, n_count);
    let mut orders = Vec::with_capacity(n_count);
    for n in 0..n_count {
        let strength: Vec<f64> = (0..u_count).map(|u| ch.h(u, n).frobenius_norm_sqr()).collect();
        let order = strongest_first(&strength);
        let r = sic_rates_from_received(ch.noise(), &rx[n..n + 1], &order)?;
        for u in 0..u_count {
            rates.set(u, n, r.get(u, 0));
        }
        orders.push(order);
    }
    Ok(BaselineResult {
        scheme: BaselineKind::McNomaHeuristic,
        sumrate: rates.sum() * bandwidth,
        per_user_energy: alloc.per_user_energy(),
        alloc,
        rates,
        orders,
        owners: Vec::new(),
    })
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
    fn oma_single_user_is_water_filling() {
        let ch = scalar(&[&[1.0, 0.5, 0.1]], 0.5);
        let r = oma_with_bandwidth(&ch, 1.0, 3.0).unwrap();
        let p = water_fill(&[2.0, 0.5, 0.02], 3.0);
        for n in 0..3 {
            assert!((r.alloc.energy(0, n) - p[n]).abs() < 1e-12);
        }
        let expect: f64 = p.iter().zip([2.0, 0.5, 0.02]).map(|(p, g)| (1.0 + p * g).log2()).sum();
        assert!((r.sumrate - expect).abs() < 1e-12);
    }

    #[test]
    fn oma_symmetric_pair() {
        let ch = scalar(&[&[1.0, 1.0], &[1.0, 1.0]], 1.0);
        let r = oma_with_bandwidth(&ch, 1.0, 2.0).unwrap();
        assert_eq!(r.owners, vec![0, 1]);
        let t = r.rates.totals();
        assert!((t[0] - t[1]).abs() < 1e-15 && (t[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oma_leaves_idle_users_without_energy() {
        let ch = scalar(&[&[1.0], &[2.0]], 1.0);
        let r = oma_with_bandwidth(&ch, 1.0, 2.0).unwrap();
        assert_eq!(r.per_user_energy, vec![2.0, 0.0]);
    }

    #[test]
    fn noma_identical_channels_use_index_order() {
        let ch = scalar(&[&[1.0], &[1.0]], 1.0);
        let r = noma_fixed_with_bandwidth(&ch, 1.0, 2.0).unwrap();
        assert_eq!(r.orders[0].to_one_based_string(), "1 2");
        // User 1 decoded first against user 2: log2(3) - 1; user 2 clean: 1.
        assert!((r.rates.get(0, 0) - (3f64.log2() - 1.0)).abs() < 1e-12);
        assert!((r.rates.get(1, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noma_strong_user_decoded_first() {
        let ch = scalar(&[&[3.0], &[0.5]], 1.0);
        let r = noma_fixed_with_bandwidth(&ch, 1.0, 2.0).unwrap();
        assert_eq!(r.orders[0].to_one_based_string(), "1 2");
        assert!((r.rates.get(1, 0) - (1.0f64 + 0.25).log2()).abs() < 1e-12);
    }

    #[test]
    fn mcnoma_single_subcarrier_matches_noma() {
        let ch = scalar(&[&[0.7], &[1.1], &[0.2]], 0.3);
        let a = noma_fixed_with_bandwidth(&ch, 2.0, 1.5).unwrap();
        let b = mcnoma_with_bandwidth(&ch, 2.0, 1.5).unwrap();
        assert_eq!(a.rates, b.rates);
        assert_eq!(a.sumrate, b.sumrate);
    }

    #[test]
    fn energy_budget_is_consumed() {
        let ch = scalar(&[&[0.7, 0.2, 0.4], &[1.1, 0.9, 0.1]], 0.3);
        for r in [
            oma_with_bandwidth(&ch, 1.0, 2.5).unwrap(),
            noma_fixed_with_bandwidth(&ch, 1.0, 2.5).unwrap(),
            mcnoma_with_bandwidth(&ch, 1.0, 2.5).unwrap(),
        ] {
            assert!((r.per_user_energy.iter().sum::<f64>() - 2.5).abs() < 1e-9, "{}", r.scheme);
        }
    }
}
