//! SIC achievable rates and the polymatroid capacity region of the
//! multicarrier MAC.
//!
//! Rates are evaluated per subcarrier and summed; nothing here stacks
//! subcarriers into one block matrix.

use std::fmt;

use thiserror::Error;

use crate::numerics::{HermitianMatrix, NumericsError};
use crate::scenario::ChannelSet;

/// Subset enumeration is exponential; beyond this many users we refuse.
pub const MAX_POLYMATROID_USERS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("polymatroid check limited to {MAX_POLYMATROID_USERS} users, got {0}")]
    TooManyUsers(usize),
    #[error("invalid decoding order: {0}")]
    InvalidOrder(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// SIC decoding order. `users()[k]` is the (0-based) user decoded `k`-th.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DecodingOrder {
    pi_inverse: Vec<usize>,
}

impl DecodingOrder {
    pub fn new(pi_inverse: Vec<usize>) -> Result<Self, RateError> {
        let u = pi_inverse.len();
        if u == 0 {
            return Err(RateError::InvalidOrder("empty order".into()));
        }
        let mut seen = vec![false; u];
        for &user in &pi_inverse {
            if user >= u || seen[user] {
                return Err(RateError::InvalidOrder(format!("{pi_inverse:?} is not a permutation of 0..{u}")));
            }
            seen[user] = true;
        }
        Ok(Self { pi_inverse })
    }

    /// Users decoded in index order.
    pub fn identity(num_users: usize) -> Self {
        Self { pi_inverse: (0..num_users).collect() }
    }

    /// Parses 1-based, whitespace-separated user ids (the on-disk format).
    pub fn parse_one_based(text: &str) -> Result<Self, RateError> {
        let ids = text
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .ok()
                    .filter(|&v| v >= 1)
                    .map(|v| v - 1)
                    .ok_or_else(|| RateError::InvalidOrder(format!("bad user id `{t}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(ids)
    }

    pub fn users(&self) -> &[usize] {
        &self.pi_inverse
    }

    pub fn len(&self) -> usize {
        self.pi_inverse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi_inverse.is_empty()
    }

    /// Decoding position (0-based) of every user, i.e. pi.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.len()];
        for (k, &u) in self.pi_inverse.iter().enumerate() {
            pos[u] = k;
        }
        pos
    }

    /// 1-based, space-separated.
    pub fn to_one_based_string(&self) -> String {
        self.pi_inverse.iter().map(|u| (u + 1).to_string()).collect::<Vec<_>>().join(" ")
    }
}

impl fmt::Debug for DecodingOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DecodingOrder({})", self.to_one_based_string())
    }
}

impl fmt::Display for DecodingOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_one_based_string())
    }
}

/// Transmit covariances `R_xx(u, n)`, in mW.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceAllocation {
    r: Vec<Vec<HermitianMatrix>>,
}

impl CovarianceAllocation {
    pub fn zeros(ch: &ChannelSet) -> Self {
        let r = (0..ch.num_users())
            .map(|u| vec![HermitianMatrix::zeros(ch.user_antennas(u)); ch.num_subcarriers()])
            .collect();
        Self { r }
    }

    /// Covariances must be PSD up to `-1e-9` on the smallest eigenvalue.
    pub fn new(r: Vec<Vec<HermitianMatrix>>) -> Result<Self, RateError> {
        for (u, per_sub) in r.iter().enumerate() {
            for (n, m) in per_sub.iter().enumerate() {
                let min = m.min_eigenvalue()?;
                if min < -1e-9 {
                    return Err(RateError::DimensionMismatch(format!(
                        "covariance ({}, {}) is not PSD (min eigenvalue {min:e})",
                        u + 1,
                        n + 1
                    )));
                }
            }
        }
        Ok(Self { r })
    }

    /// Scalar powers `p[u][n]` for single-antenna users.
    pub fn from_scalar_powers(p: &[Vec<f64>]) -> Self {
        let r = p.iter().map(|row| row.iter().map(|&v| HermitianMatrix::from_real_diag(&[v])).collect()).collect();
        Self { r }
    }

    pub fn num_users(&self) -> usize {
        self.r.len()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.r.first().map_or(0, |v| v.len())
    }

    pub fn get(&self, user: usize, subcarrier: usize) -> &HermitianMatrix {
        &self.r[user][subcarrier]
    }

    pub fn set(&mut self, user: usize, subcarrier: usize, m: HermitianMatrix) {
        self.r[user][subcarrier] = m;
    }

    /// `E(u, n) = tr R_xx(u, n)`.
    pub fn energy(&self, user: usize, subcarrier: usize) -> f64 {
        self.r[user][subcarrier].trace()
    }

    pub fn per_user_energy(&self) -> Vec<f64> {
        self.r.iter().map(|per_sub| per_sub.iter().map(|m| m.trace()).sum()).collect()
    }

    pub fn total_energy(&self) -> f64 {
        self.per_user_energy().iter().sum()
    }

    pub fn weighted_energy(&self, weights: &[f64]) -> f64 {
        self.per_user_energy().iter().zip(weights).map(|(e, w)| e * w).sum()
    }

    /// Every covariance of `user` multiplied by `factor`.
    pub fn scale_user(&mut self, user: usize, factor: f64) {
        for m in &mut self.r[user] {
            *m = m.scale(factor);
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let r = self.r.iter().map(|per_sub| per_sub.iter().map(|m| m.scale(factor)).collect()).collect();
        Self { r }
    }

    fn check_dims(&self, ch: &ChannelSet) -> Result<(), RateError> {
        if self.num_users() != ch.num_users() || self.num_subcarriers() != ch.num_subcarriers() {
            return Err(RateError::DimensionMismatch(format!(
                "allocation is {}x{} (users x subcarriers), channel set is {}x{}",
                self.num_users(),
                self.num_subcarriers(),
                ch.num_users(),
                ch.num_subcarriers()
            )));
        }
        for u in 0..ch.num_users() {
            if self.r[u].iter().any(|m| m.dim() != ch.user_antennas(u)) {
                return Err(RateError::DimensionMismatch(format!(
                    "user {} covariances must be {}x{}",
                    u + 1,
                    ch.user_antennas(u),
                    ch.user_antennas(u)
                )));
            }
        }
        Ok(())
    }
}

/// `b(u, n)` in bits per subcarrier use.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    b: Vec<Vec<f64>>,
}

impl RateMatrix {
    pub fn zeros(num_users: usize, num_subcarriers: usize) -> Self {
        Self { b: vec![vec![0.0; num_subcarriers]; num_users] }
    }

    pub fn from_rows(b: Vec<Vec<f64>>) -> Self {
        Self { b }
    }

    pub fn get(&self, user: usize, subcarrier: usize) -> f64 {
        self.b[user][subcarrier]
    }

    pub fn set(&mut self, user: usize, subcarrier: usize, v: f64) {
        self.b[user][subcarrier] = v;
    }

    pub fn num_users(&self) -> usize {
        self.b.len()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.b.first().map_or(0, |v| v.len())
    }

    /// Per-user totals `b_u = sum_n b(u, n)`.
    pub fn totals(&self) -> Vec<f64> {
        self.b.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn sum(&self) -> f64 {
        self.totals().iter().sum()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.b
    }
}

/// `H(u, n) R(u, n) H(u, n)^*` for every subcarrier (outer) and user (inner).
pub fn received_covariances(
    ch: &ChannelSet,
    alloc: &CovarianceAllocation,
) -> Result<Vec<Vec<HermitianMatrix>>, RateError> {
    alloc.check_dims(ch)?;
    Ok((0..ch.num_subcarriers())
        .map(|n| (0..ch.num_users()).map(|u| alloc.get(u, n).congruence(ch.h(u, n))).collect())
        .collect())
}

/// Per-subcarrier SIC rates under `order`: the user decoded `k`-th sees the
/// users decoded after it as noise and has the earlier ones cancelled.
pub fn sic_rates(
    ch: &ChannelSet,
    alloc: &CovarianceAllocation,
    order: &DecodingOrder,
) -> Result<RateMatrix, RateError> {
    if order.len() != ch.num_users() {
        return Err(RateError::DimensionMismatch(format!(
            "order has {} users, channel set has {}",
            order.len(),
            ch.num_users()
        )));
    }
    let rx = received_covariances(ch, alloc)?;
    sic_rates_from_received(ch.noise(), &rx, order)
}

pub(crate) fn sic_rates_from_received(
    noise: &HermitianMatrix,
    rx: &[Vec<HermitianMatrix>],
    order: &DecodingOrder,
) -> Result<RateMatrix, RateError> {
    let num_sub = rx.len();
    let num_users = order.len();
    let mut rates = RateMatrix::zeros(num_users, num_sub);
    let base = noise.log2_det()?;
    for (n, rx_n) in rx.iter().enumerate() {
        let mut acc = noise.clone();
        let mut prev = base;
        for &user in order.users().iter().rev() {
            acc.add_assign(&rx_n[user]);
            let cur = acc.log2_det()?;
            rates.set(user, n, (cur - prev).max(0.0));
            prev = cur;
        }
    }
    Ok(rates)
}

/// Bitmask of users (bit `u` set means user `u` is in the subset).
pub type UserMask = u32;

pub fn mask_of(users: &[usize]) -> UserMask {
    users.iter().fold(0, |m, &u| m | (1 << u))
}

pub fn users_of(mask: UserMask) -> Vec<usize> {
    (0..32).filter(|u| mask >> u & 1 == 1).collect()
}

/// Sum over subcarriers of `log2|R_noise + sum_{u in T} H R H^*| - log2|R_noise|`.
pub fn sum_capacity(ch: &ChannelSet, alloc: &CovarianceAllocation, subset: &[usize]) -> Result<f64, RateError> {
    if subset.is_empty() {
        return Err(RateError::DimensionMismatch("subset must be non-empty".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&u| u >= ch.num_users()) {
        return Err(RateError::DimensionMismatch(format!("user {} out of range", bad + 1)));
    }
    let rx = received_covariances(ch, alloc)?;
    subset_capacity(ch.noise(), &rx, mask_of(subset))
}

pub(crate) fn subset_capacity(
    noise: &HermitianMatrix,
    rx: &[Vec<HermitianMatrix>],
    mask: UserMask,
) -> Result<f64, RateError> {
    let base = noise.log2_det()?;
    let mut total = 0.0;
    for rx_n in rx {
        let mut acc = noise.clone();
        for (u, m) in rx_n.iter().enumerate() {
            if mask >> u & 1 == 1 {
                acc.add_assign(m);
            }
        }
        total += acc.log2_det()? - base;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetViolation {
    pub users: Vec<usize>,
    pub rate_sum: f64,
    pub capacity: f64,
}

impl fmt::Display for SubsetViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.users.iter().map(|u| (u + 1).to_string()).collect();
        write!(f, "T={{{}}}: rate sum {:.9} exceeds capacity {:.9}", ids.join(","), self.rate_sum, self.capacity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolymatroidReport {
    pub subsets_checked: usize,
    /// In increasing bitmask order.
    pub violations: Vec<SubsetViolation>,
}

impl PolymatroidReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every one of the `2^U - 1` subset constraints against `rates`.
pub fn verify_polymatroid(
    ch: &ChannelSet,
    alloc: &CovarianceAllocation,
    rates: &RateMatrix,
    tol: f64,
) -> Result<PolymatroidReport, RateError> {
    verify_polymatroid_totals(ch, alloc, &rates.totals(), tol)
}

/// Same as [`verify_polymatroid`] for per-user totals (e.g. time-shared averages).
pub fn verify_polymatroid_totals(
    ch: &ChannelSet,
    alloc: &CovarianceAllocation,
    totals: &[f64],
    tol: f64,
) -> Result<PolymatroidReport, RateError> {
    let u = ch.num_users();
    if u > MAX_POLYMATROID_USERS {
        return Err(RateError::TooManyUsers(u));
    }
    if totals.len() != u {
        return Err(RateError::DimensionMismatch(format!("{} rates for {u} users", totals.len())));
    }
    let rx = received_covariances(ch, alloc)?;
    let mut violations = Vec::new();
    let full: UserMask = if u == 32 { u32::MAX } else { (1 << u) - 1 };
    for mask in 1..=full {
        let users = users_of(mask);
        let rate_sum: f64 = users.iter().map(|&v| totals[v]).sum();
        let capacity = subset_capacity(ch.noise(), &rx, mask)?;
        if rate_sum > capacity + tol {
            violations.push(SubsetViolation { users, rate_sum, capacity });
        }
    }
    Ok(PolymatroidReport { subsets_checked: full as usize, violations })
}

/// All `U!` orders in lexicographic order.
pub fn all_orders(num_users: usize) -> Vec<DecodingOrder> {
    let mut out = Vec::new();
    let mut perm: Vec<usize> = (0..num_users).collect();
    loop {
        out.push(DecodingOrder { pi_inverse: perm.clone() });
        // next lexicographic permutation
        let Some(i) = (0..num_users.saturating_sub(1)).rev().find(|&i| perm[i] < perm[i + 1]) else {
            break;
        };
        let j = (i + 1..num_users).rev().find(|&j| perm[j] > perm[i]).expect("successor exists");
        perm.swap(i, j);
        perm[i + 1..].reverse();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::C64;

    fn scalar_ch(gains: &[f64], sigma2: f64) -> ChannelSet {
        let g: Vec<Vec<C64>> = gains.iter().map(|&h| vec![C64::new(h, 0.0)]).collect();
        ChannelSet::scalar(&g, sigma2).unwrap()
    }

    #[test]
    fn single_user_one_bit() {
        let ch = scalar_ch(&[1.0], 1.0);
        let alloc = CovarianceAllocation::from_scalar_powers(&[vec![1.0]]);
        let r = sic_rates(&ch, &alloc, &DecodingOrder::identity(1)).unwrap();
        assert!((r.get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_user_closed_form() {
        let ch = scalar_ch(&[1.0, 1.0], 1.0);
        let alloc = CovarianceAllocation::from_scalar_powers(&[vec![1.0], vec![1.0]]);
        let r = sic_rates(&ch, &alloc, &DecodingOrder::new(vec![0, 1]).unwrap()).unwrap();
        assert!((r.get(0, 0) - (3f64.log2() - 1.0)).abs() < 1e-14);
        assert!((r.get(1, 0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_allocation_has_zero_capacity() {
        let ch = scalar_ch(&[0.7, 1.3], 0.5);
        let alloc = CovarianceAllocation::zeros(&ch);
        for subset in [vec![0], vec![1], vec![0, 1]] {
            assert_eq!(sum_capacity(&ch, &alloc, &subset).unwrap(), 0.0);
        }
    }

    #[test]
    fn singleton_capacity_closed_form() {
        let ch = scalar_ch(&[0.5, 2.0], 0.25);
        let alloc = CovarianceAllocation::from_scalar_powers(&[vec![3.0], vec![1.0]]);
        let c = sum_capacity(&ch, &alloc, &[0]).unwrap();
        assert!((c - (1.0 + 0.25 * 3.0 / 0.25f64).log2()).abs() < 1e-14);
    }

    #[test]
    fn polymatroid_flags_inflated_rates() {
        let ch = scalar_ch(&[1.0, 0.8, 1.2], 1.0);
        let alloc = CovarianceAllocation::from_scalar_powers(&[vec![1.0], vec![2.0], vec![0.5]]);
        let order = DecodingOrder::new(vec![2, 0, 1]).unwrap();
        let rates = sic_rates(&ch, &alloc, &order).unwrap();
        assert!(verify_polymatroid(&ch, &alloc, &rates, 1e-9).unwrap().ok());

        let mut inflated = rates.clone();
        inflated.set(1, 0, rates.get(1, 0) + 1.0);
        let report = verify_polymatroid(&ch, &alloc, &inflated, 1e-9).unwrap();
        assert!(!report.ok());
        assert_eq!(report.violations[0].users, vec![1]);
        assert!(report.violations.iter().all(|v| v.users.contains(&1)));

        let zero = RateMatrix::zeros(3, 1);
        assert!(verify_polymatroid(&ch, &alloc, &zero, 0.0).unwrap().ok());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let ch = scalar_ch(&[1.0, 1.0], 1.0);
        let alloc = CovarianceAllocation::from_scalar_powers(&[vec![1.0]]);
        assert!(matches!(sic_rates(&ch, &alloc, &DecodingOrder::identity(2)), Err(RateError::DimensionMismatch(_))));
        let alloc = CovarianceAllocation::from_scalar_powers(&[vec![1.0], vec![1.0]]);
        assert!(sic_rates(&ch, &alloc, &DecodingOrder::identity(3)).is_err());
    }

    #[test]
    fn orders_parse_and_enumerate() {
        assert!(DecodingOrder::new(vec![0, 0]).is_err());
        let o = DecodingOrder::parse_one_based("3 1 2").unwrap();
        assert_eq!(o.users(), &[2, 0, 1]);
        assert_eq!(o.positions(), vec![1, 2, 0]);
        assert_eq!(o.to_string(), "3 1 2");
        let all = all_orders(3);
        assert_eq!(all.len(), 6);
        assert_eq!(all[0].users(), &[0, 1, 2]);
        assert_eq!(all[5].users(), &[2, 1, 0]);
    }
}
