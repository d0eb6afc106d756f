//! Noise normalization and the reference multiplier scale.
//!
//! Energies are measured in `p0 = sigma^2 / g_ref` (mW), where `g_ref` is
//! the mean per-entry channel power, so the normalized channel is
//! `H / sqrt(g_ref)` with identity noise. Multipliers are measured in
//! `p0 * w_max` mW per bit and weights in units of `w_max`.

use std::f64::consts::LN_2;

use crate::numerics::{water_fill_rate, ComplexMatrix, HermitianMatrix, NumericsError};
use crate::scenario::ChannelSet;

/// Zero weights are raised to this fraction of the largest weight so that
/// the inner problem stays bounded.
pub const MIN_RELATIVE_WEIGHT: f64 = 1e-9;

#[derive(Debug, Clone)]
pub(crate) struct Normalized {
    /// `h[n][u]`, subcarrier-major for the per-subcarrier solver.
    pub h: Vec<Vec<ComplexMatrix>>,
    /// Energy unit, mW.
    pub p0: f64,
    pub weights: Vec<f64>,
    pub w_max: f64,
}

impl Normalized {
    pub fn new(ch: &ChannelSet, weights: &[f64]) -> Self {
        let (u_count, n_count) = (ch.num_users(), ch.num_subcarriers());
        let mut power = 0.0;
        let mut entries = 0usize;
        for u in 0..u_count {
            power += ch.aggregate_gain(u);
            entries += n_count * ch.ap_antennas() * ch.user_antennas(u);
        }
        let g_ref = if power > 0.0 { power / entries as f64 } else { 1.0 };
        let s = 1.0 / g_ref.sqrt();
        let h = (0..n_count).map(|n| (0..u_count).map(|u| ch.h(u, n).scale(s)).collect()).collect();
        let w_max = weights.iter().copied().fold(0.0, f64::max);
        let weights = weights.iter().map(|&w| (w / w_max).max(MIN_RELATIVE_WEIGHT)).collect();
        Self { h, p0: ch.noise_power() / g_ref, weights, w_max }
    }

    /// mW per bit represented by one normalized multiplier unit.
    pub fn theta_unit(&self) -> f64 {
        self.p0 * self.w_max
    }

    pub fn num_users(&self) -> usize {
        self.h[0].len()
    }

    /// Reference multiplier: the largest price any user would pay to reach
    /// its target alone while every other user's single-user allocation acts
    /// as interference. Returns 0 when all targets are zero.
    pub fn reference_theta(&self, targets: &[f64]) -> Result<f64, NumericsError> {
        let u_count = self.num_users();
        let ly = self.h[0][0].rows();
        // Pass 1: interference-free single-user allocations.
        let identity: Vec<HermitianMatrix> = vec![HermitianMatrix::identity(ly); self.h.len()];
        let mut alone = Vec::with_capacity(u_count);
        for u in 0..u_count {
            alone.push(self.single_user(u, targets[u], &identity)?);
        }
        // Pass 2: decoded first, everyone else interferes.
        let mut theta_ref: f64 = 0.0;
        for u in 0..u_count {
            if targets[u] <= 0.0 {
                continue;
            }
            let noise: Vec<HermitianMatrix> = (0..self.h.len())
                .map(|n| {
                    let mut acc = HermitianMatrix::identity(ly);
                    for (v, (_, cov)) in alone.iter().enumerate() {
                        if v != u {
                            acc.add_assign(&cov[n].congruence(&self.h[n][v]));
                        }
                    }
                    acc
                })
                .collect();
            let (theta, _) = self.single_user(u, targets[u], &noise)?;
            theta_ref = theta_ref.max(theta);
        }
        Ok(theta_ref)
    }

    /// Water-fills user `u` against per-subcarrier noise covariances to reach
    /// `target` bits. Returns the multiplier and the covariances.
    fn single_user(
        &self,
        u: usize,
        target: f64,
        noise: &[HermitianMatrix],
    ) -> Result<(f64, Vec<HermitianMatrix>), NumericsError> {
        let lx = self.h[0][u].cols();
        if target <= 0.0 {
            return Ok((0.0, vec![HermitianMatrix::zeros(lx); self.h.len()]));
        }
        let mut modes = Vec::with_capacity(self.h.len());
        for (n, hn) in self.h.iter().enumerate() {
            let gram = noise[n].inverse_pd()?.adjoint_congruence(&hn[u]);
            modes.push(gram.eigen()?);
        }
        let gains: Vec<f64> = modes.iter().flat_map(|e| e.values.iter().map(|&g| g.max(0.0))).collect();
        let Some((mu, powers)) = water_fill_rate(&gains, target) else {
            return Ok((f64::INFINITY, vec![HermitianMatrix::zeros(lx); self.h.len()]));
        };
        let mut offset = 0;
        let cov = modes
            .iter()
            .map(|e| {
                let k = e.values.len();
                let m = e.reconstruct_with(&powers[offset..offset + k]);
                offset += k;
                m
            })
            .collect();
        Ok((mu * self.weights[u] * LN_2, cov))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::C64;

    #[test]
    fn unit_conversions() {
        let ch = ChannelSet::scalar(&[vec![C64::new(2.0, 0.0)]], 0.5).unwrap();
        let norm = Normalized::new(&ch, &[3.0]);
        assert!((norm.p0 - 0.125).abs() < 1e-15);
        assert!((norm.h[0][0][(0, 0)].re - 1.0).abs() < 1e-15);
        assert!((norm.theta_unit() - 0.375).abs() < 1e-15);
        assert_eq!(norm.weights, vec![1.0]);
    }

    #[test]
    fn single_user_price_is_water_level() {
        // Normalized gain 1, two bits: p = 3, mu = 4, theta = 4 ln 2.
        let ch = ChannelSet::scalar(&[vec![C64::new(1.0, 0.0)]], 1.0).unwrap();
        let norm = Normalized::new(&ch, &[1.0]);
        let theta = norm.reference_theta(&[2.0]).unwrap();
        assert!((theta - 4.0 * LN_2).abs() < 1e-10);
    }
}
