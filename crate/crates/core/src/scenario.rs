//! Experiment configuration and seeded channel generation.
//!
//! Scenario files are JSON documents whose keys carry their units
//! (`noise_power_dbm`, `rate_targets_mbps`, ...). Channels are drawn from a
//! ChaCha20 stream so that any implementation of the generator reproduces
//! them exactly:
//!
//! * key = the scenario seed as 8 little-endian bytes followed by 24 zero
//!   bytes, nonce 0, block counter starting at 0 (RFC 8439 block function);
//! * each `u64` is two consecutive 32-bit keystream words, low word first;
//! * a uniform in `(0, 1]` is `((x >> 11) + 1) * 2^-53`, a uniform in
//!   `[0, 1)` is `(x >> 11) * 2^-53`;
//! * every channel entry consumes one Box-Muller pair
//!   `r = sqrt(-2 ln u1)`, `re = r cos(2 pi u2)`, `im = r sin(2 pi u2)`,
//!   scaled by `sqrt(d^-eta / 2)`;
//! * entries are visited user-major, then subcarrier, then AP antenna
//!   (row), then user antenna (column).

use std::path::Path;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{ComplexMatrix, HermitianMatrix, C64};

pub const DEFAULT_PATHLOSS_EXPONENT: f64 = 3.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario field `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },
    #[error("failed to read scenario file {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation { field, reason: reason.into() }
}

/// A complex entry serialized as `[re, im]`.
pub type EntrySpec = [f64; 2];

/// Explicit channel matrices, indexed `[user][subcarrier][row][col]`.
pub type ChannelSpec = Vec<Vec<Vec<Vec<EntrySpec>>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub num_users: usize,
    pub num_subcarriers: usize,
    pub ap_antennas: usize,
    pub user_antennas: Vec<usize>,
    pub distances_m: Vec<f64>,
    pub noise_power_dbm: f64,
    pub rate_targets_mbps: Vec<f64>,
    #[serde(default)]
    pub energy_weights: Vec<f64>,
    pub subcarrier_bandwidth_hz: f64,
    #[serde(default = "default_pathloss")]
    pub pathloss_exponent: f64,
    #[serde(default)]
    pub seed: u64,
    /// Fixed channel matrices; when present they replace the random draw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<ChannelSpec>,
}

fn default_pathloss() -> f64 {
    DEFAULT_PATHLOSS_EXPONENT
}

impl Scenario {
    /// Parses and validates a scenario document.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let mut s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        if s.energy_weights.is_empty() {
            s.energy_weights = vec![1.0; s.num_users];
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let u = self.num_users;
        if u == 0 {
            return Err(invalid("num_users", "must be positive"));
        }
        if self.num_subcarriers == 0 {
            return Err(invalid("num_subcarriers", "must be positive"));
        }
        if self.ap_antennas == 0 {
            return Err(invalid("ap_antennas", "must be positive"));
        }
        let check_len = |field: &'static str, len: usize| {
            if len != u {
                Err(invalid(field, format!("expected {u} entries, got {len}")))
            } else {
                Ok(())
            }
        };
        check_len("user_antennas", self.user_antennas.len())?;
        check_len("distances_m", self.distances_m.len())?;
        check_len("rate_targets_mbps", self.rate_targets_mbps.len())?;
        check_len("energy_weights", self.energy_weights.len())?;
        if self.user_antennas.contains(&0) {
            return Err(invalid("user_antennas", "antenna counts must be positive"));
        }
        if self.distances_m.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(invalid("distances_m", "distances must be finite and > 0"));
        }
        if !self.noise_power_dbm.is_finite() {
            return Err(invalid("noise_power_dbm", "must be finite"));
        }
        if self.rate_targets_mbps.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
            return Err(invalid("rate_targets_mbps", "targets must be finite and >= 0"));
        }
        if self.energy_weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(invalid("energy_weights", "weights must be finite and >= 0"));
        }
        if !self.energy_weights.iter().any(|&w| w > 0.0) {
            return Err(invalid("energy_weights", "at least one weight must be positive"));
        }
        if !(self.subcarrier_bandwidth_hz > 0.0) || !self.subcarrier_bandwidth_hz.is_finite() {
            return Err(invalid("subcarrier_bandwidth_hz", "must be finite and > 0"));
        }
        if !(self.pathloss_exponent >= 2.0) || !self.pathloss_exponent.is_finite() {
            return Err(invalid("pathloss_exponent", "must be >= 2"));
        }
        if let Some(ch) = &self.channels {
            check_len("channels", ch.len())?;
            for (user, per_sub) in ch.iter().enumerate() {
                if per_sub.len() != self.num_subcarriers {
                    return Err(invalid(
                        "channels",
                        format!(
                            "user {} has {} subcarriers, expected {}",
                            user + 1,
                            per_sub.len(),
                            self.num_subcarriers
                        ),
                    ));
                }
                for m in per_sub {
                    if m.len() != self.ap_antennas || m.iter().any(|row| row.len() != self.user_antennas[user]) {
                        return Err(invalid(
                            "channels",
                            format!(
                                "user {} matrices must be {}x{}",
                                user + 1,
                                self.ap_antennas,
                                self.user_antennas[user]
                            ),
                        ));
                    }
                    if m.iter().flatten().flatten().any(|v| !v.is_finite()) {
                        return Err(invalid("channels", "entries must be finite"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Noise power per subcarrier and AP antenna, in mW.
    pub fn noise_power_mw(&self) -> f64 {
        dbm_to_mw(self.noise_power_dbm)
    }

    /// Per-user targets in bits per subcarrier use, summed over subcarriers.
    pub fn rate_targets_bits(&self) -> Vec<f64> {
        self.rate_targets_mbps.iter().map(|mbps| mbps * 1e6 / self.subcarrier_bandwidth_hz).collect()
    }

    pub fn bits_to_mbps(&self, bits: f64) -> f64 {
        bits * self.subcarrier_bandwidth_hz / 1e6
    }

    /// Mean channel power `d^-eta` of each user.
    pub fn pathloss_gains(&self) -> Vec<f64> {
        self.distances_m.iter().map(|d| d.powf(-self.pathloss_exponent)).collect()
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    Scenario::from_json(&text)
}

/// Per-user, per-subcarrier channel matrices plus the AP noise covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    h: Vec<Vec<ComplexMatrix>>,
    noise: HermitianMatrix,
    noise_power: f64,
}

impl ChannelSet {
    /// `h[u][n]` must be `L_y x L_{x,u}`; noise is `sigma2 * I`.
    pub fn new(h: Vec<Vec<ComplexMatrix>>, noise_power: f64) -> Result<Self, ScenarioError> {
        if h.is_empty() || h[0].is_empty() {
            return Err(invalid("channels", "need at least one user and one subcarrier"));
        }
        if !(noise_power > 0.0) || !noise_power.is_finite() {
            return Err(invalid("noise_power_dbm", "noise covariance must be positive definite"));
        }
        let n = h[0].len();
        let ly = h[0][0].rows();
        for per_sub in &h {
            if per_sub.len() != n {
                return Err(invalid("channels", "every user needs the same number of subcarriers"));
            }
            let lx = per_sub[0].cols();
            if per_sub.iter().any(|m| m.rows() != ly || m.cols() != lx) {
                return Err(invalid("channels", "inconsistent channel matrix dimensions"));
            }
        }
        Ok(Self { h, noise: HermitianMatrix::scaled_identity(ly, noise_power), noise_power })
    }

    /// Single-antenna users at a single-antenna AP: `gains[u][n]` are the
    /// complex channel coefficients.
    pub fn scalar(gains: &[Vec<C64>], noise_power: f64) -> Result<Self, ScenarioError> {
        let h = gains
            .iter()
            .map(|row| row.iter().map(|&g| ComplexMatrix::new(1, 1, vec![g]).expect("1x1")).collect())
            .collect();
        Self::new(h, noise_power)
    }

    #[inline]
    pub fn num_users(&self) -> usize {
        self.h.len()
    }

    #[inline]
    pub fn num_subcarriers(&self) -> usize {
        self.h[0].len()
    }

    #[inline]
    pub fn ap_antennas(&self) -> usize {
        self.h[0][0].rows()
    }

    #[inline]
    pub fn user_antennas(&self, user: usize) -> usize {
        self.h[user][0].cols()
    }

    #[inline]
    pub fn h(&self, user: usize, subcarrier: usize) -> &ComplexMatrix {
        &self.h[user][subcarrier]
    }

    pub fn noise(&self) -> &HermitianMatrix {
        &self.noise
    }

    /// sigma^2 in mW.
    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    /// Squared Frobenius norm of every user's channel summed over subcarriers.
    pub fn aggregate_gain(&self, user: usize) -> f64 {
        self.h[user].iter().map(|m| m.frobenius_norm_sqr()).sum()
    }

    pub fn with_noise_power(&self, noise_power: f64) -> Result<Self, ScenarioError> {
        Self::new(self.h.clone(), noise_power)
    }
}

/// Draws the scenario's channels (or materializes the explicit ones).
pub fn generate_channels(s: &Scenario) -> ChannelSet {
    let sigma2 = s.noise_power_mw();
    if let Some(spec) = &s.channels {
        let h = spec
            .iter()
            .map(|per_sub| {
                per_sub
                    .iter()
                    .map(|rows| {
                        ComplexMatrix::from_fn(rows.len(), rows[0].len(), |i, j| C64::new(rows[i][j][0], rows[i][j][1]))
                    })
                    .collect()
            })
            .collect();
        return ChannelSet::new(h, sigma2).expect("validated scenario");
    }

    let mut rng = ChannelRng::new(s.seed);
    let gains = s.pathloss_gains();
    let h = (0..s.num_users)
        .map(|u| {
            let std = (gains[u] / 2.0).sqrt();
            (0..s.num_subcarriers)
                .map(|_| {
                    ComplexMatrix::from_fn(s.ap_antennas, s.user_antennas[u], |_, _| {
                        let (re, im) = rng.normal_pair();
                        C64::new(re * std, im * std)
                    })
                })
                .collect()
        })
        .collect();
    ChannelSet::new(h, sigma2).expect("validated scenario")
}

/// Counter-based generator behind [`generate_channels`].
pub struct ChannelRng {
    inner: ChaCha20Rng,
}

impl ChannelRng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        Self { inner: ChaCha20Rng::from_seed(key) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `(0, 1]`.
    pub fn open_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Two independent standard normals (Box-Muller).
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.open_uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let phi = 2.0 * std::f64::consts::PI * u2;
        (r * phi.cos(), r * phi.sin())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUNDLED: &str = include_str!("../../../scenarios/table1.scenario");

    fn base() -> Scenario {
        Scenario::from_json(BUNDLED).unwrap()
    }

    #[test]
    fn bundled_low_rank_scenario() {
        let s = base();
        assert_eq!(s.num_users, 3);
        assert_eq!(s.ap_antennas, 2);
        assert_eq!(s.user_antennas, vec![1, 1, 1]);
        assert_eq!(s.distances_m, vec![3.0, 3.0, 3.0]);
        assert_eq!(s.rate_targets_mbps, vec![500.0, 500.0, 500.0]);
        assert_eq!(s.noise_power_dbm, -65.0);
    }

    #[test]
    fn missing_field_is_parse_error() {
        let mut v: serde_json::Value = serde_json::from_str(BUNDLED).unwrap();
        v.as_object_mut().unwrap().remove("num_users");
        let err = Scenario::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, ScenarioError::Parse(_)), "{err}");
        assert!(matches!(Scenario::from_json("{ not json"), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn negative_target_is_validation_error() {
        let mut v: serde_json::Value = serde_json::from_str(BUNDLED).unwrap();
        v["rate_targets_mbps"] = serde_json::json!([500.0, -1.0, 500.0]);
        match Scenario::from_json(&v.to_string()) {
            Err(ScenarioError::Validation { field, .. }) => assert_eq!(field, "rate_targets_mbps"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn other_validation_failures_name_the_field() {
        let cases: Vec<(&str, serde_json::Value, &str)> = vec![
            ("energy_weights", serde_json::json!([0.0, 0.0, 0.0]), "energy_weights"),
            ("distances_m", serde_json::json!([3.0, 3.0]), "distances_m"),
            ("pathloss_exponent", serde_json::json!(1.5), "pathloss_exponent"),
            ("subcarrier_bandwidth_hz", serde_json::json!(0.0), "subcarrier_bandwidth_hz"),
        ];
        for (key, value, expect) in cases {
            let mut v: serde_json::Value = serde_json::from_str(BUNDLED).unwrap();
            v[key] = value;
            match Scenario::from_json(&v.to_string()) {
                Err(ScenarioError::Validation { field, .. }) => assert_eq!(field, expect),
                other => panic!("{key}: expected validation error, got {other:?}"),
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let s = base();
        let a = generate_channels(&s);
        let b = generate_channels(&s);
        assert_eq!(a, b);
        let mut other = s.clone();
        other.seed += 1;
        assert_ne!(a, generate_channels(&other));
    }

    #[test]
    fn noise_from_dbm() {
        let ch = generate_channels(&base());
        let expect = 10f64.powf(-6.5);
        for i in 0..2 {
            assert!((ch.noise().as_matrix()[(i, i)].re - expect).abs() < 1e-20);
        }
        assert_eq!(ch.noise().as_matrix()[(0, 1)], C64::new(0.0, 0.0));
    }

    #[test]
    fn pathloss_instantiation() {
        let s = base();
        for g in s.pathloss_gains() {
            assert!((g - 1.0 / 27.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sample_variance_matches_pathloss() {
        let mut s = base();
        s.num_users = 1;
        s.user_antennas = vec![2];
        s.distances_m = vec![2.0];
        s.rate_targets_mbps = vec![1.0];
        s.energy_weights = vec![1.0];
        s.num_subcarriers = 4000;
        s.validate().unwrap();
        let ch = generate_channels(&s);
        let draws = (s.num_subcarriers * 2 * 2) as f64;
        let mean_power: f64 = (0..s.num_subcarriers).map(|n| ch.h(0, n).frobenius_norm_sqr()).sum::<f64>() / draws;
        let expect = 2f64.powf(-3.0);
        assert!(((mean_power - expect) / expect).abs() < 0.05, "{mean_power} vs {expect}");
    }

    #[test]
    fn explicit_channels_override_draw() {
        let json = r#"{
            "num_users": 1, "num_subcarriers": 1, "ap_antennas": 1, "user_antennas": [1],
            "distances_m": [1.0], "noise_power_dbm": 0.0, "rate_targets_mbps": [2.0],
            "subcarrier_bandwidth_hz": 1e6, "channels": [[[[[1.0, 0.0]]]]]
        }"#;
        let s = Scenario::from_json(json).unwrap();
        assert_eq!(s.energy_weights, vec![1.0]);
        assert_eq!(s.rate_targets_bits(), vec![2.0]);
        let ch = generate_channels(&s);
        assert_eq!(ch.h(0, 0)[(0, 0)], C64::new(1.0, 0.0));
        assert!((ch.noise_power() - 1.0).abs() < 1e-15);
    }
}
