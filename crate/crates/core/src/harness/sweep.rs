//! Monte-Carlo sum-rate sweep over receive SNR.
//!
//! Receive SNR fixes a common transmit energy for every scheme: the total
//! energy `E` for which a uniform allocation yields, in expectation, a
//! total received power per AP antenna of `SNR * sigma^2` on each
//! subcarrier, i.e. `E = SNR * sigma^2 * U * N / sum_u d_u^-eta`.
//!
//! Trial `k` uses channel seed `seed + k * TRIAL_SEED_PRIME` (wrapping), the
//! same at every SNR point, so any single trial can be rerun in isolation.

use std::io::Write;

use super::HarnessError;
use crate::pipeline::PipelineConfig;
use crate::scenario::{generate_channels, Scenario};
use crate::schemes::{SchemeRegistry, TrialContext};
use crate::Result;

/// 2^31 - 1.
pub const TRIAL_SEED_PRIME: u64 = 2_147_483_647;

pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_add((trial as u64).wrapping_mul(TRIAL_SEED_PRIME))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub snr_points_db: Vec<f64>,
    pub trials_per_point: usize,
    pub schemes: Vec<String>,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.snr_points_db.is_empty() {
            return Err(HarnessError::InvalidSpec("at least one SNR point is required".into()));
        }
        if self.snr_points_db.iter().any(|v| !v.is_finite()) || self.snr_points_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(HarnessError::InvalidSpec("SNR points must be finite and strictly increasing".into()));
        }
        if self.trials_per_point == 0 {
            return Err(HarnessError::InvalidSpec("trials per point must be positive".into()));
        }
        if self.schemes.is_empty() {
            return Err(HarnessError::InvalidSpec("no schemes selected".into()));
        }
        Ok(())
    }
}

/// Parses `start:step:stop` (inclusive of `stop` up to rounding).
pub fn parse_snr_range(text: &str) -> Result<Vec<f64>, HarnessError> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || HarnessError::InvalidSpec(format!("expected start:step:stop, got '{text}'"));
    let nums: Vec<f64> = match parts.len() {
        1 => vec![parts[0].trim().parse().map_err(|_| bad())?],
        3 => parts.iter().map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?,
        _ => return Err(bad()),
    };
    if nums.len() == 1 {
        return Ok(nums);
    }
    let (start, step, stop) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || stop < start {
        return Err(HarnessError::InvalidSpec(format!("step must be positive and stop >= start in '{text}'")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

/// Total transmit energy (mW) corresponding to `snr_db` for the scenario.
pub fn receive_snr_energy(s: &Scenario, snr_db: f64) -> f64 {
    let snr = 10f64.powf(snr_db / 10.0);
    let gain: f64 = s.pathloss_gains().iter().sum();
    snr * s.noise_power_mw() * (s.num_users * s.num_subcarriers) as f64 / gain
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub scheme: String,
    pub mean_sumrate_bps: f64,
    /// Trials that completed.
    pub trials: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn row(&self, snr_db: f64, scheme: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.snr_db == snr_db && r.scheme == scheme)
    }

    /// `snr_db, scheme, mean_sumrate_bps, trials`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["snr_db", "scheme", "mean_sumrate_bps", "trials"])?;
        for r in &self.rows {
            w.write_record([
                r.snr_db.to_string(),
                r.scheme.clone(),
                r.mean_sumrate_bps.to_string(),
                r.trials.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Relative gain (percent) of `reference` over every other scheme, per
    /// SNR point and averaged: `snr_db, reference, scheme, gap_percent`.
    pub fn write_gaps_csv<W: Write>(&self, out: W, reference: &str) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["snr_db", "reference", "scheme", "gap_percent"])?;
        let others: Vec<&String> = self.spec.schemes.iter().filter(|s| s.as_str() != reference).collect();
        let mut sums = vec![(0.0, 0usize); others.len()];
        for &snr in &self.spec.snr_points_db {
            let Some(base) = self.row(snr, reference) else { continue };
            for (k, other) in others.iter().enumerate() {
                if let Some(o) = self.row(snr, other) {
                    let gap = 100.0 * (base.mean_sumrate_bps / o.mean_sumrate_bps - 1.0);
                    sums[k].0 += gap;
                    sums[k].1 += 1;
                    w.write_record([snr.to_string(), reference.to_string(), other.to_string(), gap.to_string()])?;
                }
            }
        }
        for (k, other) in others.iter().enumerate() {
            if sums[k].1 > 0 {
                let mean = sums[k].0 / sums[k].1 as f64;
                w.write_record(["mean".to_string(), reference.to_string(), other.to_string(), mean.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every selected scheme on every (SNR, trial) pair. Scheme failures
/// are logged and counted per row instead of aborting the sweep.
pub fn run_sweep(
    base: &Scenario,
    spec: &SweepSpec,
    registry: &SchemeRegistry,
    cfg: &PipelineConfig,
) -> Result<SweepReport> {
    spec.validate()?;
    let schemes = registry.select(&spec.schemes)?;
    let mut sums = vec![vec![(0.0, 0usize, 0usize); schemes.len()]; spec.snr_points_db.len()];
    for trial in 0..spec.trials_per_point {
        let mut s = base.clone();
        s.seed = trial_seed(spec.seed, trial);
        let ch = generate_channels(&s);
        for (i, &snr) in spec.snr_points_db.iter().enumerate() {
            let ctx = TrialContext::new(&ch, s.subcarrier_bandwidth_hz, receive_snr_energy(&s, snr), cfg);
            for (k, scheme) in schemes.iter().enumerate() {
                match scheme.evaluate(&ctx) {
                    Ok(o) => {
                        sums[i][k].0 += o.sumrate_bps;
                        sums[i][k].1 += 1;
                    }
                    Err(e) => {
                        log::warn!("snr {snr} dB, trial {trial}, scheme {}: {e}", scheme.name());
                        sums[i][k].2 += 1;
                    }
                }
            }
        }
    }
    let mut rows = Vec::new();
    for (i, &snr) in spec.snr_points_db.iter().enumerate() {
        for (k, scheme) in schemes.iter().enumerate() {
            let (sum, ok, failed) = sums[i][k];
            rows.push(SweepRow {
                snr_db: snr,
                scheme: scheme.name().to_string(),
                mean_sumrate_bps: if ok > 0 { sum / ok as f64 } else { f64::NAN },
                trials: ok,
                failures: failed,
            });
        }
    }
    Ok(SweepReport { spec: spec.clone(), rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceViolation {
    pub snr_db: f64,
    pub better: String,
    pub worse: String,
    pub better_bps: f64,
    pub worse_bps: f64,
}

/// Checks `chain[0] >= chain[1] >= ...` at every SNR point, allowing the
/// left side to fall short by `rel_tol` of the right side.
pub fn check_dominance(report: &SweepReport, chain: &[&str], rel_tol: f64) -> Vec<DominanceViolation> {
    let mut out = Vec::new();
    for &snr in &report.spec.snr_points_db {
        for pair in chain.windows(2) {
            let (Some(a), Some(b)) = (report.row(snr, pair[0]), report.row(snr, pair[1])) else { continue };
            if !(a.mean_sumrate_bps >= b.mean_sumrate_bps * (1.0 - rel_tol)) {
                out.push(DominanceViolation {
                    snr_db: snr,
                    better: pair[0].to_string(),
                    worse: pair[1].to_string(),
                    better_bps: a.mean_sumrate_bps,
                    worse_bps: b.mean_sumrate_bps,
                });
            }
        }
    }
    out
}
