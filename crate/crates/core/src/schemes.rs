//! Named transmission schemes behind one trait, selected at run time.
//!
//! Every scheme answers the same question for one channel realization: what
//! sum rate does it deliver with a given total transmit energy? The
//! baselines spend the energy with their fixed rules. The proposed schemes
//! start from the per-user rate profile of the fixed-order NOMA baseline and
//! find the largest multiple of it they can serve within the same energy:
//!
//! * `proposed-ts` solves the minimum-energy problem with time-sharing and
//!   adjusts the multiple by safeguarded Newton steps (the derivative of the
//!   minimum energy along the profile is `theta . profile`);
//! * `proposed` keeps the covariance shapes of that solution but must use a
//!   single decoding order; the multiple is found by bisection over the best
//!   single-order point (see [`crate::single_order`]).

use std::cell::OnceCell;

use crate::baselines::{mcnoma_with_bandwidth, noma_fixed_with_bandwidth, oma_with_bandwidth, BaselineResult};
use crate::pipeline::{allocate_with_timeshare, PipelineConfig, PipelineResult};
use crate::scenario::ChannelSet;
use crate::single_order::{best_single_order, SingleOrderSolution};
use crate::{Error, Result};

/// Relative energy tolerance of the rate-scale searches.
pub const SCALE_TOL: f64 = 1e-4;
const MAX_SCALE_STEPS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeOutcome {
    pub sumrate_bps: f64,
    /// Per-user rates, bits per subcarrier use.
    pub rates_bits: Vec<f64>,
    pub energy_mw: f64,
}

/// One channel realization and energy budget, with lazily shared work.
pub struct TrialContext<'a> {
    pub ch: &'a ChannelSet,
    pub bandwidth: f64,
    pub total_energy: f64,
    pub cfg: &'a PipelineConfig,
    noma: OnceCell<Result<BaselineResult, String>>,
    proposed_ts: OnceCell<Result<RateScaling, String>>,
}

impl<'a> TrialContext<'a> {
    pub fn new(ch: &'a ChannelSet, bandwidth: f64, total_energy: f64, cfg: &'a PipelineConfig) -> Self {
        Self { ch, bandwidth, total_energy, cfg, noma: OnceCell::new(), proposed_ts: OnceCell::new() }
    }

    pub fn noma_fixed(&self) -> Result<&BaselineResult> {
        self.noma
            .get_or_init(|| {
                noma_fixed_with_bandwidth(self.ch, self.bandwidth, self.total_energy).map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| Error::Scheme(e.clone()))
    }

    pub fn proposed_timeshare(&self) -> Result<&RateScaling> {
        self.proposed_ts
            .get_or_init(|| {
                let profile = self.noma_fixed().map_err(|e| e.to_string())?.rates.totals();
                max_rate_scale(self.ch, &profile, self.total_energy, self.cfg).map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| Error::Scheme(e.clone()))
    }
}

pub trait Scheme {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn evaluate(&self, ctx: &TrialContext<'_>) -> Result<SchemeOutcome>;
}

fn baseline_outcome(r: &BaselineResult) -> SchemeOutcome {
    SchemeOutcome { sumrate_bps: r.sumrate, rates_bits: r.rates.totals(), energy_mw: r.per_user_energy.iter().sum() }
}

pub struct ProposedTimeshare;
pub struct ProposedSingleOrder;
pub struct NomaFixed;
pub struct McNoma;
pub struct Oma;

impl Scheme for ProposedTimeshare {
    fn name(&self) -> &'static str {
        "proposed-ts"
    }
    fn description(&self) -> &'static str {
        "minimum-energy allocation with time-sharing over tied orders"
    }
    fn evaluate(&self, ctx: &TrialContext<'_>) -> Result<SchemeOutcome> {
        let s = ctx.proposed_timeshare()?;
        Ok(SchemeOutcome {
            sumrate_bps: s.result.achieved.iter().sum::<f64>() * ctx.bandwidth,
            rates_bits: s.result.achieved.clone(),
            energy_mw: s.result.total_energy(),
        })
    }
}

impl Scheme for ProposedSingleOrder {
    fn name(&self) -> &'static str {
        "proposed"
    }
    fn description(&self) -> &'static str {
        "optimal covariance shapes with the best single decoding order"
    }
    fn evaluate(&self, ctx: &TrialContext<'_>) -> Result<SchemeOutcome> {
        let ts = ctx.proposed_timeshare()?;
        let single = max_single_order_scale(
            ctx.ch,
            &ts.result.allocation.alloc,
            &ts.profile,
            ctx.total_energy,
            ts.scale,
            ctx.cfg.solver.inner.init_energy_mw,
        )?;
        Ok(SchemeOutcome {
            sumrate_bps: single.solution.rates.iter().sum::<f64>() * ctx.bandwidth,
            rates_bits: single.solution.rates.clone(),
            energy_mw: single.solution.alloc.total_energy(),
        })
    }
}

impl Scheme for NomaFixed {
    fn name(&self) -> &'static str {
        "noma-fixed"
    }
    fn description(&self) -> &'static str {
        "uniform energy, one order by aggregate channel norm"
    }
    fn evaluate(&self, ctx: &TrialContext<'_>) -> Result<SchemeOutcome> {
        Ok(baseline_outcome(ctx.noma_fixed()?))
    }
}

impl Scheme for McNoma {
    fn name(&self) -> &'static str {
        "mcnoma"
    }
    fn description(&self) -> &'static str {
        "uniform energy, per-subcarrier order by channel norm"
    }
    fn evaluate(&self, ctx: &TrialContext<'_>) -> Result<SchemeOutcome> {
        Ok(baseline_outcome(&mcnoma_with_bandwidth(ctx.ch, ctx.bandwidth, ctx.total_energy)?))
    }
}

impl Scheme for Oma {
    fn name(&self) -> &'static str {
        "oma"
    }
    fn description(&self) -> &'static str {
        "round-robin subcarrier assignment with per-user water-filling"
    }
    fn evaluate(&self, ctx: &TrialContext<'_>) -> Result<SchemeOutcome> {
        Ok(baseline_outcome(&oma_with_bandwidth(ctx.ch, ctx.bandwidth, ctx.total_energy)?))
    }
}

pub struct SchemeRegistry {
    entries: Vec<Box<dyn Scheme>>,
}

impl SchemeRegistry {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        for s in [
            Box::new(ProposedTimeshare) as Box<dyn Scheme>,
            Box::new(ProposedSingleOrder),
            Box::new(NomaFixed),
            Box::new(McNoma),
            Box::new(Oma),
        ] {
            r.register(s).expect("default names are distinct");
        }
        r
    }

    pub fn register(&mut self, scheme: Box<dyn Scheme>) -> Result<()> {
        if self.get(scheme.name()).is_some() {
            return Err(Error::Scheme(format!("scheme '{}' registered twice", scheme.name())));
        }
        self.entries.push(scheme);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&dyn Scheme> {
        self.entries.iter().find(|s| s.name() == name).map(|s| s.as_ref())
    }

    /// Registration order.
    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|s| s.name()).collect()
    }

    pub fn select(&self, names: &[String]) -> Result<Vec<&dyn Scheme>> {
        names
            .iter()
            .map(|n| {
                self.get(n).ok_or_else(|| {
                    Error::Harness(crate::harness::HarnessError::InvalidSpec(format!(
                        "unknown scheme '{n}' (known: {})",
                        self.names().join(", ")
                    )))
                })
            })
            .collect()
    }
}

impl Default for SchemeRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

#[derive(Debug, Clone)]
pub struct RateScaling {
    /// Largest multiple of `profile` served within the budget.
    pub scale: f64,
    pub profile: Vec<f64>,
    pub result: PipelineResult,
    pub solves: usize,
}

/// Largest `t` with minimum (time-shared) energy of `t * profile` at most
/// `budget`, with unit weights.
pub fn max_rate_scale(ch: &ChannelSet, profile: &[f64], budget: f64, cfg: &PipelineConfig) -> Result<RateScaling> {
    if !(budget > 0.0) || profile.iter().all(|&r| r <= 0.0) {
        return Err(Error::Scheme("rate scaling needs a positive budget and a non-zero profile".into()));
    }
    let weights = vec![1.0; ch.num_users()];
    let eval = |t: f64| -> Result<(f64, f64, PipelineResult)> {
        let targets: Vec<f64> = profile.iter().map(|r| r * t).collect();
        let res = allocate_with_timeshare(ch, &targets, &weights, cfg)?;
        let slope: f64 = res.allocation.theta_mw_per_bit().iter().zip(profile).map(|(th, r)| th * r).sum();
        Ok((res.total_energy(), slope, res))
    };

    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    let mut best: Option<(f64, PipelineResult)> = None;
    let mut t = 1.0;
    let mut solves = 0;
    for _ in 0..MAX_SCALE_STEPS {
        let (energy, slope, res) = eval(t)?;
        solves += 1;
        let within = (energy - budget).abs() <= SCALE_TOL * budget;
        if energy <= budget * (1.0 + SCALE_TOL) && best.as_ref().is_none_or(|(bt, _)| t > *bt) {
            best = Some((t, res));
        }
        if within {
            break;
        }
        if energy < budget {
            lo = lo.max(t);
        } else {
            hi = hi.min(t);
        }
        if hi.is_finite() && hi - lo <= SCALE_TOL * hi {
            break;
        }
        let newton = if slope > 0.0 { t + (budget - energy) / slope } else { f64::NAN };
        t = if newton > lo && newton < hi {
            newton
        } else if hi.is_finite() {
            0.5 * (lo + hi)
        } else {
            2.0 * t
        };
    }
    let (scale, result) = best.ok_or_else(|| Error::Scheme("no rate multiple fits the energy budget".into()))?;
    Ok(RateScaling { scale, profile: profile.to_vec(), result, solves })
}

#[derive(Debug, Clone)]
pub struct SingleOrderScaling {
    pub scale: f64,
    pub solution: SingleOrderSolution,
}

/// Largest `t <= t_max` whose best single-order point for `t * profile`
/// (greedy water-filling, or rescaled `shapes`) fits `budget`.
pub fn max_single_order_scale(
    ch: &ChannelSet,
    shapes: &crate::rate_region::CovarianceAllocation,
    profile: &[f64],
    budget: f64,
    t_max: f64,
    seed_energy_mw: f64,
) -> Result<SingleOrderScaling> {
    let weights = vec![1.0; ch.num_users()];
    let eval = |t: f64| -> Result<Option<SingleOrderSolution>> {
        let targets: Vec<f64> = profile.iter().map(|r| r * t).collect();
        best_single_order(ch, &targets, &weights, &[shapes], seed_energy_mw)
    };
    let fits =
        |s: &Option<SingleOrderSolution>| s.as_ref().is_some_and(|s| s.weighted_energy <= budget * (1.0 + SCALE_TOL));

    let top = eval(t_max)?;
    if fits(&top) {
        return Ok(SingleOrderScaling { scale: t_max, solution: top.expect("fits") });
    }
    let (mut lo, mut hi) = (0.0, t_max);
    let mut best = None;
    for _ in 0..MAX_SCALE_STEPS {
        if hi - lo <= SCALE_TOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let s = eval(mid)?;
        if fits(&s) {
            lo = mid;
            best = s;
        } else {
            hi = mid;
        }
    }
    let solution = match best {
        Some(s) => s,
        None => eval(0.0)?.ok_or_else(|| Error::Scheme("no single-order point".into()))?,
    };
    Ok(SingleOrderScaling { scale: lo, solution })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::C64;

    #[test]
    fn registry_lists_defaults_and_rejects_duplicates() {
        let mut r = SchemeRegistry::with_defaults();
        assert_eq!(r.names(), vec!["proposed-ts", "proposed", "noma-fixed", "mcnoma", "oma"]);
        assert!(r.register(Box::new(Oma)).is_err());
        assert!(r.select(&["oma".into(), "nope".into()]).is_err());
    }

    #[test]
    fn single_user_schemes_coincide() {
        let ch = ChannelSet::scalar(&[vec![C64::new(0.8, 0.1), C64::new(0.3, -0.4)]], 0.2).unwrap();
        let cfg = PipelineConfig::default();
        let ctx = TrialContext::new(&ch, 1e6, 3.0, &cfg);
        let reg = SchemeRegistry::with_defaults();
        let rates: Vec<f64> =
            reg.names().iter().map(|n| reg.get(n).unwrap().evaluate(&ctx).unwrap().sumrate_bps).collect();
        // NOMA spreads energy uniformly; proposed and OMA water-fill.
        assert!((rates[0] - rates[4]).abs() <= 1e-3 * rates[4], "{rates:?}");
        assert!((rates[1] - rates[4]).abs() <= 1e-3 * rates[4], "{rates:?}");
        assert!((rates[2] - rates[3]).abs() < 1e-9 * rates[2]);
        assert!(rates[0] >= rates[2]);
    }
}
