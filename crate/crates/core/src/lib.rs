//! Weighted-sum energy minimization for uplink multicarrier NOMA with
//! successive interference cancellation.
//!
//! The crate splits into small linear-algebra kernels ([`numerics`]),
//! scenario loading and channel generation ([`scenario`]), SIC rates and the
//! capacity region ([`rate_region`]), the primal-dual solver
//! ([`allocator`]), time-sharing between decoding orders ([`timeshare`]),
//! reference schemes ([`baselines`]), single-order constructions
//! ([`single_order`]), the scheme registry ([`schemes`]) and the experiment
//! drivers ([`harness`]).

pub mod allocator;
pub mod baselines;
pub mod harness;
pub mod numerics;
pub mod pipeline;
pub mod rate_region;
pub mod scenario;
pub mod schemes;
pub mod single_order;
pub mod timeshare;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
    #[error(transparent)]
    Numerics(#[from] numerics::NumericsError),
    #[error(transparent)]
    Rate(#[from] rate_region::RateError),
    #[error(transparent)]
    Alloc(#[from] allocator::AllocError),
    #[error(transparent)]
    Timeshare(#[from] timeshare::TimeshareError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
    #[error("{0}")]
    Scheme(String),
}

impl Error {
    /// Input problems (bad files, bad arguments) as opposed to solver failures.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Scenario(_)
                | Error::Harness(harness::HarnessError::InvalidSpec(_))
                | Error::Harness(harness::HarnessError::Io { .. })
                | Error::Alloc(allocator::AllocError::InvalidInput(_))
                | Error::Timeshare(timeshare::TimeshareError::InvalidInput(_))
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
