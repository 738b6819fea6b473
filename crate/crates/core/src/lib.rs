//! Core domain model for revolving credit facility analytics.
//!
//! The crate covers the contract side of the problem: facility terms and
//! amendment chains, pricing-grid criteria, firm and facility quarter-end
//! state, Merton-style default probabilities, per-quarter pricing resolution
//! and coupon-return computation.

pub mod contract;
pub mod dsl;
pub mod ingest;
pub mod market;
pub mod pricing;
pub mod quarter;
pub mod returns;
pub mod risk;
pub mod units;

pub use contract::{Facility, LoanPath};
pub use market::{FacilityQuarterState, FirmQuarter, RateEnvironment};
pub use quarter::Quarter;
pub use units::{Bps, Usd};
