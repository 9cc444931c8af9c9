//! Privacy-priced federated data trading.
//!
//! Providers obfuscate their reports with k-ary randomized response (kRR),
//! group into federations, and sell the combined information to a consumer
//! whose exponential valuation function prices privacy parameters. The
//! federation splits its revenue with the Shapley value of a threshold game
//! and runs a multi-round, multi-year collection process with catalyzing and
//! penalty rules that discourage withholding.
//!
//! Modules follow the flow of a trade:
//!
//! * [`privacy`]: the kRR mechanism and privacy-parameter aggregation.
//! * [`valuation`]: money to privacy and back.
//! * [`market`]: bids, the budget scaling factor, sealed deals, settlement.
//! * [`shapley`]: threshold games and exact, pruned and sampled evaluators.
//! * [`collection`]: round-based collection, savings, catalysts, penalties.

pub mod collection;
pub mod error;
pub mod market;
pub mod privacy;
pub mod shapley;
pub mod valuation;

pub use error::{Error, Result};
