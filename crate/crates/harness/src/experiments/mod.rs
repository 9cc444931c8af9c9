//! The three reproducible experiments: rounds to target, free riders under
//! the penalty scheme, and Shapley evaluator timing.

pub mod free_riders;
pub mod rounds;
pub mod timing;

use crate::pipeline::SettlementRow;
use crate::seeds::SeedRecord;

/// Rows of one experiment together with the settled deals and the seeds
/// that produced them.
#[derive(Debug, Clone)]
pub struct ExperimentOutput<R> {
    pub rows: Vec<R>,
    pub settlements: Vec<SettlementRow>,
    pub seeds: Vec<SeedRecord>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, count) = values.into_iter().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}
