use rand::seq::SliceRandom;
use rand::Rng;

use super::{Method, Share, ShapleyResult, ThresholdGame};
use crate::error::{Error, Result};
use crate::privacy::InfoStat;

/// Monte Carlo Shapley estimate over uniformly random player orderings.
///
/// Each ordering is walked once with a running statistic; whenever adding a
/// player moves the prefix across the target, that player is credited with
/// `+prize` (upward) or `-prize` (downward). Standard errors are the sample
/// standard deviation of the per-ordering credits over `√samples`.
pub fn shapley_sampled<R: Rng + ?Sized>(
    game: &ThresholdGame,
    samples: u64,
    rng: &mut R,
) -> Result<ShapleyResult> {
    if samples == 0 {
        return Err(Error::Precondition("sampled Shapley needs at least one ordering".into()));
    }
    let n = game.len();
    let stats = game.stats();
    let mut order: Vec<usize> = (0..n).collect();
    let mut net = vec![0i64; n];
    let mut hits = vec![0u64; n];

    for _ in 0..samples {
        order.shuffle(rng);
        let mut prefix = InfoStat::ZERO;
        let mut winning = false;
        for &i in &order {
            prefix += stats[i];
            let now = game.wins(prefix);
            if now != winning {
                net[i] += if now { 1 } else { -1 };
                hits[i] += 1;
                winning = now;
            }
        }
    }

    let count = samples as f64;
    let prize = game.prize();
    let mut shares = Vec::with_capacity(n);
    let mut errors = Vec::with_capacity(n);
    for i in 0..n {
        let mean = net[i] as f64 / count;
        // credits are -1, 0 or +1, so their squares sum to the hit count
        let variance = (hits[i] as f64 / count - mean * mean).max(0.0);
        shares.push(Share { id: game.players()[i].id.clone(), value: prize * mean });
        errors.push(prize * (variance / count).sqrt());
    }
    Ok(ShapleyResult {
        method: Method::Sampled,
        shares,
        samples: Some(samples),
        standard_errors: Some(errors),
        pivots: None,
    })
}
