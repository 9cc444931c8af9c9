//! Revenue splitting with the Shapley value of a threshold game.
//!
//! A coalition earns the whole prize when its aggregated information meets
//! the promised level and nothing otherwise. Marginal contributions are
//! therefore multiples of the prize, and the exact and pruned evaluators
//! both accumulate integer factorial weights, scaling by the prize once at
//! the end. They also share one canonical way of summing a coalition (see
//! [`ThresholdGame::coalition_stat`]), so the two produce bit-identical
//! shares.

mod exact;
mod pruned;
mod sampled;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::ProviderId;
use crate::privacy::{AggregationMode, AlphabetSpec, InfoStat, ReportBatch};

pub use exact::shapley_exact;
pub use pruned::shapley_pruned;
pub use sampled::shapley_sampled;

/// Largest game the enumerating evaluators accept.
pub const MAX_ENUMERATION_PLAYERS: usize = 30;

/// Default number of sampled orderings.
pub const DEFAULT_SAMPLES: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Player {
    pub id: ProviderId,
    pub batches: Vec<ReportBatch>,
}

impl Player {
    pub fn new(id: impl Into<String>, batches: Vec<ReportBatch>) -> Self {
        Self { id: ProviderId(id.into()), batches }
    }
}

#[derive(Debug, Clone)]
pub struct ThresholdGame {
    players: Vec<Player>,
    stats: Vec<InfoStat>,
    mode: AggregationMode,
    target: f64,
    prize: f64,
    spec: AlphabetSpec,
}

impl ThresholdGame {
    pub fn new(
        players: Vec<Player>,
        mode: AggregationMode,
        target: f64,
        prize: f64,
        spec: AlphabetSpec,
    ) -> Result<Self> {
        if players.is_empty() {
            return Err(Error::Domain("a game needs at least one player".into()));
        }
        if !(target > 0.0 && target.is_finite()) {
            return Err(Error::Domain(format!("target must be positive, got {target}")));
        }
        if !(prize >= 0.0 && prize.is_finite()) {
            return Err(Error::Domain(format!("prize must be non-negative, got {prize}")));
        }
        let stats = players.iter().map(|p| InfoStat::of_batches(&p.batches, mode, spec)).collect();
        Ok(Self { players, stats, mode, target, prize, spec })
    }

    /// Game whose players each hold one `(1, value)` batch under additive
    /// information, so contributions are the given values.
    pub fn from_contributions(values: &[f64], target: f64, prize: f64) -> Result<Self> {
        let players = values
            .iter()
            .enumerate()
            .map(|(i, &v)| Ok(Player::new(format!("p{}", i + 1), vec![ReportBatch::new(1, v)?])))
            .collect::<Result<Vec<_>>>()?;
        Self::new(players, AggregationMode::AdditiveInformation, target, prize, AlphabetSpec::new(2)?)
    }

    pub fn len(&self) -> usize {
        self.players.len()
    }

    pub fn is_empty(&self) -> bool {
        self.players.is_empty()
    }

    pub fn players(&self) -> &[Player] {
        &self.players
    }

    pub fn stats(&self) -> &[InfoStat] {
        &self.stats
    }

    pub fn mode(&self) -> AggregationMode {
        self.mode
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    pub fn prize(&self) -> f64 {
        self.prize
    }

    pub fn spec(&self) -> AlphabetSpec {
        self.spec
    }

    /// Meeting the target exactly counts as meeting it.
    pub fn wins(&self, stat: InfoStat) -> bool {
        stat.level(self.mode, self.spec) >= self.target
    }

    /// Index of the first player of the upper half in the canonical split.
    pub(crate) fn split(&self) -> usize {
        self.len() / 2
    }

    /// Canonical statistic of a coalition given by player indices.
    ///
    /// Players are split into a lower half `[0, n/2)` and an upper half.
    /// Each half is summed from its highest member down to its lowest and
    /// the two partial sums are added. The subset tables used by the exact
    /// and pruned evaluators reproduce exactly this arithmetic.
    pub fn coalition_stat(&self, members: &[usize]) -> InfoStat {
        let mut inside = vec![false; self.len()];
        for &m in members {
            inside[m] = true;
        }
        let h = self.split();
        let half = |range: std::ops::Range<usize>| {
            range.rev().filter(|&i| inside[i]).fold(InfoStat::ZERO, |acc, i| acc + self.stats[i])
        };
        half(0..h) + half(h..self.len())
    }

    /// Aggregated level of a coalition.
    pub fn coalition_level(&self, members: &[usize]) -> f64 {
        self.coalition_stat(members).level(self.mode, self.spec)
    }

    /// `v(S)`: the prize if the coalition meets the target, else 0.
    pub fn characteristic(&self, members: &[usize]) -> f64 {
        if self.wins(self.coalition_stat(members)) {
            self.prize
        } else {
            0.0
        }
    }

    fn check_enumerable(&self) -> Result<()> {
        if self.len() > MAX_ENUMERATION_PLAYERS {
            return Err(Error::Capacity { players: self.len(), limit: MAX_ENUMERATION_PLAYERS });
        }
        Ok(())
    }
}

/// Per-half subset sums: `low[m]` and `high[m]` hold the canonical partial
/// statistic of the subset `m` of the respective half.
pub(crate) struct SubsetTables {
    pub split: usize,
    pub low: Vec<InfoStat>,
    pub high: Vec<InfoStat>,
}

impl SubsetTables {
    pub fn build(game: &ThresholdGame) -> Self {
        let h = game.split();
        let stats = game.stats();
        Self { split: h, low: half_table(&stats[..h]), high: half_table(&stats[h..]) }
    }

    #[inline]
    pub fn stat(&self, mask: u64) -> InfoStat {
        let low_mask = (1u64 << self.split) - 1;
        self.low[(mask & low_mask) as usize] + self.high[(mask >> self.split) as usize]
    }
}

fn half_table(stats: &[InfoStat]) -> Vec<InfoStat> {
    let mut table = vec![InfoStat::ZERO; 1 << stats.len()];
    for m in 1..table.len() {
        // lowest member added last: matches the descending fold
        table[m] = table[m & (m - 1)] + stats[m.trailing_zeros() as usize];
    }
    table
}

/// `s!·(n−s−1)!` for `s = 0..n`, and `n!`.
pub(crate) fn factorial_weights(n: usize) -> (Vec<u128>, u128) {
    let fact: Vec<u128> = std::iter::once(1u128)
        .chain((1..=n as u128).scan(1u128, |acc, i| {
            *acc *= i;
            Some(*acc)
        }))
        .collect();
    let weights = (0..n).map(|s| fact[s] * fact[n - s - 1]).collect();
    (weights, fact[n])
}

/// Signed pivot tallies shared by the enumerating evaluators.
pub(crate) struct PivotTally {
    /// `up[i][s]`: coalitions of size `s` that `i` lifts over the target.
    pub up: Vec<Vec<u64>>,
    /// `down[i][s]`: coalitions of size `s` that `i` drops below it.
    pub down: Vec<Vec<u64>>,
}

impl PivotTally {
    pub fn new(n: usize) -> Self {
        Self { up: vec![vec![0; n]; n], down: vec![vec![0; n]; n] }
    }

    pub fn into_result(self, game: &ThresholdGame, method: Method) -> ShapleyResult {
        let n = game.len();
        let (weights, n_fact) = factorial_weights(n);
        let shares = (0..n)
            .map(|i| {
                let acc: i128 = (0..n)
                    .map(|s| (self.up[i][s] as i128 - self.down[i][s] as i128) * weights[s] as i128)
                    .sum();
                let value = game.prize() * (acc as f64 / n_fact as f64);
                Share { id: game.players()[i].id.clone(), value }
            })
            .collect();
        ShapleyResult {
            method,
            shares,
            samples: None,
            standard_errors: None,
            pivots: Some(PivotCounts { up: self.up, down: self.down }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    Pruned,
    Sampled,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Pruned => "pruned",
            Method::Sampled => "sampled",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Method::Exact, Method::Pruned, Method::Sampled]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown Shapley method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub id: ProviderId,
    pub value: f64,
}

/// Number of coalitions, by size, on which each player's marginal
/// contribution is `+prize` (`up`) or `-prize` (`down`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PivotCounts {
    pub up: Vec<Vec<u64>>,
    pub down: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyResult {
    pub method: Method,
    pub shares: Vec<Share>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standard_errors: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pivots: Option<PivotCounts>,
}

impl ShapleyResult {
    pub fn values(&self) -> Vec<f64> {
        self.shares.iter().map(|s| s.value).collect()
    }

    pub fn share(&self, id: &ProviderId) -> Option<f64> {
        self.shares.iter().find(|s| &s.id == id).map(|s| s.value)
    }

    pub fn total(&self) -> f64 {
        self.shares.iter().map(|s| s.value).sum()
    }
}

/// Wall-clock record of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvaluationTiming {
    pub method: Method,
    pub players: usize,
    pub wall_time: Duration,
}

/// Run one evaluator and time it with a monotonic clock.
pub fn evaluate_timed<R: rand::Rng + ?Sized>(
    game: &ThresholdGame,
    method: Method,
    samples: u64,
    rng: &mut R,
) -> Result<(ShapleyResult, EvaluationTiming)> {
    let start = Instant::now();
    let result = match method {
        Method::Exact => shapley_exact(game)?,
        Method::Pruned => shapley_pruned(game)?,
        Method::Sampled => shapley_sampled(game, samples, rng)?,
    };
    let timing = EvaluationTiming { method, players: game.len(), wall_time: start.elapsed() };
    Ok((result, timing))
}
