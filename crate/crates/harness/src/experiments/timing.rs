use std::time::Duration;

use fedtrade::privacy::{aggregate, ReportBatch};
use fedtrade::shapley::{evaluate_timed, Method, Player, ShapleyResult, ThresholdGame};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::output::shares_digest;
use crate::sampling::sample_thresholds;
use crate::seeds::{derive_seed, rng, SeedRecord};

pub const HEADER: [&str; 4] = ["n", "method", "wall_time", "shares_digest"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n: usize,
    pub method: Method,
    /// Median seconds over the timed repeats.
    pub wall_time: f64,
    pub shares_digest: String,
}

/// Game of `n` players holding one data point each with thresholds drawn
/// from the configured distribution; the target is a fixed fraction of the
/// grand coalition's information.
pub fn timing_game(config: &ScenarioConfig, n: usize, seed: u64) -> Result<ThresholdGame> {
    let spec = config.spec()?;
    let thresholds = sample_thresholds(&config.thresholds, n, &mut rng(seed))?;
    let players: Vec<Player> = thresholds
        .iter()
        .enumerate()
        .map(|(i, t)| Player::new(format!("p{}", i + 1), vec![ReportBatch { points: 1, epsilon: *t }]))
        .collect();
    let all: Vec<ReportBatch> = players.iter().flat_map(|p| p.batches.iter().copied()).collect();
    let target = config.timing.target_fraction * aggregate(&all, config.mode, spec)?;
    Ok(ThresholdGame::new(players, config.mode, target, config.timing.prize, spec)?)
}

fn measure(game: &ThresholdGame, method: Method, repeats: u32) -> Result<(ShapleyResult, Duration)> {
    let mut unused = rng(0);
    let (result, _) = evaluate_timed(game, method, 0, &mut unused)?;
    let mut times: Vec<Duration> = (0..repeats)
        .map(|_| evaluate_timed(game, method, 0, &mut unused).map(|(_, t)| t.wall_time))
        .collect::<fedtrade::Result<_>>()?;
    times.sort();
    Ok((result, times[times.len() / 2]))
}

/// Time the exact and pruned evaluators on the same game for every size,
/// on the calling thread: one untimed warm-up, then the median of the
/// configured repeats.
pub fn run(config: &ScenarioConfig) -> Result<(Vec<TimingRow>, Vec<SeedRecord>)> {
    let mut rows = Vec::new();
    let mut seeds = Vec::new();
    for &n in &config.timing.sizes {
        let cell = format!("n={n}");
        let seed = derive_seed(config.master_seed, &format!("timing/{cell}"));
        seeds.push(SeedRecord { cell, replication: 0, seed });
        let game = timing_game(config, n, seed)?;
        for method in [Method::Exact, Method::Pruned] {
            let (result, median) = measure(&game, method, config.timing.repeats)?;
            rows.push(TimingRow {
                n,
                method,
                wall_time: median.as_secs_f64(),
                shares_digest: shares_digest(&result.values()),
            });
        }
    }
    Ok((rows, seeds))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Speedup {
    pub n: usize,
    pub exact: f64,
    pub pruned: f64,
    pub speedup: f64,
    pub identical: bool,
}

pub fn speedups(rows: &[TimingRow]) -> Vec<Speedup> {
    let find = |n, m| rows.iter().find(|r| r.n == n && r.method == m);
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.n).collect();
    sizes.dedup();
    sizes
        .into_iter()
        .filter_map(|n| {
            let (e, p) = (find(n, Method::Exact)?, find(n, Method::Pruned)?);
            Some(Speedup {
                n,
                exact: e.wall_time,
                pruned: p.wall_time,
                speedup: e.wall_time / p.wall_time,
                identical: e.shares_digest == p.shares_digest,
            })
        })
        .collect()
}
