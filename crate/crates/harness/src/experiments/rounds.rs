use fedtrade::collection::PolicyKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean, ExperimentOutput};
use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::pipeline::{build_federation, run_years, RowKey, SettlementRow};
use crate::sampling::sample_thresholds;
use crate::seeds::{derive_seed, rng, SeedRecord};

pub const HEADER: [&str; 6] = ["n", "target", "policy", "replication", "rounds_used", "achieved"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundsRow {
    pub n: usize,
    pub target: f64,
    pub policy: PolicyKind,
    pub replication: u32,
    pub rounds_used: u32,
    pub achieved: bool,
}

fn cell_label(n: usize, target: f64) -> String {
    format!("n={n}/target={target}")
}

/// For every federation size, target and replication, trade for the
/// configured number of years under each policy and record the last year.
/// Both policies of a replication share its seed, so they face the same
/// providers and the same random draws.
pub fn run(config: &ScenarioConfig, policies: &[PolicyKind]) -> Result<ExperimentOutput<RoundsRow>> {
    let rc = &config.rounds;
    let jobs: Vec<(usize, f64, u32)> = rc
        .sizes
        .iter()
        .flat_map(|&n| rc.targets.iter().flat_map(move |&t| (0..rc.replications).map(move |rep| (n, t, rep))))
        .collect();

    let results: Vec<(Vec<RoundsRow>, Vec<SettlementRow>, SeedRecord)> = jobs
        .par_iter()
        .map(|&(n, target, replication)| {
            let cell = cell_label(n, target);
            let seed = derive_seed(config.master_seed, &format!("rounds/{cell}/rep={replication}"));
            let mut rows = Vec::new();
            let mut settlements = Vec::new();
            for &policy in policies {
                let mut rng = rng(derive_seed(seed, "thresholds"));
                let thresholds = sample_thresholds(&config.thresholds, n, &mut rng)?;
                let fed = build_federation("F", &thresholds, config, 1.0)?;
                let policy_cell = format!("{cell}/{policy}");
                let key = RowKey { experiment: "rounds", cell: &policy_cell, replication };
                let run = run_years(fed, config, target, policy, rc.years, false, &key, seed)?;
                let last = run.ledgers.last().expect("at least one year");
                rows.push(RoundsRow {
                    n,
                    target,
                    policy,
                    replication,
                    rounds_used: last.rounds_used,
                    achieved: last.reached,
                });
                settlements.extend(run.settlements);
            }
            Ok((rows, settlements, SeedRecord { cell, replication, seed }))
        })
        .collect::<Result<_>>()?;

    let mut out = ExperimentOutput { rows: Vec::new(), settlements: Vec::new(), seeds: Vec::new() };
    for (rows, settlements, seed) in results {
        out.rows.extend(rows);
        out.settlements.extend(settlements);
        out.seeds.push(seed);
    }
    out.rows.sort_by(|a, b| {
        a.n.cmp(&b.n)
            .then(a.target.total_cmp(&b.target))
            .then(a.policy.name().cmp(b.policy.name()))
            .then(a.replication.cmp(&b.replication))
    });
    out.settlements.sort_by(|a, b| (&a.cell, a.replication, a.year).cmp(&(&b.cell, b.replication, b.year)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundsCell {
    pub n: usize,
    pub target: f64,
    pub policy: PolicyKind,
    pub replications: usize,
    /// Share of replications meeting the target within `success_rounds`.
    pub success_rate: f64,
    /// Mean rounds to target, counting a miss as `max_rounds + 1`.
    pub mean_rounds: f64,
}

pub fn summarize(rows: &[RoundsRow], config: &ScenarioConfig) -> Vec<RoundsCell> {
    let mut cells: Vec<RoundsCell> = Vec::new();
    for row in rows {
        if cells.iter().any(|c| c.n == row.n && c.target == row.target && c.policy == row.policy) {
            continue;
        }
        let group: Vec<&RoundsRow> =
            rows.iter().filter(|r| r.n == row.n && r.target == row.target && r.policy == row.policy).collect();
        let within = group.iter().filter(|r| r.achieved && r.rounds_used <= config.rounds.success_rounds).count();
        let effective = |r: &&RoundsRow| if r.achieved { r.rounds_used } else { config.max_rounds + 1 } as f64;
        cells.push(RoundsCell {
            n: row.n,
            target: row.target,
            policy: row.policy,
            replications: group.len(),
            success_rate: within as f64 / group.len() as f64,
            mean_rounds: mean(group.iter().map(effective)),
        });
    }
    cells
}
