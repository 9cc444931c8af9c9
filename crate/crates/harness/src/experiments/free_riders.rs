use fedtrade::collection::PolicyKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean, ExperimentOutput};
use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::pipeline::{build_federation, run_years, RowKey, SettlementRow};
use crate::sampling::sample_thresholds;
use crate::seeds::{derive_seed, rng, SeedRecord};

pub const HEADER: [&str; 5] = ["n", "delta_f", "policy", "replication", "free_rider_count"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeRiderRow {
    pub n: usize,
    pub delta_f: f64,
    pub policy: PolicyKind,
    pub replication: u32,
    pub free_rider_count: usize,
}

/// Multi-year trading with the penalty scheme. The count is the number of
/// members excluded by the end of the run. A replication's seed is shared
/// by every policy and free-rider threshold.
pub fn run(config: &ScenarioConfig, policies: &[PolicyKind]) -> Result<ExperimentOutput<FreeRiderRow>> {
    let fc = &config.free_riders;
    let jobs: Vec<(usize, u32)> =
        fc.sizes.iter().flat_map(|&n| (0..fc.replications).map(move |rep| (n, rep))).collect();

    let results: Vec<(Vec<FreeRiderRow>, Vec<SettlementRow>, SeedRecord)> = jobs
        .par_iter()
        .map(|&(n, replication)| {
            let cell = format!("n={n}");
            let seed = derive_seed(config.master_seed, &format!("free-riders/{cell}/rep={replication}"));
            let target = fc.target_per_provider * n as f64;
            let mut rows = Vec::new();
            let mut settlements = Vec::new();
            for &policy in policies {
                for &delta_f in &fc.delta_thresholds {
                    let mut rng = rng(derive_seed(seed, "thresholds"));
                    let thresholds = sample_thresholds(&config.thresholds, n, &mut rng)?;
                    let fed = build_federation("F", &thresholds, config, delta_f)?;
                    let deal_cell = format!("{cell}/delta={delta_f}/{policy}");
                    let key = RowKey { experiment: "free-riders", cell: &deal_cell, replication };
                    let run = run_years(fed, config, target, policy, fc.years, true, &key, seed)?;
                    rows.push(FreeRiderRow {
                        n,
                        delta_f,
                        policy,
                        replication,
                        free_rider_count: run.registry.excluded_count(),
                    });
                    settlements.extend(run.settlements);
                }
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
            .then(a.delta_f.total_cmp(&b.delta_f))
            .then(a.policy.name().cmp(b.policy.name()))
            .then(a.replication.cmp(&b.replication))
    });
    out.settlements.sort_by(|a, b| (&a.cell, a.replication, a.year).cmp(&(&b.cell, b.replication, b.year)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreeRiderCell {
    pub n: usize,
    pub delta_f: f64,
    pub policy: PolicyKind,
    pub replications: usize,
    pub mean_count: f64,
}

pub fn summarize(rows: &[FreeRiderRow]) -> Vec<FreeRiderCell> {
    let mut cells: Vec<FreeRiderCell> = Vec::new();
    for row in rows {
        if cells.iter().any(|c| c.n == row.n && c.delta_f == row.delta_f && c.policy == row.policy) {
            continue;
        }
        let group: Vec<&FreeRiderRow> =
            rows.iter().filter(|r| r.n == row.n && r.delta_f == row.delta_f && r.policy == row.policy).collect();
        cells.push(FreeRiderCell {
            n: row.n,
            delta_f: row.delta_f,
            policy: row.policy,
            replications: group.len(),
            mean_count: mean(group.iter().map(|r| r.free_rider_count as f64)),
        });
    }
    cells
}
