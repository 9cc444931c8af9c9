//! Subcommand implementations shared by the binary and the tests.

use std::fmt::Write as _;
use std::path::Path;

use fedtrade::collection::PolicyKind;
use fedtrade::privacy::{AggregationMode, AlphabetSpec};
use fedtrade::shapley::{
    shapley_exact, shapley_pruned, shapley_sampled, Method, Player, ShapleyResult, ThresholdGame, DEFAULT_SAMPLES,
};
use serde::Deserialize;

use crate::config::ScenarioConfig;
use crate::error::{HarnessError, Result};
use crate::experiments::{free_riders, rounds, timing};
use crate::manifest::{inventory, RunManifest};
use crate::output::{ensure_dir, read_json, write_csv, write_csv_or_header, write_json};
use crate::pipeline::{build_federation, run_years, RowKey};
use crate::sampling::sample_thresholds;
use crate::seeds::{derive_seed, rng, SeedRecord};

const SETTLEMENT_HEADER: [&str; 13] = [
    "experiment",
    "cell",
    "replication",
    "year",
    "federation",
    "budget",
    "w_star",
    "threshold",
    "promised",
    "price",
    "achieved_level",
    "reached",
    "payout",
];

/// Commands that write outputs and a manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Simulate,
    Rounds,
    FreeRiders,
    Timing,
}

impl RunKind {
    pub const ALL: [RunKind; 4] = [RunKind::Simulate, RunKind::Rounds, RunKind::FreeRiders, RunKind::Timing];

    pub fn name(self) -> &'static str {
        match self {
            RunKind::Simulate => "simulate",
            RunKind::Rounds => "exp-rounds",
            RunKind::FreeRiders => "exp-freeriders",
            RunKind::Timing => "exp-timing",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

pub struct RunReport {
    pub manifest: RunManifest,
    pub summary: String,
}

fn policies(filter: Option<PolicyKind>) -> Vec<PolicyKind> {
    filter.map_or_else(|| PolicyKind::ALL.to_vec(), |p| vec![p])
}

/// Run one command, write its outputs and manifest into `out`.
pub fn execute(kind: RunKind, config: &ScenarioConfig, policy: Option<PolicyKind>, out: &Path) -> Result<RunReport> {
    config.validate()?;
    ensure_dir(out)?;
    let (seeds, files, summary) = match kind {
        RunKind::Simulate => simulate(config, policy, out)?,
        RunKind::Rounds => exp_rounds(config, policy, out)?,
        RunKind::FreeRiders => exp_free_riders(config, policy, out)?,
        RunKind::Timing => exp_timing(config, out)?,
    };
    let outputs = inventory(out, &files)?;
    let manifest = RunManifest::new(kind.name(), policy, config, seeds, outputs);
    manifest.write(out)?;
    Ok(RunReport { manifest, summary })
}

/// Re-run the command recorded in a manifest and require every
/// reproducible output to match byte for byte.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<RunReport> {
    let recorded = RunManifest::load(manifest_path)?;
    let kind = RunKind::from_name(&recorded.command)
        .ok_or_else(|| HarnessError::Config(format!("unknown command '{}' in manifest", recorded.command)))?;
    let report = execute(kind, &recorded.config, recorded.policy, out)?;
    let mismatched = recorded.mismatches(&report.manifest);
    if !mismatched.is_empty() {
        return Err(HarnessError::Audit(format!("outputs differ from the manifest: {}", mismatched.join(", "))));
    }
    let checked = recorded.outputs.iter().filter(|o| o.reproducible).count();
    let summary = format!("{}reproduced {checked} output file(s) byte for byte\n", report.summary);
    Ok(RunReport { summary, ..report })
}

type Produced = (Vec<SeedRecord>, Vec<(&'static str, bool)>, String);

fn simulate(config: &ScenarioConfig, policy: Option<PolicyKind>, out: &Path) -> Result<Produced> {
    let sc = &config.simulate;
    let policy = policy.unwrap_or(sc.policy);
    let seed = derive_seed(config.master_seed, "simulate");
    let mut rng = rng(derive_seed(seed, "thresholds"));
    let thresholds = sample_thresholds(&config.thresholds, sc.providers, &mut rng)?;
    let fed = build_federation("F", &thresholds, config, sc.delta_threshold)?;
    let key = RowKey { experiment: "simulate", cell: policy.name(), replication: 0 };
    let run = run_years(fed, config, sc.target, policy, sc.years, true, &key, seed)?;

    let traces: Vec<_> = run.ledgers.iter().flat_map(|l| l.trace()).collect();
    write_csv_or_header(
        &out.join("simulate-traces.csv"),
        &traces,
        &["year", "round", "provider", "d_t", "eps_t", "cumulative_aggregate"],
    )?;
    write_json(&out.join("simulate-ledgers.json"), &run.ledgers)?;
    write_json(&out.join("simulate-registry.json"), &run.registry)?;
    write_csv_or_header(&out.join("simulate-settlements.csv"), &run.settlements, &SETTLEMENT_HEADER)?;

    let mut summary = format!("simulate: {} providers, target {}, policy {policy}\n", sc.providers, sc.target);
    for (ledger, settled) in run.ledgers.iter().zip(&run.settlements) {
        let _ = writeln!(
            summary,
            "  year {}: {} rounds, aggregate {:.3} vs promised {:.3}, payout {:.4}",
            ledger.year,
            ledger.rounds_used,
            ledger.aggregate(),
            settled.promised,
            settled.payout
        );
    }
    let _ = writeln!(summary, "  excluded members: {}", run.registry.excluded_count());
    let files = vec![
        ("simulate-traces.csv", true),
        ("simulate-ledgers.json", true),
        ("simulate-registry.json", true),
        ("simulate-settlements.csv", true),
    ];
    Ok((vec![SeedRecord { cell: "simulate".into(), replication: 0, seed }], files, summary))
}

fn exp_rounds(config: &ScenarioConfig, policy: Option<PolicyKind>, out: &Path) -> Result<Produced> {
    let result = rounds::run(config, &policies(policy))?;
    write_csv_or_header(&out.join("rounds.csv"), &result.rows, &rounds::HEADER)?;
    write_csv_or_header(&out.join("rounds-settlements.csv"), &result.settlements, &SETTLEMENT_HEADER)?;
    let mut summary = format!(
        "rounds to target (success = met within {} rounds; a miss counts as {} rounds)\n",
        config.rounds.success_rounds,
        config.max_rounds + 1
    );
    for c in rounds::summarize(&result.rows, config) {
        let _ = writeln!(
            summary,
            "  n={:<4} target={:<6} {:<15} success={:.2} mean_rounds={:.3}",
            c.n, c.target, c.policy, c.success_rate, c.mean_rounds
        );
    }
    Ok((result.seeds, vec![("rounds.csv", true), ("rounds-settlements.csv", true)], summary))
}

fn exp_free_riders(config: &ScenarioConfig, policy: Option<PolicyKind>, out: &Path) -> Result<Produced> {
    let result = free_riders::run(config, &policies(policy))?;
    write_csv_or_header(&out.join("freeriders.csv"), &result.rows, &free_riders::HEADER)?;
    write_csv_or_header(&out.join("freeriders-settlements.csv"), &result.settlements, &SETTLEMENT_HEADER)?;
    let mut summary = String::from("excluded free riders (mean over replications)\n");
    for c in free_riders::summarize(&result.rows) {
        let _ = writeln!(summary, "  n={:<4} delta={:<4} {:<15} mean={:.2}", c.n, c.delta_f, c.policy, c.mean_count);
    }
    Ok((result.seeds, vec![("freeriders.csv", true), ("freeriders-settlements.csv", true)], summary))
}

fn exp_timing(config: &ScenarioConfig, out: &Path) -> Result<Produced> {
    let (rows, seeds) = timing::run(config)?;
    write_csv(&out.join("timing.csv"), &rows)?;
    let mut summary = String::from("Shapley evaluation time (median seconds)\n");
    for s in timing::speedups(&rows) {
        let _ = writeln!(
            summary,
            "  n={:<3} exact={:.6} pruned={:.6} speedup={:.1}x identical={}",
            s.n, s.exact, s.pruned, s.speedup, s.identical
        );
    }
    Ok((seeds, vec![("timing.csv", false)], summary))
}

/// A threshold game as stored on disk.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub mode: AggregationMode,
    #[serde(default = "default_alphabet")]
    pub alphabet_size: u32,
    pub target: f64,
    pub prize: f64,
    pub players: Vec<Player>,
}

fn default_alphabet() -> u32 {
    2
}

impl GameFile {
    pub fn into_game(self) -> Result<ThresholdGame> {
        let spec = AlphabetSpec::new(self.alphabet_size).map_err(|e| HarnessError::Config(e.to_string()))?;
        ThresholdGame::new(self.players, self.mode, self.target, self.prize, spec)
            .map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// Evaluate the game stored at `path`.
pub fn shapley_from_file(path: &Path, method: Method, samples: Option<u64>, seed: u64) -> Result<ShapleyResult> {
    let game = read_json::<GameFile>(path)?.into_game()?;
    Ok(match method {
        Method::Exact => shapley_exact(&game)?,
        Method::Pruned => shapley_pruned(&game)?,
        Method::Sampled => {
            let seed = derive_seed(seed, "shapley");
            shapley_sampled(&game, samples.unwrap_or(DEFAULT_SAMPLES), &mut rng(seed))?
        }
    })
}
