use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedtrade::collection::PolicyKind;
use fedtrade::privacy::AggregationMode;
use fedtrade::shapley::Method;
use fedtrade_harness::audit::audit_dir;
use fedtrade_harness::commands::{execute, replay, shapley_from_file, RunKind};
use fedtrade_harness::config::ScenarioConfig;
use fedtrade_harness::{HarnessError, Result};

#[derive(Parser)]
#[command(name = "fedtrade", version)]
#[command(about = "Simulate privacy-priced federated data trading and reproduce its experiments")]
struct Cli {
    /// Scenario configuration (TOML); defaults reproduce the reference setup
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed, overriding the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Aggregation mode, overriding the configuration
    #[arg(long, global = true)]
    mode: Option<AggregationMode>,

    /// Run only this collection policy
    #[arg(long, global = true)]
    policy: Option<PolicyKind>,

    /// Replications per experiment cell, overriding the configuration
    #[arg(long, global = true)]
    replications: Option<u32>,

    /// Re-run from a manifest and check the outputs reproduce
    #[arg(long, global = true, conflicts_with_all = ["config", "seed", "mode", "policy", "replications"])]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trade over several years with one federation and write traces and ledgers
    Simulate,
    /// Compute Shapley shares for a game stored as JSON
    Shapley {
        /// Game file
        #[arg(long)]
        game: PathBuf,
        #[arg(long, default_value = "pruned")]
        method: Method,
        /// Orderings for the sampled method
        #[arg(long)]
        samples: Option<u64>,
    },
    /// Rounds needed to reach the target, per policy
    ExpRounds,
    /// Free riders excluded under the penalty scheme, per policy
    ExpFreeriders,
    /// Exact versus pruned Shapley timing
    ExpTiming,
    /// Check every settlement CSV in the output directory
    Audit,
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut config = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(mode) = cli.mode {
        config.mode = mode;
    }
    if let Some(r) = cli.replications {
        config.rounds.replications = r;
        config.free_riders.replications = r;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let kind = match &cli.command {
        Command::Simulate => Some(RunKind::Simulate),
        Command::ExpRounds => Some(RunKind::Rounds),
        Command::ExpFreeriders => Some(RunKind::FreeRiders),
        Command::ExpTiming => Some(RunKind::Timing),
        Command::Shapley { .. } | Command::Audit => None,
    };
    if let Some(kind) = kind {
        let report = match &cli.manifest {
            Some(path) => {
                let report = replay(path, &cli.out)?;
                if report.manifest.command != kind.name() {
                    return Err(HarnessError::Config(format!(
                        "manifest records '{}', not '{}'",
                        report.manifest.command,
                        kind.name()
                    )));
                }
                report
            }
            None => execute(kind, &load_config(&cli)?, cli.policy, &cli.out)?,
        };
        print!("{}", report.summary);
        println!("wrote {} file(s) and a manifest to {}", report.manifest.outputs.len(), cli.out.display());
        return Ok(());
    }

    match &cli.command {
        Command::Shapley { game, method, samples } => {
            let config = load_config(&cli)?;
            let result = shapley_from_file(game, *method, *samples, config.master_seed)?;
            println!("{}", serde_json::to_string_pretty(&result).expect("result serializes"));
        }
        Command::Audit => {
            let report = audit_dir(&cli.out)?;
            println!(
                "audited {} deal(s) in {} row(s) across {} file(s); {} unmet target(s)",
                report.deals,
                report.rows,
                report.files.len(),
                report.unmet
            );
            for v in &report.violations {
                println!("  violation: {v}");
            }
            if !report.passed() {
                return Err(HarnessError::Audit(format!("{} violation(s)", report.violations.len())));
            }
            println!("audit passed");
        }
        _ => unreachable!("run commands handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
