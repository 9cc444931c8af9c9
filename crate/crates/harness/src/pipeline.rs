//! One federation trading with one consumer, year after year: compute the
//! threshold, bid, seal the deal, collect in rounds, settle, and optionally
//! penalize free riders.

use fedtrade::collection::{
    apply_penalty, catalysts, detect_free_riders, run_collection_year, savings_accounts, CollectionPolicy,
    PenaltyRegistry, PolicyKind, YearLedger, YearSetup,
};
use fedtrade::market::{compute_scaling, make_bid, seal_deal, settle, Federation, Provider, SealedDeal};
use fedtrade::privacy::PrivacyParam;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::seeds::{derive_seed, rng};

/// One settled deal, as written to the settlement CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementRow {
    pub experiment: String,
    pub cell: String,
    pub replication: u32,
    pub year: u32,
    pub federation: String,
    pub budget: f64,
    pub w_star: f64,
    pub threshold: f64,
    pub promised: f64,
    pub price: f64,
    pub achieved_level: f64,
    pub reached: bool,
    pub payout: f64,
}

/// Where a settlement row belongs.
#[derive(Debug, Clone)]
pub struct RowKey<'a> {
    pub experiment: &'a str,
    pub cell: &'a str,
    pub replication: u32,
}

pub struct TradeYear {
    pub deal: SealedDeal,
    pub ledger: YearLedger,
    pub payout: f64,
}

impl TradeYear {
    pub fn settlement(&self, key: &RowKey<'_>) -> SettlementRow {
        let term = &self.deal.terms[0];
        SettlementRow {
            experiment: key.experiment.to_owned(),
            cell: key.cell.to_owned(),
            replication: key.replication,
            year: self.ledger.year,
            federation: term.federation.to_string(),
            budget: self.deal.budget,
            w_star: self.deal.w_star,
            threshold: term.threshold,
            promised: term.promised,
            price: term.price,
            achieved_level: self.ledger.aggregate(),
            reached: self.ledger.reached,
            payout: self.payout,
        }
    }
}

/// Federation `id` whose members hold `config.points_per_provider` points
/// each and the given thresholds. The first member represents it.
pub fn build_federation(
    id: &str,
    thresholds: &[PrivacyParam],
    config: &ScenarioConfig,
    delta_threshold: f64,
) -> Result<Federation> {
    let width = thresholds.len().to_string().len();
    let members = thresholds
        .iter()
        .enumerate()
        .map(|(i, t)| Provider::new(format!("p{:0width$}", i + 1), config.points_per_provider, t.value()))
        .collect::<fedtrade::Result<Vec<_>>>()?;
    let representative = members[0].id.clone();
    Ok(Federation::new(id, members, representative, delta_threshold, config.tolerance_window)?)
}

/// Seal a deal for `target` with the federation as the only bidder, run one
/// collection year toward the promised level and settle it.
pub fn trade_year<R: Rng + ?Sized>(
    fed: &Federation,
    config: &ScenarioConfig,
    target: f64,
    policy: PolicyKind,
    history: &[YearLedger],
    year: u32,
    rng: &mut R,
) -> Result<TradeYear> {
    let spec = config.spec()?;
    let offer = config.offer_for(target)?;
    let bids = [make_bid(fed, &offer, config.mode, spec)?];
    let w_star = compute_scaling(&bids, &offer);
    let deal = seal_deal(&bids, &offer, w_star)?;
    let promised = deal.terms[0].promised;

    let catalysts = match policy {
        PolicyKind::Catalyzing => catalysts(fed, history)?,
        PolicyKind::NonCatalyzing => Default::default(),
    };
    let setup = YearSetup { year, target: promised, max_rounds: config.max_rounds, mode: config.mode, spec };
    let policy = CollectionPolicy { kind: policy, behavior: config.behavior };
    let ledger = run_collection_year(fed, &setup, &policy, &catalysts, rng)?;
    let payout = settle(&deal, &fed.id, ledger.aggregate())?;
    Ok(TradeYear { deal, ledger, payout })
}

/// Outcome of trading over several years.
#[derive(Debug, Clone, Serialize)]
pub struct MultiYear {
    pub federation: Federation,
    pub ledgers: Vec<YearLedger>,
    pub registry: PenaltyRegistry,
    pub settlements: Vec<SettlementRow>,
}

/// Trade for `years` years. With `penalize` set, members whose savings
/// over the tolerance window reach the federation's free-rider threshold
/// are excluded at the end of each year. Trading stops early once the
/// federation has no members left.
///
/// Each year draws from its own stream split off `seed`, so two runs that
/// differ only in policy see the same random numbers every year even when
/// their years end after different numbers of rounds.
#[allow(clippy::too_many_arguments)]
pub fn run_years(
    mut fed: Federation,
    config: &ScenarioConfig,
    target: f64,
    policy: PolicyKind,
    years: u32,
    penalize: bool,
    key: &RowKey<'_>,
    seed: u64,
) -> Result<MultiYear> {
    let mut ledgers: Vec<YearLedger> = Vec::new();
    let mut registry = PenaltyRegistry::default();
    let mut settlements = Vec::new();
    for year in 0..years {
        if !fed.active {
            break;
        }
        let mut rng = rng(derive_seed(seed, &format!("year={year}")));
        let traded = trade_year(&fed, config, target, policy, &ledgers, year, &mut rng)?;
        settlements.push(traded.settlement(key));
        ledgers.push(traded.ledger);
        if penalize {
            let window = &ledgers[ledgers.len().saturating_sub(fed.tolerance_window)..];
            let flagged = detect_free_riders(&savings_accounts(window, &fed), fed.delta_threshold)?;
            (fed, registry) = apply_penalty(&fed, &flagged, &registry)?;
        }
    }
    Ok(MultiYear { federation: fed, ledgers, registry, settlements })
}
