//! Multi-round, multi-year data collection.
//!
//! Within a year, providers report in rounds until the federation's
//! aggregate meets the sealed target. Across years, each provider's privacy
//! saving (how far below its threshold it contributed) drives both the
//! catalyzing parameter that speeds up the next year's collection and the
//! free-rider penalty.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Federation, FederationId, Provider, ProviderId};
use crate::privacy::{AggregationMode, AlphabetSpec, InfoStat, PrivacyParam, ReportBatch};
use crate::valuation::ExponentialValuation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub provider: ProviderId,
    pub year: u32,
    pub round: u32,
    pub points: u64,
    pub epsilon: PrivacyParam,
}

/// One provider's activity in one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderYear {
    pub provider: ProviderId,
    pub reports: Vec<RoundReport>,
    /// Points reported over the year.
    pub points: u64,
    /// Sum of the per-round parameters.
    pub contributed: f64,
}

impl ProviderYear {
    fn new(provider: ProviderId) -> Self {
        Self { provider, reports: Vec::new(), points: 0, contributed: 0.0 }
    }

    fn record(&mut self, report: RoundReport) {
        self.points += report.points;
        self.contributed += report.epsilon.value();
        self.reports.push(report);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearLedger {
    pub year: u32,
    pub federation: FederationId,
    pub target: f64,
    pub providers: Vec<ProviderYear>,
    /// Rounds run before stopping.
    pub rounds_used: u32,
    /// Federation aggregate after each round.
    pub round_aggregates: Vec<f64>,
    pub reached: bool,
}

impl YearLedger {
    pub fn aggregate(&self) -> f64 {
        self.round_aggregates.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    pub fn provider(&self, id: &ProviderId) -> Option<&ProviderYear> {
        self.providers.iter().find(|p| &p.provider == id)
    }

    /// Every report of the year as a batch, in round order.
    pub fn batches(&self) -> Vec<ReportBatch> {
        let mut reports: Vec<&RoundReport> = self.providers.iter().flat_map(|p| &p.reports).collect();
        reports.sort_by_key(|r| r.round);
        reports.iter().map(|r| ReportBatch { points: r.points, epsilon: r.epsilon }).collect()
    }

    /// Per-report trace rows ordered by round, then member order.
    pub fn trace(&self) -> Vec<TraceRow> {
        let mut rows: Vec<TraceRow> = self
            .providers
            .iter()
            .flat_map(|p| &p.reports)
            .map(|r| TraceRow {
                year: r.year,
                round: r.round,
                provider: r.provider.clone(),
                points: r.points,
                epsilon: r.epsilon.value(),
                cumulative_aggregate: self.round_aggregates[r.round as usize - 1],
            })
            .collect();
        rows.sort_by_key(|r| r.round);
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub year: u32,
    pub round: u32,
    pub provider: ProviderId,
    #[serde(rename = "d_t")]
    pub points: u64,
    #[serde(rename = "eps_t")]
    pub epsilon: f64,
    pub cumulative_aggregate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsAccount {
    pub provider: ProviderId,
    /// Years covered by the tolerance window.
    pub window: Vec<u32>,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Catalyzing,
    NonCatalyzing,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 2] = [PolicyKind::Catalyzing, PolicyKind::NonCatalyzing];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Catalyzing => "catalyzing",
            PolicyKind::NonCatalyzing => "non-catalyzing",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown policy '{s}'")))
    }
}

/// How simulated providers report within a year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderBehavior {
    /// Fresh parameters are drawn uniformly from
    /// `(low·ε^T, high·ε^T]` as fractions of the provider's threshold.
    pub initial_fraction_low: f64,
    pub initial_fraction_high: f64,
    /// Chance that a provider with points left reports in a given round.
    pub participation: f64,
    /// Points reported per round, capped by what is left of the year.
    pub points_per_round: u64,
}

impl Default for ProviderBehavior {
    fn default() -> Self {
        Self { initial_fraction_low: 0.0, initial_fraction_high: 0.5, participation: 1.0, points_per_round: 4 }
    }
}

impl ProviderBehavior {
    pub fn validate(&self) -> Result<()> {
        let (low, high) = (self.initial_fraction_low, self.initial_fraction_high);
        if !(0.0 <= low && low < high && high <= 1.0) {
            return Err(Error::Domain(format!("initial fractions need 0 <= low < high <= 1, got ({low}, {high})")));
        }
        if !(0.0..=1.0).contains(&self.participation) {
            return Err(Error::Domain(format!("participation must lie in [0, 1], got {}", self.participation)));
        }
        if self.points_per_round == 0 {
            return Err(Error::Domain("points_per_round must be at least 1".into()));
        }
        Ok(())
    }

    fn draw_epsilon<R: Rng + ?Sized>(&self, threshold: PrivacyParam, rng: &mut R) -> PrivacyParam {
        let u = 1.0 - rng.random::<f64>();
        let fraction = self.initial_fraction_low + (self.initial_fraction_high - self.initial_fraction_low) * u;
        PrivacyParam::new(threshold.value() * fraction).expect("fraction in (0, 1] keeps the draw positive")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectionPolicy {
    pub kind: PolicyKind,
    pub behavior: ProviderBehavior,
}

/// Fixed parameters of one collection year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YearSetup {
    pub year: u32,
    pub target: f64,
    pub max_rounds: u32,
    pub mode: AggregationMode,
    pub spec: AlphabetSpec,
}

/// Sum of a provider's per-round parameters over one year.
pub fn contributed_privacy_level(reports: &[RoundReport]) -> f64 {
    reports.iter().map(|r| r.epsilon.value()).sum()
}

/// `Σ_m d(m)·(ε^T − ε(m))` over the given ledgers. Years in which the
/// provider took no part contribute nothing.
pub fn privacy_saving(ledgers: &[YearLedger], provider: &Provider) -> f64 {
    let threshold = provider.threshold.value();
    ledgers
        .iter()
        .filter_map(|l| l.provider(&provider.id))
        .map(|y| y.points as f64 * (threshold - y.contributed))
        .sum()
}

/// Savings of every member of `fed` over the given window of ledgers.
pub fn savings_accounts(ledgers: &[YearLedger], fed: &Federation) -> Vec<SavingsAccount> {
    let window: Vec<u32> = ledgers.iter().map(|l| l.year).collect();
    fed.members
        .iter()
        .map(|p| SavingsAccount { provider: p.id.clone(), window: window.clone(), delta: privacy_saving(ledgers, p) })
        .collect()
}

/// `max(1, Δ/(d·ε^T))`.
pub fn catalyzing_parameter(delta: f64, points: u64, threshold: PrivacyParam) -> Result<f64> {
    if points == 0 {
        return Err(Error::Domain("catalyzing parameter needs at least one data point".into()));
    }
    Ok((delta / (points as f64 * threshold.value())).max(1.0))
}

/// `min(N·prev, ε^T)`.
pub fn next_round_epsilon(prev: PrivacyParam, catalyst: f64, threshold: PrivacyParam) -> Result<PrivacyParam> {
    if catalyst.is_nan() || catalyst <= 0.0 {
        return Err(Error::Domain(format!("catalyzing parameter must be positive, got {catalyst}")));
    }
    PrivacyParam::new((catalyst * prev.value()).min(threshold.value()))
}

/// Catalyzing parameters of every member, computed from its savings over
/// the last `tolerance_window` ledgers of `history` and the points it
/// reported in the most recent of them. A member that reported nothing in
/// that year gets 1.
pub fn catalysts(fed: &Federation, history: &[YearLedger]) -> Result<BTreeMap<ProviderId, f64>> {
    let window = &history[history.len().saturating_sub(fed.tolerance_window)..];
    fed.members
        .iter()
        .map(|p| {
            let last_points = window.last().and_then(|l| l.provider(&p.id)).map_or(0, |y| y.points);
            let n = if last_points == 0 {
                1.0
            } else {
                catalyzing_parameter(privacy_saving(window, p), last_points, p.threshold)?
            };
            Ok((p.id.clone(), n))
        })
        .collect()
}

/// Run one year of round-based collection.
///
/// Each round every member, in member order, draws whether it participates
/// and a fresh parameter, whatever the policy, so runs that differ only in
/// policy see the same random numbers. A participant reports
/// `min(points_per_round, points left)` points. Under the catalyzing policy
/// a provider's parameter after its first report follows
/// [`next_round_epsilon`] with its entry in `catalysts` (1 when absent);
/// otherwise every round uses the fresh draw. Collection stops at the first
/// round whose aggregate meets the target, or after `max_rounds`.
pub fn run_collection_year<R: Rng + ?Sized>(
    fed: &Federation,
    setup: &YearSetup,
    policy: &CollectionPolicy,
    catalysts: &BTreeMap<ProviderId, f64>,
    rng: &mut R,
) -> Result<YearLedger> {
    if setup.target.is_nan() || setup.target <= 0.0 {
        return Err(Error::Precondition(format!("collection target must be positive, got {}", setup.target)));
    }
    if setup.max_rounds == 0 {
        return Err(Error::Precondition("max_rounds must be at least 1".into()));
    }
    policy.behavior.validate()?;

    let members: &[Provider] = if fed.active { &fed.members } else { &[] };
    let mut years: Vec<ProviderYear> = members.iter().map(|p| ProviderYear::new(p.id.clone())).collect();
    let mut remaining: Vec<u64> = members.iter().map(|p| p.points).collect();
    let mut previous: Vec<Option<PrivacyParam>> = vec![None; members.len()];
    let mut total = InfoStat::ZERO;
    let mut round_aggregates = Vec::new();
    let mut reached = false;

    for round in 1..=setup.max_rounds {
        for (i, provider) in members.iter().enumerate() {
            let joins = rng.random::<f64>() < policy.behavior.participation;
            let fresh = policy.behavior.draw_epsilon(provider.threshold, rng);
            if !joins || remaining[i] == 0 {
                continue;
            }
            let epsilon = match (policy.kind, previous[i]) {
                (PolicyKind::Catalyzing, Some(prev)) => {
                    let n = catalysts.get(&provider.id).copied().unwrap_or(1.0);
                    next_round_epsilon(prev, n, provider.threshold)?
                }
                _ => fresh,
            };
            let points = policy.behavior.points_per_round.min(remaining[i]);
            remaining[i] -= points;
            previous[i] = Some(epsilon);
            let report = RoundReport { provider: provider.id.clone(), year: setup.year, round, points, epsilon };
            total += InfoStat::of_batch(&ReportBatch { points, epsilon }, setup.mode, setup.spec);
            years[i].record(report);
        }
        let level = total.level(setup.mode, setup.spec);
        round_aggregates.push(level);
        if level >= setup.target {
            reached = true;
            break;
        }
    }

    Ok(YearLedger {
        year: setup.year,
        federation: fed.id.clone(),
        target: setup.target,
        providers: years,
        rounds_used: round_aggregates.len() as u32,
        round_aggregates,
        reached,
    })
}

/// Providers whose saving meets or exceeds `delta_threshold`.
pub fn detect_free_riders(savings: &[SavingsAccount], delta_threshold: f64) -> Result<BTreeSet<ProviderId>> {
    if delta_threshold.is_nan() || delta_threshold <= 0.0 {
        return Err(Error::Domain(format!("free-rider threshold must be positive, got {delta_threshold}")));
    }
    Ok(savings.iter().filter(|s| s.delta >= delta_threshold).map(|s| s.provider.clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PenaltyState {
    pub provider: ProviderId,
    pub demerits: u32,
    pub excluded: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PenaltyRegistry {
    pub states: BTreeMap<ProviderId, PenaltyState>,
}

impl PenaltyRegistry {
    pub fn state(&self, id: &ProviderId) -> Option<&PenaltyState> {
        self.states.get(id)
    }

    pub fn is_excluded(&self, id: &ProviderId) -> bool {
        self.states.get(id).is_some_and(|s| s.excluded)
    }

    pub fn excluded_count(&self) -> usize {
        self.states.values().filter(|s| s.excluded).count()
    }

    fn demerit(&mut self, id: &ProviderId) {
        let state = self
            .states
            .entry(id.clone())
            .or_insert_with(|| PenaltyState { provider: id.clone(), demerits: 0, excluded: false });
        state.demerits += 1;
        state.excluded = true;
    }
}

/// Remove flagged members, record a demerit and exclusion for each, and
/// hand the representative role to the remaining member with the largest
/// information limit (lowest id on ties) if the representative was removed.
/// A federation left without members is marked inactive.
pub fn apply_penalty(
    fed: &Federation,
    flagged: &BTreeSet<ProviderId>,
    registry: &PenaltyRegistry,
) -> Result<(Federation, PenaltyRegistry)> {
    if let Some(stray) = flagged.iter().find(|id| fed.member(id).is_none()) {
        return Err(Error::Precondition(format!("{stray} is not a member of {}", fed.id)));
    }
    let mut registry = registry.clone();
    for id in flagged {
        registry.demerit(id);
    }
    let mut next = fed.clone();
    next.members.retain(|p| !flagged.contains(&p.id));
    if next.members.is_empty() {
        next.active = false;
    } else if flagged.contains(&next.representative) {
        let best = next
            .members
            .iter()
            .max_by(|a, b| a.information_limit().total_cmp(&b.information_limit()).then_with(|| b.id.cmp(&a.id)))
            .expect("non-empty");
        next.representative = best.id.clone();
    }
    Ok((next, registry))
}

/// Add a provider to a federation unless the registry excludes it.
pub fn admit(fed: &Federation, provider: Provider, registry: &PenaltyRegistry) -> Result<Federation> {
    if registry.is_excluded(&provider.id) {
        return Err(Error::Precondition(format!("{} is excluded and cannot rejoin", provider.id)));
    }
    if fed.member(&provider.id).is_some() {
        return Err(Error::Precondition(format!("{} is already a member of {}", provider.id, fed.id)));
    }
    let mut next = fed.clone();
    if next.members.is_empty() {
        next.representative = provider.id.clone();
    }
    next.members.push(provider);
    next.active = true;
    Ok(next)
}

/// Both sides of the penalty condition for one provider.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PenaltyCondition {
    /// Money the provider's own threshold is worth on its own.
    pub lhs: f64,
    /// The provider's share of the federation's scaled revenue.
    pub rhs: f64,
    /// Federation revenue fed into the share function.
    pub money: f64,
    pub holds: bool,
}

/// Check whether the penalty scheme can be imposed on a provider: its share
/// of the scaled federation revenue must exceed what its threshold alone
/// is worth.
///
/// With `K = others/K1 + 1`, the left side is `ln(ε^T/K1 + 1)/K2` and the
/// right side is `share(ε^T, ln(w*·ε^T/K1 + K)/K2)`.
pub fn check_penalty_condition(
    threshold: f64,
    valuation: &ExponentialValuation,
    w_star: f64,
    others_info: f64,
    share: impl Fn(f64, f64) -> f64,
) -> Result<PenaltyCondition> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::Domain(format!("threshold must be positive, got {threshold}")));
    }
    if !(0.0..=1.0).contains(&w_star) {
        return Err(Error::Domain(format!("scaling factor must lie in [0, 1], got {w_star}")));
    }
    if !(others_info > 0.0 && others_info.is_finite()) {
        return Err(Error::Domain(format!("other members' information must be positive, got {others_info}")));
    }
    let (k1, k2) = (valuation.k1, valuation.k2);
    let k = others_info / k1 + 1.0;
    let lhs = (threshold / k1).ln_1p() / k2;
    let money = (w_star * threshold / k1 + k).ln() / k2;
    let rhs = share(threshold, money);
    Ok(PenaltyCondition { lhs, rhs, money, holds: lhs < rhs })
}
