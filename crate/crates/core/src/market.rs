//! Bidding, budget scaling and deal settlement between one consumer and a
//! set of federations.
//!
//! Each federation's representative bids its maximum information threshold.
//! The consumer scales every threshold by a common factor `w*`, the largest
//! value in `[0, 1]` whose total price fits the budget, and the scaled levels
//! become the promised levels of the sealed deal. A federation that misses
//! its promised level is paid nothing.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::privacy::{aggregate, information_limit, AggregationMode, AlphabetSpec, PrivacyParam, ReportBatch};
use crate::valuation::{ExponentialValuation, PrivacyValuation};

/// Absolute tolerance on `w*`.
pub const SCALING_TOLERANCE: f64 = 1e-9;
/// Iteration cap of the `w*` bisection.
pub const SCALING_MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProviderId(pub String);

impl fmt::Display for ProviderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ProviderId {
    fn from(s: &str) -> Self {
        ProviderId(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FederationId(pub String);

impl fmt::Display for FederationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for FederationId {
    fn from(s: &str) -> Self {
        FederationId(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provider {
    pub id: ProviderId,
    /// Data points available per year.
    pub points: u64,
    /// Maximum privacy parameter the provider accepts.
    pub threshold: PrivacyParam,
}

impl Provider {
    pub fn new(id: impl Into<String>, points: u64, threshold: f64) -> Result<Self> {
        if points == 0 {
            return Err(Error::Domain("a provider must hold at least one data point".into()));
        }
        Ok(Self { id: ProviderId(id.into()), points, threshold: PrivacyParam::new(threshold)? })
    }

    pub fn information_limit(&self) -> f64 {
        information_limit(self.points, self.threshold)
    }

    pub fn capacity_batch(&self) -> ReportBatch {
        ReportBatch { points: self.points, epsilon: self.threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Federation {
    pub id: FederationId,
    pub members: Vec<Provider>,
    pub representative: ProviderId,
    /// Free-rider threshold on privacy savings.
    pub delta_threshold: f64,
    /// Number of past years over which savings are accumulated.
    pub tolerance_window: usize,
    /// Cleared once every member has been excluded.
    pub active: bool,
}

impl Federation {
    pub fn new(
        id: impl Into<String>,
        members: Vec<Provider>,
        representative: impl Into<ProviderId>,
        delta_threshold: f64,
        tolerance_window: usize,
    ) -> Result<Self> {
        let representative = representative.into();
        if members.is_empty() {
            return Err(Error::Domain("a federation needs at least one member".into()));
        }
        if !members.iter().any(|p| p.id == representative) {
            return Err(Error::Domain(format!("representative {representative} is not a member")));
        }
        if !(delta_threshold > 0.0 && delta_threshold.is_finite()) {
            return Err(Error::Domain(format!("free-rider threshold must be positive, got {delta_threshold}")));
        }
        if tolerance_window == 0 {
            return Err(Error::Domain("tolerance window must cover at least one year".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = members.iter().find(|p| !seen.insert(&p.id)) {
            return Err(Error::Domain(format!("duplicate member {}", dup.id)));
        }
        Ok(Self { id: FederationId(id.into()), members, representative, delta_threshold, tolerance_window, active: true })
    }

    pub fn member(&self, id: &ProviderId) -> Option<&Provider> {
        self.members.iter().find(|p| &p.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsumerOffer {
    pub budget: f64,
    pub valuation: ExponentialValuation,
}

impl ConsumerOffer {
    pub fn new(budget: f64, valuation: ExponentialValuation) -> Result<Self> {
        if !(budget > 0.0 && budget.is_finite()) {
            return Err(Error::Domain(format!("budget must be positive, got {budget}")));
        }
        Ok(Self { budget, valuation })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub federation: FederationId,
    /// Maximum information threshold of the federation.
    pub threshold: f64,
    pub asking_price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DealTerm {
    pub federation: FederationId,
    pub threshold: f64,
    pub promised: f64,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SealedDeal {
    pub budget: f64,
    pub w_star: f64,
    pub terms: Vec<DealTerm>,
}

impl SealedDeal {
    pub fn term(&self, federation: &FederationId) -> Option<&DealTerm> {
        self.terms.iter().find(|t| &t.federation == federation)
    }

    pub fn total_price(&self) -> f64 {
        self.terms.iter().map(|t| t.price).sum()
    }
}

/// Maximum information threshold of a federation: its members' capacity
/// batches `(d_p, ε^T_p)` aggregated under `mode`.
pub fn federation_threshold(fed: &Federation, mode: AggregationMode, spec: AlphabetSpec) -> Result<f64> {
    if fed.members.is_empty() {
        return Err(Error::UndefinedInput(format!("federation {} has no members", fed.id)));
    }
    let batches: Vec<ReportBatch> = fed.members.iter().map(Provider::capacity_batch).collect();
    aggregate(&batches, mode, spec)
}

/// The representative asks for the largest payment `M` with `M ≤ B` and
/// `f(M) ≤ ε^T_F`.
pub fn make_bid(fed: &Federation, offer: &ConsumerOffer, mode: AggregationMode, spec: AlphabetSpec) -> Result<Bid> {
    let threshold = federation_threshold(fed, mode, spec)?;
    let asking_price = offer.budget.min(offer.valuation.invert(threshold.max(0.0))?);
    Ok(Bid { federation: fed.id.clone(), threshold, asking_price })
}

fn total_price(bids: &[Bid], valuation: &ExponentialValuation, w: f64) -> f64 {
    bids.iter()
        .map(|b| valuation.invert((w * b.threshold).max(0.0)).unwrap_or(f64::INFINITY))
        .sum()
}

/// Largest common scaling `w ∈ [0, 1]` whose total price
/// `Σ f⁻¹(w·ε^T_F)` stays within the budget.
///
/// The total price is increasing in `w` and zero at `w = 0`, so bisection
/// keeps a feasible lower end and an infeasible upper end until they are
/// within [`SCALING_TOLERANCE`]; the feasible end is returned.
pub fn compute_scaling(bids: &[Bid], offer: &ConsumerOffer) -> f64 {
    let price = |w| total_price(bids, &offer.valuation, w);
    if price(1.0) <= offer.budget {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..SCALING_MAX_ITERATIONS {
        // stop at half the tolerance so that lo + tolerance is past hi
        if hi - lo <= 0.5 * SCALING_TOLERANCE {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if price(mid) <= offer.budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Promised level `w*·ε^T_F` and price `f⁻¹(w*·ε^T_F)` per federation.
pub fn seal_deal(bids: &[Bid], offer: &ConsumerOffer, w_star: f64) -> Result<SealedDeal> {
    if !(0.0..=1.0).contains(&w_star) {
        return Err(Error::Domain(format!("scaling factor must lie in [0, 1], got {w_star}")));
    }
    let terms = bids
        .iter()
        .map(|b| {
            let promised = w_star * b.threshold;
            let price = offer.valuation.invert(promised.max(0.0))?;
            Ok(DealTerm { federation: b.federation.clone(), threshold: b.threshold, promised, price })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SealedDeal { budget: offer.budget, w_star, terms })
}

/// Fixed-price, all-or-nothing payment: the full price if the achieved level
/// is at least the promised one, otherwise nothing.
pub fn settle(deal: &SealedDeal, federation: &FederationId, achieved: f64) -> Result<f64> {
    let term = deal
        .term(federation)
        .ok_or_else(|| Error::Domain(format!("federation {federation} is not part of the deal")))?;
    Ok(if achieved >= term.promised { term.price } else { 0.0 })
}

/// [`settle`] with the achieved level measured from collected batches.
pub fn settle_batches(
    deal: &SealedDeal,
    federation: &FederationId,
    collected: &[ReportBatch],
    mode: AggregationMode,
    spec: AlphabetSpec,
) -> Result<f64> {
    let achieved = match aggregate(collected, mode, spec) {
        Ok(level) => level,
        Err(Error::UndefinedInput(_)) => f64::NEG_INFINITY,
        Err(e) => return Err(e),
    };
    settle(deal, federation, achieved)
}
