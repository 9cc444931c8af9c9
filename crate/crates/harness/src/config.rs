//! Scenario configuration read from TOML.
//!
//! Every field has a default, so an empty file (or no file) reproduces the
//! reference setup: 25 to 100 providers with thresholds drawn from a normal
//! distribution with mean 5 and standard deviation 1 truncated to [1, 10],
//! additive information, targets 125 to 500.

use std::path::Path;

use fedtrade::collection::{PolicyKind, ProviderBehavior};
use fedtrade::market::ConsumerOffer;
use fedtrade::privacy::{AggregationMode, AlphabetSpec};
use fedtrade::shapley::MAX_ENUMERATION_PLAYERS;
use fedtrade::valuation::{ExponentialValuation, PrivacyValuation};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};
use crate::sampling::TruncatedNormal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub master_seed: u64,
    pub alphabet_size: u32,
    pub mode: AggregationMode,
    pub thresholds: TruncatedNormal,
    /// Data points each provider holds per year.
    pub points_per_provider: u64,
    pub valuation: ValuationConfig,
    /// Consumer budget. When absent each deal gets exactly the budget that
    /// buys its target, `invert(target)`.
    pub budget: Option<f64>,
    pub max_rounds: u32,
    /// Years of ledgers that savings are computed over.
    pub tolerance_window: usize,
    pub behavior: ProviderBehavior,
    pub simulate: SimulateConfig,
    pub rounds: RoundsConfig,
    pub free_riders: FreeRidersConfig,
    pub timing: TimingConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            master_seed: 20_240_601,
            alphabet_size: 2,
            mode: AggregationMode::AdditiveInformation,
            thresholds: TruncatedNormal::default(),
            points_per_provider: 20,
            valuation: ValuationConfig::default(),
            budget: None,
            max_rounds: 10,
            tolerance_window: 3,
            behavior: ProviderBehavior::default(),
            simulate: SimulateConfig::default(),
            rounds: RoundsConfig::default(),
            free_riders: FreeRidersConfig::default(),
            timing: TimingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValuationConfig {
    pub k1: f64,
    pub k2: f64,
}

impl Default for ValuationConfig {
    fn default() -> Self {
        Self { k1: 1.0, k2: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub providers: usize,
    pub target: f64,
    pub years: u32,
    pub delta_threshold: f64,
    pub policy: PolicyKind,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { providers: 25, target: 125.0, years: 4, delta_threshold: 2.0, policy: PolicyKind::Catalyzing }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundsConfig {
    pub sizes: Vec<usize>,
    pub targets: Vec<f64>,
    /// Years simulated per replication; only the last one is recorded.
    pub years: u32,
    /// A replication succeeds when the target is met within this many rounds.
    pub success_rounds: u32,
    pub replications: u32,
}

impl Default for RoundsConfig {
    fn default() -> Self {
        Self {
            sizes: vec![25, 50, 75, 100],
            targets: vec![125.0, 250.0, 375.0, 500.0],
            years: 4,
            success_rounds: 5,
            replications: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreeRidersConfig {
    pub sizes: Vec<usize>,
    pub delta_thresholds: Vec<f64>,
    /// Yearly target per founding member.
    pub target_per_provider: f64,
    pub years: u32,
    pub replications: u32,
}

impl Default for FreeRidersConfig {
    fn default() -> Self {
        Self {
            sizes: vec![50, 100],
            delta_thresholds: vec![1.0, 2.0, 3.0],
            target_per_provider: 10.0,
            years: 4,
            replications: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub sizes: Vec<usize>,
    /// Target as a fraction of the grand coalition's information.
    pub target_fraction: f64,
    pub prize: f64,
    pub repeats: u32,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self { sizes: vec![15, 18, 21, 24, 27], target_fraction: 0.5, prize: 100.0, repeats: 3 }
    }
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_err(format!("{name} must be positive, got {v}")))
    }
}

fn non_empty<T>(name: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        Err(config_err(format!("{name} must not be empty")))
    } else {
        Ok(())
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(msg) => config_err(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.spec()?;
        self.thresholds.validate()?;
        self.valuation()?;
        self.behavior.validate().map_err(|e| config_err(e.to_string()))?;
        if let Some(b) = self.budget {
            positive("budget", b)?;
        }
        if self.points_per_provider == 0 {
            return Err(config_err("points_per_provider must be at least 1"));
        }
        if self.max_rounds == 0 || self.tolerance_window == 0 {
            return Err(config_err("max_rounds and tolerance_window must be at least 1"));
        }

        let s = &self.simulate;
        if s.providers == 0 || s.years == 0 {
            return Err(config_err("simulate needs at least one provider and one year"));
        }
        positive("simulate.target", s.target)?;
        positive("simulate.delta_threshold", s.delta_threshold)?;

        let r = &self.rounds;
        non_empty("rounds.sizes", &r.sizes)?;
        non_empty("rounds.targets", &r.targets)?;
        r.targets.iter().try_for_each(|&t| positive("rounds.targets", t))?;
        if r.sizes.contains(&0) || r.years == 0 || r.replications == 0 || r.success_rounds == 0 {
            return Err(config_err("rounds sizes, years, success_rounds and replications must be at least 1"));
        }

        let f = &self.free_riders;
        non_empty("free_riders.sizes", &f.sizes)?;
        non_empty("free_riders.delta_thresholds", &f.delta_thresholds)?;
        f.delta_thresholds.iter().try_for_each(|&d| positive("free_riders.delta_thresholds", d))?;
        positive("free_riders.target_per_provider", f.target_per_provider)?;
        if f.sizes.contains(&0) || f.years == 0 || f.replications == 0 {
            return Err(config_err("free_riders sizes, years and replications must be at least 1"));
        }

        let t = &self.timing;
        non_empty("timing.sizes", &t.sizes)?;
        if t.sizes.contains(&0) || t.repeats == 0 {
            return Err(config_err("timing sizes and repeats must be at least 1"));
        }
        if let Some(&n) = t.sizes.iter().find(|&&n| n > MAX_ENUMERATION_PLAYERS) {
            return Err(fedtrade::Error::Capacity { players: n, limit: MAX_ENUMERATION_PLAYERS }.into());
        }
        if !(t.target_fraction > 0.0 && t.target_fraction <= 1.0) {
            return Err(config_err(format!("timing.target_fraction must lie in (0, 1], got {}", t.target_fraction)));
        }
        positive("timing.prize", t.prize)?;
        Ok(())
    }

    pub fn spec(&self) -> Result<AlphabetSpec> {
        AlphabetSpec::new(self.alphabet_size).map_err(|e| config_err(e.to_string()))
    }

    pub fn valuation(&self) -> Result<ExponentialValuation> {
        ExponentialValuation::new(self.valuation.k1, self.valuation.k2).map_err(|e| config_err(e.to_string()))
    }

    /// The consumer's offer for a deal aiming at `target`.
    pub fn offer_for(&self, target: f64) -> Result<ConsumerOffer> {
        let valuation = self.valuation()?;
        let budget = match self.budget {
            Some(b) => b,
            None => valuation.invert(target)?,
        };
        Ok(ConsumerOffer::new(budget, valuation)?)
    }

    /// SHA-256 of the canonical JSON form. Field order in the source file
    /// does not matter because the parsed struct has a fixed layout.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical))
    }
}
