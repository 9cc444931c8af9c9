//! k-ary randomized response and privacy-parameter arithmetic.
//!
//! Every provider obfuscates its data with kRR. Pooling reports produced
//! with different parameters again behaves like a kRR channel whose
//! parameter is given by [`combined_epsilon`]. Two simpler information
//! measures are also used for federation targets and contributions; the
//! three are selected with [`AggregationMode`].

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest representable privacy parameter. `e^700` is still finite in f64;
/// anything above is treated as "no privacy" and saturates here.
pub const MAX_EPSILON: f64 = 700.0;

/// Alphabet of the reported attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct AlphabetSpec {
    k: u32,
}

impl AlphabetSpec {
    pub fn new(k: u32) -> Result<Self> {
        if k < 2 {
            return Err(Error::Domain(format!("alphabet size must be at least 2, got {k}")));
        }
        Ok(Self { k })
    }

    pub fn size(self) -> u32 {
        self.k
    }

    fn other_symbols(self) -> f64 {
        f64::from(self.k - 1)
    }
}

impl TryFrom<u32> for AlphabetSpec {
    type Error = Error;
    fn try_from(k: u32) -> Result<Self> {
        Self::new(k)
    }
}

impl From<AlphabetSpec> for u32 {
    fn from(spec: AlphabetSpec) -> u32 {
        spec.k
    }
}

/// A strictly positive, finite privacy parameter, saturating at [`MAX_EPSILON`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PrivacyParam(f64);

impl PrivacyParam {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::Domain(format!("privacy parameter must be positive, got {epsilon}")));
        }
        if epsilon.is_infinite() {
            return Err(Error::Domain("privacy parameter must be finite".into()));
        }
        Ok(Self(epsilon.min(MAX_EPSILON)))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for PrivacyParam {
    type Error = Error;
    fn try_from(epsilon: f64) -> Result<Self> {
        Self::new(epsilon)
    }
}

impl From<PrivacyParam> for f64 {
    fn from(p: PrivacyParam) -> f64 {
        p.0
    }
}

impl fmt::Display for PrivacyParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `points` data points reported under kRR with `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportBatch {
    pub points: u64,
    pub epsilon: PrivacyParam,
}

impl ReportBatch {
    pub fn new(points: u64, epsilon: f64) -> Result<Self> {
        Ok(Self { points, epsilon: PrivacyParam::new(epsilon)? })
    }
}

/// Which information measure turns a set of batches into a single level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationMode {
    /// Parameter of the pooled kRR channel, see [`combined_epsilon`].
    KrrComposition,
    /// Sum of information limits, `Σ d·ε`.
    AdditiveInformation,
    /// Expected count of truthful reports, `Σ d·e^ε/(k−1+e^ε)`.
    ExampleContribution,
}

impl AggregationMode {
    pub const ALL: [AggregationMode; 3] = [
        AggregationMode::KrrComposition,
        AggregationMode::AdditiveInformation,
        AggregationMode::ExampleContribution,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregationMode::KrrComposition => "krr-composition",
            AggregationMode::AdditiveInformation => "additive-information",
            AggregationMode::ExampleContribution => "example-contribution",
        }
    }
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AggregationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AggregationMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown aggregation mode '{s}'")))
    }
}

/// Additive sufficient statistic of a set of batches under one mode.
///
/// All three measures are functions of componentwise sums, so coalitions can
/// be combined by adding statistics and only finalized when compared.
/// `points` is only used by [`AggregationMode::KrrComposition`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InfoStat {
    pub points: f64,
    pub mass: f64,
}

impl InfoStat {
    pub const ZERO: InfoStat = InfoStat { points: 0.0, mass: 0.0 };

    pub fn of_batch(batch: &ReportBatch, mode: AggregationMode, spec: AlphabetSpec) -> Self {
        let d = batch.points as f64;
        let eps = batch.epsilon.value();
        match mode {
            AggregationMode::KrrComposition => {
                InfoStat { points: d, mass: d / (spec.other_symbols() + eps.exp()) }
            }
            AggregationMode::AdditiveInformation => InfoStat { points: 0.0, mass: d * eps },
            AggregationMode::ExampleContribution => {
                let e = eps.exp();
                InfoStat { points: 0.0, mass: d * e / (spec.other_symbols() + e) }
            }
        }
    }

    pub fn of_batches<'a>(
        batches: impl IntoIterator<Item = &'a ReportBatch>,
        mode: AggregationMode,
        spec: AlphabetSpec,
    ) -> Self {
        batches
            .into_iter()
            .fold(InfoStat::ZERO, |acc, b| acc + InfoStat::of_batch(b, mode, spec))
    }

    /// Finalized level. For kRR composition an empty statistic has no
    /// defined parameter and reports `-inf`, so it never meets a target.
    pub fn level(self, mode: AggregationMode, spec: AlphabetSpec) -> f64 {
        match mode {
            AggregationMode::KrrComposition => {
                if self.points <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    (self.points / self.mass + 1.0 - f64::from(spec.size())).ln()
                }
            }
            AggregationMode::AdditiveInformation | AggregationMode::ExampleContribution => self.mass,
        }
    }
}

impl std::ops::Add for InfoStat {
    type Output = InfoStat;
    fn add(self, rhs: InfoStat) -> InfoStat {
        InfoStat { points: self.points + rhs.points, mass: self.mass + rhs.mass }
    }
}

impl std::ops::AddAssign for InfoStat {
    fn add_assign(&mut self, rhs: InfoStat) {
        *self = *self + rhs;
    }
}

fn check_symbol(x: u32, spec: AlphabetSpec) -> Result<()> {
    if x >= spec.size() {
        return Err(Error::Domain(format!("symbol {x} outside alphabet of size {}", spec.size())));
    }
    Ok(())
}

/// Output distribution of kRR on input `x`.
pub fn krr_distribution(x: u32, spec: AlphabetSpec, eps: PrivacyParam) -> Result<Vec<f64>> {
    check_symbol(x, spec)?;
    let e = eps.value().exp();
    let denom = spec.other_symbols() + e;
    let keep = e / denom;
    let flip = 1.0 / denom;
    Ok((0..spec.size()).map(|y| if y == x { keep } else { flip }).collect())
}

/// Draw one kRR report for `x`.
pub fn krr_obfuscate<R: Rng + ?Sized>(
    x: u32,
    spec: AlphabetSpec,
    eps: PrivacyParam,
    rng: &mut R,
) -> Result<u32> {
    check_symbol(x, spec)?;
    let e = eps.value().exp();
    let keep = e / (spec.other_symbols() + e);
    if rng.random::<f64>() < keep {
        return Ok(x);
    }
    // uniform over the k-1 other symbols
    let y = rng.random_range(0..spec.size() - 1);
    Ok(if y >= x { y + 1 } else { y })
}

/// Parameter of the kRR channel obtained by pooling all batches:
/// `ln(Σd / Σ(d/(k−1+e^ε)) + 1 − k)`.
pub fn combined_epsilon(batches: &[ReportBatch], spec: AlphabetSpec) -> Result<PrivacyParam> {
    let live = || batches.iter().filter(|b| b.points > 0);
    let (lo, hi) = live().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| {
        (lo.min(b.epsilon.value()), hi.max(b.epsilon.value()))
    });
    if !lo.is_finite() {
        return Err(Error::UndefinedInput("kRR composition of zero data points".into()));
    }
    let stat = InfoStat::of_batches(live(), AggregationMode::KrrComposition, spec);
    // mathematically inside [lo, hi]; the clamp only removes rounding spill
    PrivacyParam::new(stat.level(AggregationMode::KrrComposition, spec).clamp(lo, hi))
}

/// `d·ε`, the most information a provider can release.
pub fn information_limit(points: u64, eps: PrivacyParam) -> f64 {
    points as f64 * eps.value()
}

/// Level of a set of batches under `mode`.
pub fn aggregate(batches: &[ReportBatch], mode: AggregationMode, spec: AlphabetSpec) -> Result<f64> {
    match mode {
        AggregationMode::KrrComposition => combined_epsilon(batches, spec).map(PrivacyParam::value),
        _ => Ok(InfoStat::of_batches(batches, mode, spec).level(mode, spec)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eps(v: f64) -> PrivacyParam {
        PrivacyParam::new(v).unwrap()
    }

    fn spec(k: u32) -> AlphabetSpec {
        AlphabetSpec::new(k).unwrap()
    }

    fn batch(d: u64, e: f64) -> ReportBatch {
        ReportBatch::new(d, e).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(AlphabetSpec::new(1).is_err());
        assert!(PrivacyParam::new(0.0).is_err());
        assert!(PrivacyParam::new(-1.0).is_err());
        assert!(PrivacyParam::new(f64::NAN).is_err());
        assert!(PrivacyParam::new(f64::INFINITY).is_err());
        assert_eq!(PrivacyParam::new(1e6).unwrap().value(), MAX_EPSILON);
    }

    #[test]
    fn distribution_examples() {
        let d = krr_distribution(0, spec(2), eps(1e-12)).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-9 && (d[1] - 0.5).abs() < 1e-9);

        let d = krr_distribution(0, spec(2), eps(3f64.ln())).unwrap();
        assert!((d[0] - 0.75).abs() < 1e-12);
        assert!((d[1] - 0.25).abs() < 1e-12);

        let d = krr_distribution(1, spec(4), eps(3f64.ln())).unwrap();
        let want = [1.0 / 6.0, 0.5, 1.0 / 6.0, 1.0 / 6.0];
        for (a, b) in d.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distribution_rejects_out_of_alphabet() {
        assert!(matches!(krr_distribution(4, spec(4), eps(1.0)), Err(Error::Domain(_))));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(krr_obfuscate(2, spec(2), eps(1.0), &mut rng).is_err());
    }

    #[test]
    fn obfuscate_saturated_keeps_symbol() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let kept = (0..10_000)
            .filter(|_| krr_obfuscate(3, spec(8), eps(700.0), &mut rng).unwrap() == 3)
            .count();
        assert!(kept as f64 / 1e4 >= 0.999);
    }

    #[test]
    fn obfuscate_binary_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let kept = (0..draws)
            .filter(|_| krr_obfuscate(0, spec(2), eps(3f64.ln()), &mut rng).unwrap() == 0)
            .count() as f64;
        let sigma = (draws as f64 * 0.75 * 0.25).sqrt();
        assert!((kept - 0.75 * draws as f64).abs() <= 3.0 * sigma);
    }

    #[test]
    fn obfuscate_is_deterministic_per_seed() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..64).map(|i| krr_obfuscate(i % 5, spec(5), eps(0.7), &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    /// Likelihood ratio of the pooled channel: a report equals the input with
    /// probability `Σ d_i p_i / Σ d_i`, and any specific other symbol with
    /// `Σ d_i q_i / Σ d_i`.
    fn pooled_channel_oracle(batches: &[(u64, f64)], k: u32) -> f64 {
        let mut keep = 0.0;
        let mut other = 0.0;
        for &(d, e) in batches {
            let dist = krr_distribution(0, spec(k), eps(e)).unwrap();
            keep += d as f64 * dist[0];
            other += d as f64 * dist[1];
        }
        (keep / other).ln()
    }

    #[test]
    fn combined_epsilon_examples() {
        let single = combined_epsilon(&[batch(7, 2.5)], spec(5)).unwrap();
        assert!((single.value() - 2.5).abs() < 1e-9);

        let equal = combined_epsilon(&[batch(3, 1.2), batch(9, 1.2)], spec(3)).unwrap();
        assert!((equal.value() - 1.2).abs() < 1e-9);

        let mixed = combined_epsilon(&[batch(1, 2f64.ln()), batch(1, 4f64.ln())], spec(2)).unwrap();
        let oracle = pooled_channel_oracle(&[(1, 2f64.ln()), (1, 4f64.ln())], 2);
        assert!((oracle - 2.75f64.ln()).abs() < 1e-12);
        assert!((mixed.value() - oracle).abs() < 1e-12);
        assert!((mixed.value() - 1.0116).abs() < 1e-4);
    }

    #[test]
    fn combined_epsilon_matches_channel_oracle() {
        let cases: &[(&[(u64, f64)], u32)] = &[
            (&[(2, 0.3), (5, 4.0), (1, 9.0)], 3),
            (&[(10, 1.0), (1, 20.0)], 16),
            (&[(4, 0.01), (4, 0.02)], 64),
        ];
        for (raw, k) in cases {
            let batches: Vec<_> = raw.iter().map(|&(d, e)| batch(d, e)).collect();
            let got = combined_epsilon(&batches, spec(*k)).unwrap().value();
            assert!((got - pooled_channel_oracle(raw, *k)).abs() < 1e-9, "{raw:?}");
        }
    }

    #[test]
    fn combined_epsilon_needs_points() {
        assert!(matches!(combined_epsilon(&[], spec(2)), Err(Error::UndefinedInput(_))));
        assert!(matches!(combined_epsilon(&[batch(0, 1.0)], spec(2)), Err(Error::UndefinedInput(_))));
        // zero-point batches do not shift the result
        let v = combined_epsilon(&[batch(0, 9.0), batch(3, 1.0)], spec(2)).unwrap();
        assert!((v.value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn combined_epsilon_finite_at_saturation() {
        let v = combined_epsilon(&[batch(1, 700.0), batch(1000, 700.0)], spec(2)).unwrap();
        assert!((v.value() - 700.0).abs() < 1e-9);
    }

    #[test]
    fn information_limit_is_product() {
        assert_eq!(information_limit(0, eps(5.0)), 0.0);
        assert_eq!(information_limit(10, eps(5.0)), 50.0);
        assert!((information_limit(3, eps(1.4)) - 4.2).abs() < 1e-12);
    }

    #[test]
    fn aggregate_modes() {
        let add = aggregate(&[batch(2, 3.0), batch(1, 4.0)], AggregationMode::AdditiveInformation, spec(2));
        assert_eq!(add.unwrap(), 10.0);

        let ex = aggregate(&[batch(1, 3f64.ln())], AggregationMode::ExampleContribution, spec(2));
        assert!((ex.unwrap() - 0.75).abs() < 1e-12);

        let krr = aggregate(&[batch(4, 2.0)], AggregationMode::KrrComposition, spec(6)).unwrap();
        assert!((krr - 2.0).abs() < 1e-12);

        assert!(aggregate(&[], AggregationMode::KrrComposition, spec(2)).is_err());
        assert_eq!(aggregate(&[], AggregationMode::AdditiveInformation, spec(2)).unwrap(), 0.0);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in AggregationMode::ALL {
            assert_eq!(m.name().parse::<AggregationMode>().unwrap(), m);
        }
        assert!("laplace".parse::<AggregationMode>().is_err());
    }
}
