use fedtrade::privacy::PrivacyParam;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Rejections allowed per draw before the interval is declared too unlikely.
const MAX_ATTEMPTS: usize = 100_000;

/// Normal distribution truncated to `[low, high]` by rejection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub sd: f64,
    pub low: f64,
    pub high: f64,
}

impl Default for TruncatedNormal {
    fn default() -> Self {
        Self { mean: 5.0, sd: 1.0, low: 1.0, high: 10.0 }
    }
}

impl TruncatedNormal {
    pub fn validate(&self) -> Result<()> {
        let Self { mean, sd, low, high } = *self;
        if ![mean, sd, low, high].iter().all(|v| v.is_finite()) {
            return Err(HarnessError::Config("threshold distribution parameters must be finite".into()));
        }
        if sd.is_nan() || sd <= 0.0 {
            return Err(HarnessError::Config(format!("threshold sd must be positive, got {sd}")));
        }
        if !(low > 0.0 && low < high) {
            return Err(HarnessError::Config(format!("threshold interval needs 0 < low < high, got [{low}, {high}]")));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let normal = Normal::new(self.mean, self.sd).map_err(|e| HarnessError::Config(e.to_string()))?;
        for _ in 0..MAX_ATTEMPTS {
            let x = normal.sample(rng);
            if (self.low..=self.high).contains(&x) {
                return Ok(x);
            }
        }
        Err(HarnessError::Config(format!(
            "no draw from Normal({}, {}) fell in [{}, {}] after {MAX_ATTEMPTS} attempts",
            self.mean, self.sd, self.low, self.high
        )))
    }
}

/// `n` provider thresholds drawn from `spec`.
pub fn sample_thresholds<R: Rng + ?Sized>(spec: &TruncatedNormal, n: usize, rng: &mut R) -> Result<Vec<PrivacyParam>> {
    spec.validate()?;
    (0..n).map(|_| Ok(PrivacyParam::new(spec.sample(rng)?)?)).collect()
}
