//! Privacy valuation functions: how much privacy loss a payment buys.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A strictly increasing, continuous map from money to privacy parameter
/// with `evaluate(0) == 0`, together with its inverse.
pub trait PrivacyValuation {
    fn evaluate(&self, money: f64) -> Result<f64>;
    fn invert(&self, epsilon: f64) -> Result<f64>;
}

/// `f(M) = K1·(e^{K2·M} − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialValuation {
    pub k1: f64,
    pub k2: f64,
}

impl ExponentialValuation {
    pub fn new(k1: f64, k2: f64) -> Result<Self> {
        if !(k1.is_finite() && k1 > 0.0 && k2.is_finite() && k2 > 0.0) {
            return Err(Error::Domain(format!("valuation needs K1 > 0 and K2 > 0, got ({k1}, {k2})")));
        }
        Ok(Self { k1, k2 })
    }
}

impl PrivacyValuation for ExponentialValuation {
    fn evaluate(&self, money: f64) -> Result<f64> {
        if money.is_nan() || money < 0.0 {
            return Err(Error::Domain(format!("payment must be non-negative, got {money}")));
        }
        Ok(self.k1 * (self.k2 * money).exp_m1())
    }

    fn invert(&self, epsilon: f64) -> Result<f64> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(Error::Domain(format!("privacy level must be non-negative, got {epsilon}")));
        }
        Ok((epsilon / self.k1).ln_1p() / self.k2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ValidationIssue {
    GridTooShort,
    GridNotIncreasing { index: usize },
    NonZeroAtZero { value: f64 },
    NotIncreasing { from: f64, to: f64 },
    NotFinite { money: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Check a candidate valuation on a sorted money grid: zero payment must buy
/// zero privacy loss and values must strictly increase along the grid.
pub fn validate(evaluate: impl Fn(f64) -> f64, grid: &[f64]) -> ValidationReport {
    let mut issues = Vec::new();
    if grid.len() < 2 {
        issues.push(ValidationIssue::GridTooShort);
    }
    if let Some(index) = grid.windows(2).position(|w| w[0] >= w[1]) {
        issues.push(ValidationIssue::GridNotIncreasing { index: index + 1 });
    }
    let at_zero = evaluate(0.0);
    if at_zero != 0.0 {
        issues.push(ValidationIssue::NonZeroAtZero { value: at_zero });
    }
    let values: Vec<f64> = grid.iter().map(|&m| evaluate(m)).collect();
    for (&m, v) in grid.iter().zip(&values) {
        if !v.is_finite() {
            issues.push(ValidationIssue::NotFinite { money: m });
        }
    }
    for (g, v) in grid.windows(2).zip(values.windows(2)) {
        if g[0] < g[1] && v[0] >= v[1] {
            issues.push(ValidationIssue::NotIncreasing { from: g[0], to: g[1] });
        }
    }
    ValidationReport { issues }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn val(k1: f64, k2: f64) -> ExponentialValuation {
        ExponentialValuation::new(k1, k2).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(val(3.0, 0.2).evaluate(0.0).unwrap(), 0.0);
        assert!((val(1.0, 1.0).evaluate(2f64.ln()).unwrap() - 1.0).abs() < 1e-12);
        let v = val(0.5, 1.5).evaluate(2.0).unwrap();
        assert!((v - 0.5 * (3f64.exp() - 1.0)).abs() < 1e-12);
        assert!((v - 9.5428).abs() < 1e-4);
        assert!((val(0.5, 1.5).invert(v).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invert_examples() {
        assert_eq!(val(2.0, 3.0).invert(0.0).unwrap(), 0.0);
        assert!((val(1.0, 1.0).invert(1.0).unwrap() - 2f64.ln()).abs() < 1e-12);
        let v = val(2.0, 0.01);
        assert!((v.invert(v.evaluate(13.7).unwrap()).unwrap() - 13.7).abs() < 1e-9);
    }

    #[test]
    fn domain_errors() {
        assert!(val(1.0, 1.0).evaluate(-1.0).is_err());
        assert!(val(1.0, 1.0).invert(-0.5).is_err());
        assert!(ExponentialValuation::new(0.0, 1.0).is_err());
        assert!(ExponentialValuation::new(1.0, -1.0).is_err());
    }

    #[test]
    fn super_linear_growth() {
        let v = val(0.7, 0.3);
        for m in [0.1, 1.0, 5.0, 20.0] {
            assert!(v.evaluate(2.0 * m).unwrap() > 2.0 * v.evaluate(m).unwrap());
        }
    }

    #[test]
    fn validation() {
        let grid: Vec<f64> = (0..50).map(|i| i as f64 * 0.5).collect();
        let v = val(1.5, 0.2);
        assert!(validate(|m| v.evaluate(m).unwrap(), &grid).passed());

        let constant = validate(|_| 0.0, &grid);
        assert!(!constant.passed());
        assert!(matches!(constant.issues[0], ValidationIssue::NotIncreasing { .. }));

        let offset = validate(|m| 0.1 + m, &grid);
        assert_eq!(offset.issues, vec![ValidationIssue::NonZeroAtZero { value: 0.1 }]);

        assert!(!validate(|m| m, &[1.0]).passed());
        assert!(!validate(|m| m, &[2.0, 1.0]).passed());
    }
}
