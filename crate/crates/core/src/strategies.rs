//! Investment policies expressed as fractions of current wealth, and the
//! worst-case density generator that pairs with the fractional Kelly rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::GeneratorPaths;
use crate::paths::CoefficientPaths;

/// Fraction of wealth held in the risky asset.
///
/// Every variant is evaluated from the coefficients at the left endpoint of
/// the step, so the policy is adapted by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    /// `delta / (1 + delta) * lambda_hat / sigma`.
    FractionalKelly {},
    ConstantFraction { c: f64 },
    Tabulated { values: Vec<f64> },
    Scaled { base: Box<Strategy>, factor: f64 },
}

impl Strategy {
    pub fn scaled(base: Strategy, factor: f64) -> Self {
        Strategy::Scaled {
            base: Box::new(base),
            factor,
        }
    }

    pub fn fraction(&self, k: usize, coeffs: &CoefficientPaths) -> Result<f64> {
        let pi = match self {
            Strategy::FractionalKelly {} => kelly_fraction(coeffs, k)?,
            Strategy::ConstantFraction { c } => *c,
            Strategy::Tabulated { values } => *values.get(k).ok_or(Error::GridMismatch {
                expected: coeffs.n_steps(),
                found: values.len(),
            })?,
            Strategy::Scaled { base, factor } => factor * base.fraction(k, coeffs)?,
        };
        if !pi.is_finite() {
            return Err(Error::NonFinite {
                what: "strategy fraction",
                index: k,
            });
        }
        Ok(pi)
    }

    pub fn label(&self) -> String {
        match self {
            Strategy::FractionalKelly {} => "fractional_kelly".to_string(),
            Strategy::ConstantFraction { c } => format!("constant({c})"),
            Strategy::Tabulated { .. } => "tabulated".to_string(),
            Strategy::Scaled { base, factor } => format!("{factor}*{}", base.label()),
        }
    }
}

/// Confidence weight `delta / (1 + delta)` applied to the estimated price of risk.
#[inline]
pub fn trust_weight(delta: f64) -> f64 {
    delta / (1.0 + delta)
}

fn kelly_fraction(c: &CoefficientPaths, k: usize) -> Result<f64> {
    if c.sigma[k] == 0.0 {
        return Err(Error::ZeroVolatility { index: k });
    }
    Ok(trust_weight(c.delta[k]) * c.lambda_hat[k] / c.sigma[k])
}

/// Fractional Kelly policy; validates that it is evaluable on every step.
pub fn fractional_kelly(coeffs: &CoefficientPaths) -> Result<Strategy> {
    for k in 0..coeffs.n_steps() {
        kelly_fraction(coeffs, k)?;
    }
    Ok(Strategy::FractionalKelly {})
}

/// Per-step fractional Kelly fractions.
pub fn kelly_fractions(coeffs: &CoefficientPaths) -> Result<Vec<f64>> {
    (0..coeffs.n_steps()).map(|k| kelly_fraction(coeffs, k)).collect()
}

/// Worst-case generator `(-lambda_hat / (1 + delta), 0)`.
pub fn worst_case_generator(coeffs: &CoefficientPaths) -> GeneratorPaths {
    let eta1 = coeffs
        .lambda_hat
        .iter()
        .zip(&coeffs.delta)
        .map(|(l, d)| -l / (1.0 + d))
        .collect();
    GeneratorPaths {
        eta1,
        eta2: vec![0.0; coeffs.n_steps()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{MarketCoefficients, TimeGrid};

    fn coeffs(sigma: f64, lambda: f64, delta: f64) -> CoefficientPaths {
        MarketCoefficients::constant(sigma, lambda, delta)
            .realize(&TimeGrid::new(1.0, 4).unwrap())
            .unwrap()
    }

    #[test]
    fn kelly_fraction_examples() {
        let c = coeffs(0.2, 0.1, 1.0);
        assert!((Strategy::FractionalKelly {}.fraction(0, &c).unwrap() - 0.25).abs() < 1e-15);
        let c = coeffs(0.2, 0.3, 0.0);
        assert_eq!(Strategy::FractionalKelly {}.fraction(2, &c).unwrap(), 0.0);
        let c = coeffs(0.2, 0.3, 1e6);
        assert!((Strategy::FractionalKelly {}.fraction(0, &c).unwrap() - 1.5).abs() < 1e-5);
    }

    #[test]
    fn zero_volatility_is_rejected() {
        let c = CoefficientPaths {
            sigma: vec![0.2, 0.0],
            lambda_hat: vec![0.1, 0.1],
            delta: vec![1.0, 1.0],
        };
        assert!(matches!(fractional_kelly(&c), Err(Error::ZeroVolatility { index: 1 })));
    }

    #[test]
    fn worst_case_generator_examples() {
        let g = worst_case_generator(&coeffs(0.2, 0.3, 1.0));
        assert!(g.eta1.iter().all(|e| (*e + 0.15).abs() < 1e-15));
        assert!(g.eta2.iter().all(|e| *e == 0.0));
        let c = coeffs(0.2, 0.3, 0.0);
        let g = worst_case_generator(&c);
        assert!(g.eta1.iter().zip(&c.lambda_hat).all(|(e, l)| e + l == 0.0));
    }

    #[test]
    fn strategies_round_trip_through_json() {
        let s = Strategy::scaled(Strategy::FractionalKelly {}, 0.5);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(text, r#"{"type":"scaled","base":{"type":"fractional_kelly"},"factor":0.5}"#);
        let back: Strategy = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<Strategy>(r#"{"type":"fractional_kelly","x":1}"#).is_err());
    }

    #[test]
    fn tabulated_and_scaled_fractions() {
        let c = coeffs(0.2, 0.1, 1.0);
        let t = Strategy::Tabulated {
            values: vec![0.1, 0.2, 0.3, 0.4],
        };
        assert_eq!(t.fraction(3, &c).unwrap(), 0.4);
        let s = Strategy::scaled(t, 2.0);
        assert_eq!(s.fraction(1, &c).unwrap(), 0.4);
        let short = Strategy::Tabulated { values: vec![0.1] };
        assert!(short.fraction(2, &c).is_err());
    }
}
