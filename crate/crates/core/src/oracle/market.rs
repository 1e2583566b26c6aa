//! Finite tree markets, utilities and their conjugates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Branch returns and reference probabilities of one trading period. Every
/// node of the period shares them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Period {
    pub returns: Vec<f64>,
    pub p: Vec<f64>,
}

/// Recombination-free tree with zero interest rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeMarket {
    pub periods: Vec<Period>,
}

/// Largest supported tree depth.
pub const MAX_PERIODS: usize = 12;

impl TreeMarket {
    /// The same period repeated `n_periods` times.
    pub fn homogeneous(returns: Vec<f64>, p: Vec<f64>, n_periods: usize) -> Result<Self> {
        let m = TreeMarket {
            periods: vec![Period { returns, p }; n_periods],
        };
        m.validate()?;
        Ok(m)
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn branches(&self, k: usize) -> usize {
        self.periods[k].returns.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.periods.is_empty() || self.periods.len() > MAX_PERIODS {
            return Err(Error::invalid(format!(
                "tree needs between 1 and {MAX_PERIODS} periods, got {}",
                self.periods.len()
            )));
        }
        for (k, per) in self.periods.iter().enumerate() {
            let n = per.returns.len();
            if n < 2 {
                return Err(Error::invalid(format!("period {k} needs at least two branches")));
            }
            if per.p.len() != n {
                return Err(Error::invalid(format!(
                    "period {k}: {} probabilities for {n} branches",
                    per.p.len()
                )));
            }
            if per.returns.iter().any(|r| !r.is_finite() || *r <= -1.0) {
                return Err(Error::invalid(format!("period {k}: returns must be finite and > -1")));
            }
            if per.p.iter().any(|p| !(p.is_finite() && *p > 0.0 && *p < 1.0)) {
                return Err(Error::invalid(format!("period {k}: probabilities must lie in (0, 1)")));
            }
            let total: f64 = per.p.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("period {k}: probabilities sum to {total}")));
            }
            let lo = per.returns.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = per.returns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(lo < 0.0 && hi > 0.0) {
                return Err(Error::Arbitrage { period: k });
            }
        }
        Ok(())
    }

    /// Open interval of fractions of wealth keeping every branch solvent.
    pub fn fraction_bounds(&self, k: usize) -> (f64, f64) {
        let r = &self.periods[k].returns;
        let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (-1.0 / hi, -1.0 / lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Utility {
    Log {},
    /// `x^(1-R) / (1-R)`, `R > 0`, `R != 1`.
    Power { r: f64 },
    /// `-exp(-alpha x) / alpha`; defined on the whole line.
    Exp { alpha: f64 },
}

impl Utility {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Utility::Log {} => Ok(()),
            Utility::Power { r } if r.is_finite() && r > 0.0 && r != 1.0 => Ok(()),
            Utility::Exp { alpha } if alpha.is_finite() && alpha > 0.0 => Ok(()),
            other => Err(Error::invalid(format!("invalid utility parameters {other:?}"))),
        }
    }

    /// Whether wealth must stay strictly positive.
    pub fn positive_domain(&self) -> bool {
        !matches!(self, Utility::Exp { .. })
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Utility::Log {} => {
                if x > 0.0 {
                    x.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Utility::Power { r } => {
                if x > 0.0 {
                    x.powf(1.0 - r) / (1.0 - r)
                } else {
                    f64::NEG_INFINITY
                }
            }
            Utility::Exp { alpha } => -(-alpha * x).exp() / alpha,
        }
    }

    /// Convex conjugate `V(y) = sup_x (u(x) - x y)`, `y > 0`.
    pub fn conjugate(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return f64::INFINITY;
        }
        match *self {
            Utility::Log {} => -y.ln() - 1.0,
            Utility::Power { r } => r / (1.0 - r) * y.powf((r - 1.0) / r),
            Utility::Exp { alpha } => y / alpha * (y.ln() - 1.0),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Utility::Log {} => "log".into(),
            Utility::Power { r } => format!("power({r})"),
            Utility::Exp { alpha } => format!("exp({alpha})"),
        }
    }
}

/// Vertices of the one-period martingale-measure set. Two branches give a
/// single measure; three branches give a segment between two vertices.
pub(crate) fn emm_vertices(returns: &[f64], period: usize) -> Result<Vec<Vec<f64>>> {
    let n = returns.len();
    let mut verts = Vec::new();
    for i in 0..n {
        if returns[i] == 0.0 {
            let mut m = vec![0.0; n];
            m[i] = 1.0;
            verts.push(m);
        }
        for j in 0..n {
            if returns[i] > 0.0 && returns[j] < 0.0 {
                let (a, b) = (returns[i], returns[j]);
                let mut m = vec![0.0; n];
                m[i] = -b / (a - b);
                m[j] = a / (a - b);
                verts.push(m);
            }
        }
    }
    match (n, verts.len()) {
        (_, 0) => Err(Error::Arbitrage { period }),
        (2, 1) | (3, 2) => Ok(verts),
        _ => Err(Error::Unsupported(format!(
            "martingale-measure sweep supports two or three branches (period {period} has {n})"
        ))),
    }
}

/// Parametrisation `s -> (1 - s) v0 + s v1` of the martingale segment; a
/// single vertex is returned unchanged.
pub(crate) fn emm_point(verts: &[Vec<f64>], s: f64) -> Vec<f64> {
    if verts.len() == 1 {
        return verts[0].clone();
    }
    verts[0].iter().zip(&verts[1]).map(|(a, b)| (1.0 - s) * a + s * b).collect()
}
