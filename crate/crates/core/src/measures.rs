//! Measure changes `Q^eta` through discrete Doléans exponentials, state-price
//! densities `Z^nu`, and the penalty functionals attached to measure changes.

use std::sync::Arc;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numeric::SampleStats;
use crate::paths::{CoefficientPaths, CoefficientSpec, PathBundle, PathGenerator, TimeGrid};
use crate::strategies::worst_case_generator;

/// Deterministic per-step density generator `(eta1_k, eta2_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorPaths {
    pub eta1: Vec<f64>,
    pub eta2: Vec<f64>,
}

impl GeneratorPaths {
    pub fn zero(n_steps: usize) -> Self {
        GeneratorPaths {
            eta1: vec![0.0; n_steps],
            eta2: vec![0.0; n_steps],
        }
    }

    pub fn constant(n_steps: usize, eta1: f64, eta2: f64) -> Self {
        GeneratorPaths {
            eta1: vec![eta1; n_steps],
            eta2: vec![eta2; n_steps],
        }
    }

    pub fn n_steps(&self) -> usize {
        self.eta1.len()
    }

    pub fn scaled(&self, c: f64) -> Self {
        GeneratorPaths {
            eta1: self.eta1.iter().map(|e| c * e).collect(),
            eta2: self.eta2.iter().map(|e| c * e).collect(),
        }
    }

    pub(crate) fn validate(&self, n_steps: usize) -> Result<()> {
        for v in [&self.eta1, &self.eta2] {
            if v.len() != n_steps {
                return Err(Error::GridMismatch {
                    expected: n_steps,
                    found: v.len(),
                });
            }
            if let Some(k) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite { what: "eta", index: k });
            }
        }
        Ok(())
    }

    /// `sum_{from <= k < to} (delta_k / 2) |eta_k|^2 dt`.
    pub fn quadratic_cost(&self, delta: &[f64], dt: f64, from: usize, to: usize) -> f64 {
        (from..to)
            .map(|k| 0.5 * delta[k] * (self.eta1[k] * self.eta1[k] + self.eta2[k] * self.eta2[k]) * dt)
            .sum()
    }

    /// A generator that simulates under this measure: a path generator with
    /// the same grid and coefficients whose increments carry the drift.
    pub fn path_generator(&self, grid: TimeGrid, coeffs: Arc<CoefficientPaths>, s0: f64, seed: u64) -> Result<PathGenerator> {
        PathGenerator::new(grid, coeffs, s0, seed)?.with_drift(self.eta1.clone(), self.eta2.clone())
    }
}

/// Serializable description of a density generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Zero {},
    Constant { eta1: f64, eta2: f64 },
    Paths { eta1: CoefficientSpec, eta2: CoefficientSpec },
    /// `scale` times the worst-case generator of the market coefficients.
    WorstCase { scale: f64 },
}

impl GeneratorSpec {
    pub fn realize(&self, grid: &TimeGrid, coeffs: &CoefficientPaths) -> Result<GeneratorPaths> {
        let n = grid.n_steps;
        let g = match self {
            GeneratorSpec::Zero {} => GeneratorPaths::zero(n),
            GeneratorSpec::Constant { eta1, eta2 } => GeneratorPaths::constant(n, *eta1, *eta2),
            GeneratorSpec::Paths { eta1, eta2 } => GeneratorPaths {
                eta1: eta1.realize(grid)?,
                eta2: eta2.realize(grid)?,
            },
            GeneratorSpec::WorstCase { scale } => {
                coeffs.check_len(n)?;
                worst_case_generator(coeffs).scaled(*scale)
            }
        };
        g.validate(n)?;
        Ok(g)
    }
}

/// Doléans exponential of a generator along one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureChange {
    pub eta1: Vec<f64>,
    pub eta2: Vec<f64>,
    /// `n_steps + 1` density values, `d[0] = 1`.
    pub d: Vec<f64>,
}

impl MeasureChange {
    pub fn n_steps(&self) -> usize {
        self.eta1.len()
    }

    pub fn generator(&self) -> GeneratorPaths {
        GeneratorPaths {
            eta1: self.eta1.clone(),
            eta2: self.eta2.clone(),
        }
    }
}

/// Exponential-form discrete stochastic exponential
/// `exp(sum a1 dW1 + a2 dW2 - (a1^2 + a2^2) dt / 2)`, one entry per grid point.
pub(crate) fn stochastic_exponential(a1: &[f64], a2: &[f64], bundle: &PathBundle) -> Vec<f64> {
    let dt = bundle.grid.dt();
    let mut out = Vec::with_capacity(a1.len() + 1);
    let mut log = 0.0;
    out.push(1.0);
    for k in 0..a1.len() {
        log += a1[k] * bundle.dw1[k] + a2[k] * bundle.dw2[k] - 0.5 * (a1[k] * a1[k] + a2[k] * a2[k]) * dt;
        out.push(log.exp());
    }
    out
}

/// Log of the stochastic exponential between steps `from` and `to`.
pub(crate) fn log_stochastic_exponential(a1: &[f64], a2: &[f64], bundle: &PathBundle, from: usize, to: usize) -> f64 {
    let dt = bundle.grid.dt();
    (from..to)
        .map(|k| a1[k] * bundle.dw1[k] + a2[k] * bundle.dw2[k] - 0.5 * (a1[k] * a1[k] + a2[k] * a2[k]) * dt)
        .sum()
}

pub fn doleans(generator: &GeneratorPaths, bundle: &PathBundle) -> Result<MeasureChange> {
    generator.validate(bundle.n_steps())?;
    let d = stochastic_exponential(&generator.eta1, &generator.eta2, bundle);
    Ok(MeasureChange {
        eta1: generator.eta1.clone(),
        eta2: generator.eta2.clone(),
        d,
    })
}

/// Re-expresses a scenario with `Q^eta`-Brownian increments
/// `dW^eta = dW - eta dt`. The asset path is unchanged.
pub fn girsanov_shift(bundle: &PathBundle, mc: &MeasureChange) -> Result<PathBundle> {
    if mc.n_steps() != bundle.n_steps() {
        return Err(Error::GridMismatch {
            expected: bundle.n_steps(),
            found: mc.n_steps(),
        });
    }
    let dt = bundle.grid.dt();
    let mut out = bundle.clone();
    for k in 0..bundle.n_steps() {
        out.dw1[k] -= mc.eta1[k] * dt;
        out.dw2[k] -= mc.eta2[k] * dt;
    }
    Ok(out)
}

/// State-price density `Z^nu = E(-int lambda_hat dW1 - int nu dW2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDensity {
    pub nu: Vec<f64>,
    pub z: Vec<f64>,
}

pub fn state_density(nu: &[f64], bundle: &PathBundle) -> Result<StateDensity> {
    let n = bundle.n_steps();
    if nu.len() != n {
        return Err(Error::GridMismatch {
            expected: n,
            found: nu.len(),
        });
    }
    if let Some(k) = nu.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { what: "nu", index: k });
    }
    let minus_lambda: Vec<f64> = bundle.coeffs.lambda_hat.iter().map(|l| -l).collect();
    let minus_nu: Vec<f64> = nu.iter().map(|v| -v).collect();
    Ok(StateDensity {
        nu: nu.to_vec(),
        z: stochastic_exponential(&minus_lambda, &minus_nu, bundle),
    })
}

/// One entry of the degenerate penalty table: the single admitted generator
/// on `[t, horizon]` is the constant `(lambda, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegenerateEntry {
    pub t: f64,
    pub horizon: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PenaltySpec {
    /// `E^Q[int (delta_u / 2) |eta_u|^2 du]`.
    Quadratic { delta: CoefficientSpec },
    /// `delta * H(Q | P)`.
    Entropic { delta: f64 },
    Degenerate { table: Vec<DegenerateEntry> },
    /// Only the reference measure is admitted, at zero cost.
    ReferenceOnly {},
}

/// A penalty value; infinity is a tag, never an `f64::INFINITY` in arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyValue {
    Finite(f64),
    Infinite,
}

impl PenaltyValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            PenaltyValue::Finite(v) => Some(v),
            PenaltyValue::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, PenaltyValue::Infinite)
    }
}

impl Serialize for PenaltyValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PenaltyValue::Finite(v) => s.serialize_f64(*v),
            PenaltyValue::Infinite => s.serialize_str("+inf"),
        }
    }
}

impl PenaltySpec {
    /// Per-step integrand table used by the quadratic family.
    fn quadratic_delta(&self, grid: &TimeGrid) -> Result<Option<Vec<f64>>> {
        match self {
            PenaltySpec::Quadratic { delta } => {
                let d = delta.realize(grid)?;
                if let Some(k) = d.iter().position(|x| !x.is_finite() || *x < 0.0) {
                    return Err(Error::invalid(format!("penalty delta must be finite and non-negative (step {k})")));
                }
                Ok(Some(d))
            }
            _ => Ok(None),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, PenaltySpec::Degenerate { .. })
    }

    /// Penalty `gamma_{t,T}(Q^eta)` evaluated along one scenario, with `t`,
    /// `T` given as step indices.
    pub fn on_path(&self, mc: &MeasureChange, bundle: &PathBundle, from: usize, to: usize) -> Result<PenaltyValue> {
        let grid = bundle.grid;
        if mc.n_steps() != grid.n_steps {
            return Err(Error::GridMismatch {
                expected: grid.n_steps,
                found: mc.n_steps(),
            });
        }
        if from > to || to > grid.n_steps {
            return Err(Error::invalid(format!("need t <= T on the grid, got steps {from}..{to}")));
        }
        let dt = grid.dt();
        match self {
            PenaltySpec::Quadratic { .. } => {
                let delta = self.quadratic_delta(&grid)?.expect("quadratic");
                Ok(PenaltyValue::Finite(mc.generator().quadratic_cost(&delta, dt, from, to)))
            }
            PenaltySpec::Entropic { delta } => {
                if !(delta.is_finite() && *delta >= 0.0) {
                    return Err(Error::invalid("entropic delta must be non-negative"));
                }
                let log_ratio = log_stochastic_exponential(&mc.eta1, &mc.eta2, bundle, from, to);
                Ok(PenaltyValue::Finite(delta * log_ratio))
            }
            PenaltySpec::Degenerate { table } => {
                let (t, horizon) = (grid.time(from), grid.time(to));
                let entry = table
                    .iter()
                    .find(|e| grid.index_of(e.t).ok() == Some(from) && grid.index_of(e.horizon).ok() == Some(to))
                    .ok_or_else(|| Error::invalid(format!("no degenerate table entry for ({t}, {horizon})")))?;
                let admitted = (from..to).all(|k| mc.eta1[k] == entry.lambda && mc.eta2[k] == 0.0);
                if admitted {
                    Ok(PenaltyValue::Finite(degenerate_penalty(t, horizon, entry.lambda)))
                } else {
                    Ok(PenaltyValue::Infinite)
                }
            }
            PenaltySpec::ReferenceOnly {} => {
                if (from..to).all(|k| mc.eta1[k] == 0.0 && mc.eta2[k] == 0.0) {
                    Ok(PenaltyValue::Finite(0.0))
                } else {
                    Ok(PenaltyValue::Infinite)
                }
            }
        }
    }
}

/// `-(T - t) lambda^2 / 2`.
pub fn degenerate_penalty(t: f64, horizon: f64, lambda: f64) -> f64 {
    -0.5 * (horizon - t) * lambda * lambda
}

/// Residual of the cocycle identity `gamma_{s,T} - gamma_{s,t} - gamma_{t,T}`
/// along one scenario. Infinite whenever exactly the two sides disagree on
/// finiteness.
pub fn cocycle_residual(
    spec: &PenaltySpec,
    mc: &MeasureChange,
    bundle: &PathBundle,
    s: usize,
    t: usize,
    horizon: usize,
) -> Result<PenaltyValue> {
    if !(s <= t && t <= horizon) {
        return Err(Error::invalid("cocycle check needs s <= t <= T"));
    }
    let whole = spec.on_path(mc, bundle, s, horizon)?;
    let first = spec.on_path(mc, bundle, s, t)?;
    let second = spec.on_path(mc, bundle, t, horizon)?;
    Ok(match (whole, first, second) {
        (PenaltyValue::Finite(a), PenaltyValue::Finite(b), PenaltyValue::Finite(c)) => PenaltyValue::Finite(a - b - c),
        (PenaltyValue::Infinite, PenaltyValue::Infinite, _) | (PenaltyValue::Infinite, _, PenaltyValue::Infinite) => {
            PenaltyValue::Finite(0.0)
        }
        _ => PenaltyValue::Infinite,
    })
}

/// Monte Carlo estimate of `gamma_{t,T}(Q^eta)` under `Q^eta`.
#[derive(Debug, Clone, Serialize)]
pub struct PenaltyReport {
    pub spec: PenaltySpec,
    pub t: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub estimate: PenaltyValue,
    pub stderr: f64,
    pub n_paths: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn penalty_report(
    spec: &PenaltySpec,
    generator: &GeneratorPaths,
    coeffs: Arc<CoefficientPaths>,
    grid: TimeGrid,
    t: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PenaltyReport> {
    if n_paths == 0 {
        return Err(Error::invalid("n_paths must be at least 1"));
    }
    let (from, to) = (grid.index_of(t)?, grid.index_of(horizon)?);
    let gen = generator.path_generator(grid, coeffs, 1.0, seed)?;
    let values: Vec<Result<PenaltyValue>> = gen.map_paths(n_paths, |b| {
        let mc = doleans(generator, b)?;
        spec.on_path(&mc, b, from, to)
    });
    let mut finite = Vec::with_capacity(n_paths);
    for v in values {
        match v? {
            PenaltyValue::Finite(x) => finite.push(x),
            PenaltyValue::Infinite => {
                return Ok(PenaltyReport {
                    spec: spec.clone(),
                    t,
                    horizon,
                    estimate: PenaltyValue::Infinite,
                    stderr: 0.0,
                    n_paths,
                })
            }
        }
    }
    let st = SampleStats::from_slice(&finite);
    Ok(PenaltyReport {
        spec: spec.clone(),
        t,
        horizon,
        estimate: PenaltyValue::Finite(st.mean),
        stderr: st.stderr,
        n_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::MarketCoefficients;

    fn setup(n_steps: usize) -> (TimeGrid, Arc<CoefficientPaths>) {
        let grid = TimeGrid::new(1.0, n_steps).unwrap();
        let c = MarketCoefficients::constant(0.2, 0.3, 1.0).realize(&grid).unwrap();
        (grid, Arc::new(c))
    }

    #[test]
    fn zero_generator_gives_unit_density() {
        let (grid, c) = setup(16);
        let gen = PathGenerator::new(grid, c, 1.0, 1).unwrap();
        let b = gen.bundle(0);
        let mc = doleans(&GeneratorPaths::zero(16), &b).unwrap();
        assert!(mc.d.iter().all(|d| *d == 1.0));
        let shifted = girsanov_shift(&b, &mc).unwrap();
        assert_eq!(shifted, b);
    }

    #[test]
    fn saddle_generator_density_matches_closed_form() {
        let (grid, c) = setup(252);
        let eta = worst_case_generator(&c);
        let gen = PathGenerator::new(grid, c, 1.0, 9).unwrap();
        for id in 0..5 {
            let b = gen.bundle(id);
            let mc = doleans(&eta, &b).unwrap();
            let w = b.w1_increment(0, 252);
            let closed = (-0.15 * w - 0.5 * 0.15 * 0.15).exp();
            assert!((mc.d[252] - closed).abs() < 1e-12 * closed);
            assert!(mc.d.iter().all(|d| *d > 0.0));
        }
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let (grid, c) = setup(8);
        let b = PathGenerator::new(grid, c, 1.0, 1).unwrap().bundle(0);
        assert!(doleans(&GeneratorPaths::zero(7), &b).is_err());
        let mc = MeasureChange {
            eta1: vec![0.0; 4],
            eta2: vec![0.0; 4],
            d: vec![1.0; 5],
        };
        assert!(matches!(girsanov_shift(&b, &mc), Err(Error::GridMismatch { .. })));
        let bad = GeneratorPaths::constant(8, f64::INFINITY, 0.0);
        assert!(matches!(doleans(&bad, &b), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn quadratic_penalty_examples() {
        let (grid, c) = setup(252);
        let b = PathGenerator::new(grid, c.clone(), 1.0, 1).unwrap().bundle(0);
        let spec = PenaltySpec::Quadratic { delta: 1.0.into() };
        let zero = doleans(&GeneratorPaths::zero(252), &b).unwrap();
        assert_eq!(spec.on_path(&zero, &b, 0, 252).unwrap(), PenaltyValue::Finite(0.0));
        let half = GeneratorPaths::constant(252, -0.15, 0.0);
        let mc = doleans(&half, &b).unwrap();
        let v = spec.on_path(&mc, &b, 0, 252).unwrap().finite().unwrap();
        assert!((v - 0.01125).abs() < 1e-14, "{v}");
    }

    #[test]
    fn degenerate_penalty_admits_one_generator() {
        let (grid, c) = setup(10);
        let b = PathGenerator::new(grid, c, 1.0, 1).unwrap().bundle(0);
        let spec = PenaltySpec::Degenerate {
            table: vec![DegenerateEntry {
                t: 0.0,
                horizon: 1.0,
                lambda: 0.2,
            }],
        };
        let ok = doleans(&GeneratorPaths::constant(10, 0.2, 0.0), &b).unwrap();
        let v = spec.on_path(&ok, &b, 0, 10).unwrap().finite().unwrap();
        assert!((v + 0.02).abs() < 1e-15);
        let other = doleans(&GeneratorPaths::constant(10, 0.1, 0.0), &b).unwrap();
        assert!(spec.on_path(&other, &b, 0, 10).unwrap().is_infinite());
        let reference = PenaltySpec::ReferenceOnly {};
        assert!(reference.on_path(&other, &b, 0, 10).unwrap().is_infinite());
    }

    #[test]
    fn quadratic_penalty_is_a_cocycle_pathwise() {
        let grid = TimeGrid::new(2.0, 40).unwrap();
        let coeffs = MarketCoefficients {
            sigma: 0.2.into(),
            lambda_hat: 0.3.into(),
            delta: CoefficientSpec::Function(crate::paths::TimeFunction::Linear { start: 0.5, slope: 1.0 }),
        };
        let c = Arc::new(coeffs.realize(&grid).unwrap());
        let spec = PenaltySpec::Quadratic {
            delta: coeffs.delta.clone(),
        };
        let eta = GeneratorPaths {
            eta1: (0..40).map(|k| 0.1 * (k as f64).sin()).collect(),
            eta2: (0..40).map(|k| -0.05 * (k as f64 * 0.3).cos()).collect(),
        };
        let gen = eta.path_generator(grid, c, 1.0, 4).unwrap();
        for id in 0..10 {
            let b = gen.bundle(id);
            let mc = doleans(&eta, &b).unwrap();
            let r = cocycle_residual(&spec, &mc, &b, 5, 17, 40).unwrap().finite().unwrap();
            assert!(r.abs() < 1e-15, "{r}");
        }
    }

    #[test]
    fn degenerate_penalty_breaks_the_cocycle() {
        let (grid, c) = setup(10);
        let b = PathGenerator::new(grid, c, 1.0, 1).unwrap().bundle(0);
        let spec = PenaltySpec::Degenerate {
            table: vec![
                DegenerateEntry { t: 0.0, horizon: 1.0, lambda: 0.2 },
                DegenerateEntry { t: 0.0, horizon: 0.5, lambda: 0.2 },
                DegenerateEntry { t: 0.5, horizon: 1.0, lambda: 0.4 },
            ],
        };
        let mc = doleans(&GeneratorPaths::constant(10, 0.2, 0.0), &b).unwrap();
        let r = cocycle_residual(&spec, &mc, &b, 0, 5, 10).unwrap();
        assert!(r.is_infinite());
        // With a consistent table the same family satisfies the identity.
        let consistent = PenaltySpec::Degenerate {
            table: vec![
                DegenerateEntry { t: 0.0, horizon: 1.0, lambda: 0.2 },
                DegenerateEntry { t: 0.0, horizon: 0.5, lambda: 0.2 },
                DegenerateEntry { t: 0.5, horizon: 1.0, lambda: 0.2 },
            ],
        };
        let r = cocycle_residual(&consistent, &mc, &b, 0, 5, 10).unwrap().finite().unwrap();
        assert!(r.abs() < 1e-15);
    }

    #[test]
    fn penalty_report_serializes_infinity_as_tag() {
        let (grid, c) = setup(4);
        let r = penalty_report(
            &PenaltySpec::ReferenceOnly {},
            &GeneratorPaths::constant(4, 0.1, 0.0),
            c,
            grid,
            0.0,
            1.0,
            3,
            1,
        )
        .unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["estimate"], "+inf");
        assert_eq!(v["T"], 1.0);
    }
}
