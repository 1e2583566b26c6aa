//! Reproducible simulation of the reference market.
//!
//! The asset follows `dS/S = sigma * lambda_hat dt + sigma dW1` under the
//! reference measure, with a second independent Brownian factor `W2` that
//! only enters through measure changes and state-price densities. Both the
//! asset and any wealth process are advanced with the exact log-scheme on a
//! uniform grid, with coefficients frozen at the left endpoint of each step.
//!
//! Every path draws its normals from its own ChaCha8 stream, keyed by
//! `(seed, path_id)`, so an ensemble is a pure function of its inputs no
//! matter how many worker threads produce it.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strategies::Strategy;

/// Uniform time grid `t_k = k * T / n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub horizon: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        let grid = TimeGrid { horizon, n_steps };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid(format!(
                "horizon must be positive and finite, got {}",
                self.horizon
            )));
        }
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps must be positive"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Grid time of index `k`; the last index maps to the horizon exactly.
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }

    /// Index of a grid time, accepting round-off of a few ulps.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let x = t / self.dt();
        let k = x.round();
        if k < 0.0 || k > self.n_steps as f64 || (x - k).abs() > 1e-9 {
            return Err(Error::OffGrid(t));
        }
        Ok(k as usize)
    }
}

/// Deterministic functions of time usable as coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeFunction {
    Linear { start: f64, slope: f64 },
    Periodic { level: f64, amplitude: f64, period: f64 },
}

impl TimeFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeFunction::Linear { start, slope } => start + slope * t,
            TimeFunction::Periodic {
                level,
                amplitude,
                period,
            } => level + amplitude * (2.0 * std::f64::consts::PI * t / period).sin(),
        }
    }
}

/// A coefficient given as a constant, a function of time, or a table with
/// one value per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    Constant(f64),
    Tabulated(Vec<f64>),
    Function(TimeFunction),
}

impl CoefficientSpec {
    /// Left-endpoint samples on the grid, one per step.
    pub fn realize(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        match self {
            CoefficientSpec::Constant(c) => Ok(vec![*c; grid.n_steps]),
            CoefficientSpec::Function(f) => {
                Ok((0..grid.n_steps).map(|k| f.eval(grid.time(k))).collect())
            }
            CoefficientSpec::Tabulated(v) => {
                if v.len() != grid.n_steps {
                    return Err(Error::GridMismatch {
                        expected: grid.n_steps,
                        found: v.len(),
                    });
                }
                Ok(v.clone())
            }
        }
    }
}

impl From<f64> for CoefficientSpec {
    fn from(c: f64) -> Self {
        CoefficientSpec::Constant(c)
    }
}

/// Volatility, estimated market price of risk and confidence level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketCoefficients {
    pub sigma: CoefficientSpec,
    pub lambda_hat: CoefficientSpec,
    pub delta: CoefficientSpec,
}

impl MarketCoefficients {
    pub fn constant(sigma: f64, lambda_hat: f64, delta: f64) -> Self {
        MarketCoefficients {
            sigma: sigma.into(),
            lambda_hat: lambda_hat.into(),
            delta: delta.into(),
        }
    }

    pub fn realize(&self, grid: &TimeGrid) -> Result<CoefficientPaths> {
        grid.validate()?;
        CoefficientPaths::new(
            self.sigma.realize(grid)?,
            self.lambda_hat.realize(grid)?,
            self.delta.realize(grid)?,
        )
    }
}

/// Per-step coefficient values on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientPaths {
    pub sigma: Vec<f64>,
    pub lambda_hat: Vec<f64>,
    pub delta: Vec<f64>,
}

impl CoefficientPaths {
    pub fn new(sigma: Vec<f64>, lambda_hat: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        let n = sigma.len();
        for (name, v) in [("lambda_hat", &lambda_hat), ("delta", &delta)] {
            if v.len() != n {
                return Err(Error::invalid(format!(
                    "{name} has {} steps but sigma has {n}",
                    v.len()
                )));
            }
        }
        for k in 0..n {
            if !sigma[k].is_finite() {
                return Err(Error::NonFinite {
                    what: "sigma",
                    index: k,
                });
            }
            if sigma[k] == 0.0 {
                return Err(Error::ZeroVolatility { index: k });
            }
            if !lambda_hat[k].is_finite() {
                return Err(Error::NonFinite {
                    what: "lambda_hat",
                    index: k,
                });
            }
            if !delta[k].is_finite() {
                return Err(Error::NonFinite {
                    what: "delta",
                    index: k,
                });
            }
            if delta[k] < 0.0 {
                return Err(Error::invalid(format!(
                    "delta must be non-negative, got {} at step {k}",
                    delta[k]
                )));
            }
        }
        Ok(CoefficientPaths {
            sigma,
            lambda_hat,
            delta,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.sigma.len()
    }

    pub(crate) fn check_len(&self, n_steps: usize) -> Result<()> {
        if self.n_steps() != n_steps {
            return Err(Error::GridMismatch {
                expected: n_steps,
                found: self.n_steps(),
            });
        }
        Ok(())
    }
}

/// One simulated scenario on the grid.
///
/// `dw1[k]`, `dw2[k]` are the reference-measure Brownian increments over
/// `[t_k, t_{k+1}]`; `s` has `n_steps + 1` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub dw1: Vec<f64>,
    pub dw2: Vec<f64>,
    pub s: Vec<f64>,
    pub coeffs: Arc<CoefficientPaths>,
    pub path_id: u64,
    pub seed: u64,
}

impl PathBundle {
    pub fn n_steps(&self) -> usize {
        self.grid.n_steps
    }

    /// Sum of `dW1` increments over `[t_from, t_to)` in step indices.
    pub fn w1_increment(&self, from: usize, to: usize) -> f64 {
        self.dw1[from..to].iter().sum()
    }
}

/// Per-step wealth values of a self-financing strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WealthPath {
    pub x: Vec<f64>,
    pub strategy_id: String,
}

/// Log-return over one step of a position whose volatility loading is
/// `loading = fraction * sigma`.
#[inline]
pub(crate) fn log_step(loading: f64, lambda_hat: f64, dt: f64, dw: f64) -> f64 {
    (loading * lambda_hat - 0.5 * loading * loading) * dt + loading * dw
}

/// Fills `z1`, `z2` with the standard normals of path `path_id`.
///
/// With `antithetic`, paths `2j` and `2j + 1` share stream `j` and the odd
/// member uses the negated draws.
pub fn path_normals(seed: u64, path_id: u64, antithetic: bool, z1: &mut [f64], z2: &mut [f64]) {
    let (stream, sign) = if antithetic {
        (path_id / 2, if path_id % 2 == 1 { -1.0 } else { 1.0 })
    } else {
        (path_id, 1.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    for (a, b) in z1.iter_mut().zip(z2.iter_mut()) {
        let x: f64 = rng.sample(StandardNormal);
        let y: f64 = rng.sample(StandardNormal);
        *a = sign * x;
        *b = sign * y;
    }
}

/// Produces path bundles on demand, optionally with a drift added to the
/// Brownian increments.
///
/// With a drift `eta`, the stored increments are `dW = eta dt + sqrt(dt) Z`:
/// reference-measure increments of a scenario drawn under `Q^eta`.
#[derive(Debug, Clone)]
pub struct PathGenerator {
    pub grid: TimeGrid,
    pub coeffs: Arc<CoefficientPaths>,
    pub s0: f64,
    pub seed: u64,
    pub antithetic: bool,
    drift: Option<(Vec<f64>, Vec<f64>)>,
}

impl PathGenerator {
    pub fn new(grid: TimeGrid, coeffs: Arc<CoefficientPaths>, s0: f64, seed: u64) -> Result<Self> {
        grid.validate()?;
        coeffs.check_len(grid.n_steps)?;
        if !(s0.is_finite() && s0 > 0.0) {
            return Err(Error::invalid(format!("s0 must be positive, got {s0}")));
        }
        Ok(PathGenerator {
            grid,
            coeffs,
            s0,
            seed,
            antithetic: false,
            drift: None,
        })
    }

    pub fn with_antithetic(mut self, antithetic: bool) -> Self {
        self.antithetic = antithetic;
        self
    }

    /// Simulate under the measure with density generator `(eta1, eta2)`.
    pub fn with_drift(mut self, eta1: Vec<f64>, eta2: Vec<f64>) -> Result<Self> {
        for v in [&eta1, &eta2] {
            if v.len() != self.grid.n_steps {
                return Err(Error::GridMismatch {
                    expected: self.grid.n_steps,
                    found: v.len(),
                });
            }
            if let Some(k) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    what: "eta",
                    index: k,
                });
            }
        }
        self.drift = Some((eta1, eta2));
        Ok(self)
    }

    pub fn bundle(&self, path_id: u64) -> PathBundle {
        let n = self.grid.n_steps;
        let dt = self.grid.dt();
        let sq = dt.sqrt();
        let mut dw1 = vec![0.0; n];
        let mut dw2 = vec![0.0; n];
        path_normals(self.seed, path_id, self.antithetic, &mut dw1, &mut dw2);
        for k in 0..n {
            dw1[k] *= sq;
            dw2[k] *= sq;
        }
        if let Some((e1, e2)) = &self.drift {
            for k in 0..n {
                dw1[k] += e1[k] * dt;
                dw2[k] += e2[k] * dt;
            }
        }
        let mut s = Vec::with_capacity(n + 1);
        s.push(self.s0);
        let c = &self.coeffs;
        for k in 0..n {
            let prev = s[k];
            s.push(prev * log_step(c.sigma[k], c.lambda_hat[k], dt, dw1[k]).exp());
        }
        PathBundle {
            grid: self.grid,
            dw1,
            dw2,
            s,
            coeffs: Arc::clone(&self.coeffs),
            path_id,
            seed: self.seed,
        }
    }

    /// Maps every path to a value in parallel; output is in path order.
    pub fn map_paths<T, F>(&self, n_paths: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&PathBundle) -> T + Sync + Send,
    {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|id| f(&self.bundle(id)))
            .collect()
    }
}

/// A materialised set of scenarios plus the inputs that produced it.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub coefficients: MarketCoefficients,
    pub grid: TimeGrid,
    pub seed: u64,
    pub s0: f64,
    pub paths: Vec<PathBundle>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EnsembleManifest {
    pub seed: u64,
    pub grid: TimeGrid,
    pub coefficients: MarketCoefficients,
    pub n_paths: usize,
    pub s0: f64,
}

pub fn simulate_ensemble(
    coeffs: &MarketCoefficients,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<Ensemble> {
    simulate_ensemble_from(coeffs, grid, n_paths, seed, 1.0)
}

pub fn simulate_ensemble_from(
    coeffs: &MarketCoefficients,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    s0: f64,
) -> Result<Ensemble> {
    if n_paths == 0 {
        return Err(Error::invalid("n_paths must be at least 1"));
    }
    let realized = Arc::new(coeffs.realize(&grid)?);
    let gen = PathGenerator::new(grid, realized, s0, seed)?;
    let paths = gen.map_paths(n_paths, |b| b.clone());
    Ok(Ensemble {
        coefficients: coeffs.clone(),
        grid,
        seed,
        s0,
        paths,
    })
}

impl Ensemble {
    pub fn manifest(&self) -> EnsembleManifest {
        EnsembleManifest {
            seed: self.seed,
            grid: self.grid,
            coefficients: self.coefficients.clone(),
            n_paths: self.paths.len(),
            s0: self.s0,
        }
    }

    /// One row per grid point per path: `path_id,k,t,S,dW1,dW2`. The
    /// increment columns are empty on the terminal row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["path_id", "k", "t", "S", "dW1", "dW2"])?;
        for p in &self.paths {
            for k in 0..=p.n_steps() {
                let (a, b) = if k < p.n_steps() {
                    (p.dw1[k].to_string(), p.dw2[k].to_string())
                } else {
                    (String::new(), String::new())
                };
                w.write_record([
                    p.path_id.to_string(),
                    k.to_string(),
                    p.grid.time(k).to_string(),
                    p.s[k].to_string(),
                    a,
                    b,
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_csv(std::fs::File::create(dir.join("ensemble.csv"))?)?;
        let manifest = serde_json::to_string_pretty(&self.manifest())?;
        std::fs::write(dir.join("ensemble_manifest.json"), manifest)?;
        Ok(())
    }
}

/// Wealth of a fraction-of-wealth strategy along one scenario.
pub fn wealth_from_strategy(bundle: &PathBundle, strategy: &Strategy, x0: f64) -> Result<WealthPath> {
    let x = wealth_values(bundle, strategy, x0, 0)?;
    Ok(WealthPath {
        x,
        strategy_id: strategy.label(),
    })
}

/// Wealth started from `x0` at step `from`; entry `j` is the wealth at step
/// `from + j`.
pub(crate) fn wealth_values(bundle: &PathBundle, strategy: &Strategy, x0: f64, from: usize) -> Result<Vec<f64>> {
    if !(x0.is_finite() && x0 > 0.0) {
        return Err(Error::invalid(format!("initial wealth must be positive, got {x0}")));
    }
    let n = bundle.n_steps();
    let dt = bundle.grid.dt();
    let c = &bundle.coeffs;
    let mut x = Vec::with_capacity(n + 1 - from);
    x.push(x0);
    for k in from..n {
        let pi = strategy.fraction(k, c)?;
        let prev = x[x.len() - 1];
        x.push(prev * log_step(pi * c.sigma[k], c.lambda_hat[k], dt, bundle.dw1[k]).exp());
    }
    Ok(x)
}

/// Log-wealth increment `ln X_to - ln X_from`, without materialising the path.
pub(crate) fn log_wealth_increment(
    bundle: &PathBundle,
    strategy: &Strategy,
    from: usize,
    to: usize,
) -> Result<f64> {
    let dt = bundle.grid.dt();
    let c = &bundle.coeffs;
    let mut acc = 0.0;
    for k in from..to {
        let pi = strategy.fraction(k, c)?;
        acc += log_step(pi * c.sigma[k], c.lambda_hat[k], dt, bundle.dw1[k]);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::SampleStats;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 252).unwrap()
    }

    #[test]
    fn grid_ends_exactly_at_horizon() {
        let g = TimeGrid::new(0.7, 9).unwrap();
        assert_eq!(g.time(9), 0.7);
        let ts = g.times();
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g.index_of(g.time(4)).unwrap(), 4);
        assert!(g.index_of(0.05).is_err());
    }

    #[test]
    fn rejects_bad_grids_and_coefficients() {
        assert!(TimeGrid::new(0.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        let g = grid();
        let zero_vol = MarketCoefficients::constant(0.0, 0.3, 1.0);
        assert!(matches!(zero_vol.realize(&g), Err(Error::ZeroVolatility { index: 0 })));
        let nan = MarketCoefficients::constant(0.2, f64::NAN, 1.0);
        assert!(matches!(nan.realize(&g), Err(Error::NonFinite { .. })));
        let neg = MarketCoefficients::constant(0.2, 0.3, -1.0);
        assert!(neg.realize(&g).is_err());
        let short = MarketCoefficients {
            sigma: CoefficientSpec::Tabulated(vec![0.2; 3]),
            lambda_hat: 0.3.into(),
            delta: 1.0.into(),
        };
        assert!(matches!(short.realize(&g), Err(Error::GridMismatch { .. })));
        assert!(simulate_ensemble(&MarketCoefficients::constant(0.2, 0.3, 1.0), g, 0, 1).is_err());
    }

    #[test]
    fn coefficient_specs_parse_from_json() {
        let c: MarketCoefficients = serde_json::from_str(
            r#"{"sigma":0.2,"lambda_hat":[0.1,0.2],"delta":{"kind":"linear","start":1.0,"slope":0.5}}"#,
        )
        .unwrap();
        let g = TimeGrid::new(1.0, 2).unwrap();
        let r = c.realize(&g).unwrap();
        assert_eq!(r.sigma, vec![0.2, 0.2]);
        assert_eq!(r.lambda_hat, vec![0.1, 0.2]);
        assert_eq!(r.delta, vec![1.0, 1.25]);
    }

    #[test]
    fn zero_price_of_risk_gives_driftless_log_mean() {
        let coeffs = MarketCoefficients::constant(0.2, 0.0, 1.0);
        let g = TimeGrid::new(1.0, 50).unwrap();
        let n = 20_000;
        let e = simulate_ensemble(&coeffs, g, n, 3).unwrap();
        let logs: Vec<f64> = e.paths.iter().map(|p| (p.s[50] / p.s[0]).ln()).collect();
        let st = SampleStats::from_slice(&logs);
        assert!((st.mean + 0.02).abs() < 4.0 * st.stderr, "{st:?}");
    }

    #[test]
    fn positivity_holds_on_every_path() {
        let coeffs = MarketCoefficients::constant(1.5, -2.0, 1.0);
        let e = simulate_ensemble(&coeffs, TimeGrid::new(5.0, 100).unwrap(), 200, 11).unwrap();
        let s = Strategy::ConstantFraction { c: 3.0 };
        for p in &e.paths {
            assert!(p.s.iter().all(|v| *v > 0.0));
            let w = wealth_from_strategy(p, &s, 2.0).unwrap();
            assert!(w.x.iter().all(|v| *v > 0.0));
            assert_eq!(w.x[0], 2.0);
        }
    }

    #[test]
    fn zero_fraction_keeps_wealth_constant() {
        let coeffs = MarketCoefficients::constant(0.2, 0.3, 1.0);
        let e = simulate_ensemble(&coeffs, TimeGrid::new(1.0, 20).unwrap(), 5, 1).unwrap();
        let s = Strategy::ConstantFraction { c: 0.0 };
        for p in &e.paths {
            let w = wealth_from_strategy(p, &s, 3.0).unwrap();
            assert!(w.x.iter().all(|v| *v == 3.0));
        }
    }

    #[test]
    fn unit_fraction_replicates_the_asset() {
        let coeffs = MarketCoefficients {
            sigma: CoefficientSpec::Function(TimeFunction::Periodic {
                level: 0.25,
                amplitude: 0.05,
                period: 0.5,
            }),
            lambda_hat: 0.4.into(),
            delta: 1.0.into(),
        };
        let e = simulate_ensemble(&coeffs, TimeGrid::new(1.0, 64).unwrap(), 10, 8).unwrap();
        let s = Strategy::ConstantFraction { c: 1.0 };
        for p in &e.paths {
            let w = wealth_from_strategy(p, &s, 1.0).unwrap();
            for k in 0..=64 {
                assert_eq!(w.x[k], p.s[k]);
            }
        }
    }

    #[test]
    fn nonfinite_strategy_is_rejected() {
        let coeffs = MarketCoefficients::constant(0.2, 0.3, 1.0);
        let e = simulate_ensemble(&coeffs, TimeGrid::new(1.0, 4).unwrap(), 1, 1).unwrap();
        let s = Strategy::Tabulated {
            values: vec![0.1, f64::NAN, 0.1, 0.1],
        };
        assert!(wealth_from_strategy(&e.paths[0], &s, 1.0).is_err());
    }

    #[test]
    fn ensemble_is_a_pure_function_of_its_inputs() {
        let coeffs = MarketCoefficients::constant(0.2, 0.3, 1.0);
        let g = TimeGrid::new(1.0, 16).unwrap();
        let a = simulate_ensemble(&coeffs, g, 32, 99).unwrap();
        let b = simulate_ensemble(&coeffs, g, 32, 99).unwrap();
        assert_eq!(a.paths, b.paths);
        let c = simulate_ensemble(&coeffs, g, 32, 100).unwrap();
        assert_ne!(a.paths[0].dw1, c.paths[0].dw1);
        // A prefix of a larger ensemble is the smaller ensemble.
        let d = simulate_ensemble(&coeffs, g, 8, 99).unwrap();
        assert_eq!(&a.paths[..8], &d.paths[..]);
    }

    #[test]
    fn antithetic_pairs_mirror_each_other() {
        let mut z1 = vec![0.0; 8];
        let mut z2 = vec![0.0; 8];
        let mut y1 = vec![0.0; 8];
        let mut y2 = vec![0.0; 8];
        path_normals(5, 6, true, &mut z1, &mut z2);
        path_normals(5, 7, true, &mut y1, &mut y2);
        for k in 0..8 {
            assert_eq!(z1[k], -y1[k]);
            assert_eq!(z2[k], -y2[k]);
        }
    }

    #[test]
    fn csv_has_one_row_per_grid_point() {
        let coeffs = MarketCoefficients::constant(0.2, 0.3, 1.0);
        let e = simulate_ensemble(&coeffs, TimeGrid::new(1.0, 3).unwrap(), 2, 1).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "path_id,k,t,S,dW1,dW2");
        assert_eq!(lines.len(), 1 + 2 * 4);
        assert!(lines[4].ends_with(",,"));
        let m = e.manifest();
        let back: EnsembleManifest = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
