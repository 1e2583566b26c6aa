//! The logarithmic robust forward criterion `U(x, t) = ln x + A_t`, its dual
//! field, the equivalent standard forward fields, and the criterion process
//! whose drift sign encodes the saddle property.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{GeneratorPaths, MeasureChange};
use crate::paths::{CoefficientPaths, TimeGrid, WealthPath};
use crate::strategies::{kelly_fractions, trust_weight, worst_case_generator};

/// Running sum `acc_0 = 0`, `acc_{k+1} = acc_k + f_k dt` (left endpoints).
fn accumulate(integrand: impl Iterator<Item = f64>, dt: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for f in integrand {
        acc += f * dt;
        out.push(acc);
    }
    out
}

fn check_positive(v: f64, name: &str) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `U(x, t_k) = ln x + A_k` with `A_k = -1/2 sum_{j<k} delta_j/(1+delta_j) lambda_hat_j^2 dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionField {
    pub grid: TimeGrid,
    /// Drift accumulator, `n_steps + 1` entries.
    pub a: Vec<f64>,
    /// Trust-adjusted price of risk `delta/(1+delta) lambda_hat`, per step.
    pub lambda_bar: Vec<f64>,
    /// Penalty weights, per step.
    pub delta: Vec<f64>,
}

pub fn field_log(coeffs: &CoefficientPaths, grid: TimeGrid) -> Result<CriterionField> {
    grid.validate()?;
    coeffs.check_len(grid.n_steps)?;
    let dt = grid.dt();
    let lambda_bar = equivalent_mpr(coeffs);
    let a = accumulate(
        coeffs
            .lambda_hat
            .iter()
            .zip(&coeffs.delta)
            .map(|(l, d)| -0.5 * trust_weight(*d) * l * l),
        dt,
        grid.n_steps,
    );
    Ok(CriterionField {
        grid,
        a,
        lambda_bar,
        delta: coeffs.delta.clone(),
    })
}

impl CriterionField {
    pub fn a_at(&self, k: usize) -> f64 {
        self.a[k]
    }

    pub fn primal(&self, x: f64, k: usize) -> Result<f64> {
        check_positive(x, "wealth")?;
        Ok(x.ln() + self.a[k])
    }

    /// `V(y, t_k) = -ln y - 1 + A_k`, the closed-form conjugate.
    pub fn dual(&self, y: f64, k: usize) -> Result<f64> {
        check_positive(y, "dual variable y")?;
        Ok(-y.ln() - 1.0 + self.a[k])
    }

    pub fn primal_at(&self, x: f64, t: f64) -> Result<f64> {
        self.primal(x, self.grid.index_of(t)?)
    }

    pub fn dual_at(&self, y: f64, t: f64) -> Result<f64> {
        dual_eval(self, y, t)
    }

    /// Time derivative of `A` on step `k`: `-1/2 lambda_bar_k lambda_hat_k`.
    pub fn drift(&self, k: usize) -> f64 {
        (self.a[k + 1] - self.a[k]) / self.grid.dt()
    }

    /// Snapshot rows `(t, A_t, lambda_bar_t)`; the terminal row has no
    /// `lambda_bar` because it is a per-step quantity.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "A_t", "lambda_bar_t"])?;
        for k in 0..=self.grid.n_steps {
            let lb = self.lambda_bar.get(k).map(|v| v.to_string()).unwrap_or_default();
            w.write_record([self.grid.time(k).to_string(), self.a[k].to_string(), lb])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn dual_eval(field: &CriterionField, y: f64, t: f64) -> Result<f64> {
    field.dual(y, field.grid.index_of(t)?)
}

/// Grid-search conjugate `max_x (U(x, t_k) - x y)`, an oracle for the
/// closed-form dual.
pub fn numerical_conjugate(field: &CriterionField, y: f64, k: usize, x_grid: &[f64]) -> Result<f64> {
    check_positive(y, "dual variable y")?;
    let mut best = f64::NEG_INFINITY;
    for &x in x_grid {
        best = best.max(field.primal(x, k)? - x * y);
    }
    Ok(best)
}

/// `U(x, t_k) = ln x - 1/2 sum_{j<k} m_j^2 dt` for a market with price of risk `m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StandardForwardField {
    pub grid: TimeGrid,
    pub m: Vec<f64>,
    pub a: Vec<f64>,
}

impl StandardForwardField {
    pub fn new(m: Vec<f64>, grid: TimeGrid) -> Result<Self> {
        grid.validate()?;
        if m.len() != grid.n_steps {
            return Err(Error::GridMismatch {
                expected: grid.n_steps,
                found: m.len(),
            });
        }
        if let Some(k) = m.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "market price of risk",
                index: k,
            });
        }
        let a = accumulate(m.iter().map(|v| -0.5 * v * v), grid.dt(), grid.n_steps);
        Ok(StandardForwardField { grid, m, a })
    }

    pub fn primal(&self, x: f64, k: usize) -> Result<f64> {
        check_positive(x, "wealth")?;
        Ok(x.ln() + self.a[k])
    }

    pub fn dual(&self, y: f64, k: usize) -> Result<f64> {
        check_positive(y, "dual variable y")?;
        Ok(-y.ln() - 1.0 + self.a[k])
    }
}

/// `N_k = U(X_k, t_k) + sum_{anchor <= j < k} (delta_j/2) |eta_j|^2 dt`, for `k >= anchor`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionProcess {
    pub anchor: usize,
    /// Entry `j` is `N` at step `anchor + j`.
    pub n: Vec<f64>,
}

impl CriterionProcess {
    pub fn increment(&self) -> f64 {
        self.n[self.n.len() - 1] - self.n[0]
    }
}

pub fn criterion_process(
    field: &CriterionField,
    wealth: &WealthPath,
    mc: &MeasureChange,
    anchor: usize,
) -> Result<CriterionProcess> {
    let n = field.grid.n_steps;
    if wealth.x.len() != n + 1 {
        return Err(Error::GridMismatch {
            expected: n,
            found: wealth.x.len().saturating_sub(1),
        });
    }
    if mc.n_steps() != n {
        return Err(Error::GridMismatch {
            expected: n,
            found: mc.n_steps(),
        });
    }
    if anchor > n {
        return Err(Error::invalid(format!("anchor step {anchor} beyond the grid")));
    }
    let gen = mc.generator();
    let dt = field.grid.dt();
    let mut out = Vec::with_capacity(n + 1 - anchor);
    let mut penalty = 0.0;
    for k in anchor..=n {
        if k > anchor {
            penalty += gen.quadratic_cost(&field.delta, dt, k - 1, k);
        }
        out.push(field.primal(wealth.x[k], k)? + penalty);
    }
    Ok(CriterionProcess { anchor, n: out })
}

/// Trust-adjusted price of risk `delta/(1+delta) lambda_hat`.
pub fn equivalent_mpr(coeffs: &CoefficientPaths) -> Vec<f64> {
    coeffs
        .lambda_hat
        .iter()
        .zip(&coeffs.delta)
        .map(|(l, d)| trust_weight(*d) * l)
        .collect()
}

/// The three standard-field views of the robust criterion: the forward
/// field of the market with price of risk `lambda_bar`, the tilted field
/// `U + int g(eta_bar)`, and its reference-market version `D^eta_bar * tilted`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalentFields {
    pub standard: StandardForwardField,
    /// Drift accumulator of the tilted field `A_t + int_0^t g(eta_bar) ds`.
    pub tilted_a: Vec<f64>,
    /// Kelly fraction `lambda_bar / sigma` of the adjusted market.
    pub adjusted_kelly: Vec<f64>,
    /// Fractional Kelly `delta/(1+delta) lambda_hat / sigma`.
    pub saddle_fraction: Vec<f64>,
    /// `max_k |lambda_bar_k / sigma_k - pi_bar_k|`.
    pub kelly_residual: f64,
    /// `max_k |tilted_a_k - standard.a_k|`.
    pub tilt_residual: f64,
}

impl EquivalentFields {
    pub fn tilted(&self, x: f64, k: usize) -> Result<f64> {
        check_positive(x, "wealth")?;
        Ok(x.ln() + self.tilted_a[k])
    }

    /// Reference-market field `D^eta_bar_k * tilted(x, t_k)` for a given
    /// density value.
    pub fn reference(&self, x: f64, k: usize, density: f64) -> Result<f64> {
        check_positive(density, "density")?;
        Ok(density * self.tilted(x, k)?)
    }
}

pub fn equivalent_standard_fields(
    coeffs: &CoefficientPaths,
    grid: TimeGrid,
    eta_bar: &GeneratorPaths,
) -> Result<EquivalentFields> {
    let field = field_log(coeffs, grid)?;
    eta_bar.validate(grid.n_steps)?;
    let expected = worst_case_generator(coeffs);
    for k in 0..grid.n_steps {
        let scale = 1.0 + expected.eta1[k].abs();
        if (eta_bar.eta1[k] - expected.eta1[k]).abs() > 1e-12 * scale || eta_bar.eta2[k] != 0.0 {
            return Err(Error::invalid(format!("generator is not the saddle generator at step {k}")));
        }
    }
    let dt = grid.dt();
    let standard = StandardForwardField::new(field.lambda_bar.clone(), grid)?;
    let mut tilted_a = Vec::with_capacity(grid.n_steps + 1);
    for k in 0..=grid.n_steps {
        tilted_a.push(field.a[k] + eta_bar.quadratic_cost(&field.delta, dt, 0, k));
    }
    let adjusted_kelly: Vec<f64> = field
        .lambda_bar
        .iter()
        .zip(&coeffs.sigma)
        .map(|(l, s)| l / s)
        .collect();
    let saddle_fraction = kelly_fractions(coeffs)?;
    let kelly_residual = adjusted_kelly
        .iter()
        .zip(&saddle_fraction)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let tilt_residual = tilted_a
        .iter()
        .zip(&standard.a)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(EquivalentFields {
        standard,
        tilted_a,
        adjusted_kelly,
        saddle_fraction,
        kelly_residual,
        tilt_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::doleans;
    use crate::paths::{MarketCoefficients, PathGenerator};
    use crate::strategies::Strategy;
    use std::sync::Arc;

    fn field(delta: f64, lambda: f64) -> CriterionField {
        let grid = TimeGrid::new(1.0, 252).unwrap();
        let c = MarketCoefficients::constant(0.2, lambda, delta).realize(&grid).unwrap();
        field_log(&c, grid).unwrap()
    }

    #[test]
    fn field_examples() {
        let f = field(0.0, 0.3);
        assert!(f.a.iter().all(|a| *a == 0.0));
        assert_eq!(f.primal(2.0, 100).unwrap(), 2f64.ln());
        let f = field(1.0, 0.3);
        assert!((f.a[252] + 0.0225).abs() < 1e-14);
        assert_eq!(f.a[0], 0.0);
        assert!(f.a.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(f.dual_at(1.0, 0.0).unwrap(), -1.0);
        assert!((f.dual_at(1.0, 1.0).unwrap() + 1.0225).abs() < 1e-14);
        assert!(f.dual(0.0, 0).is_err());
        assert!(f.primal(-1.0, 0).is_err());
    }

    #[test]
    fn conjugacy_closed_form_and_grid() {
        let f = field(1.0, 0.3);
        for &y in &[0.1, 0.5, 1.0, 3.0, 10.0] {
            let k = 126;
            let v = f.dual(y, k).unwrap();
            let at_opt = f.primal(1.0 / y, k).unwrap() - 1.0;
            assert!((v - at_opt).abs() < 1e-15);
            let xs = crate::numeric::log_grid(1e-3, 1e3, 20001);
            let num = numerical_conjugate(&f, y, k, &xs).unwrap();
            assert!(num <= v + 1e-15);
            assert!(v - num < 1e-6, "{y}: {v} vs {num}");
        }
    }

    #[test]
    fn criterion_process_is_constant_without_trading_or_ambiguity() {
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let c = Arc::new(MarketCoefficients::constant(0.2, 0.3, 0.0).realize(&grid).unwrap());
        let f = field_log(&c, grid).unwrap();
        let b = PathGenerator::new(grid, c, 1.0, 3).unwrap().bundle(0);
        let w = crate::paths::wealth_from_strategy(&b, &Strategy::ConstantFraction { c: 0.0 }, 2.0).unwrap();
        let mc = doleans(&GeneratorPaths::zero(50), &b).unwrap();
        let n = criterion_process(&f, &w, &mc, 0).unwrap();
        assert!(n.n.iter().all(|v| *v == 2f64.ln()));
        let n = criterion_process(&f, &w, &mc, 20).unwrap();
        assert_eq!(n.n.len(), 31);
        assert_eq!(n.n[0], f.primal(w.x[20], 20).unwrap());
        let short = GeneratorPaths::zero(10);
        let mc_bad = MeasureChange {
            eta1: short.eta1,
            eta2: short.eta2,
            d: vec![1.0; 11],
        };
        assert!(criterion_process(&f, &w, &mc_bad, 0).is_err());
    }

    #[test]
    fn equivalent_mpr_examples() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let c = MarketCoefficients::constant(0.2, 0.2, 1.0).realize(&grid).unwrap();
        assert!(equivalent_mpr(&c).iter().all(|l| (*l - 0.1).abs() < 1e-16));
        let c = MarketCoefficients::constant(0.2, 0.2, 0.0).realize(&grid).unwrap();
        assert!(equivalent_mpr(&c).iter().all(|l| *l == 0.0));
        let c = MarketCoefficients::constant(0.2, 0.3, 1e6).realize(&grid).unwrap();
        assert!(equivalent_mpr(&c).iter().all(|l| (*l - 0.3).abs() < 1e-6));
    }

    #[test]
    fn equivalent_fields_examples() {
        let grid = TimeGrid::new(1.0, 252).unwrap();
        let c = MarketCoefficients::constant(0.2, 0.3, 1.0).realize(&grid).unwrap();
        let eta = worst_case_generator(&c);
        let e = equivalent_standard_fields(&c, grid, &eta).unwrap();
        assert!((e.adjusted_kelly[0] - 0.75).abs() < 1e-15);
        assert!(e.kelly_residual <= 1e-15);
        assert!(e.tilt_residual < 1e-15);
        assert!((e.tilted_a[252] + 0.01125).abs() < 1e-14);
        assert!(equivalent_standard_fields(&c, grid, &GeneratorPaths::zero(252)).is_err());

        let c0 = MarketCoefficients::constant(0.2, 0.3, 0.0).realize(&grid).unwrap();
        let e0 = equivalent_standard_fields(&c0, grid, &worst_case_generator(&c0)).unwrap();
        assert_eq!(e0.tilted(3.0, 200).unwrap(), 3f64.ln());
    }

    #[test]
    fn csv_snapshot_has_one_row_per_grid_point() {
        let f = field(1.0, 0.3);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 254);
        assert!(text.starts_with("t,A_t,lambda_bar_t\n0,0,0.15\n"));
    }
}
