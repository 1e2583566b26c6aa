//! Dual drift relation and residual checks for the non-volatile dual HJB
//! equation.
//!
//! For a dual field `V(y, t) = -ln y + int_0^t b ds + int_0^t a . dW` the
//! drift must satisfy
//!
//! ```text
//! b = -inf_eta { g(eta) + (eta1 + lambda_hat)^2 / 2 + a . eta },
//! ```
//!
//! and a non-volatile field must solve
//!
//! ```text
//! V_t + inf_eta { g(eta) + (y^2 V_yy / 2) (eta1 + lambda_hat)^2 } = 0.
//! ```
//!
//! The equation is ill-posed forward in time, so it is never solved here:
//! candidate fields are sampled on a grid and their residuals measured.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{golden_min, log_grid};
use crate::paths::{CoefficientSpec, TimeFunction, TimeGrid};

/// Argument tolerance of the nested golden-section searches.
const GOLDEN_TOL: f64 = 1e-10;

/// Simpson panels per time step when integrating a drift given as a
/// function of time.
const SIMPSON_PANELS: usize = 64;

/// Convex penalty on the density generator `eta = (eta1, eta2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PenaltyIntegrand {
    /// `(delta / 2) |eta|^2`.
    Quadratic { delta: f64 },
    /// `(delta / 2) |eta|^2` on the disc `|eta| <= cap`, infinite outside.
    QuadraticCapped { delta: f64, cap: f64 },
    /// Zero at `eta = 0`, infinite elsewhere.
    NoAmbiguity {},
    /// Values on a rectangular grid, `values[i][j]` at `(eta1[i], eta2[j])`;
    /// `null` marks an infinite value. Off-grid points are inadmissible.
    Tabulated {
        eta1: Vec<f64>,
        eta2: Vec<f64>,
        values: Vec<Vec<Option<f64>>>,
    },
}

impl PenaltyIntegrand {
    pub fn validate(&self) -> Result<()> {
        match self {
            PenaltyIntegrand::Quadratic { delta } if delta.is_finite() => Ok(()),
            PenaltyIntegrand::QuadraticCapped { delta, cap }
                if delta.is_finite() && *delta >= 0.0 && cap.is_finite() && *cap > 0.0 =>
            {
                Ok(())
            }
            PenaltyIntegrand::NoAmbiguity {} => Ok(()),
            PenaltyIntegrand::Tabulated { eta1, eta2, values } => {
                let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|x| x.is_finite());
                if eta1.is_empty() || eta2.is_empty() || !increasing(eta1) || !increasing(eta2) {
                    return Err(Error::invalid("tabulated penalty needs finite, increasing eta grids"));
                }
                if values.len() != eta1.len() || values.iter().any(|row| row.len() != eta2.len()) {
                    return Err(Error::invalid("tabulated penalty values do not match the eta grids"));
                }
                if values.iter().flatten().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("tabulated penalty values must be finite or null"));
                }
                if values.iter().flatten().all(|v| v.is_none()) {
                    return Err(Error::InfinitePenalty);
                }
                Ok(())
            }
            other => Err(Error::invalid(format!("invalid penalty integrand {other:?}"))),
        }
    }

    /// `g(eta)`; `+inf` off the admissible set.
    pub fn value(&self, eta: [f64; 2]) -> f64 {
        let sq = eta[0] * eta[0] + eta[1] * eta[1];
        match self {
            PenaltyIntegrand::Quadratic { delta } => 0.5 * delta * sq,
            PenaltyIntegrand::QuadraticCapped { delta, cap } => {
                // Relative slack keeps points on the searched disc admissible.
                if sq.sqrt() <= *cap * (1.0 + 1e-12) {
                    0.5 * delta * sq
                } else {
                    f64::INFINITY
                }
            }
            PenaltyIntegrand::NoAmbiguity {} => {
                if sq == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            PenaltyIntegrand::Tabulated { eta1, eta2, values } => {
                let i = eta1.iter().position(|&e| e == eta[0]);
                let j = eta2.iter().position(|&e| e == eta[1]);
                match (i, j) {
                    (Some(i), Some(j)) => values[i][j].unwrap_or(f64::INFINITY),
                    _ => f64::INFINITY,
                }
            }
        }
    }
}

/// How a drift was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMethod {
    ClosedForm,
    NestedGolden,
    DenseGrid,
    TableNodes,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualDrift {
    pub b: f64,
    /// Minimising generator.
    pub eta: [f64; 2],
    pub method: DriftMethod,
    /// Nonzero volatility `a`; such outputs are not tied to a closed-form
    /// example and are reported as exploratory.
    pub exploratory: bool,
    /// The minimiser sits on the edge of the search box.
    pub boundary: bool,
}

/// Half-width of the square searched for the minimiser.
pub fn search_half_width(a: [f64; 2], lambda_hat: f64) -> f64 {
    10.0 * (1.0 + lambda_hat.abs() + a[0].abs().max(a[1].abs()))
}

/// Objective `g(eta) + (c / 2)(eta1 + lambda)^2 + a . eta`.
fn objective(g: &PenaltyIntegrand, c: f64, a: [f64; 2], lambda: f64, eta: [f64; 2]) -> f64 {
    let s = eta[0] + lambda;
    g.value(eta) + 0.5 * c * s * s + a[0] * eta[0] + a[1] * eta[1]
}

fn unbounded(g: &PenaltyIntegrand) -> Error {
    Error::Unbounded(format!("penalty {g:?} is not coercive for this problem"))
}

/// Closed-form infimum for the quadratic and no-ambiguity penalties.
fn closed_form(g: &PenaltyIntegrand, c: f64, a: [f64; 2], lambda: f64) -> Option<Result<(f64, [f64; 2])>> {
    match *g {
        PenaltyIntegrand::NoAmbiguity {} => Some(Ok((0.5 * c * lambda * lambda, [0.0, 0.0]))),
        PenaltyIntegrand::Quadratic { delta } => {
            // Separable: ((delta + c)/2) e1^2 + (c lambda + a1) e1 + c lambda^2 / 2
            // plus (delta/2) e2^2 + a2 e2.
            let k1 = delta + c;
            let l1 = c * lambda + a[0];
            let (v1, e1) = if k1 > 0.0 {
                (0.5 * c * lambda * lambda - l1 * l1 / (2.0 * k1), -l1 / k1)
            } else if k1 == 0.0 && l1 == 0.0 {
                (0.5 * c * lambda * lambda, 0.0)
            } else {
                return Some(Err(unbounded(g)));
            };
            let (v2, e2) = if delta > 0.0 {
                (-a[1] * a[1] / (2.0 * delta), -a[1] / delta)
            } else if delta == 0.0 && a[1] == 0.0 {
                (0.0, 0.0)
            } else {
                return Some(Err(unbounded(g)));
            };
            Some(Ok((v1 + v2, [e1, e2])))
        }
        _ => None,
    }
}

/// Nested golden-section search over the admissible part of the box
/// `[-h, h]^2` (the disc for the capped penalty).
fn nested_golden(g: &PenaltyIntegrand, c: f64, a: [f64; 2], lambda: f64, h: f64) -> (f64, [f64; 2]) {
    let cap = match *g {
        PenaltyIntegrand::QuadraticCapped { cap, .. } => Some(cap.min(h)),
        _ => None,
    };
    let outer = cap.unwrap_or(h);
    let inner_range = |e1: f64| match cap {
        Some(r) => {
            let w = (r * r - e1 * e1).max(0.0).sqrt();
            (-w, w)
        }
        None => (-h, h),
    };
    let inner = |e1: f64| {
        let (lo, hi) = inner_range(e1);
        golden_min(|e2| objective(g, c, a, lambda, [e1, e2.clamp(lo, hi)]), lo, hi, GOLDEN_TOL)
    };
    let (e1, v) = golden_min(|e1| inner(e1).1, -outer, outer, GOLDEN_TOL);
    let (e2, _) = inner(e1);
    (v, [e1, e2])
}

fn table_nodes(g: &PenaltyIntegrand, c: f64, a: [f64; 2], lambda: f64) -> (f64, [f64; 2]) {
    let PenaltyIntegrand::Tabulated { eta1, eta2, .. } = g else {
        unreachable!()
    };
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for &e1 in eta1 {
        for &e2 in eta2 {
            let v = objective(g, c, a, lambda, [e1, e2]);
            if v < best.0 {
                best = (v, [e1, e2]);
            }
        }
    }
    best
}

/// `inf_eta { g(eta) + (c/2)(eta1 + lambda)^2 + a . eta }` with its
/// minimiser, using closed forms where they exist.
pub fn pointwise_inf(g: &PenaltyIntegrand, c: f64, a: [f64; 2], lambda: f64) -> Result<(f64, [f64; 2])> {
    if let Some(r) = closed_form(g, c, a, lambda) {
        return r;
    }
    Ok(match g {
        PenaltyIntegrand::Tabulated { .. } => table_nodes(g, c, a, lambda),
        _ => nested_golden(g, c, a, lambda, search_half_width(a, lambda)),
    })
}

fn on_boundary(eta: [f64; 2], h: f64) -> bool {
    eta.iter().any(|e| (h - e.abs()) <= 1e-6 * h)
}

/// Drift `b` of a dual field with volatility `a` under penalty `g`,
/// computed by nested golden-section search for the quadratic families,
/// over the nodes of a tabulated penalty, and directly when there is no
/// ambiguity.
pub fn drift_from_relation(g: &PenaltyIntegrand, a: [f64; 2], lambda_hat: f64) -> Result<DualDrift> {
    g.validate()?;
    if !(lambda_hat.is_finite() && a.iter().all(|v| v.is_finite())) {
        return Err(Error::invalid("drift relation needs finite a and lambda_hat"));
    }
    let h = search_half_width(a, lambda_hat);
    let (v, eta, method) = match g {
        PenaltyIntegrand::NoAmbiguity {} => {
            let (v, eta) = closed_form(g, 1.0, a, lambda_hat).expect("closed form")?;
            (v, eta, DriftMethod::ClosedForm)
        }
        PenaltyIntegrand::Quadratic { .. } => {
            // Reject non-coercive cases before searching a finite box.
            closed_form(g, 1.0, a, lambda_hat).expect("closed form")?;
            let (v, eta) = nested_golden(g, 1.0, a, lambda_hat, h);
            (v, eta, DriftMethod::NestedGolden)
        }
        PenaltyIntegrand::QuadraticCapped { .. } => {
            let (v, eta) = nested_golden(g, 1.0, a, lambda_hat, h);
            (v, eta, DriftMethod::NestedGolden)
        }
        PenaltyIntegrand::Tabulated { .. } => {
            let (v, eta) = table_nodes(g, 1.0, a, lambda_hat);
            (v, eta, DriftMethod::TableNodes)
        }
    };
    Ok(DualDrift {
        b: -v,
        eta,
        method,
        exploratory: a != [0.0, 0.0],
        boundary: !matches!(g, PenaltyIntegrand::Tabulated { .. }) && on_boundary(eta, h),
    })
}

/// Dense-grid reference: minimises over the nodes `(i - m) step`,
/// `m = round(h / step)`, covering `[-h, h]^2`. Rows are scanned in parallel; the reduction keeps the
/// smallest value and breaks ties by node index, so the result does not
/// depend on scheduling.
pub fn drift_by_grid(g: &PenaltyIntegrand, a: [f64; 2], lambda_hat: f64, half_width: f64, step: f64) -> Result<DualDrift> {
    g.validate()?;
    if !(half_width > 0.0 && step > 0.0 && half_width.is_finite() && step.is_finite()) {
        return Err(Error::invalid("dense grid needs a positive half-width and step"));
    }
    // Nodes `(i - m) step`, `i = 0..=2m`: symmetric, with the origin exact.
    let m = (half_width / step).round() as usize;
    let n = 2 * m + 1;
    if m < 1 || (n as f64) * (n as f64) > 4e9 {
        return Err(Error::invalid(format!("dense grid with {n} nodes per axis is out of range")));
    }
    let node = |i: usize| (i as f64 - m as f64) * step;
    let (v, i, j) = (0..n)
        .into_par_iter()
        .map(|i| {
            let e1 = node(i);
            let mut best = (f64::INFINITY, i, 0);
            for j in 0..n {
                let v = objective(g, 1.0, a, lambda_hat, [e1, node(j)]);
                if v < best.0 {
                    best = (v, i, j);
                }
            }
            best
        })
        .reduce(
            || (f64::INFINITY, usize::MAX, usize::MAX),
            |x, y| if y.0 < x.0 || (y.0 == x.0 && (y.1, y.2) < (x.1, x.2)) { y } else { x },
        );
    if !v.is_finite() {
        return Err(Error::InfinitePenalty);
    }
    let eta = [node(i), node(j)];
    Ok(DualDrift {
        b: -v,
        eta,
        method: DriftMethod::DenseGrid,
        exploratory: a != [0.0, 0.0],
        boundary: on_boundary(eta, m as f64 * step),
    })
}

/// Stationarity value of the drift for the quadratic penalty with `a = 0`.
pub fn quadratic_drift(delta: f64, lambda_hat: f64) -> f64 {
    -delta * lambda_hat * lambda_hat / (2.0 * (1.0 + delta))
}

/// Samples `V[k][j] = V(y[j], t[k])` of a dual field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualFieldSamples {
    pub y: Vec<f64>,
    pub t: Vec<f64>,
    pub v: Vec<Vec<f64>>,
}

/// Candidate fields for the residual check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ansatz {
    /// `-ln y - 1 + int_0^t b(s) ds` with `b` from the drift relation.
    LogDrift,
    /// `-ln y - 1`, constant in time.
    Static,
}

/// `int_0^t b(s) ds` at every grid node, where `b(s)` is the drift for
/// `lambda_hat(s)`. Function coefficients are integrated with composite
/// Simpson panels; step tables are piecewise constant and integrate exactly.
pub fn drift_integral(g: &PenaltyIntegrand, lambda_hat: &CoefficientSpec, grid: &TimeGrid) -> Result<Vec<f64>> {
    let b = |lambda: f64| -> Result<f64> { Ok(-pointwise_inf(g, 1.0, [0.0, 0.0], lambda)?.0) };
    let dt = grid.dt();
    let mut out = Vec::with_capacity(grid.n_steps + 1);
    out.push(0.0);
    let mut acc = 0.0;
    match lambda_hat {
        CoefficientSpec::Constant(l) => {
            let rate = b(*l)?;
            for k in 1..=grid.n_steps {
                out.push(rate * grid.time(k));
            }
        }
        CoefficientSpec::Tabulated(_) => {
            for l in lambda_hat.realize(grid)? {
                acc += b(l)? * dt;
                out.push(acc);
            }
        }
        CoefficientSpec::Function(f) => {
            for k in 0..grid.n_steps {
                acc += simpson(f, g, grid.time(k), dt)?;
                out.push(acc);
            }
        }
    }
    Ok(out)
}

fn simpson(f: &TimeFunction, g: &PenaltyIntegrand, t0: f64, dt: f64) -> Result<f64> {
    let n = SIMPSON_PANELS;
    let h = dt / n as f64;
    let mut s = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += w * -pointwise_inf(g, 1.0, [0.0, 0.0], f.eval(t0 + i as f64 * h))?.0;
    }
    Ok(s * h / 3.0)
}

/// Samples the chosen ansatz on `y x grid`.
pub fn sample_ansatz(
    ansatz: Ansatz,
    g: &PenaltyIntegrand,
    lambda_hat: &CoefficientSpec,
    grid: &TimeGrid,
    y: &[f64],
) -> Result<DualFieldSamples> {
    let a = match ansatz {
        Ansatz::LogDrift => drift_integral(g, lambda_hat, grid)?,
        Ansatz::Static => vec![0.0; grid.n_steps + 1],
    };
    let v = a
        .iter()
        .map(|ak| y.iter().map(|yj| -yj.ln() - 1.0 + ak).collect())
        .collect();
    Ok(DualFieldSamples {
        y: y.to_vec(),
        t: grid.times(),
        v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualRow {
    pub y: f64,
    pub t: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HjbReport {
    pub max_residual: f64,
    pub min_abs_residual: f64,
    /// Largest log-spacing of the `y` grid.
    pub dy: f64,
    pub dt: f64,
    /// Rounding error bound of `y^2 V_yy`, `4 eps max|V| / dy_min^2`.
    pub roundoff_bound: f64,
    /// Leading truncation error of `y^2 V_yy` relative to its size,
    /// `dy^2 / 12`.
    pub truncation_bound: f64,
    #[serde(skip)]
    pub rows: Vec<ResidualRow>,
}

impl HjbReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Largest log-spacing of the `y` grid at which the three-point second
/// difference is still meaningful.
const MAX_LOG_STEP: f64 = 1.0;

/// Max-norm residual of the non-volatile dual HJB equation at interior
/// nodes, with a forward difference in time and a three-point second
/// difference in `y`. `lambda_hat[k]` is the price of risk at `t[k]`; the
/// last time node has no forward difference and is skipped.
pub fn hjb_residual(field: &DualFieldSamples, g: &PenaltyIntegrand, lambda_hat: &[f64]) -> Result<HjbReport> {
    g.validate()?;
    let (y, t) = (&field.y, &field.t);
    if y.len() < 3 || t.len() < 2 {
        return Err(Error::CoarseGrid(format!(
            "need at least 3 wealth-dual nodes and 2 time nodes, got {} and {}",
            y.len(),
            t.len()
        )));
    }
    if y[0] <= 0.0 || y.windows(2).any(|w| !(w[0] < w[1])) || t.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("y must be positive and increasing, t increasing"));
    }
    let steps: Vec<f64> = y.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let (hmin, hmax) = steps
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), h| (lo.min(*h), hi.max(*h)));
    if (hmax - hmin) > 1e-9 * hmax {
        return Err(Error::invalid("y grid must be log-spaced"));
    }
    if field.v.len() != t.len() || field.v.iter().any(|row| row.len() != y.len()) {
        return Err(Error::GridMismatch {
            expected: t.len() * y.len(),
            found: field.v.iter().map(Vec::len).sum(),
        });
    }
    if lambda_hat.len() + 1 < t.len() {
        return Err(Error::GridMismatch {
            expected: t.len() - 1,
            found: lambda_hat.len(),
        });
    }
    let vmax = field.v.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let roundoff_bound = 4.0 * f64::EPSILON * vmax / (hmin * hmin);
    if hmax > MAX_LOG_STEP {
        return Err(Error::CoarseGrid(format!(
            "log-spacing {hmax:.3} exceeds {MAX_LOG_STEP}; truncation estimate {:.3e}",
            hmax * hmax / 12.0
        )));
    }
    let rows: Vec<Vec<ResidualRow>> = (0..t.len() - 1)
        .into_par_iter()
        .map(|k| {
            let dt = t[k + 1] - t[k];
            (1..y.len() - 1)
                .map(|j| -> Result<ResidualRow> {
                    let v = &field.v[k];
                    let (hm, hp) = (y[j] - y[j - 1], y[j + 1] - y[j]);
                    let vyy = 2.0 * ((v[j + 1] - v[j]) / hp - (v[j] - v[j - 1]) / hm) / (hp + hm);
                    let c = y[j] * y[j] * vyy;
                    let vt = (field.v[k + 1][j] - v[j]) / dt;
                    let inf = pointwise_inf(g, c, [0.0, 0.0], lambda_hat[k])?.0;
                    Ok(ResidualRow {
                        y: y[j],
                        t: t[k],
                        residual: vt + inf,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<ResidualRow> = rows.into_iter().flatten().collect();
    let max_residual = rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    let min_abs_residual = rows.iter().map(|r| r.residual.abs()).fold(f64::INFINITY, f64::min);
    let dt = t.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok(HjbReport {
        max_residual,
        min_abs_residual,
        dy: hmax,
        dt,
        roundoff_bound,
        truncation_bound: hmax * hmax / 12.0,
        rows,
    })
}

/// Smallest accepted convergence order per joint halving of `dt` and the
/// log-spacing of `y`. The residual of the log ansatz is `O(dy^2 + dt)`, so
/// halving both steps reduces it by at least a factor two.
pub const MIN_ORDER: f64 = 0.9;

/// Grids of one refinement level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementPlan {
    pub y_min: f64,
    pub y_max: f64,
    /// Wealth-dual nodes at level 0; level `j` uses `(n_y - 1) 2^j + 1`.
    pub n_y: usize,
    /// Time steps at level 0; level `j` uses `n_t 2^j`.
    pub n_t: usize,
    pub horizon: f64,
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementLevel {
    pub n_y: usize,
    pub n_t: usize,
    pub dy: f64,
    pub dt: f64,
    pub max_residual: f64,
    pub min_abs_residual: f64,
    /// `log2` of the residual ratio to the previous level.
    pub observed_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementReport {
    pub ansatz: Ansatz,
    pub levels: Vec<RefinementLevel>,
    /// Every halving reduces the residual by at least `2^MIN_ORDER`;
    /// meaningful for the log-drift ansatz only.
    pub rate_ok: bool,
}

/// Residual norms of one ansatz under successive halving of both grids.
pub fn hjb_refinement(
    ansatz: Ansatz,
    g: &PenaltyIntegrand,
    lambda_hat: &CoefficientSpec,
    plan: &RefinementPlan,
) -> Result<(RefinementReport, HjbReport)> {
    if !(plan.y_min > 0.0 && plan.y_max > plan.y_min) {
        return Err(Error::invalid("need 0 < y_min < y_max"));
    }
    let mut levels = Vec::with_capacity(plan.levels + 1);
    let mut finest = None;
    for j in 0..=plan.levels {
        let n_y = (plan.n_y.max(2) - 1) * (1 << j) + 1;
        let n_t = plan.n_t * (1 << j);
        let grid = TimeGrid::new(plan.horizon, n_t)?;
        let y = log_grid(plan.y_min, plan.y_max, n_y);
        let field = sample_ansatz(ansatz, g, lambda_hat, &grid, &y)?;
        let lam = lambda_hat.realize(&grid)?;
        let rep = hjb_residual(&field, g, &lam)?;
        levels.push(RefinementLevel {
            n_y,
            n_t,
            dy: rep.dy,
            dt: rep.dt,
            max_residual: rep.max_residual,
            min_abs_residual: rep.min_abs_residual,
            observed_order: None,
        });
        finest = Some(rep);
    }
    let mut rate_ok = levels.len() > 1;
    for j in 1..levels.len() {
        let (prev, cur) = (levels[j - 1].max_residual, levels[j].max_residual);
        let order = (prev / cur).log2();
        levels[j].observed_order = Some(order);
        rate_ok &= cur == 0.0 || order >= MIN_ORDER;
    }
    Ok((
        RefinementReport {
            ansatz,
            levels,
            rate_ok,
        },
        finest.expect("at least one level"),
    ))
}
