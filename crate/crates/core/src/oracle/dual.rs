//! Dual value functions on trees and the primal–dual conjugacy check.
//!
//! For logarithmic utility the dual value is
//! `v(eta) = -ln eta - 1 + D` with
//! `D = min_{Q, M} KL(Q | M) + gamma(Q)` over admissible measures `Q` and
//! martingale measures `M`. By the chain rule for relative entropy `D`
//! splits into one-period terms for rectangular families.

use std::io::Write;

use serde::Serialize;

use super::family::{dual_period_term, min_kl_to_martingale, MeasureFamily, SEARCH_TOL};
use super::market::{emm_point, emm_vertices, TreeMarket, Utility};
use super::primal::{horizon_penalty, solve_primal, NonRectangular};
use crate::error::{Error, Result};
use crate::numeric::{golden_min, kl_divergence, linspace, log_grid, simplex_min};

/// Default dual grid: log-spaced over `[1e-3, 1e3]`.
pub const ETA_MIN: f64 = 1e-3;
pub const ETA_MAX: f64 = 1e3;
pub const ETA_POINTS: usize = 2000;

/// A minimising pair `(Q, M)` of one period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualMinimizer {
    pub period: usize,
    pub kernel: Vec<f64>,
    pub martingale: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum DualKind {
    /// `v(eta) = -ln eta - 1 + constant`.
    Log { constant: f64 },
    /// One-period problem with a non-logarithmic utility.
    OnePeriod,
}

/// Evaluator of `eta -> v(eta)`.
#[derive(Debug, Clone)]
pub struct DualProblem {
    market: TreeMarket,
    family: MeasureFamily,
    utility: Utility,
    kind: DualKind,
    pub minimizers: Vec<DualMinimizer>,
}

pub fn dual_problem(market: &TreeMarket, family: &MeasureFamily, utility: Utility) -> Result<DualProblem> {
    market.validate()?;
    family.validate(market)?;
    utility.validate()?;
    let n = market.n_periods();
    let mut minimizers = Vec::new();
    let kind = match (utility, family) {
        (Utility::Log {}, f) if f.is_rectangular() => {
            let mut constant = 0.0;
            for k in 0..n {
                let (q, m, v) = dual_period_term(family, market, k)?;
                constant += v;
                minimizers.push(DualMinimizer {
                    period: k,
                    kernel: q,
                    martingale: m,
                    value: v,
                });
            }
            DualKind::Log { constant }
        }
        (Utility::Log {}, MeasureFamily::HorizonDependent { .. }) => {
            let q = family.tilt(0, n)?;
            let mut constant = horizon_penalty(market, family, 0, n)?;
            for k in 0..n {
                let (m, v) = min_kl_to_martingale(q, &market.periods[k].returns, k)?;
                constant += v;
                minimizers.push(DualMinimizer {
                    period: k,
                    kernel: q.to_vec(),
                    martingale: m,
                    value: v,
                });
            }
            DualKind::Log { constant }
        }
        (Utility::Log {}, MeasureFamily::NonRectangular { measures }) => {
            for k in 0..n {
                emm_vertices(&market.periods[k].returns, k)?;
            }
            let nr = NonRectangular { market, measures };
            let step = |q: &[f64], k: usize| {
                min_kl_to_martingale(q, &market.periods[k].returns, k)
                    .map(|r| r.1)
                    .unwrap_or(f64::INFINITY)
            };
            let (_, constant) = nr.robust_constant(0, None, &step);
            DualKind::Log { constant }
        }
        (_, f) if f.is_rectangular() && n == 1 => {
            emm_vertices(&market.periods[0].returns, 0)?;
            DualKind::OnePeriod
        }
        _ => {
            return Err(Error::Unsupported(format!(
                "{} dual is available on one-period trees with rectangular families",
                utility.label()
            )))
        }
    };
    Ok(DualProblem {
        market: market.clone(),
        family: family.clone(),
        utility,
        kind,
        minimizers,
    })
}

impl DualProblem {
    /// Additive constant of the log dual, if the utility is logarithmic.
    pub fn log_constant(&self) -> Option<f64> {
        match self.kind {
            DualKind::Log { constant } => Some(constant),
            DualKind::OnePeriod => None,
        }
    }

    pub fn value(&self, eta: f64) -> f64 {
        if eta <= 0.0 {
            return f64::INFINITY;
        }
        match self.kind {
            DualKind::Log { constant } => -eta.ln() - 1.0 + constant,
            DualKind::OnePeriod => self.one_period(eta),
        }
    }

    /// `q V(eta m / q)`, extended by its limit at `q = 0`.
    fn perspective(&self, q: f64, num: f64) -> f64 {
        if q <= 0.0 {
            return match self.utility {
                Utility::Exp { .. } if num > 0.0 => f64::INFINITY,
                _ => 0.0,
            };
        }
        q * self.utility.conjugate(num / q)
    }

    fn one_period(&self, eta: f64) -> f64 {
        let per = &self.market.periods[0];
        let verts = emm_vertices(&per.returns, 0).expect("validated");
        let expected = |q: &[f64], m: &[f64]| -> f64 {
            q.iter().zip(m).map(|(qi, mi)| self.perspective(*qi, eta * mi)).sum()
        };
        let inner = |m: &[f64]| -> f64 {
            match &self.family {
                MeasureFamily::Reference {} => expected(&per.p, m),
                MeasureFamily::Finite { .. } => {
                    let ks = self.family.kernels(0).expect("finite");
                    simplex_min(
                        &|w: &[f64]| {
                            let mut q = vec![0.0; per.p.len()];
                            let mut g = 0.0;
                            for (wj, ker) in w.iter().zip(ks) {
                                for (qi, kq) in q.iter_mut().zip(&ker.q) {
                                    *qi += wj * kq;
                                }
                                g += wj * ker.penalty;
                            }
                            expected(&q, m) + g
                        },
                        ks.len(),
                        SEARCH_TOL,
                    )
                    .1
                }
                MeasureFamily::Entropic { delta } => {
                    simplex_min(
                        &|q: &[f64]| expected(q, m) + delta * kl_divergence(q, &per.p),
                        per.p.len(),
                        SEARCH_TOL,
                    )
                    .1
                }
                _ => unreachable!("one-period dual needs a rectangular family"),
            }
        };
        if verts.len() == 1 {
            inner(&verts[0])
        } else {
            golden_min(|s| inner(&emm_point(&verts, s)), 0.0, 1.0, SEARCH_TOL).1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualSolution {
    pub utility: Utility,
    pub eta: Vec<f64>,
    pub v: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_constant: Option<f64>,
    /// Minimising `(Q, M)` per period; they do not depend on `eta` for log utility.
    pub minimizers: Vec<DualMinimizer>,
}

impl DualSolution {
    /// Rows `(eta, v)`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["eta", "v"])?;
        for (e, v) in self.eta.iter().zip(&self.v) {
            w.write_record([e.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn solve_dual(market: &TreeMarket, family: &MeasureFamily, utility: Utility, eta_grid: &[f64]) -> Result<DualSolution> {
    if eta_grid.is_empty() || eta_grid.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(Error::invalid("eta grid must be non-empty and positive"));
    }
    let problem = dual_problem(market, family, utility)?;
    Ok(DualSolution {
        utility,
        eta: eta_grid.to_vec(),
        v: eta_grid.iter().map(|e| problem.value(*e)).collect(),
        log_constant: problem.log_constant(),
        minimizers: problem.minimizers.clone(),
    })
}

/// `min_eta (v(eta) + x eta)` on a grid and after local refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Conjugate {
    pub grid_min: f64,
    pub grid_argmin: f64,
    pub refined_min: f64,
    pub refined_argmin: f64,
}

pub fn conjugate(problem: &DualProblem, eta_grid: &[f64], x: f64) -> Conjugate {
    let vals: Vec<f64> = eta_grid.iter().map(|e| problem.value(*e) + x * e).collect();
    let mut j = 0;
    for (i, v) in vals.iter().enumerate() {
        if *v < vals[j] {
            j = i;
        }
    }
    let lo = eta_grid[j.saturating_sub(1)];
    let hi = eta_grid[(j + 1).min(eta_grid.len() - 1)];
    // Refine in ln(eta) inside the bracket of grid neighbours.
    let (le, lv) = golden_min(
        |l| {
            let e = l.exp();
            problem.value(e) + x * e
        },
        lo.ln(),
        hi.ln(),
        1e-13,
    );
    let (refined_min, refined_argmin) = if lv < vals[j] { (lv, le.exp()) } else { (vals[j], eta_grid[j]) };
    Conjugate {
        grid_min: vals[j],
        grid_argmin: eta_grid[j],
        refined_min,
        refined_argmin,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RefinementStep {
    pub n_points: usize,
    /// Grid gap at the requested wealth.
    pub gap: f64,
    /// Largest grid gap over the wealth band `x e^s`, `|s| <= h0`.
    pub sup_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualityReport {
    pub utility: Utility,
    pub x: f64,
    pub primal: f64,
    pub conjugate: Conjugate,
    /// `|u(x) - min_eta (v(eta) + x eta)|` on the base grid.
    pub gap_grid: f64,
    /// Same after local refinement of the minimiser.
    pub gap_refined: f64,
    /// Grid gaps along successive halvings of the log-spacing.
    pub refinement: Vec<RefinementStep>,
    /// Every halving at least halves the band gap, unless it is already at
    /// the rounding floor.
    pub halving_ok: bool,
    pub tolerance: f64,
    pub passed: bool,
    pub minimizers: Vec<DualMinimizer>,
}

/// Gaps below this are floating-point noise and exempt from the halving rule.
pub const GAP_FLOOR: f64 = 1e-11;

/// Wealth probes in the band used for the halving rule.
const BAND_PROBES: usize = 401;

/// Checks `u(x) = min_eta (v(eta) + x eta)` with grid refinement.
#[allow(clippy::too_many_arguments)]
pub fn duality_check(
    market: &TreeMarket,
    family: &MeasureFamily,
    utility: Utility,
    x: f64,
    n_points: usize,
    halvings: usize,
    tolerance: f64,
) -> Result<DualityReport> {
    if n_points < 3 {
        return Err(Error::invalid("dual grid needs at least three points"));
    }
    let primal = solve_primal(market, family, utility, x)?.value;
    let problem = dual_problem(market, family, utility)?;
    let base = log_grid(ETA_MIN, ETA_MAX, n_points);
    let conj = conjugate(&problem, &base, x);
    // The gap at a single wealth depends on where the dual minimiser falls
    // between nodes, and nested grids need not move a node closer at every
    // halving. The halving rule is therefore applied to the largest gap over
    // a band of wealths whose minimisers sweep at least one base cell.
    let h0 = (ETA_MAX / ETA_MIN).ln() / (n_points - 1) as f64;
    let band: Vec<(f64, f64)> = linspace(-h0, h0, BAND_PROBES)
        .into_iter()
        .map(|s| {
            let xs = x * s.exp();
            let u = match utility {
                Utility::Log {} => Ok(primal + s),
                _ => solve_primal(market, family, utility, xs).map(|sol| sol.value),
            };
            u.map(|u| (xs, u))
        })
        .collect::<Result<_>>()?;
    let mut refinement = Vec::with_capacity(halvings + 1);
    for h in 0..=halvings {
        let n = (n_points - 1) * (1 << h) + 1;
        let grid = log_grid(ETA_MIN, ETA_MAX, n);
        let c = if h == 0 { conj } else { conjugate(&problem, &grid, x) };
        let v: Vec<f64> = grid.iter().map(|e| problem.value(*e)).collect();
        let sup_gap = band
            .iter()
            .map(|(xs, u)| {
                let m = grid.iter().zip(&v).map(|(e, ve)| ve + xs * e).fold(f64::INFINITY, f64::min);
                (m - u).abs()
            })
            .fold(0.0, f64::max);
        refinement.push(RefinementStep {
            n_points: n,
            gap: (c.grid_min - primal).abs(),
            sup_gap,
        });
    }
    let halving_ok = refinement
        .windows(2)
        .all(|w| w[0].sup_gap <= GAP_FLOOR || w[1].sup_gap <= 0.5 * w[0].sup_gap);
    let gap_refined = (conj.refined_min - primal).abs();
    Ok(DualityReport {
        utility,
        x,
        primal,
        conjugate: conj,
        gap_grid: (conj.grid_min - primal).abs(),
        gap_refined,
        refinement,
        halving_ok,
        tolerance,
        passed: gap_refined <= tolerance && halving_ok,
        minimizers: problem.minimizers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::family::Kernel;

    #[test]
    fn complete_binomial_closed_form() {
        let m = TreeMarket::homogeneous(vec![0.1, -0.1], vec![0.6, 0.4], 3).unwrap();
        let d = dual_problem(&m, &MeasureFamily::Reference {}, Utility::Log {}).unwrap();
        // Unique martingale measure (1/2, 1/2): D = 3 KL(p | m).
        let kl = 0.6 * (0.6f64 / 0.5).ln() + 0.4 * (0.4f64 / 0.5).ln();
        assert!((d.log_constant().unwrap() - 3.0 * kl).abs() < 1e-14);
        let r = duality_check(&m, &MeasureFamily::Reference {}, Utility::Log {}, 1.3, 2000, 2, 1e-8).unwrap();
        assert!(r.gap_refined < 1e-8, "{r:?}");
    }

    #[test]
    fn trinomial_finite_family_duality() {
        let m = TreeMarket::homogeneous(vec![0.1, 0.0, -0.1], vec![0.3, 0.4, 0.3], 2).unwrap();
        let fam = MeasureFamily::Finite {
            periods: vec![vec![
                Kernel { q: vec![0.3, 0.4, 0.3], penalty: 0.0 },
                Kernel { q: vec![0.45, 0.35, 0.2], penalty: 0.002 },
                Kernel { q: vec![0.2, 0.4, 0.4], penalty: 0.001 },
            ]],
        };
        let r = duality_check(&m, &fam, Utility::Log {}, 1.0, 2000, 2, 1e-6).unwrap();
        assert!(r.gap_refined < 1e-6, "{r:?}");
    }

    #[test]
    fn one_period_power_duality() {
        let m = TreeMarket::homogeneous(vec![0.1, 0.0, -0.1], vec![0.35, 0.4, 0.25], 1).unwrap();
        for fam in [MeasureFamily::Reference {}, MeasureFamily::Entropic { delta: 1.0 }] {
            let u = Utility::Power { r: 2.0 };
            let primal = solve_primal(&m, &fam, u, 1.0).unwrap().value;
            let p = dual_problem(&m, &fam, u).unwrap();
            let c = conjugate(&p, &log_grid(0.05, 20.0, 60), 1.0);
            assert!((c.refined_min - primal).abs() < 1e-6, "{fam:?}: {} vs {primal}", c.refined_min);
        }
    }

    #[test]
    fn multi_period_power_dual_is_unsupported() {
        let m = TreeMarket::homogeneous(vec![0.1, -0.1], vec![0.5, 0.5], 2).unwrap();
        assert!(matches!(
            dual_problem(&m, &MeasureFamily::Reference {}, Utility::Power { r: 2.0 }),
            Err(Error::Unsupported(_))
        ));
    }
}
