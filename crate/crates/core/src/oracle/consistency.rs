//! Dynamic programming, time-consistency and entropic-reduction checks on
//! trees, plus the closed-form continuous-time inconsistency example.

use std::io::Write;

use serde::Serialize;

use super::family::{certainty_equivalent, optimal_log_growth, solve_log_period, MeasureFamily};
use super::market::{TreeMarket, Utility};
use super::primal::{
    entropic_value_by_search, log_constants, solve_horizon_problem, solve_primal, NonRectangular, Recursive,
};
use crate::error::{Error, Result};
use crate::measures::{degenerate_penalty, DegenerateEntry};
use crate::paths::TimeGrid;

/// Residual tolerance of the exact tree checks.
pub const EXACT_TOL: f64 = 1e-8;

/// Longest sub-interval recomputed node by node in a DPP check.
const MAX_DPP_SPAN: usize = 2;

/// Wealth levels at which value functions are compared.
const WEALTH_PROBES: [f64; 2] = [1.0, 2.5];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DppRow {
    pub s: usize,
    pub t: usize,
    /// Node of period `t` for path-dependent families.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<Vec<usize>>,
    pub wealth: f64,
    pub direct: f64,
    pub recomputed: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DppReport {
    pub family: String,
    pub rows: Vec<DppRow>,
    pub max_residual: f64,
    pub violations: Vec<DppRow>,
    pub holds: bool,
}

fn family_label(f: &MeasureFamily) -> &'static str {
    match f {
        MeasureFamily::Reference {} => "reference",
        MeasureFamily::Finite { .. } => "finite",
        MeasureFamily::Entropic { .. } => "entropic",
        MeasureFamily::HorizonDependent { .. } => "horizon_dependent",
        MeasureFamily::NonRectangular { .. } => "non_rectangular",
    }
}

fn report(family: &MeasureFamily, rows: Vec<DppRow>) -> DppReport {
    let max_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    let violations: Vec<DppRow> = rows.iter().filter(|r| r.residual > EXACT_TOL).cloned().collect();
    DppReport {
        family: family_label(family).into(),
        holds: violations.is_empty(),
        rows,
        max_residual,
        violations,
    }
}

/// Compares the direct backward-induction value `u(x; s, T)` with the value
/// recomputed through an intermediate time `t`,
/// `max_pi min_Q E^Q[u(X_t; t, T)] + gamma_{s,t}(Q)`.
///
/// Rectangular families are recomputed node by node on wealth over spans of
/// at most two periods. For the horizon-dependent family the value identity
/// `u(x; t, T) = ln x` is checked for every tabulated problem. For
/// non-rectangular families the continuation value of the time-0 worst case
/// is compared, node by node, with the robust value re-solved at that node.
pub fn check_dpp(market: &TreeMarket, family: &MeasureFamily) -> Result<DppReport> {
    market.validate()?;
    family.validate(market)?;
    let n = market.n_periods();
    let mut rows = Vec::new();
    match family {
        f if f.is_rectangular() => {
            let (_, c) = log_constants(market, family, 0, n);
            for s in 0..n {
                for t in s + 1..=(s + MAX_DPP_SPAN).min(n) {
                    let ct = c[t];
                    let terminal = move |x: f64| if x > 0.0 { x.ln() + ct } else { f64::NEG_INFINITY };
                    let rec = Recursive {
                        market,
                        family,
                        positive: true,
                        terminal: &terminal,
                        end: t,
                    };
                    for &x in &WEALTH_PROBES {
                        let direct = x.ln() + c[s];
                        let recomputed = rec.value(s, x);
                        rows.push(DppRow {
                            s,
                            t,
                            path: None,
                            wealth: x,
                            direct,
                            recomputed,
                            residual: (direct - recomputed).abs(),
                        });
                    }
                }
            }
        }
        MeasureFamily::HorizonDependent { table } => {
            for e in table {
                let (_, c) = solve_horizon_problem(market, family, e.t, e.horizon)?;
                for &x in &WEALTH_PROBES {
                    let direct = x.ln() + c;
                    rows.push(DppRow {
                        s: e.t,
                        t: e.horizon,
                        path: None,
                        wealth: x,
                        direct,
                        recomputed: x.ln(),
                        residual: (direct - x.ln()).abs(),
                    });
                }
            }
        }
        MeasureFamily::NonRectangular { measures } => {
            let nr = NonRectangular { market, measures };
            let step = |q: &[f64], k: usize| optimal_log_growth(q, market, k).0;
            let (lam, _) = nr.robust_constant(0, None, &step);
            // Node-wise robust constants depend on the period only, because
            // every measure uses the same kernel at all nodes of a period.
            let robust: Vec<f64> = (0..=n).map(|k| nr.robust_constant(k, None, &step).1).collect();
            fn walk(
                nr: &NonRectangular,
                path: &mut Vec<usize>,
                w: &[f64],
                robust: &[f64],
                rows: &mut Vec<DppRow>,
                step: &dyn Fn(&[f64], usize) -> f64,
            ) {
                let k = path.len();
                if k > 0 {
                    let pen: f64 = w.iter().zip(nr.measures).map(|(wj, m)| wj * m.penalty).sum();
                    let direct = pen + nr.growth_from(w, k, step);
                    rows.push(DppRow {
                        s: 0,
                        t: k,
                        path: Some(path.clone()),
                        wealth: 1.0,
                        direct,
                        recomputed: robust[k],
                        residual: (direct - robust[k]).abs(),
                    });
                }
                if k == nr.market.n_periods() {
                    return;
                }
                for i in 0..nr.market.branches(k) {
                    path.push(i);
                    walk(nr, path, &nr.posterior(w, k, i), robust, rows, step);
                    path.pop();
                }
            }
            walk(&nr, &mut Vec::new(), &lam, &robust, &mut rows, &step);
        }
        _ => unreachable!(),
    }
    Ok(report(family, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionRow {
    /// Start of the problem.
    pub t: usize,
    pub horizon: usize,
    /// Period at which the action is taken.
    pub period: usize,
    pub fraction: f64,
    pub worst_kernel: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub horizon: usize,
    pub horizon_bar: usize,
    /// Worst-case kernels for the longer horizon restricted to the shorter one.
    pub restriction_max_diff: f64,
    pub restriction_ok: bool,
    /// `pi^{t,T}_u` against `pi^{t,Tbar}_u` for `u < T`.
    pub horizon_max_diff: f64,
    pub horizon_ok: bool,
    /// `pi^{t,T}_u` against the rolled `pi^{u,T}_u`, for both horizons.
    pub rolling_max_diff: f64,
    pub rolling_ok: bool,
    pub comparisons: usize,
    pub actions: Vec<ActionRow>,
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Optimal actions of every problem `(t, H)` with `t < H`, `H` in
/// `{T, Tbar}`, solved independently of each other.
fn actions(market: &TreeMarket, family: &MeasureFamily, horizons: &[usize]) -> Result<Vec<ActionRow>> {
    let mut out = Vec::new();
    for &h in horizons {
        for t in 0..h {
            match family {
                f if f.is_rectangular() => {
                    for k in t..h {
                        let s = solve_log_period(family, market, k);
                        out.push(ActionRow {
                            t,
                            horizon: h,
                            period: k,
                            fraction: s.fraction,
                            worst_kernel: s.worst_kernel,
                        });
                    }
                }
                MeasureFamily::HorizonDependent { .. } => {
                    let Ok(q) = family.tilt(t, h) else { continue };
                    let q = q.to_vec();
                    let (fractions, _) = solve_horizon_problem(market, family, t, h)?;
                    for (j, f) in fractions.into_iter().enumerate() {
                        out.push(ActionRow {
                            t,
                            horizon: h,
                            period: t + j,
                            fraction: f,
                            worst_kernel: q.clone(),
                        });
                    }
                }
                _ => {
                    return Err(Error::Unsupported(
                        "time-consistency checks need a rectangular or horizon-dependent family".into(),
                    ))
                }
            }
        }
    }
    Ok(out)
}

pub fn check_time_consistency(
    market: &TreeMarket,
    family: &MeasureFamily,
    utility: Utility,
    horizon: usize,
    horizon_bar: usize,
) -> Result<ConsistencyReport> {
    market.validate()?;
    family.validate(market)?;
    if utility != (Utility::Log {}) {
        return Err(Error::Unsupported("time-consistency checks are implemented for log utility".into()));
    }
    if !(0 < horizon && horizon < horizon_bar && horizon_bar <= market.n_periods()) {
        return Err(Error::invalid(format!(
            "need 0 < T < Tbar <= {} periods, got T={horizon}, Tbar={horizon_bar}",
            market.n_periods()
        )));
    }
    let acts = actions(market, family, &[horizon, horizon_bar])?;
    let find = |t: usize, h: usize, k: usize| acts.iter().find(|a| a.t == t && a.horizon == h && a.period == k);
    let mut comparisons = 0;
    let (mut restriction, mut horizon_diff, mut rolling) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..horizon {
        for t in 0..=k {
            if let (Some(a), Some(b)) = (find(t, horizon, k), find(t, horizon_bar, k)) {
                restriction = restriction.max(sup_diff(&a.worst_kernel, &b.worst_kernel));
                horizon_diff = horizon_diff.max((a.fraction - b.fraction).abs());
                comparisons += 1;
            }
        }
    }
    for &h in &[horizon, horizon_bar] {
        for u in 0..h {
            for t in 0..u {
                if let (Some(a), Some(b)) = (find(t, h, u), find(u, h, u)) {
                    rolling = rolling.max((a.fraction - b.fraction).abs());
                    comparisons += 1;
                }
            }
        }
    }
    Ok(ConsistencyReport {
        horizon,
        horizon_bar,
        restriction_max_diff: restriction,
        restriction_ok: restriction <= EXACT_TOL,
        horizon_max_diff: horizon_diff,
        horizon_ok: horizon_diff <= EXACT_TOL,
        rolling_max_diff: rolling,
        rolling_ok: rolling <= EXACT_TOL,
        comparisons,
        actions: acts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoRow {
    pub t: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub lambda: f64,
    /// Constant optimal fraction `lambda / sigma` on `[t, T]`.
    pub pi: f64,
    /// `max_xi |u(xi; t, T) - ln xi|` on the probe grid.
    pub value_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoReport {
    pub sigma: f64,
    pub rows: Vec<DemoRow>,
    pub max_value_residual: f64,
    /// Some `pi^{t,T}` differs from `pi^{u,T}` with `t < u`.
    pub strategy_inconsistent: bool,
    /// Some `pi^{t,T1}` differs from `pi^{t,T2}`.
    pub horizon_inconsistent: bool,
}

impl DemoReport {
    /// Strategy table `(t, T, u, pi)` on the grid points `u` in `[t, T)`.
    pub fn write_csv<W: Write>(&self, grid: &TimeGrid, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "T", "u", "pi"])?;
        for r in &self.rows {
            let (from, to) = (grid.index_of(r.t)?, grid.index_of(r.horizon)?);
            for k in from..to {
                w.write_record([
                    r.t.to_string(),
                    r.horizon.to_string(),
                    grid.time(k).to_string(),
                    r.pi.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Continuous-time example with one admitted measure per problem `(t, T)`:
/// `pi^{t,T} = lambda^{t,T} / sigma` and
/// `u(xi; t, T) = ln xi + (T - t)(lambda^{t,T})^2 / 2 + gamma_{t,T} = ln xi`.
pub fn inconsistency_demo_continuous(table: &[DegenerateEntry], sigma: f64, grid: &TimeGrid) -> Result<DemoReport> {
    if !(sigma.is_finite() && sigma != 0.0) {
        return Err(Error::ZeroVolatility { index: 0 });
    }
    grid.validate()?;
    let probes = [0.5, 1.0, 2.0, 10.0];
    let mut rows = Vec::with_capacity(table.len());
    for e in table {
        if !e.lambda.is_finite() {
            return Err(Error::invalid("lambda table entries must be finite"));
        }
        grid.index_of(e.t)?;
        grid.index_of(e.horizon)?;
        if e.t >= e.horizon {
            return Err(Error::invalid(format!("need t < T in table entry ({}, {})", e.t, e.horizon)));
        }
        let growth = 0.5 * (e.horizon - e.t) * e.lambda * e.lambda;
        let gamma = degenerate_penalty(e.t, e.horizon, e.lambda);
        let value_residual = probes
            .iter()
            .map(|xi: &f64| ((xi.ln() + (growth + gamma)) - xi.ln()).abs())
            .fold(0.0, f64::max);
        rows.push(DemoRow {
            t: e.t,
            horizon: e.horizon,
            lambda: e.lambda,
            pi: e.lambda / sigma,
            value_residual,
        });
    }
    let strategy_inconsistent = rows
        .iter()
        .any(|a| rows.iter().any(|b| a.horizon == b.horizon && a.t < b.t && a.pi != b.pi));
    let horizon_inconsistent = rows
        .iter()
        .any(|a| rows.iter().any(|b| a.t == b.t && a.horizon != b.horizon && a.pi != b.pi));
    Ok(DemoReport {
        sigma,
        max_value_residual: rows.iter().map(|r| r.value_residual).fold(0.0, f64::max),
        rows,
        strategy_inconsistent,
        horizon_inconsistent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropicReduction {
    pub delta: f64,
    /// Robust value with the inner minimum searched over kernels.
    pub robust_value: f64,
    /// Backward induction of `-delta ln E_p[exp(-u / delta)]`.
    pub certainty_equivalent_value: f64,
    /// One-period certainty equivalent of the optimal terminal wealth.
    pub terminal_certainty_equivalent: Option<f64>,
    pub difference: f64,
}

/// Robust value under the penalty `delta KL(Q | P)` versus the certainty
/// equivalent transform, for log utility.
pub fn entropic_reduction(market: &TreeMarket, delta: f64, x0: f64) -> Result<EntropicReduction> {
    let family = MeasureFamily::Entropic { delta };
    let sol = solve_primal(market, &family, Utility::Log {}, x0)?;
    let robust_value = entropic_value_by_search(market, delta, x0)?;
    // On one-period trees the transform can be applied to terminal utility
    // directly at the optimal investment.
    let terminal_certainty_equivalent = (market.n_periods() == 1).then(|| {
        let per = &market.periods[0];
        let f = sol.periods[0].fraction;
        let u: Vec<f64> = per.returns.iter().map(|r| (x0 * (1.0 + f * r)).ln()).collect();
        certainty_equivalent(&per.p, &u, delta)
    });
    Ok(EntropicReduction {
        delta,
        robust_value,
        certainty_equivalent_value: sol.value,
        terminal_certainty_equivalent,
        difference: (robust_value - sol.value).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::family::{Kernel, PathMeasure, TiltEntry};

    fn trinomial(n: usize) -> TreeMarket {
        TreeMarket::homogeneous(vec![0.1, 0.0, -0.1], vec![0.3, 0.4, 0.3], n).unwrap()
    }

    #[test]
    fn rectangular_families_satisfy_the_dpp() {
        let m = trinomial(3);
        for fam in [
            MeasureFamily::Reference {},
            MeasureFamily::Entropic { delta: 1.0 },
            MeasureFamily::Finite {
                periods: vec![vec![
                    Kernel { q: vec![0.3, 0.4, 0.3], penalty: 0.0 },
                    Kernel { q: vec![0.4, 0.35, 0.25], penalty: 0.001 },
                ]],
            },
        ] {
            let r = check_dpp(&m, &fam).unwrap();
            assert!(r.holds, "{fam:?}: {}", r.max_residual);
        }
    }

    #[test]
    fn non_rectangular_family_breaks_the_dpp() {
        let m = TreeMarket::homogeneous(vec![0.1, -0.1], vec![0.5, 0.5], 2).unwrap();
        let fam = MeasureFamily::NonRectangular {
            measures: vec![
                PathMeasure { kernels: vec![vec![0.6, 0.4]], penalty: 0.0 },
                PathMeasure { kernels: vec![vec![0.4, 0.6]], penalty: 0.0 },
            ],
        };
        let r = check_dpp(&m, &fam).unwrap();
        assert!(!r.holds);
        assert!(r.violations.iter().all(|v| v.path.is_some()));
    }

    #[test]
    fn entropic_family_is_time_consistent() {
        let r = check_time_consistency(&trinomial(3), &MeasureFamily::Entropic { delta: 1.0 }, Utility::Log {}, 2, 3).unwrap();
        assert!(r.restriction_ok && r.horizon_ok && r.rolling_ok, "{r:?}");
    }

    #[test]
    fn tilted_family_is_strategy_and_horizon_inconsistent() {
        let m = TreeMarket::homogeneous(vec![0.1, -0.1], vec![0.5, 0.5], 2).unwrap();
        let fam = MeasureFamily::HorizonDependent {
            table: vec![
                TiltEntry { t: 0, horizon: 1, q: vec![0.55, 0.45] },
                TiltEntry { t: 0, horizon: 2, q: vec![0.6, 0.4] },
                TiltEntry { t: 1, horizon: 2, q: vec![0.7, 0.3] },
            ],
        };
        let r = check_time_consistency(&m, &fam, Utility::Log {}, 1, 2).unwrap();
        assert!(!r.rolling_ok && !r.horizon_ok);
        let d = check_dpp(&m, &fam).unwrap();
        assert!(d.max_residual < 1e-12, "{}", d.max_residual);
    }

    #[test]
    fn continuous_demo_examples() {
        let grid = TimeGrid::new(2.0, 8).unwrap();
        let e = |t, horizon, lambda| DegenerateEntry { t, horizon, lambda };
        let r = inconsistency_demo_continuous(&[e(0.0, 1.0, 0.2)], 0.2, &grid).unwrap();
        assert_eq!(r.rows[0].pi, 1.0);
        assert_eq!(r.max_value_residual, 0.0);
        let r = inconsistency_demo_continuous(&[e(0.0, 2.0, 0.1), e(1.0, 2.0, 0.3)], 0.2, &grid).unwrap();
        assert!((r.rows[0].pi - 0.5).abs() < 1e-15 && (r.rows[1].pi - 1.5).abs() < 1e-15);
        assert!(r.strategy_inconsistent);
        let r = inconsistency_demo_continuous(&[e(0.0, 1.0, 0.0), e(0.0, 2.0, 0.0)], 0.2, &grid).unwrap();
        assert!(!r.horizon_inconsistent && r.rows.iter().all(|x| x.pi == 0.0));
    }

    #[test]
    fn entropic_reduction_on_one_period() {
        let m = trinomial(1);
        let r = entropic_reduction(&m, 1.0, 1.0).unwrap();
        assert!(r.difference < 1e-10);
        assert!((r.terminal_certainty_equivalent.unwrap() - r.certainty_equivalent_value).abs() < 1e-14);
    }
}
