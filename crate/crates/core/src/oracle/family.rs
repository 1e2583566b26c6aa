//! Ambiguity sets on trees and the one-period problems they induce.
//!
//! Rectangular families (reference, finite kernel sets, entropic) choose a
//! kernel per period independently; their penalties add up along the tree,
//! which is the discrete cocycle property. Finite kernel sets are used
//! through their convex hull with the mixture penalty `sum_j w_j g_j`, which
//! makes the set closed under node-wise mixing.

use serde::{Deserialize, Serialize};

use super::market::{emm_point, emm_vertices, Period, TreeMarket};
use crate::error::{Error, Result};
use crate::numeric::{golden_max, golden_min, kl_divergence, linspace, simplex_min};

/// Tolerance of every golden-section search in the oracle.
pub const SEARCH_TOL: f64 = 1e-10;

/// Points of the coarse sweep over the martingale segment.
pub const EMM_SWEEP: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kernel {
    pub q: Vec<f64>,
    #[serde(default)]
    pub penalty: f64,
}

/// The single admitted kernel of the horizon-dependent family on `[t, horizon)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TiltEntry {
    pub t: usize,
    pub horizon: usize,
    pub q: Vec<f64>,
}

/// A measure on the whole tree: one kernel per period (a single kernel is
/// broadcast to every period) and a lump-sum penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathMeasure {
    pub kernels: Vec<Vec<f64>>,
    #[serde(default)]
    pub penalty: f64,
}

impl PathMeasure {
    pub fn kernel(&self, k: usize) -> &[f64] {
        if self.kernels.len() == 1 {
            &self.kernels[0]
        } else {
            &self.kernels[k]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureFamily {
    /// Only the reference measure.
    Reference {},
    /// Per-period kernel sets; a single set is broadcast to every period.
    Finite { periods: Vec<Vec<Kernel>> },
    /// Every kernel, penalised by `delta * KL(q | p)` per period.
    Entropic { delta: f64 },
    /// One admitted kernel per problem `(t, horizon)`, penalised by minus
    /// its optimal log growth.
    HorizonDependent { table: Vec<TiltEntry> },
    /// Whole-tree measures mixed only globally, not node by node.
    NonRectangular { measures: Vec<PathMeasure> },
}

fn check_kernel(q: &[f64], per: &Period, period: usize) -> Result<()> {
    if q.len() != per.p.len() {
        return Err(Error::invalid(format!(
            "period {period}: kernel has {} entries for {} branches",
            q.len(),
            per.p.len()
        )));
    }
    if q.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid(format!(
            "period {period}: kernels must charge every branch (equivalence to the reference)"
        )));
    }
    let s: f64 = q.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("period {period}: kernel sums to {s}")));
    }
    Ok(())
}

impl MeasureFamily {
    pub fn is_rectangular(&self) -> bool {
        matches!(
            self,
            MeasureFamily::Reference {} | MeasureFamily::Finite { .. } | MeasureFamily::Entropic { .. }
        )
    }

    pub fn validate(&self, market: &TreeMarket) -> Result<()> {
        let n = market.n_periods();
        match self {
            MeasureFamily::Reference {} => Ok(()),
            MeasureFamily::Finite { periods } => {
                if periods.len() != 1 && periods.len() != n {
                    return Err(Error::invalid(format!(
                        "finite family lists {} periods for a {n}-period tree",
                        periods.len()
                    )));
                }
                for k in 0..n {
                    let set = self.kernels(k).expect("finite");
                    if set.is_empty() {
                        return Err(Error::EmptyFamily { period: k });
                    }
                    for ker in set {
                        check_kernel(&ker.q, &market.periods[k], k)?;
                        if !ker.penalty.is_finite() {
                            return Err(Error::invalid(format!("period {k}: penalty must be finite")));
                        }
                    }
                }
                Ok(())
            }
            MeasureFamily::Entropic { delta } => {
                if delta.is_finite() && *delta > 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("entropic delta must be positive, got {delta}")))
                }
            }
            MeasureFamily::HorizonDependent { table } => {
                if table.is_empty() {
                    return Err(Error::EmptyFamily { period: 0 });
                }
                for e in table {
                    if e.t >= e.horizon || e.horizon > n {
                        return Err(Error::invalid(format!(
                            "table entry ({}, {}) outside the {n}-period tree",
                            e.t, e.horizon
                        )));
                    }
                    for k in e.t..e.horizon {
                        check_kernel(&e.q, &market.periods[k], k)?;
                    }
                }
                Ok(())
            }
            MeasureFamily::NonRectangular { measures } => {
                if measures.is_empty() {
                    return Err(Error::EmptyFamily { period: 0 });
                }
                for m in measures {
                    if m.kernels.len() != 1 && m.kernels.len() != n {
                        return Err(Error::invalid("path measure needs one kernel or one per period"));
                    }
                    if !m.penalty.is_finite() {
                        return Err(Error::invalid("path-measure penalty must be finite"));
                    }
                    for k in 0..n {
                        check_kernel(m.kernel(k), &market.periods[k], k)?;
                    }
                }
                Ok(())
            }
        }
    }

    pub(crate) fn kernels(&self, k: usize) -> Option<&[Kernel]> {
        match self {
            MeasureFamily::Finite { periods } => Some(if periods.len() == 1 { &periods[0] } else { &periods[k] }),
            _ => None,
        }
    }

    pub(crate) fn tilt(&self, t: usize, horizon: usize) -> Result<&[f64]> {
        match self {
            MeasureFamily::HorizonDependent { table } => table
                .iter()
                .find(|e| e.t == t && e.horizon == horizon)
                .map(|e| e.q.as_slice())
                .ok_or_else(|| Error::invalid(format!("no table entry for problem ({t}, {horizon})"))),
            _ => Err(Error::invalid("family has no horizon table")),
        }
    }

    /// Robust one-period expectation `min_q E^q[z] + g(q)` of branch values
    /// `z` for a rectangular family.
    pub(crate) fn robust_expectation(&self, per: &Period, k: usize, z: &[f64]) -> f64 {
        match self {
            MeasureFamily::Reference {} => dot(&per.p, z),
            MeasureFamily::Finite { .. } => self
                .kernels(k)
                .expect("finite")
                .iter()
                .map(|ker| dot(&ker.q, z) + ker.penalty)
                .fold(f64::INFINITY, f64::min),
            MeasureFamily::Entropic { delta } => certainty_equivalent(&per.p, z, *delta),
            _ => unreachable!("robust_expectation needs a rectangular family"),
        }
    }

    /// A minimising kernel of the one-period problem for branch values `z`.
    pub(crate) fn worst_kernel(&self, per: &Period, k: usize, z: &[f64]) -> Vec<f64> {
        match self {
            MeasureFamily::Reference {} => per.p.clone(),
            MeasureFamily::Finite { .. } => {
                let ks = self.kernels(k).expect("finite");
                let j = argmin(ks.iter().map(|ker| dot(&ker.q, z) + ker.penalty));
                ks[j].q.clone()
            }
            MeasureFamily::Entropic { delta } => gibbs(&per.p, z, *delta),
            _ => unreachable!("worst_kernel needs a rectangular family"),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmin(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in it.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// `-delta ln E_p[exp(-z / delta)]`, evaluated stably.
pub fn certainty_equivalent(p: &[f64], z: &[f64], delta: f64) -> f64 {
    let exps: Vec<f64> = z.iter().map(|v| -v / delta).collect();
    -delta * crate::numeric::log_sum_exp_weighted(p, &exps)
}

/// Minimiser `q ∝ p exp(-z / delta)` of `E^q[z] + delta KL(q | p)`.
pub fn gibbs(p: &[f64], z: &[f64], delta: f64) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = p.iter().zip(z).map(|(pi, zi)| pi * (-(zi - m) / delta).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// `min_q E^q[z] + delta KL(q | p)` by direct search over the simplex; an
/// oracle for [`certainty_equivalent`].
pub fn entropic_by_search(p: &[f64], z: &[f64], delta: f64) -> f64 {
    let f = |q: &[f64]| dot(q, z) + delta * kl_divergence(q, p);
    simplex_min(&f, p.len(), 1e-12).1
}

/// `sum_i q_i ln(1 + f r_i)`.
pub(crate) fn log_growth_at(q: &[f64], returns: &[f64], f: f64) -> f64 {
    q.iter().zip(returns).map(|(qi, r)| qi * (1.0 + f * r).ln()).sum()
}

/// Golden-section bracket strictly inside the solvency interval.
pub(crate) fn inner_bracket(lo: f64, hi: f64) -> (f64, f64) {
    let eps = 1e-12 * (hi - lo);
    (lo + eps, hi - eps)
}

/// Maximiser of `E^q[ln(1 + f r)]`, found by bisection on the strictly
/// decreasing first-order condition `E^q[r / (1 + f r)] = 0`. This resolves
/// the maximiser to machine precision, where a search on the objective
/// itself stalls near the square root of the rounding error.
pub(crate) fn log_optimal_fraction(q: &[f64], returns: &[f64], lo: f64, hi: f64) -> f64 {
    let slope = |f: f64| -> f64 { q.iter().zip(returns).map(|(qi, r)| qi * r / (1.0 + f * r)).sum() };
    let (mut a, mut b) = inner_bracket(lo, hi);
    if slope(a) <= 0.0 {
        return a;
    }
    if slope(b) >= 0.0 {
        return b;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if slope(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Optimal log growth `max_f E^q[ln(1 + f r)]` and its maximiser.
pub fn optimal_log_growth(q: &[f64], market: &TreeMarket, k: usize) -> (f64, f64) {
    let (lo, hi) = market.fraction_bounds(k);
    let returns = &market.periods[k].returns;
    let f = log_optimal_fraction(q, returns, lo, hi);
    (log_growth_at(q, returns, f), f)
}

/// Minimises a convex function of the martingale-segment parameter: a
/// coarse sweep followed by golden-section refinement around the best
/// sweep point. Returns `(s, value)`.
pub(crate) fn minimize_over_segment<F: Fn(f64) -> f64>(f: F, single: bool) -> (f64, f64) {
    if single {
        return (0.0, f(0.0));
    }
    let grid = linspace(0.0, 1.0, EMM_SWEEP + 1);
    // Open segment: keep the sweep off the endpoints.
    let interior: Vec<f64> = grid[1..EMM_SWEEP].to_vec();
    let vals: Vec<f64> = interior.iter().map(|s| f(*s)).collect();
    let j = argmin(vals.iter().cloned());
    let lo = if j == 0 { 0.0 } else { interior[j - 1] };
    let hi = if j + 1 == interior.len() { 1.0 } else { interior[j + 1] };
    let (s, v) = golden_min(&f, lo, hi, SEARCH_TOL);
    if v <= vals[j] {
        (s, v)
    } else {
        (interior[j], vals[j])
    }
}

/// `min_m KL(q | m)` over one-period martingale measures, with the minimiser.
pub fn min_kl_to_martingale(q: &[f64], returns: &[f64], period: usize) -> Result<(Vec<f64>, f64)> {
    let verts = emm_vertices(returns, period)?;
    let (s, v) = minimize_over_segment(|s| kl_divergence(q, &emm_point(&verts, s)), verts.len() == 1);
    Ok((emm_point(&verts, s), v))
}

/// Penalised one-period dual term `min_{Q, m} KL(Q | m) + penalty(Q)` of a
/// rectangular family, with the minimising kernel and martingale measure.
pub(crate) fn dual_period_term(family: &MeasureFamily, market: &TreeMarket, k: usize) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let per = &market.periods[k];
    let verts = emm_vertices(&per.returns, k)?;
    let single = verts.len() == 1;
    match family {
        MeasureFamily::Reference {} => {
            let (m, v) = min_kl_to_martingale(&per.p, &per.returns, k)?;
            Ok((per.p.clone(), m, v))
        }
        MeasureFamily::Entropic { delta } => {
            // Inner minimum over q in closed form:
            // -(1 + delta) ln sum m^(1/(1+delta)) p^(delta/(1+delta)).
            let a = 1.0 / (1.0 + delta);
            let inner = |m: &[f64]| -> f64 {
                let s: f64 = m.iter().zip(&per.p).map(|(mi, pi)| mi.powf(a) * pi.powf(1.0 - a)).sum();
                -(1.0 + delta) * s.ln()
            };
            let (s, v) = minimize_over_segment(|s| inner(&emm_point(&verts, s)), single);
            let m = emm_point(&verts, s);
            let w: Vec<f64> = m.iter().zip(&per.p).map(|(mi, pi)| mi.powf(a) * pi.powf(1.0 - a)).collect();
            let tot: f64 = w.iter().sum();
            Ok((w.iter().map(|x| x / tot).collect(), m, v))
        }
        MeasureFamily::Finite { .. } => {
            let ks = family.kernels(k).expect("finite");
            let mix = |w: &[f64]| -> (Vec<f64>, f64) {
                let mut q = vec![0.0; per.p.len()];
                let mut g = 0.0;
                for (wj, ker) in w.iter().zip(ks) {
                    for (qi, kq) in q.iter_mut().zip(&ker.q) {
                        *qi += wj * kq;
                    }
                    g += wj * ker.penalty;
                }
                (q, g)
            };
            let objective = |m: &[f64]| {
                simplex_min(
                    &|w: &[f64]| {
                        let (q, g) = mix(w);
                        kl_divergence(&q, m) + g
                    },
                    ks.len(),
                    SEARCH_TOL,
                )
            };
            let (s, v) = minimize_over_segment(|s| objective(&emm_point(&verts, s)).1, single);
            let m = emm_point(&verts, s);
            let (w, _) = objective(&m);
            Ok((mix(&w).0, m, v))
        }
        _ => Err(Error::invalid("dual period term needs a rectangular family")),
    }
}

/// Solution of the one-period robust log-growth problem of a rectangular
/// family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodSolution {
    pub period: usize,
    /// Optimal fraction of wealth invested.
    pub fraction: f64,
    /// `max_f min_Q E^Q[ln(1 + f r)] + penalty(Q)`.
    pub growth: f64,
    /// Worst-case kernel at the optimum (saddle mixture for finite sets).
    pub worst_kernel: Vec<f64>,
    /// Saddle mixture weights over a finite kernel set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture: Option<Vec<f64>>,
}

pub(crate) fn solve_log_period(family: &MeasureFamily, market: &TreeMarket, k: usize) -> PeriodSolution {
    let per = &market.periods[k];
    let (lo, hi) = market.fraction_bounds(k);
    let (a, b) = inner_bracket(lo, hi);
    let branch = |f: f64| -> Vec<f64> { per.returns.iter().map(|r| (1.0 + f * r).ln()).collect() };
    let robust = |f: f64| family.robust_expectation(per, k, &branch(f));
    let (mut fraction, mut growth) = golden_max(robust, a, b, SEARCH_TOL);
    let (worst_kernel, mixture) = match family {
        MeasureFamily::Finite { .. } => {
            let ks = family.kernels(k).expect("finite");
            // Saddle mixture: min_w max_f sum_j w_j (E^{q_j}[ln(1 + f r)] + g_j).
            let (w, _) = simplex_min(
                &|w: &[f64]| {
                    golden_max(
                        |f| {
                            w.iter()
                                .zip(ks)
                                .map(|(wj, ker)| wj * (log_growth_at(&ker.q, &per.returns, f) + ker.penalty))
                                .sum()
                        },
                        a,
                        b,
                        SEARCH_TOL,
                    )
                    .1
                },
                ks.len(),
                SEARCH_TOL,
            );
            let mut q = vec![0.0; per.p.len()];
            for (wj, ker) in w.iter().zip(ks) {
                for (qi, kq) in q.iter_mut().zip(&ker.q) {
                    *qi += wj * kq;
                }
            }
            (q, Some(w))
        }
        _ => (family.worst_kernel(per, k, &branch(fraction)), None),
    };
    // At the saddle the fraction is log-optimal under the worst kernel;
    // re-solving that condition sharpens the golden-section estimate.
    let mut q = worst_kernel;
    for _ in 0..50 {
        let f = log_optimal_fraction(&q, &per.returns, lo, hi);
        let g = robust(f);
        if !(g >= growth - 1e-15) {
            break;
        }
        let moved = (f - fraction).abs();
        fraction = f;
        growth = growth.max(g);
        if mixture.is_some() || moved <= 1e-15 * (1.0 + f.abs()) {
            break;
        }
        q = family.worst_kernel(per, k, &branch(fraction));
    }
    let worst_kernel = match mixture {
        Some(_) => q,
        None => family.worst_kernel(per, k, &branch(fraction)),
    };
    PeriodSolution {
        period: k,
        fraction,
        growth,
        worst_kernel,
        mixture,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binomial(p: f64) -> TreeMarket {
        TreeMarket::homogeneous(vec![0.1, -0.1], vec![p, 1.0 - p], 1).unwrap()
    }

    #[test]
    fn one_period_log_examples() {
        let s = solve_log_period(&MeasureFamily::Reference {}, &binomial(0.5), 0);
        assert!(s.fraction.abs() < 1e-8);
        assert!(s.growth.abs() < 1e-15);
        let s = solve_log_period(&MeasureFamily::Reference {}, &binomial(0.6), 0);
        // -(p a + (1 - p) b) / (a b)
        assert!((s.fraction - 2.0).abs() < 1e-8, "{}", s.fraction);
    }

    #[test]
    fn entropic_closed_form_matches_search() {
        let p = [0.3, 0.45, 0.25];
        let z = [0.2, -0.1, 0.05];
        for delta in [0.5, 1.0, 3.0] {
            let a = certainty_equivalent(&p, &z, delta);
            let b = entropic_by_search(&p, &z, delta);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            let q = gibbs(&p, &z, delta);
            let c = dot(&q, &z) + delta * kl_divergence(&q, &p);
            assert!((a - c).abs() < 1e-14);
        }
    }

    #[test]
    fn log_growth_equals_min_kl_to_martingale() {
        let m = TreeMarket::homogeneous(vec![0.12, 0.01, -0.09], vec![0.3, 0.4, 0.3], 1).unwrap();
        let q = [0.35, 0.4, 0.25];
        let (g, _) = optimal_log_growth(&q, &m, 0);
        let (_, kl) = min_kl_to_martingale(&q, &m.periods[0].returns, 0).unwrap();
        assert!((g - kl).abs() < 1e-12, "{g} vs {kl}");
    }

    #[test]
    fn finite_family_validation() {
        let m = binomial(0.5);
        let bad = MeasureFamily::Finite {
            periods: vec![vec![Kernel { q: vec![1.0, 0.0], penalty: 0.0 }]],
        };
        assert!(bad.validate(&m).is_err());
        let empty = MeasureFamily::Finite { periods: vec![vec![]] };
        assert!(matches!(empty.validate(&m), Err(Error::EmptyFamily { .. })));
        assert!(MeasureFamily::Entropic { delta: 0.0 }.validate(&m).is_err());
    }
}
