//! Robust expected-utility maximisation on trees by backward induction.

use serde::Serialize;

use super::family::{
    dot, inner_bracket, log_growth_at, min_kl_to_martingale, optimal_log_growth, solve_log_period, MeasureFamily,
    PeriodSolution, SEARCH_TOL,
};
use super::market::{TreeMarket, Utility};
use crate::error::{Error, Result};
use crate::numeric::{golden_max, simplex_min};

/// Node listings are emitted only for trees with at most this many nodes.
pub const MAX_LISTED_NODES: usize = 20_000;

/// Bound on leaf evaluations of the node-wise recursive solver.
const MAX_RECURSION_WORK: f64 = 2e8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeRecord {
    pub period: usize,
    /// Branch indices from the root.
    pub path: Vec<usize>,
    /// Wealth reached by following the optimal policy from `x0`.
    pub wealth: f64,
    pub value: f64,
    /// Amount invested in the risky asset (absent at terminal nodes).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amount: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_kernel: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeSolution {
    pub utility: Utility,
    pub x0: f64,
    /// `u(x0; 0, T)`.
    pub value: f64,
    /// Per-period solutions of separable (log, rectangular) problems.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub periods: Vec<PeriodSolution>,
    /// Global mixture weights of the worst case for non-rectangular families.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture: Option<Vec<f64>>,
    pub nodes: Vec<NodeRecord>,
    pub nodes_listed: bool,
    pub concave_in_wealth: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saddle_chain_ok: Option<bool>,
}

fn node_count(market: &TreeMarket) -> usize {
    let mut total = 1usize;
    let mut level = 1usize;
    for k in 0..market.n_periods() {
        level = level.saturating_mul(market.branches(k));
        total = total.saturating_add(level);
    }
    total
}

fn check_x0(utility: &Utility, x0: f64) -> Result<()> {
    if !x0.is_finite() || (utility.positive_domain() && x0 <= 0.0) {
        return Err(Error::invalid(format!("initial wealth {x0} outside the utility's domain")));
    }
    Ok(())
}

pub fn solve_primal(market: &TreeMarket, family: &MeasureFamily, utility: Utility, x0: f64) -> Result<TreeSolution> {
    market.validate()?;
    family.validate(market)?;
    utility.validate()?;
    check_x0(&utility, x0)?;
    match (utility, family) {
        (Utility::Log {}, f) if f.is_rectangular() => Ok(solve_log_rectangular(market, family, x0)),
        (Utility::Log {}, MeasureFamily::HorizonDependent { .. }) => solve_horizon_dependent(market, family, x0),
        (Utility::Log {}, MeasureFamily::NonRectangular { .. }) => solve_non_rectangular(market, family, x0),
        (_, f) if f.is_rectangular() => solve_recursive(market, family, utility, x0),
        _ => Err(Error::Unsupported(
            "horizon-dependent and non-rectangular families are solved for log utility only".into(),
        )),
    }
}

/// Per-period solutions and continuation constants `c_k` of the separable
/// log problem on periods `[start, end)`: `u_k(x) = ln x + c_k`.
pub(crate) fn log_constants(market: &TreeMarket, family: &MeasureFamily, start: usize, end: usize) -> (Vec<PeriodSolution>, Vec<f64>) {
    let sols: Vec<PeriodSolution> = (start..end).map(|k| solve_log_period(family, market, k)).collect();
    let mut c = vec![0.0; end - start + 1];
    for j in (0..end - start).rev() {
        c[j] = c[j + 1] + sols[j].growth;
    }
    (sols, c)
}

/// Visits every node in depth-first order; `visit(period, path)`.
fn for_each_node(market: &TreeMarket, mut visit: impl FnMut(usize, &[usize])) {
    fn rec(market: &TreeMarket, path: &mut Vec<usize>, visit: &mut dyn FnMut(usize, &[usize])) {
        let k = path.len();
        visit(k, path);
        if k == market.n_periods() {
            return;
        }
        for i in 0..market.branches(k) {
            path.push(i);
            rec(market, path, visit);
            path.pop();
        }
    }
    rec(market, &mut Vec::new(), &mut visit);
}

fn solve_log_rectangular(market: &TreeMarket, family: &MeasureFamily, x0: f64) -> TreeSolution {
    let n = market.n_periods();
    let (periods, c) = log_constants(market, family, 0, n);
    let listed = node_count(market) <= MAX_LISTED_NODES;
    let mut nodes = Vec::new();
    if listed {
        for_each_node(market, |k, path| {
            let wealth = path
                .iter()
                .enumerate()
                .fold(x0, |x, (j, &i)| x * (1.0 + periods[j].fraction * market.periods[j].returns[i]));
            let terminal = k == n;
            nodes.push(NodeRecord {
                period: k,
                path: path.to_vec(),
                wealth,
                value: wealth.ln() + c[k],
                amount: (!terminal).then(|| periods[k].fraction * wealth),
                worst_kernel: (!terminal).then(|| periods[k].worst_kernel.clone()),
            });
        });
    }
    let saddle_chain_ok = Some(periods.iter().all(|s| saddle_chain_holds(market, family, s)));
    TreeSolution {
        utility: Utility::Log {},
        x0,
        value: x0.ln() + c[0],
        periods,
        mixture: None,
        nodes,
        nodes_listed: listed,
        // ln x + c is concave and increasing in wealth at every node.
        concave_in_wealth: true,
        saddle_chain_ok,
    }
}

/// Saddle inequalities of one period: `phi(f, Q*) <= phi(f*, Q*) <= phi(f*, Q)`
/// for `f` on a test grid and `Q` over the family's extreme kernels.
pub(crate) fn saddle_chain_holds(market: &TreeMarket, family: &MeasureFamily, s: &PeriodSolution) -> bool {
    const TOL: f64 = 1e-9;
    let k = s.period;
    let per = &market.periods[k];
    let penalty_of = |q: &[f64]| -> f64 {
        match family {
            MeasureFamily::Reference {} => 0.0,
            MeasureFamily::Entropic { delta } => delta * crate::numeric::kl_divergence(q, &per.p),
            MeasureFamily::Finite { .. } => {
                let ks = family.kernels(k).expect("finite");
                s.mixture
                    .as_ref()
                    .map(|w| w.iter().zip(ks).map(|(wj, ker)| wj * ker.penalty).sum())
                    .unwrap_or(0.0)
            }
            _ => 0.0,
        }
    };
    let q_star = &s.worst_kernel;
    let g_star = penalty_of(q_star);
    let at = |f: f64, q: &[f64], g: f64| log_growth_at(q, &per.returns, f) + g;
    let centre = at(s.fraction, q_star, g_star);
    let (lo, hi) = market.fraction_bounds(k);
    let (a, b) = inner_bracket(lo, hi);
    let left_ok = crate::numeric::linspace(a + 0.01 * (b - a), b - 0.01 * (b - a), 41)
        .into_iter()
        .all(|f| at(f, q_star, g_star) <= centre + TOL);
    let right_ok = match family {
        MeasureFamily::Finite { .. } => family
            .kernels(k)
            .expect("finite")
            .iter()
            .all(|ker| at(s.fraction, &ker.q, ker.penalty) >= centre - TOL),
        MeasureFamily::Entropic { delta } => {
            // Probe kernels: the reference and a few tilts of it.
            let z: Vec<f64> = per.returns.iter().map(|r| (1.0 + s.fraction * r).ln()).collect();
            (0..per.p.len()).all(|i| {
                let mut q: Vec<f64> = per.p.iter().map(|p| 0.8 * p).collect();
                q[i] += 0.2;
                dot(&q, &z) + delta * crate::numeric::kl_divergence(&q, &per.p) >= centre - TOL
            }) && dot(&per.p, &z) >= centre - TOL
        }
        _ => true,
    };
    left_ok && right_ok
}

/// Optimal log growth of a kernel over periods `[t, horizon)`, computed on
/// the dual side as the minimal relative entropy to a martingale measure.
pub fn dual_growth(market: &TreeMarket, q: &[f64], t: usize, horizon: usize) -> Result<f64> {
    let mut total = 0.0;
    for k in t..horizon {
        total += min_kl_to_martingale(q, &market.periods[k].returns, k)?.1;
    }
    Ok(total)
}

/// Penalty of the horizon-dependent family: minus the optimal log growth of
/// the admitted kernel.
pub fn horizon_penalty(market: &TreeMarket, family: &MeasureFamily, t: usize, horizon: usize) -> Result<f64> {
    let q = family.tilt(t, horizon)?;
    Ok(-dual_growth(market, q, t, horizon)?)
}

/// Solution of one problem `(t, horizon)` of the horizon-dependent family:
/// per-period optimal fractions and the value constant `c` in `ln x + c`.
pub fn solve_horizon_problem(market: &TreeMarket, family: &MeasureFamily, t: usize, horizon: usize) -> Result<(Vec<f64>, f64)> {
    let q = family.tilt(t, horizon)?;
    let mut fractions = Vec::with_capacity(horizon - t);
    let mut growth = 0.0;
    for k in t..horizon {
        let (g, f) = optimal_log_growth(q, market, k);
        fractions.push(f);
        growth += g;
    }
    let penalty = horizon_penalty(market, family, t, horizon)?;
    Ok((fractions, growth + penalty))
}

fn solve_horizon_dependent(market: &TreeMarket, family: &MeasureFamily, x0: f64) -> Result<TreeSolution> {
    let n = market.n_periods();
    let q = family.tilt(0, n)?.to_vec();
    let steps: Vec<(f64, f64)> = (0..n).map(|k| optimal_log_growth(&q, market, k)).collect();
    let penalty = horizon_penalty(market, family, 0, n)?;
    // Remaining growth from period k on, under the admitted kernel.
    let mut remaining = vec![0.0; n + 1];
    for k in (0..n).rev() {
        remaining[k] = remaining[k + 1] + steps[k].0;
    }
    let listed = node_count(market) <= MAX_LISTED_NODES;
    let mut nodes = Vec::new();
    if listed {
        for_each_node(market, |k, path| {
            let wealth = path
                .iter()
                .enumerate()
                .fold(x0, |x, (j, &i)| x * (1.0 + steps[j].1 * market.periods[j].returns[i]));
            let terminal = k == n;
            // Continuation value of the time-0 problem, penalty included.
            nodes.push(NodeRecord {
                period: k,
                path: path.to_vec(),
                wealth,
                value: wealth.ln() + (remaining[k] + penalty),
                amount: (!terminal).then(|| steps[k].1 * wealth),
                worst_kernel: (!terminal).then(|| q.clone()),
            });
        });
    }
    Ok(TreeSolution {
        utility: Utility::Log {},
        x0,
        value: x0.ln() + (remaining[0] + penalty),
        periods: Vec::new(),
        mixture: None,
        nodes,
        nodes_listed: listed,
        concave_in_wealth: true,
        saddle_chain_ok: None,
    })
}

/// Whole-tree log problem for a non-rectangular family. For mixture weights
/// `lambda` the measure `Q_lambda = sum lambda_j Q_j` has path-dependent
/// kernels (posterior mixtures); its optimal log growth is accumulated node
/// by node. The robust value is `ln x + min_lambda [sum lambda_j g_j + G(lambda)]`.
pub(crate) struct NonRectangular<'a> {
    pub market: &'a TreeMarket,
    pub measures: &'a [super::family::PathMeasure],
}

impl NonRectangular<'_> {
    /// Conditional kernel at a node with posterior weights `w` at period `k`.
    pub fn kernel(&self, w: &[f64], k: usize) -> Vec<f64> {
        let b = self.market.branches(k);
        let mut q = vec![0.0; b];
        for (wj, m) in w.iter().zip(self.measures) {
            for (qi, mi) in q.iter_mut().zip(m.kernel(k)) {
                *qi += wj * mi;
            }
        }
        q
    }

    pub fn posterior(&self, w: &[f64], k: usize, i: usize) -> Vec<f64> {
        let mut post: Vec<f64> = w.iter().zip(self.measures).map(|(wj, m)| wj * m.kernel(k)[i]).collect();
        let s: f64 = post.iter().sum();
        if s > 0.0 {
            post.iter_mut().for_each(|v| *v /= s);
        }
        post
    }

    /// `G` from period `k` at a node with posterior `w`, where `step(q, k)`
    /// is the one-period optimal log growth of kernel `q`.
    pub fn growth_from(&self, w: &[f64], k: usize, step: &dyn Fn(&[f64], usize) -> f64) -> f64 {
        if k == self.market.n_periods() {
            return 0.0;
        }
        let q = self.kernel(w, k);
        let mut g = step(&q, k);
        for (i, qi) in q.iter().enumerate() {
            if *qi > 0.0 {
                g += qi * self.growth_from(&self.posterior(w, k, i), k + 1, step);
            }
        }
        g
    }

    /// `min_w [sum w_j g_j + G(w)]` from a node, with the minimiser.
    pub fn robust_constant(&self, k: usize, prior: Option<&[f64]>, step: &dyn Fn(&[f64], usize) -> f64) -> (Vec<f64>, f64) {
        let j = self.measures.len();
        let objective = |lam: &[f64]| -> f64 {
            // Weights at the node: the prior reweighted by lambda.
            let w: Vec<f64> = match prior {
                Some(p) => normalise(&lam.iter().zip(p).map(|(a, b)| a * b).collect::<Vec<_>>()),
                None => lam.to_vec(),
            };
            let pen: f64 = w.iter().zip(self.measures).map(|(wj, m)| wj * m.penalty).sum();
            pen + self.growth_from(&w, k, step)
        };
        simplex_min(&objective, j, 1e-9)
    }
}

pub(crate) fn normalise(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter().map(|x| x / s).collect()
    } else {
        v.to_vec()
    }
}

fn solve_non_rectangular(market: &TreeMarket, family: &MeasureFamily, x0: f64) -> Result<TreeSolution> {
    let MeasureFamily::NonRectangular { measures } = family else {
        unreachable!()
    };
    if measures.len() > 4 {
        return Err(Error::Unsupported("non-rectangular families are limited to four measures".into()));
    }
    let nr = NonRectangular { market, measures };
    let step = |q: &[f64], k: usize| optimal_log_growth(q, market, k).0;
    let (lam, c) = nr.robust_constant(0, None, &step);
    let listed = node_count(market) <= MAX_LISTED_NODES;
    let mut nodes = Vec::new();
    if listed {
        fn rec(
            nr: &NonRectangular,
            path: &mut Vec<usize>,
            w: &[f64],
            x: f64,
            nodes: &mut Vec<NodeRecord>,
            step: &dyn Fn(&[f64], usize) -> f64,
        ) {
            let k = path.len();
            let n = nr.market.n_periods();
            // Continuation value under the time-0 worst case.
            let pen: f64 = w.iter().zip(nr.measures).map(|(wj, m)| wj * m.penalty).sum();
            let value = x.ln() + pen + nr.growth_from(w, k, step);
            if k == n {
                nodes.push(NodeRecord {
                    period: k,
                    path: path.clone(),
                    wealth: x,
                    value,
                    amount: None,
                    worst_kernel: None,
                });
                return;
            }
            let q = nr.kernel(w, k);
            let f = optimal_log_growth(&q, nr.market, k).1;
            nodes.push(NodeRecord {
                period: k,
                path: path.clone(),
                wealth: x,
                value,
                amount: Some(f * x),
                worst_kernel: Some(q.clone()),
            });
            for i in 0..nr.market.branches(k) {
                path.push(i);
                let post = nr.posterior(w, k, i);
                rec(nr, path, &post, x * (1.0 + f * nr.market.periods[k].returns[i]), nodes, step);
                path.pop();
            }
        }
        rec(&nr, &mut Vec::new(), &lam, x0, &mut nodes, &step);
    }
    Ok(TreeSolution {
        utility: Utility::Log {},
        x0,
        value: x0.ln() + c,
        periods: Vec::new(),
        mixture: Some(lam),
        nodes,
        nodes_listed: listed,
        concave_in_wealth: true,
        saddle_chain_ok: None,
    })
}

/// Node-wise backward induction on wealth for rectangular families and any
/// utility, over periods `[start, end)` with terminal value function
/// `terminal`. Used for non-logarithmic utilities and as an independent
/// recomputation in DPP checks.
pub(crate) struct Recursive<'a> {
    pub market: &'a TreeMarket,
    pub family: &'a MeasureFamily,
    pub positive: bool,
    pub terminal: &'a dyn Fn(f64) -> f64,
    pub end: usize,
}

impl Recursive<'_> {
    fn bracket(&self, k: usize, x: f64) -> (f64, f64) {
        let r = &self.market.periods[k].returns;
        if self.positive {
            let (lo, hi) = self.market.fraction_bounds(k);
            inner_bracket(lo * x, hi * x)
        } else {
            let rmin = r.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
            let b = 60.0 / rmin.max(1e-12);
            (-b, b)
        }
    }

    fn objective(&self, k: usize, x: f64, a: f64) -> f64 {
        let per = &self.market.periods[k];
        let z: Vec<f64> = per.returns.iter().map(|r| self.value(k + 1, x + a * r)).collect();
        if z.iter().any(|v| v.is_nan()) {
            return f64::NEG_INFINITY;
        }
        self.family.robust_expectation(per, k, &z)
    }

    pub fn value(&self, k: usize, x: f64) -> f64 {
        if k == self.end {
            return (self.terminal)(x);
        }
        if self.positive && x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.solve(k, x).1
    }

    /// `(optimal amount, value)` at a node of period `k` with wealth `x`.
    pub fn solve(&self, k: usize, x: f64) -> (f64, f64) {
        let (lo, hi) = self.bracket(k, x);
        golden_max(|a| self.objective(k, x, a), lo, hi, SEARCH_TOL * (1.0 + x.abs()))
    }

    pub fn worst_kernel(&self, k: usize, x: f64, a: f64) -> Vec<f64> {
        let per = &self.market.periods[k];
        let z: Vec<f64> = per.returns.iter().map(|r| self.value(k + 1, x + a * r)).collect();
        self.family.worst_kernel(per, k, &z)
    }
}

pub(crate) fn recursion_work(market: &TreeMarket, start: usize, end: usize) -> f64 {
    (start..end).map(|k| 60.0 * market.branches(k) as f64).product()
}

fn solve_recursive(market: &TreeMarket, family: &MeasureFamily, utility: Utility, x0: f64) -> Result<TreeSolution> {
    let n = market.n_periods();
    if recursion_work(market, 0, n) > MAX_RECURSION_WORK {
        return Err(Error::Unsupported(format!(
            "{} utility is solved node by node; a {n}-period tree is too large",
            utility.label()
        )));
    }
    let terminal = move |x: f64| utility.value(x);
    let rec = Recursive {
        market,
        family,
        positive: utility.positive_domain(),
        terminal: &terminal,
        end: n,
    };
    let (_, value) = rec.solve(0, x0);
    let listed = node_count(market) <= MAX_LISTED_NODES && n <= 2;
    let mut nodes = Vec::new();
    if listed {
        fn walk(rec: &Recursive, path: &mut Vec<usize>, x: f64, nodes: &mut Vec<NodeRecord>) {
            let k = path.len();
            if k == rec.end {
                nodes.push(NodeRecord {
                    period: k,
                    path: path.clone(),
                    wealth: x,
                    value: (rec.terminal)(x),
                    amount: None,
                    worst_kernel: None,
                });
                return;
            }
            let (a, v) = rec.solve(k, x);
            nodes.push(NodeRecord {
                period: k,
                path: path.clone(),
                wealth: x,
                value: v,
                amount: Some(a),
                worst_kernel: Some(rec.worst_kernel(k, x, a)),
            });
            for (i, r) in rec.market.periods[k].returns.iter().enumerate() {
                path.push(i);
                walk(rec, path, x + a * r, nodes);
                path.pop();
            }
        }
        walk(&rec, &mut Vec::new(), x0, &mut nodes);
    }
    // Concavity and monotonicity of the root value on a small wealth grid.
    let h = if utility.positive_domain() { 0.25 * x0 } else { 0.5 };
    let probes: Vec<f64> = (-2..=2).map(|j| rec.value(0, x0 + j as f64 * h)).collect();
    let concave = probes.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] <= 1e-9)
        && probes.windows(2).all(|w| w[1] > w[0]);
    Ok(TreeSolution {
        utility,
        x0,
        value,
        periods: Vec::new(),
        mixture: None,
        nodes,
        nodes_listed: listed,
        concave_in_wealth: concave,
        saddle_chain_ok: None,
    })
}

/// Robust value of a rectangular family under the entropic penalty with
/// the inner minimum found by direct search over the kernel simplex rather
/// than the certainty-equivalent closed form.
pub fn entropic_value_by_search(market: &TreeMarket, delta: f64, x0: f64) -> Result<f64> {
    market.validate()?;
    let n = market.n_periods();
    let mut c = 0.0;
    for k in (0..n).rev() {
        let per = &market.periods[k];
        let (lo, hi) = market.fraction_bounds(k);
        let (a, b) = inner_bracket(lo, hi);
        let (_, g) = golden_max(
            |f| {
                let z: Vec<f64> = per.returns.iter().map(|r| (1.0 + f * r).ln()).collect();
                super::family::entropic_by_search(&per.p, &z, delta)
            },
            a,
            b,
            SEARCH_TOL,
        );
        c += g;
    }
    Ok(x0.ln() + c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::family::Kernel;

    fn binomial(p: f64, n: usize) -> TreeMarket {
        TreeMarket::homogeneous(vec![0.1, -0.1], vec![p, 1.0 - p], n).unwrap()
    }

    #[test]
    fn reference_log_examples() {
        let s = solve_primal(&binomial(0.5, 1), &MeasureFamily::Reference {}, Utility::Log {}, 2.0).unwrap();
        assert!((s.value - 2f64.ln()).abs() < 1e-15);
        assert!(s.nodes[0].amount.unwrap().abs() < 1e-7);
        let s = solve_primal(&binomial(0.6, 1), &MeasureFamily::Reference {}, Utility::Log {}, 1.0).unwrap();
        assert!((s.periods[0].fraction - 2.0).abs() < 1e-8);
        assert_eq!(s.saddle_chain_ok, Some(true));
    }

    #[test]
    fn recursive_solver_agrees_with_separable_log() {
        let m = TreeMarket::homogeneous(vec![0.12, 0.01, -0.09], vec![0.3, 0.4, 0.3], 2).unwrap();
        let fam = MeasureFamily::Entropic { delta: 1.0 };
        let sep = solve_primal(&m, &fam, Utility::Log {}, 1.5).unwrap();
        let term = |x: f64| x.ln();
        let rec = Recursive {
            market: &m,
            family: &fam,
            positive: true,
            terminal: &term,
            end: 2,
        };
        let v = rec.value(0, 1.5);
        assert!((v - sep.value).abs() < 1e-10, "{v} vs {}", sep.value);
    }

    #[test]
    fn finite_family_saddle_chain() {
        let m = TreeMarket::homogeneous(vec![0.1, 0.0, -0.1], vec![0.3, 0.4, 0.3], 1).unwrap();
        let fam = MeasureFamily::Finite {
            periods: vec![vec![
                Kernel { q: vec![0.3, 0.4, 0.3], penalty: 0.0 },
                Kernel { q: vec![0.45, 0.35, 0.2], penalty: 0.002 },
                Kernel { q: vec![0.2, 0.4, 0.4], penalty: 0.001 },
            ]],
        };
        let s = solve_primal(&m, &fam, Utility::Log {}, 1.0).unwrap();
        assert_eq!(s.saddle_chain_ok, Some(true));
        let w = s.periods[0].mixture.as_ref().unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn power_and_exp_solutions_are_concave() {
        let m = binomial(0.55, 2);
        for u in [Utility::Power { r: 2.0 }, Utility::Exp { alpha: 1.0 }] {
            let s = solve_primal(&m, &MeasureFamily::Entropic { delta: 1.0 }, u, 1.0).unwrap();
            assert!(s.concave_in_wealth, "{u:?}");
            assert!(s.value.is_finite());
        }
    }

    #[test]
    fn entropic_search_matches_closed_form() {
        let m = TreeMarket::homogeneous(vec![0.12, 0.01, -0.09], vec![0.3, 0.4, 0.3], 2).unwrap();
        let a = solve_primal(&m, &MeasureFamily::Entropic { delta: 0.7 }, Utility::Log {}, 1.0).unwrap();
        let b = entropic_value_by_search(&m, 0.7, 1.0).unwrap();
        assert!((a.value - b).abs() < 1e-10, "{} vs {b}", a.value);
    }
}
