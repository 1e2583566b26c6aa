//! One runner per experiment kind.

use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use super::config::*;
use super::Outcome;
use crate::criteria::field_log;
use crate::dualpde::{
    drift_by_grid, drift_from_relation, drift_integral, hjb_refinement, pointwise_inf, quadratic_drift, Ansatz,
    PenaltyIntegrand,
};
use crate::error::Result;
use crate::measures::{GeneratorPaths, PenaltySpec};
use crate::numeric::{log_grid, SampleStats};
use crate::oracle::consistency::EXACT_TOL;
use crate::oracle::dual::{ETA_MAX, ETA_MIN};
use crate::oracle::{
    check_dpp, check_time_consistency, duality_check, entropic_reduction, inconsistency_demo_continuous, solve_dual,
    solve_primal, MeasureFamily, Utility,
};
use crate::paths::{wealth_from_strategy, CoefficientPaths, CoefficientSpec, Ensemble, PathGenerator, TimeGrid};
use crate::strategies::{fractional_kelly, worst_case_generator};
use crate::verify::{
    conditional_drift_test, dual_gap_closed, dual_submartingale_test, drift_test, drift_test_reweighted,
    reference_drift, self_generation_scan, McParams, Verdict,
};

/// Tolerance of the three-way drift agreement for constant coefficients.
const TRIANGLE_TOL: f64 = 1e-8;

/// Relative slack of the negative-control margin; the discrete second
/// difference perturbs `y^2 V_yy` by `O(dy^2)`.
const MARGIN_SLACK: f64 = 0.05;

pub(super) fn run_experiment(config: &ExperimentConfig, base: &Path) -> Result<Outcome> {
    let seed = config.seed;
    match &config.experiment {
        Experiment::Simulate(p) => simulate(p, seed),
        Experiment::VerifySaddle(p) => verify_saddle(p, seed),
        Experiment::VerifyDual(p) => verify_dual(p, seed),
        Experiment::TreeDuality(p) => tree_duality(p, base),
        Experiment::TreeDpp(p) => tree_dpp(p, base),
        Experiment::TreeConsistency(p) => tree_consistency(p, base),
        Experiment::InconsistencyDemo(p) => inconsistency_demo(p),
        Experiment::PdeDrift(p) => pde_drift(p),
        Experiment::PdeResidual(p) => pde_residual(p),
    }
}

fn setup(s: &SimulationSetup) -> Result<(TimeGrid, Arc<CoefficientPaths>)> {
    let grid = TimeGrid::new(s.horizon, s.n_steps)?;
    let coeffs = Arc::new(s.market.realize(&grid)?);
    Ok((grid, coeffs))
}

fn mc(s: &SimulationSetup, seed: u64) -> McParams {
    McParams {
        n_paths: s.n_paths,
        seed,
        antithetic: s.antithetic,
    }
}

fn simulate(p: &SimulateParams, seed: u64) -> Result<Outcome> {
    let s = &p.simulation;
    let (grid, coeffs) = setup(s)?;
    if s.n_paths == 0 {
        return Err(crate::Error::invalid("n_paths must be at least 1"));
    }
    let field = field_log(&coeffs, grid)?;
    let gen = PathGenerator::new(grid, Arc::clone(&coeffs), p.s0, seed)?.with_antithetic(s.antithetic);
    let n = grid.n_steps;
    let terminal: Vec<(f64, f64)> = gen
        .map_paths(s.n_paths, |b| -> Result<(f64, f64)> {
            let w = wealth_from_strategy(b, &p.strategy, p.x0)?;
            Ok((b.s[n], w.x[n]))
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let prices: Vec<f64> = terminal.iter().map(|t| t.0).collect();
    let log_wealth: Vec<f64> = terminal.iter().map(|t| t.1.ln()).collect();
    let increments: Vec<f64> = log_wealth.iter().map(|l| l - p.x0.ln() + field.a[n]).collect();

    let mut o = Outcome::default();
    o.insert("strategy", &p.strategy.label())?;
    o.insert("terminal_price", &SampleStats::from_slice(&prices))?;
    o.insert("terminal_log_wealth", &SampleStats::from_slice(&log_wealth))?;
    o.insert("criterion_increment", &SampleStats::from_slice(&increments))?;
    if matches!(p.strategy, crate::strategies::Strategy::FractionalKelly {}) {
        o.insert("criterion_increment_exact", &reference_drift(&field, &coeffs, 0.0, grid.horizon)?)?;
    }
    o.insert("A_T", &field.a[n])?;
    let finite = terminal.iter().all(|(a, b)| a.is_finite() && b.is_finite());
    o.check("finite_paths", finite, "terminal prices and wealth are finite");
    o.table("field.csv", |buf| field.write_csv(buf))?;
    if p.export_paths {
        let ens = Ensemble {
            coefficients: s.market.clone(),
            grid,
            seed,
            s0: p.s0,
            paths: gen.map_paths(s.n_paths, |b| b.clone()),
        };
        o.table("ensemble.csv", |buf| ens.write_csv(buf))?;
    }
    Ok(o)
}

fn quadratic_penalty(s: &SimulationSetup) -> PenaltySpec {
    PenaltySpec::Quadratic {
        delta: s.market.delta.clone(),
    }
}

fn verify_saddle(p: &VerifySaddleParams, seed: u64) -> Result<Outcome> {
    let s = &p.simulation;
    let (grid, coeffs) = setup(s)?;
    let field = field_log(&coeffs, grid)?;
    let penalty = quadratic_penalty(s);
    let strategy = fractional_kelly(&coeffs)?;
    let eta_bar = worst_case_generator(&coeffs);
    let horizon = grid.horizon;
    let params = mc(s, seed);
    let mut o = Outcome::default();

    let saddle = drift_test(&field, Arc::clone(&coeffs), &strategy, &eta_bar, &penalty, p.t, horizon, params)?;
    o.check(
        "saddle_martingale",
        saddle.verdict == Verdict::MartingaleConsistent,
        format!("estimate {:e} stderr {:e}", saddle.estimate, saddle.stderr),
    );
    o.insert("saddle_drift", &saddle)?;

    let zero = GeneratorPaths::zero(grid.n_steps);
    let reference = drift_test(&field, Arc::clone(&coeffs), &strategy, &zero, &penalty, p.t, horizon, params)?;
    let exact = reference_drift(&field, &coeffs, p.t, horizon)?;
    o.check(
        "reference_drift",
        reference.is_consistent_with(exact),
        format!("estimate {:e} stderr {:e} exact {:e}", reference.estimate, reference.stderr, exact),
    );
    o.insert("reference_drift", &json!({ "report": reference, "exact": exact }))?;

    if p.reweighted {
        let r = drift_test_reweighted(&field, Arc::clone(&coeffs), &strategy, &eta_bar, &penalty, p.t, horizon, params)?;
        o.check(
            "saddle_martingale_reweighted",
            r.verdict == Verdict::MartingaleConsistent,
            format!("estimate {:e} stderr {:e}", r.estimate, r.stderr),
        );
        o.insert("saddle_drift_reweighted", &r)?;
    }
    if let Some(scan) = &p.scan {
        let smc = McParams {
            n_paths: scan.n_paths,
            ..params
        };
        let r = self_generation_scan(
            &field,
            Arc::clone(&coeffs),
            scan.x,
            p.t,
            horizon,
            &scan.rho_grid,
            &scan.c_grid,
            smc,
        )?;
        let c = &r.checks;
        for (name, ok) in [
            ("value_at_saddle", c.value_at_saddle),
            ("min_in_c", c.min_in_c),
            ("max_in_rho", c.max_in_rho),
            ("rho_vertex", c.rho_vertex_ok),
            ("c_vertex", c.c_vertex_ok),
        ] {
            o.check(format!("self_generation.{name}"), ok, "surface scan");
        }
        o.table("surface.csv", |buf| r.write_csv(buf))?;
        o.insert("self_generation", &r)?;
    }
    if let Some(cond) = &p.conditional {
        let cmc = McParams {
            n_paths: cond.n_paths,
            ..params
        };
        let reps = conditional_drift_test(
            &field,
            Arc::clone(&coeffs),
            &strategy,
            &eta_bar,
            &penalty,
            cond.t,
            horizon,
            cond.n_states,
            cmc,
        )?;
        for (i, r) in reps.iter().enumerate() {
            o.check(
                format!("conditional_martingale.{i}"),
                r.verdict == Verdict::MartingaleConsistent,
                format!("estimate {:e} stderr {:e}", r.estimate, r.stderr),
            );
        }
        o.insert("conditional_drift", &reps)?;
    }
    o.table("field.csv", |buf| field.write_csv(buf))?;
    Ok(o)
}

fn verify_dual(p: &VerifyDualParams, seed: u64) -> Result<Outcome> {
    let s = &p.simulation;
    let (grid, coeffs) = setup(s)?;
    let field = field_log(&coeffs, grid)?;
    let penalty = quadratic_penalty(s);
    let nu = p.nu.realize(&grid)?;
    let params = mc(s, seed);
    let mut o = Outcome::default();
    let mut rows = Vec::new();
    for (i, spec) in p.generators.iter().enumerate() {
        let g = spec.realize(&grid, &coeffs)?;
        let r = dual_submartingale_test(&field, Arc::clone(&coeffs), &nu, &g, &penalty, p.y, p.t, grid.horizon, params)?;
        let exact = dual_gap_closed(&field, &coeffs, &nu, &g, p.t, grid.horizon)?;
        o.check(
            format!("dual_submartingale.{i}"),
            r.verdict.is_submartingale_consistent(),
            format!("estimate {:e} stderr {:e}", r.estimate, r.stderr),
        );
        o.check(
            format!("dual_gap_exact.{i}"),
            r.is_consistent_with(exact),
            format!("estimate {:e} exact {:e}", r.estimate, exact),
        );
        if exact.abs() <= EXACT_TOL {
            o.check(
                format!("dual_saddle_martingale.{i}"),
                r.verdict == Verdict::MartingaleConsistent,
                format!("estimate {:e} stderr {:e}", r.estimate, r.stderr),
            );
        }
        rows.push(json!({ "generator": spec, "report": r, "exact_gap": exact }));
    }
    o.insert("dual_tests", &rows)?;
    Ok(o)
}

fn tree_duality(p: &TreeDualityParams, base: &Path) -> Result<Outcome> {
    let spec = p.tree.load(base)?;
    let x = p.x.unwrap_or(spec.x0);
    let (m, f, u) = (&spec.market, &spec.family, spec.utility);
    let report = duality_check(m, f, u, x, p.n_points, p.halvings, p.tolerance)?;
    let mut o = Outcome::default();
    o.check(
        "duality_gap",
        report.gap_refined <= p.tolerance,
        format!("gap {:e} tolerance {:e}", report.gap_refined, p.tolerance),
    );
    o.check(
        "gap_halving",
        report.halving_ok,
        format!("band gaps {:?}", report.refinement.iter().map(|r| r.sup_gap).collect::<Vec<_>>()),
    );
    if let (MeasureFamily::Entropic { delta }, Utility::Log {}) = (f, u) {
        let er = entropic_reduction(m, *delta, x)?;
        o.check(
            "entropic_reduction",
            er.difference <= EXACT_TOL,
            format!("difference {:e}", er.difference),
        );
        o.insert("entropic_reduction", &er)?;
    }
    let primal = solve_primal(m, f, u, x)?;
    let dual = solve_dual(m, f, u, &log_grid(ETA_MIN, ETA_MAX, p.n_points))?;
    o.table("dual.csv", |buf| dual.write_csv(buf))?;
    o.table("refinement.csv", |buf| write_rows(buf, &report.refinement))?;
    o.insert("label", &spec.label)?;
    o.insert("primal_value", &primal.value)?;
    o.insert("periods", &primal.periods)?;
    o.insert("duality", &report)?;
    Ok(o)
}

fn write_rows<T: Serialize>(buf: &mut Vec<u8>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(buf);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DppCsvRow {
    s: usize,
    t: usize,
    path: String,
    wealth: f64,
    direct: f64,
    recomputed: f64,
    residual: f64,
}

fn tree_dpp(p: &TreeDppParams, base: &Path) -> Result<Outcome> {
    let spec = p.tree.load(base)?;
    let r = check_dpp(&spec.market, &spec.family)?;
    let mut o = Outcome::default();
    let name = if p.expect_holds { "dpp_holds" } else { "dpp_violated" };
    o.check(
        name,
        r.holds == p.expect_holds,
        format!("max residual {:e}, {} violations", r.max_residual, r.violations.len()),
    );
    let rows: Vec<DppCsvRow> = r
        .rows
        .iter()
        .map(|row| DppCsvRow {
            s: row.s,
            t: row.t,
            path: row
                .path
                .as_ref()
                .map(|p| p.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("-"))
                .unwrap_or_default(),
            wealth: row.wealth,
            direct: row.direct,
            recomputed: row.recomputed,
            residual: row.residual,
        })
        .collect();
    o.table("dpp.csv", |buf| write_rows(buf, &rows))?;
    o.insert("label", &spec.label)?;
    o.insert("dpp", &r)?;
    Ok(o)
}

#[derive(Serialize)]
struct ActionCsvRow {
    t: usize,
    horizon: usize,
    period: usize,
    fraction: f64,
}

fn tree_consistency(p: &TreeConsistencyParams, base: &Path) -> Result<Outcome> {
    let spec = p.tree.load(base)?;
    let r = check_time_consistency(&spec.market, &spec.family, spec.utility, p.horizon, p.horizon_bar)?;
    let mut o = Outcome::default();
    if p.expect_consistent {
        o.check("restriction", r.restriction_ok, format!("max diff {:e}", r.restriction_max_diff));
        o.check("horizon_consistency", r.horizon_ok, format!("max diff {:e}", r.horizon_max_diff));
        o.check("rolling", r.rolling_ok, format!("max diff {:e}", r.rolling_max_diff));
    } else {
        o.check(
            "strategy_inconsistency",
            !r.rolling_ok,
            format!("max rolled difference {:e}", r.rolling_max_diff),
        );
        o.check(
            "horizon_inconsistency",
            !r.horizon_ok,
            format!("max horizon difference {:e}", r.horizon_max_diff),
        );
        let dpp = check_dpp(&spec.market, &spec.family)?;
        o.check(
            "value_identity",
            dpp.max_residual <= EXACT_TOL,
            format!("max |u - ln x| {:e}", dpp.max_residual),
        );
        o.insert("value_identity_residual", &dpp.max_residual)?;
    }
    let rows: Vec<ActionCsvRow> = r
        .actions
        .iter()
        .map(|a| ActionCsvRow {
            t: a.t,
            horizon: a.horizon,
            period: a.period,
            fraction: a.fraction,
        })
        .collect();
    o.table("actions.csv", |buf| write_rows(buf, &rows))?;
    o.insert("label", &spec.label)?;
    o.insert("consistency", &r)?;
    Ok(o)
}

fn inconsistency_demo(p: &InconsistencyDemoParams) -> Result<Outcome> {
    let grid = TimeGrid::new(p.horizon, p.n_steps)?;
    let r = inconsistency_demo_continuous(&p.table, p.sigma, &grid)?;
    let mut o = Outcome::default();
    o.check(
        "value_identity",
        r.max_value_residual == 0.0,
        format!("max residual {:e}", r.max_value_residual),
    );
    if let Some(e) = p.expect_strategy_inconsistent {
        o.check(
            "strategy_inconsistency",
            r.strategy_inconsistent == e,
            format!("observed {}, expected {e}", r.strategy_inconsistent),
        );
    }
    if let Some(e) = p.expect_horizon_inconsistent {
        o.check(
            "horizon_inconsistency",
            r.horizon_inconsistent == e,
            format!("observed {}, expected {e}", r.horizon_inconsistent),
        );
    }
    o.table("strategy.csv", |buf| r.write_csv(&grid, buf))?;
    o.insert("demo", &r)?;
    Ok(o)
}

/// Closed-form drift for `a = 0`, where one exists.
fn closed_drift(g: &PenaltyIntegrand, a: [f64; 2], lambda: f64) -> Option<f64> {
    if a != [0.0, 0.0] {
        return None;
    }
    match *g {
        PenaltyIntegrand::Quadratic { delta } if delta > -1.0 => Some(quadratic_drift(delta, lambda)),
        PenaltyIntegrand::NoAmbiguity {} => Some(-0.5 * lambda * lambda),
        _ => None,
    }
}

fn pde_drift(p: &PdeDriftParams) -> Result<Outcome> {
    let d = drift_from_relation(&p.penalty, p.a, p.lambda_hat)?;
    let gd = drift_by_grid(&p.penalty, p.a, p.lambda_hat, p.grid.half_width, p.grid.step)?;
    let mut o = Outcome::default();
    o.check(
        "search_vs_grid",
        (d.b - gd.b).abs() <= p.tolerance,
        format!("search {:e} grid {:e}", d.b, gd.b),
    );
    if let Some(exact) = closed_drift(&p.penalty, p.a, p.lambda_hat) {
        o.check(
            "search_vs_stationarity",
            (d.b - exact).abs() <= p.tolerance,
            format!("search {:e} exact {:e}", d.b, exact),
        );
        o.check(
            "grid_vs_stationarity",
            (gd.b - exact).abs() <= p.tolerance,
            format!("grid {:e} exact {:e}", gd.b, exact),
        );
        o.insert("stationarity", &exact)?;
    }
    if p.a == [0.0, 0.0] {
        // Drift relation, slope of the accumulator and the negated HJB
        // infimum must coincide for constant coefficients.
        let acc = drift_integral(&p.penalty, &CoefficientSpec::Constant(p.lambda_hat), &TimeGrid::new(1.0, 1)?)?;
        let slope = acc[1] - acc[0];
        let inf = pointwise_inf(&p.penalty, 1.0, [0.0, 0.0], p.lambda_hat)?.0;
        o.check(
            "consistency_triangle",
            (d.b - slope).abs() <= TRIANGLE_TOL && (d.b + inf).abs() <= TRIANGLE_TOL,
            format!("relation {:e} accumulator slope {:e} negated infimum {:e}", d.b, slope, -inf),
        );
        o.insert("triangle", &json!({ "relation": d.b, "accumulator_slope": slope, "negated_infimum": -inf }))?;
    }
    o.insert("drift", &d)?;
    o.insert("grid_drift", &gd)?;
    Ok(o)
}

fn pde_residual(p: &PdeResidualParams) -> Result<Outcome> {
    let (rep, finest) = hjb_refinement(p.ansatz, &p.penalty, &p.lambda_hat, &p.plan)?;
    let mut o = Outcome::default();
    if p.ansatz == Ansatz::LogDrift {
        o.check(
            "residual_rate",
            rep.rate_ok,
            format!(
                "residuals {:?}",
                rep.levels.iter().map(|l| l.max_residual).collect::<Vec<_>>()
            ),
        );
    }
    o.table("refinement.csv", |buf| write_rows(buf, &rep.levels))?;
    o.table("residuals.csv", |buf| finest.write_csv(buf))?;
    o.insert("refinement", &rep)?;
    o.insert("finest", &finest)?;
    if p.negative_control {
        let (neg, neg_finest) = hjb_refinement(Ansatz::Static, &p.penalty, &p.lambda_hat, &p.plan)?;
        let n_t = p.plan.n_t << p.plan.levels;
        let lam = p.lambda_hat.realize(&TimeGrid::new(p.plan.horizon, n_t)?)?;
        let margin = lam
            .iter()
            .map(|l| drift_from_relation(&p.penalty, [0.0, 0.0], *l).map(|d| -d.b))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        o.check(
            "negative_control_margin",
            neg_finest.min_abs_residual >= (1.0 - MARGIN_SLACK) * margin,
            format!("min |residual| {:e} predicted margin {:e}", neg_finest.min_abs_residual, margin),
        );
        o.insert("negative_control", &json!({ "refinement": neg, "margin": margin, "min_abs_residual": neg_finest.min_abs_residual }))?;
    }
    Ok(o)
}
