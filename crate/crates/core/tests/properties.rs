//! Property tests of the library's invariants.

use std::path::Path;

use proptest::prelude::*;
use robust_forward::criteria::{equivalent_standard_fields, field_log};
use robust_forward::dualpde::{drift_from_relation, quadratic_drift, PenaltyIntegrand};
use robust_forward::oracle::{
    check_dpp, duality_check, entropic_reduction, solve_primal, Kernel, MeasureFamily, TreeMarket, Utility,
};
use robust_forward::paths::{simulate_ensemble, CoefficientPaths, MarketCoefficients, TimeGrid};
use robust_forward::strategies::{kelly_fractions, worst_case_generator};
use robust_forward::verify::Verdict;

fn binomial() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.02..0.5f64, -0.5..-0.02f64, 0.1..0.9f64)
}

fn kernel(n: usize) -> impl Strategy<Value = Kernel> {
    (prop::collection::vec(0.05..1.0f64, n), 0.0..0.01f64).prop_map(|(w, penalty)| {
        let s: f64 = w.iter().sum();
        Kernel {
            q: w.iter().map(|x| x / s).collect(),
            penalty,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn verdict_bands(est in -1.0..1.0f64, se in 1e-6..0.5f64) {
        let v = Verdict::classify(est, se);
        if est.abs() <= 3.0 * se {
            prop_assert_eq!(v, Verdict::MartingaleConsistent);
        } else if est > 0.0 {
            prop_assert_eq!(v, Verdict::SubmartingaleConsistent);
        } else {
            prop_assert_eq!(v, Verdict::Violation);
        }
    }

    #[test]
    fn quadratic_drift_matches_closed_form(delta in 0.0..20.0f64, lambda in -2.0..2.0f64) {
        let d = drift_from_relation(&PenaltyIntegrand::Quadratic { delta }, [0.0, 0.0], lambda).unwrap();
        prop_assert!((d.b - quadratic_drift(delta, lambda)).abs() <= 1e-12 * (1.0 + lambda * lambda));
    }

    /// A pointwise larger penalty gives a smaller (or equal) dual drift.
    #[test]
    fn drift_is_monotone_in_penalty(d1 in 0.0..10.0f64, d2 in 0.0..10.0f64, lambda in -1.5..1.5f64) {
        let (hi, lo) = if d1 >= d2 { (d1, d2) } else { (d2, d1) };
        let b = |g: PenaltyIntegrand| drift_from_relation(&g, [0.0, 0.0], lambda).unwrap().b;
        let b_hi = b(PenaltyIntegrand::Quadratic { delta: hi });
        let b_lo = b(PenaltyIntegrand::Quadratic { delta: lo });
        let b_none = b(PenaltyIntegrand::NoAmbiguity {});
        prop_assert!(b_hi <= b_lo + 1e-12);
        prop_assert!(b_none <= b_hi + 1e-12);
        prop_assert!((b_none + 0.5 * lambda * lambda).abs() <= 1e-12);
    }

    #[test]
    fn saddle_fraction_is_adjusted_kelly(
        coeffs in prop::collection::vec((0.05..0.8f64, -1.0..1.0f64, 0.0..10.0f64), 1..80),
        horizon in 0.1..3.0f64,
    ) {
        let n = coeffs.len();
        let c = CoefficientPaths::new(
            coeffs.iter().map(|x| x.0).collect(),
            coeffs.iter().map(|x| x.1).collect(),
            coeffs.iter().map(|x| x.2).collect(),
        ).unwrap();
        let grid = TimeGrid::new(horizon, n).unwrap();
        let eq = equivalent_standard_fields(&c, grid, &worst_case_generator(&c)).unwrap();
        let pi = kelly_fractions(&c).unwrap();
        let scale = pi.iter().fold(1.0f64, |m, p| m.max(p.abs()));
        prop_assert!(eq.kelly_residual <= 4.0 * f64::EPSILON * scale);
        prop_assert!(eq.tilt_residual <= 1e-12);
        let field = field_log(&c, grid).unwrap();
        prop_assert!(field.a.windows(2).all(|w| w[1] <= w[0]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Log-optimal growth on a binomial tree has the Kelly closed form.
    #[test]
    fn binomial_log_value((u, d, p) in binomial(), n in 1usize..4, x in 0.5..2.0f64) {
        let m = TreeMarket::homogeneous(vec![u, d], vec![p, 1.0 - p], n).unwrap();
        let sol = solve_primal(&m, &MeasureFamily::Reference {}, Utility::Log {}, x).unwrap();
        let f = p / -d - (1.0 - p) / u;
        let g = p * (1.0 + f * u).ln() + (1.0 - p) * (1.0 + f * d).ln();
        prop_assert!((sol.value - (x.ln() + n as f64 * g)).abs() <= 1e-10);
    }

    #[test]
    fn duality_on_random_binomial_trees((u, d, p) in binomial(), n in 1usize..3, x in 0.5..2.0f64) {
        let m = TreeMarket::homogeneous(vec![u, d], vec![p, 1.0 - p], n).unwrap();
        let r = duality_check(&m, &MeasureFamily::Reference {}, Utility::Log {}, x, 2000, 0, 1e-6).unwrap();
        prop_assert!(r.gap_refined <= 1e-6, "gap {}", r.gap_refined);
    }

    #[test]
    fn dpp_holds_for_rectangular_families(
        ks in prop::collection::vec(kernel(3), 1..4),
        n in 1usize..4,
    ) {
        let m = TreeMarket::homogeneous(vec![0.1, 0.0, -0.1], vec![0.3, 0.4, 0.3], n).unwrap();
        let family = MeasureFamily::Finite { periods: vec![ks] };
        let r = check_dpp(&m, &family).unwrap();
        prop_assert!(r.holds && r.max_residual <= 1e-8, "residual {}", r.max_residual);
    }

    #[test]
    fn entropic_reduction_on_random_trees((u, d, p) in binomial(), n in 1usize..4, delta in 0.1..5.0f64) {
        let m = TreeMarket::homogeneous(vec![u, d], vec![p, 1.0 - p], n).unwrap();
        let r = entropic_reduction(&m, delta, 1.0).unwrap();
        prop_assert!(r.difference.abs() <= 1e-8, "difference {}", r.difference);
    }
}

#[test]
fn ensembles_do_not_depend_on_thread_count() {
    let coeffs = MarketCoefficients::constant(0.2, 0.3, 1.0);
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_ensemble(&coeffs, grid, 300, 7).unwrap())
    };
    let one = run(1);
    assert_eq!(one.paths, run(4).paths);
    // Each path depends on its index only, so a shorter run is a prefix.
    let short = simulate_ensemble(&coeffs, grid, 40, 7).unwrap();
    assert_eq!(short.paths[..], one.paths[..40]);
    assert_ne!(simulate_ensemble(&coeffs, grid, 40, 8).unwrap().paths, short.paths);
}

#[test]
fn bundled_configs_round_trip_and_reject_unknown_fields() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap().flatten() {
        let p = entry.path();
        if p.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let text = std::fs::read_to_string(&p).unwrap();
        let cfg = robust_forward::cli::parse_config(&text).unwrap();
        let again = robust_forward::cli::parse_config(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again, "{}", p.display());

        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["experiment"]["params"]["bogus"] = serde_json::json!(1);
        let err = robust_forward::cli::parse_config(&value.to_string()).unwrap_err();
        assert!(err.contains("bogus"), "{err}");
        seen += 1;
    }
    assert!(seen >= 10);
}
