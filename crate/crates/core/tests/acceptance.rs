//! Acceptance run: one pass/fail line per criterion.
//!
//! Bundled configs are run in-process through the CLI entry point at 1, 2
//! and 8 worker threads; criteria 6 and 8 call the library directly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_forward::cli::{main_with_args, EXIT_OK};
use robust_forward::criteria::equivalent_standard_fields;
use robust_forward::oracle::{entropic_reduction, read_tree_spec};
use robust_forward::paths::{CoefficientPaths, TimeGrid};
use robust_forward::strategies::worst_case_generator;

const THREADS: [usize; 3] = [1, 2, 8];

struct Run {
    code: i32,
    elapsed: Duration,
    results: serde_json::Value,
    /// Every output except the manifest, by file name.
    files: BTreeMap<String, Vec<u8>>,
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run_config(name: &str, threads: usize, scratch: &Path) -> Run {
    let config = configs_dir().join(format!("{name}.json"));
    let out = scratch.join(format!("{name}-t{threads}"));
    let start = Instant::now();
    let code = main_with_args([
        "robust-forward".into(),
        "--config".into(),
        config.into_os_string(),
        "--out".into(),
        out.clone().into_os_string(),
        "--threads".into(),
        threads.to_string().into(),
    ]);
    let elapsed = start.elapsed();
    let mut files = BTreeMap::new();
    if let Ok(dir) = std::fs::read_dir(&out) {
        for entry in dir.flatten() {
            let file = entry.file_name().to_string_lossy().into_owned();
            if file != "manifest.json" {
                files.insert(file, std::fs::read(entry.path()).unwrap_or_default());
            }
        }
    }
    let results = files
        .get("results.json")
        .and_then(|b| serde_json::from_slice(b).ok())
        .unwrap_or(serde_json::Value::Null);
    Run {
        code,
        elapsed,
        results,
        files,
    }
}

fn failed_assertions(run: &Run) -> Vec<String> {
    run.results["assertions"]
        .as_array()
        .map(|a| {
            a.iter()
                .filter(|x| x["passed"] != serde_json::Value::Bool(true))
                .map(|x| format!("{}: {}", x["name"], x["detail"]))
                .collect()
        })
        .unwrap_or_else(|| vec!["no results.json".to_string()])
}

/// Pass when every listed config exits 0 with all assertions passing.
fn configs_pass(runs: &BTreeMap<String, Run>, names: &[&str]) -> (bool, String) {
    let mut notes = Vec::new();
    for name in names {
        let run = &runs[*name];
        let failed = failed_assertions(run);
        if run.code != EXIT_OK || !failed.is_empty() {
            notes.push(format!("{name} exit {} failed {failed:?}", run.code));
        }
    }
    if notes.is_empty() {
        (true, format!("{} configs, all assertions pass", names.len()))
    } else {
        (false, notes.join("; "))
    }
}

fn assertion_detail(run: &Run, name: &str) -> String {
    run.results["assertions"]
        .as_array()
        .and_then(|a| a.iter().find(|x| x["name"] == name))
        .and_then(|x| x["detail"].as_str())
        .unwrap_or("")
        .to_string()
}

fn criterion_equivalence() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut kelly: f64 = 0.0;
    let mut tilt: f64 = 0.0;
    let mut ok = true;
    for _ in 0..200 {
        let n = rng.random_range(1..=300);
        let grid = TimeGrid::new(rng.random_range(0.1..5.0), n).unwrap();
        let sigma: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.8)).collect();
        let lambda: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let delta: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let coeffs = CoefficientPaths::new(sigma, lambda, delta).unwrap();
        let eta = worst_case_generator(&coeffs);
        let eq = equivalent_standard_fields(&coeffs, grid, &eta).unwrap();
        // Machine rounding relative to the size of the fraction, quadrature
        // rounding relative to the accumulated drift.
        let pi_scale = eq.saddle_fraction.iter().fold(1.0f64, |m, p| m.max(p.abs()));
        let a_scale = eq.standard.a.iter().fold(1.0f64, |m, a| m.max(a.abs()));
        let k = eq.kelly_residual / pi_scale;
        let t = eq.tilt_residual / a_scale;
        kelly = kelly.max(k);
        tilt = tilt.max(t);
        ok &= k <= 4.0 * f64::EPSILON && t <= 1e-12;
    }
    (ok, format!("200 random paths: max rel kelly residual {kelly:.2e}, max rel tilt residual {tilt:.2e}"))
}

fn criterion_entropic() -> (bool, String) {
    let dir = configs_dir().join("trees");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    for p in &paths {
        let spec = read_tree_spec(p).unwrap();
        for delta in [0.25, 1.0, 4.0] {
            match entropic_reduction(&spec.market, delta, spec.x0) {
                Ok(r) => worst = worst.max(r.difference.abs()),
                Err(e) => notes.push(format!("{}: {e}", p.display())),
            }
        }
    }
    let ok = notes.is_empty() && worst <= 1e-8;
    let mut detail = format!("{} tree markets x 3 deltas: max |difference| {worst:.2e}", paths.len());
    if !notes.is_empty() {
        detail.push_str(&format!(" errors {notes:?}"));
    }
    (ok, detail)
}

fn main() {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let mut names: Vec<String> = std::fs::read_dir(configs_dir())
        .unwrap()
        .flatten()
        .filter_map(|e| {
            let p = e.path();
            (p.extension().is_some_and(|x| x == "json"))
                .then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    names.sort();

    let mut single = BTreeMap::new();
    let mut determinism = Vec::new();
    for name in &names {
        let runs: Vec<Run> = THREADS.iter().map(|t| run_config(name, *t, scratch.path())).collect();
        let same = runs.windows(2).all(|w| w[0].files == w[1].files && w[0].code == w[1].code);
        if !same || runs[0].files.is_empty() {
            determinism.push(name.clone());
        }
        single.insert(name.clone(), runs.into_iter().next().unwrap());
    }

    let mut lines: Vec<(usize, &str, bool, String)> = Vec::new();

    let saddle = &single["verify-saddle"];
    let (ok, detail) = configs_pass(&single, &["verify-saddle"]);
    let secs = saddle.elapsed.as_secs_f64();
    lines.push((
        1,
        "saddle martingale",
        ok && secs < 60.0,
        format!(
            "{detail}; {}; {}; single-threaded {secs:.1}s",
            assertion_detail(saddle, "saddle_martingale"),
            assertion_detail(saddle, "reference_drift")
        ),
    ));

    let (ok, detail) = configs_pass(&single, &["self-generation"]);
    lines.push((2, "self-generation", ok, detail));

    let (ok, detail) = configs_pass(
        &single,
        &[
            "tree-duality-complete-binomial",
            "tree-duality-trinomial-three-measures",
            "tree-duality-entropic",
        ],
    );
    lines.push((3, "tree duality", ok, detail));

    let (ok, detail) = configs_pass(
        &single,
        &[
            "tree-dpp-complete-binomial",
            "tree-dpp-trinomial-three-measures",
            "tree-dpp-entropic",
            "tree-dpp-non-rectangular",
            "tree-consistency-entropic",
            "tree-consistency-horizon-dependent",
            "inconsistency-demo",
        ],
    );
    lines.push((4, "DPP and time-consistency", ok, detail));

    let (ok, detail) = configs_pass(&single, &["pde-drift", "pde-residual", "pde-residual-periodic"]);
    lines.push((5, "dual drift and HJB", ok, detail));

    let (ok, detail) = criterion_equivalence();
    lines.push((6, "equivalent standard criterion", ok, detail));

    let ok = determinism.is_empty();
    let detail = if ok {
        format!("{} configs byte-identical across {THREADS:?} threads", names.len())
    } else {
        format!("differs: {determinism:?}")
    };
    lines.push((7, "determinism", ok, detail));

    let (ok, detail) = criterion_entropic();
    lines.push((8, "entropic reduction", ok, detail));

    let mut all = true;
    for (n, title, ok, detail) in &lines {
        all &= ok;
        println!("criterion {n} {title}: {} ({detail})", if *ok { "PASS" } else { "FAIL" });
    }
    if !all {
        std::process::exit(1);
    }
}
